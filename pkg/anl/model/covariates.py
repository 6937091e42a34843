import logging

import numpy as np

from anl.util.exceptions import DataException

log = logging.getLogger(__name__)

MEAN = 'mean'
MEAN_SQUARED = 'mean2'
CONSTANT = 'const'
EFFECT_PREFIX = 'f:'


class QuantileCovariates:
    """Builds the covariate rows z_t of the quantile regressions.

    Columns, in order: the mean forecast, its square, the selected GAM effects ``f_j(x_j)``
    (named ``f:<covariate>``), the selected raw covariate columns, one indicator per
    non-reference level of every categorical column, and a constant 1. Continuous columns are
    standardized with moments of the training rows given to ``fit``.

    Effect values come from the fitted mean model, raw and categorical columns from the data;
    both are passed to ``fit`` and ``transform`` as mappings of covariate name to values.
    """

    def __init__(self, include_mean=True, include_mean_squared=True, effects=(), categorical=(),
                 moments=None, levels=None, columns=()):
        self.__include_mean = bool(include_mean)
        self.__include_mean_squared = bool(include_mean_squared)
        self.__effects = list(effects)
        self.__columns = list(columns)
        self.__categorical = list(categorical)
        self.__moments = moments
        self.__levels = levels

    @property
    def is_fitted(self):
        return self.__moments is not None

    @property
    def effects(self):
        return list(self.__effects)

    @property
    def columns(self):
        return list(self.__columns)

    @property
    def categorical(self):
        return list(self.__categorical)

    @property
    def needs_effects(self):
        return bool(self.__effects)

    @property
    def names(self):
        self.__check_fitted()
        names = list(self.__moments)
        for column in self.__categorical:
            names += ['%s=%g' % (column, level) for level in self.__levels[column][1:]]
        return names + [CONSTANT]

    @property
    def dim(self):
        return len(self.names)

    def __continuous(self, mean, columns, effects):
        mean = np.asarray(mean, dtype=float).reshape(-1)
        values = {}
        if self.__include_mean:
            values[MEAN] = mean
        if self.__include_mean_squared:
            values[MEAN_SQUARED] = mean ** 2
        for name in self.__effects:
            if effects is None or name not in effects:
                raise DataException("Missing GAM effect for quantile covariate: %s" % name, 3, 30003)
            values[EFFECT_PREFIX + name] = np.asarray(effects[name], dtype=float).reshape(-1)
        for name in self.__columns:
            if name not in columns:
                raise DataException("Missing quantile covariate: %s" % name, 3, 30003)
            values[name] = np.asarray(columns[name], dtype=float).reshape(-1)
        return values

    def fit(self, mean, columns, effects=None):
        """Return a fitted copy using training mean forecasts, covariate columns and effect values."""
        moments = {}
        for name, values in self.__continuous(mean, columns, effects).items():
            sd = float(np.std(values))
            if not sd > 0:
                raise DataException("Degenerate quantile covariate %s" % name, 3, 30006)
            moments[name] = (float(np.mean(values)), sd)
        levels = {}
        for name in self.__categorical:
            if name not in columns:
                raise DataException("Missing quantile covariate: %s" % name, 3, 30003)
            observed = np.unique(np.asarray(columns[name], dtype=float))
            if len(observed) < 2:
                log.warning('QuantileCovariates.fit(): categorical %s has a single level', name)
            levels[name] = [float(v) for v in observed]
        return QuantileCovariates(self.__include_mean, self.__include_mean_squared, self.__effects,
                                  self.__categorical, moments, levels, self.__columns)

    def transform(self, mean, columns, effects=None):
        self.__check_fitted()
        continuous = self.__continuous(mean, columns, effects)
        n = len(np.asarray(mean).reshape(-1))
        blocks = []
        for name, (m, sd) in self.__moments.items():
            blocks.append(((continuous[name] - m) / sd)[:, None])
        for name in self.__categorical:
            if name not in columns:
                raise DataException("Missing quantile covariate: %s" % name, 3, 30003)
            values = np.asarray(columns[name], dtype=float).reshape(-1)
            reference_free = np.asarray(self.__levels[name][1:])
            blocks.append((values[:, None] == reference_free[None, :]).astype(float))
        blocks.append(np.ones((n, 1)))
        Z = np.hstack(blocks)
        if not np.isfinite(Z).all():
            raise DataException("Non-finite quantile covariates", 3, 30009)
        return Z

    def row(self, mean, record, effects=None):
        effects = {k: [v] for k, v in effects.items()} if effects is not None else None
        return self.transform([mean], {k: [v] for k, v in record.items()}, effects)[0]

    def __check_fitted(self):
        if self.__moments is None:
            raise ValueError("QuantileCovariates used before fit()")

    def to_dict(self):
        moments = None
        if self.__moments is not None:
            # ordered pairs, column order must survive key-sorted documents
            moments = [[k, m, sd] for k, (m, sd) in self.__moments.items()]
        return {
            'includeMean': self.__include_mean,
            'includeMeanSquared': self.__include_mean_squared,
            'effects': self.effects,
            'columns': self.columns,
            'categorical': self.categorical,
            'moments': moments,
            'levels': self.__levels,
        }

    @staticmethod
    def from_dict(obj):
        moments = obj.get('moments')
        return QuantileCovariates(
            include_mean=obj.get('includeMean', True),
            include_mean_squared=obj.get('includeMeanSquared', True),
            effects=obj.get('effects') or (),
            categorical=obj.get('categorical') or (),
            moments={k: (m, sd) for k, m, sd in moments} if moments is not None else None,
            levels=obj.get('levels'),
            columns=obj.get('columns') or (),
        )
