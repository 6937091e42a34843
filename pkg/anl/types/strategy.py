import re
from enum import Enum

import numpy as np

from anl.model.covariates import QuantileCovariates
from anl.model.gam import DAILY, SCHEDULES, Term
from anl.types.defaults import Defaults
from anl.util.exceptions import ConfigException


class MeanMode(str, Enum):
    OFFLINE = 'offline'
    INCREMENTAL = 'incremental'
    KALMAN_STATIC = 'kalman-static'
    KALMAN_DYNAMIC = 'kalman-dynamic'
    PERSISTENCE = 'persistence'
    CLIMATOLOGY = 'climatology'

    @property
    def is_kalman(self):
        return self in (MeanMode.KALMAN_STATIC, MeanMode.KALMAN_DYNAMIC)

    @property
    def uses_gam(self):
        return self in (MeanMode.OFFLINE, MeanMode.INCREMENTAL, MeanMode.KALMAN_STATIC, MeanMode.KALMAN_DYNAMIC)


class QuantileMode(str, Enum):
    GAUSSIAN = 'gaussian'
    OFFLINE_QR = 'offline-qr'
    OGD = 'ogd'
    OGD_BOA = 'ogd-boa'
    INCREMENTAL_QR = 'incremental-qr'
    NONE = 'none'

    @property
    def uses_regression(self):
        return self in (QuantileMode.OFFLINE_QR, QuantileMode.OGD, QuantileMode.OGD_BOA,
                        QuantileMode.INCREMENTAL_QR)


_part_re = re.compile(r'^\s*([a-z-]+)\s*(?:\(\s*([^)]*)\s*\))?\s*$')


def _split_part(text):
    match = _part_re.match(text)
    if match is None:
        raise ConfigException("Malformed strategy component %r" % text, 2, 20050)
    return match.group(1), match.group(2)


class StrategySpec:
    """One forecasting strategy: a mean mode combined with a quantile mode.

    Strategies are named ``mean+quantile`` where parameterized modes carry their argument in
    parentheses: ``incremental(yearly)+ogd(0.01)``, ``persistence(7)+none``,
    ``kalman-dynamic+ogd-boa``.
    """

    def __init__(self, mean, quantile=QuantileMode.NONE, schedule=DAILY, alpha=None, lag=None,
                 levels=Defaults.levels, formula=(), covariates=None, delay=0, normalize=False, burn_in=True,
                 step_sizes=Defaults.step_sizes, eta=None, lambdas=None):
        try:
            mean = MeanMode(mean)
            quantile = QuantileMode(quantile)
        except ValueError as e:
            raise ConfigException("Unknown strategy mode: %s" % e, 2, 20050)
        delay = int(delay)
        if delay < 0:
            raise ConfigException("Delay must be >= 0", 2, 20050)
        if quantile == QuantileMode.GAUSSIAN and not mean.is_kalman:
            raise ConfigException("Gaussian quantiles require a Kalman mean, got %s" % mean.value, 2, 20050)
        if mean == MeanMode.INCREMENTAL and schedule not in SCHEDULES:
            raise ConfigException("Unknown refit schedule %r" % schedule, 2, 20042)
        if quantile == QuantileMode.OGD:
            if alpha is None or not float(alpha) > 0:
                raise ConfigException("ogd needs a step size > 0, e.g. ogd(0.01)", 2, 20051)
            alpha = float(alpha)
        if mean == MeanMode.PERSISTENCE:
            if lag is None or int(lag) < max(delay, 1):
                raise ConfigException("Persistence lag %r reads data unavailable under delay %d" % (lag, delay),
                                      2, 20052)
            lag = int(lag)
        levels = [float(q) for q in levels]
        if quantile != QuantileMode.NONE:
            if not levels or not all(0.0 < q < 1.0 for q in levels) or (np.diff(levels) <= 0).any():
                raise ConfigException("Levels must be strictly increasing in (0, 1)", 2, 20053)
        formula = [Term.parse(t) for t in formula]
        if mean.uses_gam and not formula:
            raise ConfigException("Mean mode %s needs a formula" % mean.value, 2, 20054)
        if covariates is not None and covariates.needs_effects and quantile.uses_regression:
            if not mean.uses_gam:
                raise ConfigException("Quantile covariates use GAM effects, mean mode %s has none" % mean.value,
                                      2, 20058)
            unknown = set(covariates.effects) - {t.covariate for t in formula}
            if unknown:
                raise ConfigException("Quantile covariate effects not in the formula: %s" % sorted(unknown),
                                      2, 20058)
        step_sizes = [float(a) for a in step_sizes]
        if not step_sizes or min(step_sizes) <= 0:
            raise ConfigException("Step sizes must be > 0", 2, 20051)

        self.__mean = mean
        self.__quantile = quantile
        self.__schedule = schedule
        self.__alpha = alpha
        self.__lag = lag
        self.__levels = levels if quantile != QuantileMode.NONE else []
        self.__formula = formula
        self.__covariates = covariates if covariates is not None else QuantileCovariates()
        self.__delay = delay
        self.__normalize = bool(normalize)
        self.__burn_in = bool(burn_in)
        self.__step_sizes = step_sizes
        self.__eta = float(eta) if eta is not None else None
        self.__lambdas = [float(v) for v in lambdas] if lambdas is not None else None

    def __repr__(self):
        return 'StrategySpec(%s)' % self.name

    def __eq__(self, other):
        return isinstance(other, StrategySpec) and self.to_dict() == other.to_dict()

    @property
    def name(self):
        if self.__mean == MeanMode.INCREMENTAL:
            mean = '%s(%s)' % (self.__mean.value, self.__schedule)
        elif self.__mean == MeanMode.PERSISTENCE:
            mean = '%s(%d)' % (self.__mean.value, self.__lag)
        else:
            mean = self.__mean.value
        if self.__quantile == QuantileMode.OGD:
            quantile = '%s(%g)' % (self.__quantile.value, self.__alpha)
        else:
            quantile = self.__quantile.value
        return '%s+%s' % (mean, quantile)

    @property
    def mean(self):
        return self.__mean

    @property
    def quantile(self):
        return self.__quantile

    @property
    def schedule(self):
        return self.__schedule

    @property
    def alpha(self):
        return self.__alpha

    @property
    def lag(self):
        return self.__lag

    @property
    def levels(self):
        return list(self.__levels)

    @property
    def formula(self):
        return list(self.__formula)

    @property
    def covariates(self):
        return self.__covariates

    @property
    def delay(self):
        return self.__delay

    @property
    def normalize(self):
        return self.__normalize

    @property
    def burn_in(self):
        return self.__burn_in

    @property
    def step_sizes(self):
        return list(self.__step_sizes)

    @property
    def eta(self):
        return self.__eta

    @property
    def lambdas(self):
        return None if self.__lambdas is None else list(self.__lambdas)

    @staticmethod
    def parse(text, **kwargs):
        """Strategy from its name; keyword arguments supply the shared settings."""
        parts = str(text).split('+')
        if len(parts) > 2:
            raise ConfigException("Malformed strategy %r" % text, 2, 20050)
        mean, mean_arg = _split_part(parts[0])
        quantile, quantile_arg = _split_part(parts[1]) if len(parts) == 2 else (QuantileMode.NONE.value, None)
        options = dict(kwargs)
        try:
            if mean == MeanMode.INCREMENTAL.value and mean_arg:
                options['schedule'] = mean_arg
            elif mean == MeanMode.PERSISTENCE.value and mean_arg:
                options['lag'] = int(mean_arg)
            elif mean_arg:
                raise ConfigException("Mean mode %s takes no argument" % mean, 2, 20050)
            if quantile == QuantileMode.OGD.value and quantile_arg:
                options['alpha'] = float(quantile_arg)
            elif quantile_arg:
                raise ConfigException("Quantile mode %s takes no argument" % quantile, 2, 20050)
        except ValueError as e:
            raise ConfigException("Malformed strategy %r" % text, 2, 20050, cause=e)
        return StrategySpec(mean, quantile, **options)

    def to_dict(self):
        return {
            'name': self.name,
            'mean': self.mean.value,
            'quantile': self.quantile.value,
            'schedule': self.schedule,
            'alpha': self.alpha,
            'lag': self.lag,
            'levels': self.levels,
            'formula': [t.to_string() for t in self.formula],
            'covariates': self.covariates.to_dict(),
            'delay': self.delay,
            'normalize': self.normalize,
            'burnIn': self.burn_in,
            'stepSizes': self.step_sizes,
            'eta': self.eta,
            'lambdas': self.lambdas,
        }

    @staticmethod
    def from_dict(obj):
        return StrategySpec(
            mean=obj['mean'],
            quantile=obj.get('quantile', QuantileMode.NONE.value),
            schedule=obj.get('schedule', DAILY),
            alpha=obj.get('alpha'),
            lag=obj.get('lag'),
            levels=obj.get('levels') or Defaults.levels,
            formula=obj.get('formula') or (),
            covariates=QuantileCovariates.from_dict(obj['covariates']) if obj.get('covariates') else None,
            delay=obj.get('delay', 0),
            normalize=obj.get('normalize', False),
            burn_in=obj.get('burnIn', True),
            step_sizes=obj.get('stepSizes') or Defaults.step_sizes,
            eta=obj.get('eta'),
            lambdas=obj.get('lambdas'),
        )
