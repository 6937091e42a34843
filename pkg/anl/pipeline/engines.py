"""Mean and quantile learners driven by the strategy runner.

Engines see every row of the run, training and test, but read targets only for the rows the
runner passes to ``fit`` and ``refresh`` (rows available at that time) and for the single row
it reveals through ``observe``.
"""
import logging

import numpy as np
from scipy import stats

from anl.data.features import shift_on_grid
from anl.model.aggregation import aggregate
from anl.model.aggregation import observe as observe_pool
from anl.model.covariates import QuantileCovariates
from anl.model.gam import GamModel, fit_gam, schedule_key
from anl.model.kalman import (advance, fit_dynamic, kalman_step, predictive_distribution, static_params,
                              warm_start)
from anl.model.quantile import fit_offline_qr, predict_quantile
from anl.types.pool import ExpertPool
from anl.types.quantile import QrModel
from anl.types.ssm import SsmParams, SsmState
from anl.types.strategy import MeanMode, QuantileMode
from anl.util.exceptions import DataException

log = logging.getLogger(__name__)


class StreamView:
    """Rows of one run on the model scale: target, grid positions, covariates and window labels."""

    def __init__(self, stream, windows):
        self.stream = stream
        self.y = stream.target
        self.positions = stream.positions
        self.timestamps = stream.timestamps
        self.windows = windows
        self.columns = {name: stream.column(name) for name in stream.covariates}

    def __len__(self):
        return len(self.y)

    def mask(self, rows):
        mask = np.zeros(len(self.y), dtype=bool)
        mask[rows] = True
        return mask

    def subset(self, rows):
        return self.stream.subset(self.mask(rows))

    def row_columns(self, rows):
        return {name: values[rows] for name, values in self.columns.items()}


class MeanEngine:
    mode = None

    def __init__(self, spec, view):
        self._spec = spec
        self._view = view
        self._effects_of = None
        self._effect_values = None

    @property
    def gam(self):
        return None

    def fit(self, rows, gam=None, ssm_params=None):
        """Offline stage on the available training rows; returns their in-sample mean forecasts."""
        raise NotImplementedError

    def refresh(self, i, available):
        """Called before row i is forecast; returns the rows a refit consumed, or None."""
        return None

    def forecast(self, i):
        """Mean forecast of row i and its predictive variance (None without a variance)."""
        raise NotImplementedError

    def observe(self, i):
        pass

    @property
    def observes(self):
        return False

    def feature_reads(self, i):
        return ()

    def effect_columns(self, rows):
        """GAM effect values f_j(x) of the given rows keyed by covariate, or None without a GAM."""
        gam = self.gam
        if gam is None:
            return None
        if self._effects_of is not gam:
            values = gam.effect_values(self._view.stream.frame)
            self._effect_values = {name: values[:, j] for j, name in enumerate(gam.covariates)}
            self._effects_of = gam
        return {name: v[rows] for name, v in self._effect_values.items()}

    def to_dict(self):
        return {}

    def load(self, obj):
        pass


class OfflineEngine(MeanEngine):
    mode = MeanMode.OFFLINE

    def __init__(self, spec, view):
        super().__init__(spec, view)
        self._gam = None
        self._means = None

    @property
    def gam(self):
        return self._gam

    def _set_model(self, gam):
        self._gam = gam
        self._means = gam.predict(self._view.stream.frame)

    def _fit_gam(self, rows):
        return fit_gam(self._view.subset(rows), self._spec.formula, self._spec.lambdas)

    def fit(self, rows, gam=None, ssm_params=None):
        self._set_model(gam if gam is not None else self._fit_gam(rows))
        return self._means[rows]

    def forecast(self, i):
        return float(self._means[i]), None

    def to_dict(self):
        return {'gam': self._gam.to_dict()}

    def load(self, obj):
        self._set_model(GamModel.from_dict(obj['gam']))


class IncrementalEngine(OfflineEngine):
    """Offline model refitted on every available row at each daily or yearly boundary."""

    mode = MeanMode.INCREMENTAL

    def __init__(self, spec, view):
        super().__init__(spec, view)
        self._key = None

    def refresh(self, i, available):
        key = str(schedule_key(self._view.timestamps[i], self._spec.schedule))
        if self._key is None:
            # the offline fit serves the first period
            self._key = key
            return None
        if key == self._key:
            return None
        self._key = key
        rows = np.flatnonzero(available)
        self._set_model(self._fit_gam(rows))
        return rows

    def to_dict(self):
        return {'gam': self._gam.to_dict(), 'key': self._key}

    def load(self, obj):
        super().load(obj)
        self._key = obj.get('key')


class KalmanEngine(MeanEngine):
    """Frozen GAM effects combined by a Kalman-filtered coefficient vector.

    ``self._prior`` is the grid position the current state is the one-step prior of; rows
    skipped on the grid advance the state by one random-walk step each.
    """

    def __init__(self, spec, view):
        super().__init__(spec, view)
        self.mode = spec.mean
        self._gam = None
        self._F = None
        self._state = None
        self._params = None
        self._prior = None

    @property
    def gam(self):
        return self._gam

    @property
    def params(self):
        return self._params

    @property
    def state(self):
        return self._state

    @property
    def observes(self):
        return True

    def _set_model(self, gam):
        self._gam = gam
        self._F = gam.effect_matrix(self._view.stream.frame)

    def _rescale(self, c):
        # static setting: scaling sigma2 and P together leaves the mean recursion unchanged
        if not np.isfinite(c) or c <= 0:
            return
        self._params = self._params.scaled(c)
        self._state = SsmState(self._state.theta, self._state.P * c, self._state.t)

    def fit(self, rows, gam=None, ssm_params=None):
        view = self._view
        if gam is None:
            gam = fit_gam(view.subset(rows), self._spec.formula, self._spec.lambdas)
        self._set_model(gam)
        self._state = warm_start(gam)
        if self.mode == MeanMode.KALMAN_DYNAMIC:
            if ssm_params is None:
                ssm_params = fit_dynamic(self._F[rows], view.y[rows], self._state)
            self._params = ssm_params
        else:
            self._params = static_params(gam.dim)
        if self._params.dim != gam.dim + 1:
            raise ValueError("State noise has dimension %d, model has %d effects" % (self._params.dim, gam.dim))

        if not self._spec.burn_in or len(rows) == 0:
            self._prior = None
            if self.mode == MeanMode.KALMAN_STATIC:
                self._rescale(gam.sigma2)
            return gam.predict(view.stream.frame)[rows]

        self._prior = int(view.positions[rows[0]])
        means = np.empty(len(rows))
        standardized = np.empty(len(rows))
        for k, i in enumerate(rows):
            mean, var = self.forecast(i)
            means[k] = mean
            standardized[k] = (view.y[i] - mean) ** 2 / var
            self.observe(i)
        if self.mode == MeanMode.KALMAN_STATIC:
            self._rescale(float(np.mean(standardized)))
        log.info('KalmanEngine.fit(): burn-in over %d rows, %r', len(rows), self._params)
        return means

    def forecast(self, i):
        p = int(self._view.positions[i])
        if self._prior is None:
            self._prior = p
        n = predictive_distribution(self._state, self._F[i], self._params, p - self._prior + 1)
        return n.mean, n.var

    def observe(self, i):
        u = int(self._view.positions[i])
        if self._prior is None:
            self._prior = u
        state = advance(self._state, self._params, u - self._prior)
        self._state = kalman_step(state, self._F[i], self._view.y[i], self._params).check()
        self._prior = u + 1

    def to_dict(self):
        return {
            'gam': self._gam.to_dict(),
            'state': self._state.to_dict(),
            'params': self._params.to_dict(),
            'prior': self._prior,
        }

    def load(self, obj):
        self._set_model(GamModel.from_dict(obj['gam']))
        self._state = SsmState.from_dict(obj['state'])
        self._params = SsmParams.from_dict(obj['params'])
        self._prior = obj.get('prior')


class PersistenceEngine(MeanEngine):
    mode = MeanMode.PERSISTENCE

    def __source(self, i):
        positions = self._view.positions
        j = int(np.searchsorted(positions, positions[i] - self._spec.lag, side='right')) - 1
        if j < 0:
            raise DataException("No observation %d steps before %s" % (self._spec.lag, self._view.timestamps[i]),
                                3, 30005)
        return j

    def fit(self, rows, gam=None, ssm_params=None):
        view = self._view
        return shift_on_grid(view.y[rows], view.positions[rows], self._spec.lag)

    def forecast(self, i):
        return float(self._view.y[self.__source(i)]), None

    def feature_reads(self, i):
        return (self.__source(i),)


class ClimatologyEngine(MeanEngine):
    """Mean of the observations of each test window: the reference the relative scores normalize by."""

    mode = MeanMode.CLIMATOLOGY

    def __init__(self, spec, view):
        super().__init__(spec, view)
        self._means = {}

    def fit(self, rows, gam=None, ssm_params=None):
        view = self._view
        labels = [w for w in dict.fromkeys(view.windows) if w is not None]
        self._means = {w: float(view.y[view.windows == w].mean()) for w in labels}
        return np.full(len(rows), view.y[rows].mean() if len(rows) else np.nan)

    def forecast(self, i):
        return self._means[self._view.windows[i]], None


class QuantileEngine:
    mode = QuantileMode.NONE

    def __init__(self, spec, view, effects=None):
        self._spec = spec
        self._view = view
        self._effects = effects
        self._levels = np.asarray(spec.levels, dtype=float)

    def fit(self, rows, means):
        pass

    def refresh(self, i, available):
        return None

    def forecast(self, i, mean, var):
        """Unsorted quantile forecasts of row i and what ``observe`` needs later, or None."""
        return np.zeros(0), None

    def observe(self, i, payload):
        pass

    @property
    def observes(self):
        return False

    def weights(self):
        return None

    def to_dict(self):
        return {}

    def load(self, obj):
        pass


class GaussianEngine(QuantileEngine):
    mode = QuantileMode.GAUSSIAN

    def __init__(self, spec, view, effects=None):
        super().__init__(spec, view, effects)
        self._z = stats.norm.ppf(self._levels)

    def forecast(self, i, mean, var):
        if var is None:
            raise ValueError("Gaussian quantiles need a predictive variance")
        return mean + self._z * np.sqrt(var), None


class OfflineQrEngine(QuantileEngine):
    """Linear quantile regressions of the mean-model residuals, fitted once on the training rows."""

    mode = QuantileMode.OFFLINE_QR

    def __init__(self, spec, view, effects=None):
        super().__init__(spec, view, effects)
        self._covariates = None
        self._models = None

    def _effect_columns(self, rows):
        if self._effects is None or not self._spec.covariates.needs_effects:
            return None
        return self._effects(rows)

    def _design(self, rows, means):
        return self._covariates.transform(means, self._view.row_columns(rows), self._effect_columns(rows))

    def _z(self, i, mean):
        return self._design([i], [mean])[0]

    def fit(self, rows, means):
        rows = np.asarray(rows)
        means = np.asarray(means, dtype=float)
        finite = np.isfinite(means)
        rows, means = rows[finite], means[finite]
        covariates = self._spec.covariates
        self._covariates = covariates.fit(means, self._view.row_columns(rows), self._effect_columns(rows))
        Z = self._design(rows, means)
        residuals = self._view.y[rows] - means
        self._models = [fit_offline_qr(residuals, Z, q) for q in self._levels]
        log.info('%s.fit(): %d levels on %d rows, %d covariates', type(self).__name__, len(self._models),
                 len(rows), Z.shape[1])
        return Z, residuals

    def forecast(self, i, mean, var):
        z = self._z(i, mean)
        return np.array([predict_quantile(m, z, mean) for m in self._models]), None

    def to_dict(self):
        return {
            'covariates': self._covariates.to_dict(),
            'models': [m.to_dict() for m in self._models],
        }

    def load(self, obj):
        self._covariates = QuantileCovariates.from_dict(obj['covariates'])
        self._models = [QrModel.from_dict(m) for m in obj['models']]


class IncrementalQrEngine(OfflineQrEngine):
    """Offline regressions refitted every day on every residual observed so far."""

    mode = QuantileMode.INCREMENTAL_QR

    def __init__(self, spec, view, effects=None):
        super().__init__(spec, view, effects)
        self._Z = []
        self._residuals = []
        self._last_row = None
        self._key = None

    @property
    def observes(self):
        return True

    def fit(self, rows, means):
        Z, residuals = super().fit(rows, means)
        self._Z = [list(z) for z in Z]
        self._residuals = [float(r) for r in residuals]
        self._last_row = int(rows[-1]) if len(rows) else None
        return Z, residuals

    def refresh(self, i, available):
        key = str(self._view.timestamps[i].date())
        if self._key is None or key == self._key:
            self._key = key
            return None
        self._key = key
        Z = np.asarray(self._Z, dtype=float)
        r = np.asarray(self._residuals, dtype=float)
        self._models = [fit_offline_qr(r, Z, q) for q in self._levels]
        return [self._last_row] if self._last_row is not None else None

    def forecast(self, i, mean, var):
        z = self._z(i, mean)
        values = np.array([predict_quantile(m, z, mean) for m in self._models])
        return values, {'z': z, 'mean': mean}

    def observe(self, i, payload):
        self._Z.append([float(v) for v in payload['z']])
        self._residuals.append(float(self._view.y[i] - payload['mean']))
        self._last_row = int(i)

    def to_dict(self):
        obj = super().to_dict()
        obj.update({'Z': self._Z, 'residuals': self._residuals, 'lastRow': self._last_row, 'key': self._key})
        return obj

    def load(self, obj):
        super().load(obj)
        self._Z = [list(z) for z in obj['Z']]
        self._residuals = list(obj['residuals'])
        self._last_row = obj.get('lastRow')
        self._key = obj.get('key')


class PoolEngine(OfflineQrEngine):
    """OGD from the offline coefficients, one expert per step size, combined by BOA.

    A single step size (``ogd(alpha)``) is the plain OGD learner.
    """

    def __init__(self, spec, view, effects=None):
        super().__init__(spec, view, effects)
        self.mode = spec.quantile
        self._pools = None

    @property
    def observes(self):
        return True

    def _step_sizes(self):
        if self.mode == QuantileMode.OGD:
            return [self._spec.alpha]
        return self._spec.step_sizes

    def fit(self, rows, means):
        result = super().fit(rows, means)
        step_sizes = self._step_sizes()
        self._pools = [ExpertPool.create(m.level, m.beta, step_sizes, self._spec.eta) for m in self._models]
        return result

    def forecast(self, i, mean, var):
        z = self._z(i, mean)
        experts = [pool.forecasts(z, mean) for pool in self._pools]
        values = np.array([aggregate(pool, f) for pool, f in zip(self._pools, experts)])
        return values, {'z': z, 'mean': mean, 'experts': experts, 'forecast': values}

    def observe(self, i, payload):
        y = float(self._view.y[i])
        z = np.asarray(payload['z'], dtype=float)
        self._pools = [
            observe_pool(pool, z, payload['mean'], y, payload['experts'][j], payload['forecast'][j])
            for j, pool in enumerate(self._pools)
        ]

    def weights(self):
        return np.array([pool.weights for pool in self._pools])

    @property
    def pools(self):
        return list(self._pools)

    def to_dict(self):
        obj = super().to_dict()
        obj['pools'] = [pool.to_dict() for pool in self._pools]
        return obj

    def load(self, obj):
        super().load(obj)
        self._pools = [ExpertPool.from_dict(p) for p in obj['pools']]


_mean_engines = {
    MeanMode.OFFLINE: OfflineEngine,
    MeanMode.INCREMENTAL: IncrementalEngine,
    MeanMode.KALMAN_STATIC: KalmanEngine,
    MeanMode.KALMAN_DYNAMIC: KalmanEngine,
    MeanMode.PERSISTENCE: PersistenceEngine,
    MeanMode.CLIMATOLOGY: ClimatologyEngine,
}

_quantile_engines = {
    QuantileMode.NONE: QuantileEngine,
    QuantileMode.GAUSSIAN: GaussianEngine,
    QuantileMode.OFFLINE_QR: OfflineQrEngine,
    QuantileMode.INCREMENTAL_QR: IncrementalQrEngine,
    QuantileMode.OGD: PoolEngine,
    QuantileMode.OGD_BOA: PoolEngine,
}


def mean_engine(spec, view):
    return _mean_engines[spec.mean](spec, view)


def quantile_engine(spec, view, effects=None):
    """Quantile learner of ``spec``; ``effects`` maps rows to the GAM effect values of the mean model."""
    return _quantile_engines[spec.quantile](spec, view, effects)
