"""Online adaptation of the additive model with a Kalman filter.

The GAM effects are frozen and standardized; only their linear combination ``theta`` adapts.
The state follows a random walk ``theta_{t+1} = theta_t + eta_t`` with ``eta_t ~ N(0, Q)`` and
observations are ``y_t = theta_t' f_t + e_t`` with ``e_t ~ N(0, sigma2)``.

The static setting (Q = 0, sigma2 = 1) is recursive least squares with a ridge prior. The
dynamic setting chooses a diagonal Q and sigma2 by maximizing the one-step predictive
likelihood on the training window with a deterministic greedy search over log grids.
"""
import logging

import numpy as np
from scipy import stats

from anl.types.defaults import Defaults
from anl.types.ssm import Normal, SsmParams, SsmState
from anl.util.exceptions import NumericalException

log = logging.getLogger(__name__)


def kalman_step(s, f, y, p):
    """Condition the state on observation y with effect vector f; returns a new state."""
    f = np.asarray(f, dtype=float).reshape(-1)
    y = float(y)
    if len(f) != s.dim or p.dim != s.dim:
        raise ValueError("Dimension mismatch: state %d, effects %d, params %d" % (s.dim, len(f), p.dim))
    if not np.isfinite(f).all() or not np.isfinite(y):
        raise NumericalException("Non-finite input to kalman_step at step %d" % s.t, 4, 40002)

    P = s.P
    theta = s.theta
    Pf = P @ f
    denom = f @ Pf + p.sigma2
    assert denom > 0
    P_filtered = P - np.outer(Pf, Pf) / denom
    theta_next = theta - (P_filtered @ f) / p.sigma2 * (theta @ f - y)
    P_next = P_filtered + np.diag(p.q)
    P_next = (P_next + P_next.T) / 2.0
    return SsmState(theta_next, P_next, s.t + 1)


def predictive_distribution(s, f, p, horizon=1):
    """Distribution of the observation ``horizon`` steps after the last conditioned one.

    With horizon h the state has taken h - 1 unobserved random-walk steps, so the covariance
    grows by (h - 1) Q.
    """
    f = np.asarray(f, dtype=float).reshape(-1)
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    P = s.P
    if horizon > 1:
        P = P + (horizon - 1) * np.diag(p.q)
    var = float(f @ P @ f) + p.sigma2
    return Normal(float(s.theta @ f), max(var, p.sigma2))


def advance(s, p, steps):
    """Prior after ``steps`` random-walk steps without observation."""
    if steps < 0:
        raise ValueError("steps must be >= 0")
    if steps == 0 or p.is_static:
        return s
    return SsmState(s.theta, s.P + steps * np.diag(p.q), s.t)


def gaussian_quantile(n, q):
    if not 0.0 < q < 1.0:
        raise ValueError("Quantile level must be in (0, 1), got %r" % q)
    return n.mean + float(stats.norm.ppf(q)) * n.sd


def static_params(d):
    """Q = 0, sigma2 = 1 for d effects plus the intercept."""
    if d < 1:
        raise ValueError("d must be >= 1")
    return SsmParams(np.zeros(d + 1), 1.0)


def warm_start(model):
    """Prior N(theta1, I) whose mean reproduces the GAM prediction on standardized effects.

    ``theta1' f(x) = sum_j sd_j (f_j(x) - mean_j) / sd_j + intercept + sum_j mean_j``.
    """
    theta = np.concatenate([model.effect_sds, [model.intercept + float(np.sum(model.effect_means))]])
    return SsmState(theta, np.eye(len(theta)), 1)


def run_filter(effects, y, params, state):
    """Filter a batch; returns one-step predictive means and variances and the final state."""
    F = np.asarray(effects, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(y)
    means = np.empty(n)
    variances = np.empty(n)
    q = params.q
    sigma2 = params.sigma2
    theta = state.theta
    P = state.P
    for t in range(n):
        f = F[t]
        Pf = P @ f
        var = f @ Pf + sigma2
        mean = theta @ f
        means[t] = mean
        variances[t] = var
        P_filtered = P - np.outer(Pf, Pf) / var
        theta = theta - (P_filtered @ f) / sigma2 * (mean - y[t])
        P = P_filtered
        P[np.diag_indices_from(P)] += q
        P = (P + P.T) / 2.0
    if not (np.isfinite(theta).all() and np.isfinite(variances).all()):
        raise NumericalException("Kalman filter diverged", 4, 40002)
    return means, variances, SsmState(theta, P, state.t + n)


def filter_loglik(effects, y, params, state):
    """Sum of one-step predictive Gaussian log-densities."""
    means, variances, _ = run_filter(effects, y, params, state)
    return float(stats.norm.logpdf(np.asarray(y, dtype=float), loc=means, scale=np.sqrt(variances)).sum())


def pit_values(means, variances, y):
    return stats.norm.cdf((np.asarray(y, dtype=float) - means) / np.sqrt(variances))


class _Search:
    """Memoized log-likelihood over (sigma2, Q/sigma2 ratios)."""

    def __init__(self, effects, y, state):
        self.effects = effects
        self.y = y
        self.state = state
        self.cache = {}

    def __call__(self, sigma2, ratios):
        key = (sigma2,) + tuple(ratios)
        if key not in self.cache:
            params = SsmParams(np.asarray(ratios) * sigma2, sigma2)
            try:
                self.cache[key] = filter_loglik(self.effects, self.y, params, self.state)
            except NumericalException:
                self.cache[key] = -np.inf
        return self.cache[key]


def fit_dynamic(effects, y, state=None, min_rows=Defaults.dynamic_min_rows, patience=Defaults.dynamic_patience,
                refine_levels=Defaults.dynamic_refine_levels, activation_gain=Defaults.dynamic_activation_gain):
    """Choose diagonal Q and sigma2 maximizing the one-step predictive likelihood.

    sigma2 is searched on ``10**i`` times the residual variance of the prior mean and each
    Q_jj / sigma2 on ``{0} U 10**i``. Coordinates are swept round-robin, each moved to the best
    grid value of its line; switching a state-noise coordinate on from 0 must gain ``activation_gain``
    nats. The search stops after ``patience`` sweeps without improvement and is refined with
    ``refine_levels`` multiplicative steps 10^(1/2), 10^(1/4), ... off the grid. ``activation_gain=0``
    with ``refine_levels=0`` is the plain greedy grid search. When nothing beats the static setting,
    the static setting is returned with a warning.
    """
    F = np.asarray(effects, dtype=float)
    y = np.asarray(y, dtype=float)
    n, dim = F.shape
    if state is None:
        state = SsmState(np.zeros(dim), np.eye(dim))
    static = static_params(dim - 1)
    if n < min_rows:
        log.warning('fit_dynamic(): %d training rows, %d required; using the static setting', n, min_rows)
        return static

    search = _Search(F, y, state)
    static_ll = filter_loglik(F, y, static, state)

    residual_var = float(np.var(y - F @ state.theta))
    if not np.isfinite(residual_var) or residual_var <= 0:
        residual_var = 1.0
    sigma_grid = [residual_var * 10.0 ** i for i in Defaults.sigma2_log10_grid]
    ratio_grid = [0.0] + [10.0 ** i for i in Defaults.q_ratio_log10_grid]

    sigma2 = residual_var
    ratios = [0.0] * dim
    best = search(sigma2, ratios)

    def accept(gain, old, new):
        return gain > (activation_gain if old == 0.0 and new != 0.0 else Defaults.dynamic_min_gain)

    stall = 0
    sweeps = 0
    while stall < patience:
        improved = False
        for s2 in sigma_grid:
            value = search(s2, ratios)
            if value - best > Defaults.dynamic_min_gain:
                sigma2, best, improved = s2, value, True
        for j in range(dim):
            for r in ratio_grid:
                trial = list(ratios)
                trial[j] = r
                value = search(sigma2, trial)
                if accept(value - best, ratios[j], r):
                    ratios, best, improved = trial, value, True
        sweeps += 1
        stall = 0 if improved else stall + 1
        log.debug('fit_dynamic(): sweep %d loglik=%.4f sigma2=%.4g ratios=%s', sweeps, best, sigma2, ratios)

    for level in range(1, refine_levels + 1):
        factor = 10.0 ** (0.5 ** level)
        improved = True
        while improved:
            improved = False
            for s2 in (sigma2 * factor, sigma2 / factor):
                value = search(s2, ratios)
                if value - best > Defaults.dynamic_min_gain:
                    sigma2, best, improved = s2, value, True
            for j in range(dim):
                if ratios[j] == 0.0:
                    continue
                for r in (ratios[j] * factor, ratios[j] / factor):
                    trial = list(ratios)
                    trial[j] = r
                    value = search(sigma2, trial)
                    if value - best > Defaults.dynamic_min_gain:
                        ratios, best, improved = trial, value, True

    if not best > static_ll:
        log.warning('fit_dynamic(): search did not improve on the static setting (%.4f <= %.4f)', best, static_ll)
        return static
    params = SsmParams(np.asarray(ratios) * sigma2, sigma2)
    log.info('fit_dynamic(): loglik %.4f (static %.4f) after %d sweeps, %d evaluations',
             best, static_ll, sweeps, len(search.cache))
    return params
