"""Bernstein Online Aggregation of OGD quantile experts.

Every expert runs OGD on the pinball loss with its own constant step size; the pool forecast
is the weighted average of the expert forecasts. Weights follow the second-order exponential
update ``p_k <- p_k exp(eta_k r_k - eta_k^2 r_k^2)`` on the instantaneous regrets
``r_k = loss(pool) - loss(expert k)``. Unless a fixed ``eta`` is configured, each expert's rate
is self-tuned: ``eta_k = min(1 / E_k, sqrt(log K / V_k))`` with V_k the running sum of squared
regrets and E_k the running maximum regret.
"""
import logging
from typing import NamedTuple

import numpy as np
from scipy.special import logsumexp

from anl.model.quantile import pinball
from anl.util.exceptions import NumericalException

log = logging.getLogger(__name__)


class PoolTrace(NamedTuple):
    forecasts: np.ndarray
    expert_forecasts: np.ndarray
    weights: np.ndarray
    losses: np.ndarray
    expert_losses: np.ndarray
    pool: object


def aggregate(pool, forecasts):
    forecasts = np.asarray(forecasts, dtype=float).reshape(-1)
    if len(forecasts) != pool.size:
        raise ValueError("Expected %d expert forecasts, got %d" % (pool.size, len(forecasts)))
    bad = ~np.isfinite(forecasts)
    if bad.any():
        k = int(np.argmax(bad))
        raise NumericalException("Non-finite forecast from expert %d (step size %g)" % (k, pool.step_sizes[k]),
                                 4, 40002)
    value = float(pool.weights @ forecasts)
    return min(max(value, float(forecasts.min())), float(forecasts.max()))


def learning_rates(pool, sq_regret, max_regret):
    if pool.eta is not None:
        return np.full(pool.size, pool.eta)
    with np.errstate(divide='ignore'):
        by_range = np.where(max_regret > 0, 1.0 / np.where(max_regret > 0, max_regret, 1.0), np.inf)
        by_variance = np.where(sq_regret > 0,
                               np.sqrt(np.log(pool.n_distinct) / np.where(sq_regret > 0, sq_regret, 1.0)),
                               np.inf)
    return np.minimum(by_range, by_variance)


def boa_update(pool, expert_losses, loss):
    """Reweight the experts after one round; returns a new pool."""
    expert_losses = np.asarray(expert_losses, dtype=float).reshape(-1)
    if len(expert_losses) != pool.size:
        raise ValueError("Expected %d expert losses, got %d" % (pool.size, len(expert_losses)))
    if not (np.isfinite(expert_losses).all() and np.isfinite(loss)):
        raise ValueError("Losses must be finite")
    if (expert_losses < 0).any() or loss < 0:
        raise ValueError("Losses must be >= 0")

    regret = loss - expert_losses
    sq_regret = pool.sq_regret + regret ** 2
    max_regret = np.maximum(pool.max_regret, np.abs(regret))
    eta = learning_rates(pool, sq_regret, max_regret)
    with np.errstate(invalid='ignore'):
        exponent = np.where(regret == 0, 0.0, eta * regret - eta ** 2 * regret ** 2)
    log_weights = pool.log_weights + exponent
    log_weights = log_weights - logsumexp(log_weights)
    assert np.isfinite(log_weights).any()
    return pool.replace(log_weights=log_weights, sq_regret=sq_regret, max_regret=max_regret)


def ogd_update(pool, z, residual, corrections):
    """OGD step of every expert; ``corrections`` are the beta' z each expert forecast with."""
    z = np.asarray(z, dtype=float).reshape(-1)
    q = pool.level
    g = np.where(residual < corrections, 1.0 - q, np.where(residual > corrections, -q, 0.0))
    betas = pool.betas - pool.step_sizes[:, None] * (g[:, None] * z[None, :])
    if not np.isfinite(betas).all():
        raise NumericalException("OGD diverged at level %r" % q, 4, 40002)
    return pool.replace(betas=betas)


def observe(pool, z, mean, y, expert_forecasts, forecast):
    """Feed back the observation of a past round whose forecasts are given."""
    expert_forecasts = np.asarray(expert_forecasts, dtype=float)
    pool = ogd_update(pool, z, y - mean, expert_forecasts - mean)
    expert_losses = pinball(y, expert_forecasts, pool.level)
    return boa_update(pool, np.atleast_1d(expert_losses), pinball(y, forecast, pool.level))


def run_pool(pool, stream, delay=0):
    """Run the pool over (z_t, mean_t, y_t) items.

    Each step: experts forecast, the pool aggregates, then the observation of step t - delay is
    revealed and fed back with the forecasts made at that step.
    """
    stream = list(stream)
    n = len(stream)
    forecasts = np.empty(n)
    expert_forecasts = np.empty((n, pool.size))
    weights = np.empty((n, pool.size))
    for t, (z, mean, _) in enumerate(stream):
        expert_forecasts[t] = pool.forecasts(z, mean)
        weights[t] = pool.weights
        forecasts[t] = aggregate(pool, expert_forecasts[t])
        u = t - delay
        if u >= 0:
            zu, mean_u, yu = stream[u]
            pool = observe(pool, zu, mean_u, yu, expert_forecasts[u], forecasts[u])
    y = np.asarray([item[2] for item in stream], dtype=float)
    losses = pinball(y, forecasts, pool.level)
    expert_losses = pinball(y[:, None], expert_forecasts, pool.level)
    return PoolTrace(forecasts, expert_forecasts, weights, np.atleast_1d(losses), np.atleast_2d(expert_losses),
                     pool)
