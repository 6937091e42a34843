"""Point and probabilistic scores.

Relative scores normalize every series by the deviations of its observations from their mean
over the test window, so the per-series mean predictor scores exactly 1 on nRMSE and nMAE.
"""
import numpy as np

from anl.model.quantile import pinball
from anl.types.report import SeriesScores, aggregate_scores
from anl.util.exceptions import DataException


def _aligned(y, yhat):
    y = np.asarray(y, dtype=float).reshape(-1)
    yhat = np.asarray(yhat, dtype=float).reshape(-1)
    if len(y) != len(yhat):
        raise ValueError("Observations and forecasts differ in length (%d != %d)" % (len(y), len(yhat)))
    if len(y) == 0:
        raise DataException("Cannot score an empty forecast", 3, 30013)
    return y, yhat


def rmse(y, yhat):
    y, yhat = _aligned(y, yhat)
    return float(np.sqrt(np.mean((y - yhat) ** 2)))


def mae(y, yhat):
    y, yhat = _aligned(y, yhat)
    return float(np.mean(np.abs(y - yhat)))


def rps_weights(levels):
    """Weights q_{i+1} - q_{i-1} with q_0 = 0 and q_{l+1} = 1."""
    levels = np.asarray(levels, dtype=float).reshape(-1)
    if len(levels) == 0 or (np.diff(levels) <= 0).any():
        raise ValueError("Levels must be strictly increasing")
    if levels[0] <= 0 or levels[-1] >= 1:
        raise ValueError("Levels must lie in (0, 1)")
    padded = np.concatenate([[0.0], levels, [1.0]])
    return padded[2:] - padded[:-2]


def rps(levels, values, y):
    """Weighted sum of pinball losses; one value per row when ``values`` holds one row per step."""
    weights = rps_weights(levels)
    values = np.asarray(values, dtype=float)
    y = np.asarray(y, dtype=float)
    if values.shape[-1] != len(weights):
        raise ValueError("One quantile value per level required")
    losses = pinball(y[..., None] if y.ndim else y, values, np.asarray(levels, dtype=float))
    out = np.asarray(losses) @ weights
    return float(out) if np.ndim(out) == 0 else out


def series_scores(series_id, window, y, mean, levels=None, quantiles=None):
    """Components of every score of one series on one window."""
    y, mean = _aligned(y, mean)
    deviations = y - y.mean()
    rps_sum = None
    if levels is not None and len(levels):
        rps_sum = float(np.sum(rps(levels, np.atleast_2d(quantiles), y)))
    return SeriesScores(series_id, window, len(y), sse=float(np.sum((y - mean) ** 2)),
                        sst=float(np.sum(deviations ** 2)), sae=float(np.sum(np.abs(y - mean))),
                        sad=float(np.sum(np.abs(deviations))), rps_sum=rps_sum)


def _series(ys, yhats):
    ys, yhats = list(ys), list(yhats)
    if len(ys) != len(yhats) or not ys:
        raise ValueError("One forecast vector per series required")
    return [series_scores(i, '', y, yhat) for i, (y, yhat) in enumerate(zip(ys, yhats))]


def nrmse(ys, yhats):
    """sqrt(1/N sum_i SSE_i / SST_i) over N series."""
    return aggregate_scores(_series(ys, yhats))['nrmse']


def nmae(ys, yhats):
    return aggregate_scores(_series(ys, yhats))['nmae']


def nrps(levels, quantiles, ys):
    """1/N sum_i (sum_t RPS_it) / (sum_t |y_it - mean_i|); ``quantiles`` holds an (n_i, l) array per series."""
    quantiles, ys = list(quantiles), list(ys)
    if len(quantiles) != len(ys) or not ys:
        raise ValueError("One quantile array per series required")
    scores = []
    for i, (values, y) in enumerate(zip(quantiles, ys)):
        y = np.asarray(y, dtype=float).reshape(-1)
        scores.append(series_scores(i, '', y, y, levels, values))
    return aggregate_scores(scores)['nrps']
