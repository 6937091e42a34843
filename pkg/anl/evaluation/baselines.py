import numpy as np

from anl.data.features import shift_on_grid
from anl.util.exceptions import ConfigException


def persistence(d, lag, delay=0):
    """y_{t-lag} for every row of ``d``; NaN where that step has no observation."""
    lag = int(lag)
    if lag < max(int(delay), 1):
        raise ConfigException("Persistence lag %d reads data unavailable under delay %d" % (lag, delay), 2, 20052)
    return shift_on_grid(d.target, d.positions, lag)


def climatology(y):
    """Mean of ``y`` at every step: the normalizer of the relative scores."""
    y = np.asarray(y, dtype=float).reshape(-1)
    return np.full(len(y), y.mean())
