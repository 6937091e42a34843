"""Calibration diagnostics: observed frequencies of y <= quantile forecast."""
import logging

import numpy as np
import pandas as pd
from scipy import stats

from anl.types.defaults import Defaults
from anl.types.report import POOLED, ReliabilityRow, band
from anl.util.exceptions import ConfigException, DataException

log = logging.getLogger(__name__)

ALL = 'all'


def parse_tod(value):
    try:
        ts = pd.Timestamp('2000-01-01 ' + str(value))
    except ValueError as e:
        raise ConfigException("Malformed time of day %r, expected HH:MM" % value, 2, 20060, cause=e)
    return ts.time()


def tod_mask(timestamps, tod):
    """Rows whose clock time equals ``tod`` ("HH:MM")."""
    target = parse_tod(tod)
    index = pd.DatetimeIndex(timestamps)
    return np.asarray(index.time == target)


def reliability(forecasts, y, q, mask=None, min_count=Defaults.reliability_min_count, series=POOLED,
                filter=ALL, window=None):
    forecasts = np.asarray(forecasts, dtype=float).reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    if len(forecasts) != len(y):
        raise ValueError("Observations and forecasts differ in length")
    if not 0.0 < q < 1.0:
        raise ValueError("Quantile level must be in (0, 1), got %r" % q)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        forecasts, y = forecasts[mask], y[mask]
    n = len(y)
    if n < min_count:
        raise DataException("Reliability of level %r needs %d observations, got %d" % (q, min_count, n), 3, 30014)
    frequency = float(np.mean(y <= forecasts))
    lo, hi = band(q, n)
    return ReliabilityRow(q, n, frequency, lo, hi, series, filter, window)


def reliability_table(levels, quantiles, y, timestamps=None, tod_filters=(), series=POOLED, window=None):
    """One row per (filter, level); filters too small to score are skipped with a warning."""
    quantiles = np.atleast_2d(np.asarray(quantiles, dtype=float))
    filters = [(ALL, None)]
    for tod in tod_filters:
        if timestamps is None:
            raise ValueError("Time-of-day filters need timestamps")
        filters.append((str(tod), tod_mask(timestamps, tod)))
    rows = []
    for name, mask in filters:
        for j, q in enumerate(levels):
            try:
                rows.append(reliability(quantiles[:, j], y, q, mask, series=series, filter=name, window=window))
            except DataException as e:
                log.warning('reliability_table(): skipping %s filter %s: %s', series, name, e.message)
                break
    return rows


def reliability_evolution(timestamps, y, forecasts, q, window, tod=None):
    """Exceedance frequency over a rolling window of ``window`` observations, for one level."""
    index = pd.DatetimeIndex(timestamps)
    hits = pd.Series(np.asarray(y, dtype=float) <= np.asarray(forecasts, dtype=float), index=index, dtype=float)
    if tod is not None:
        hits = hits[tod_mask(index, tod)]
    frequency = hits.rolling(int(window), min_periods=int(window)).mean()
    lo, hi = band(q, int(window))
    return pd.DataFrame({'timestamp': hits.index, 'level': q, 'frequency': frequency.to_numpy(),
                         'band_lo': lo, 'band_hi': hi}).dropna()


def pit_uniformity(pit):
    """Kolmogorov-Smirnov statistic and p-value of PIT values against U(0, 1)."""
    result = stats.kstest(np.asarray(pit, dtype=float), 'uniform')
    return float(result.statistic), float(result.pvalue)


def ks_critical_value(n, alpha=0.01):
    return float(stats.kstwo.ppf(1.0 - alpha, n))
