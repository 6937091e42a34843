"""Derived covariates: delayed lags and moving averages, calendar variables, holidays and products.

Lags and moving averages are computed on the regular time grid of the series, so a row dropped
while cleaning leaves a hole instead of shifting older values forward. Rows whose derived values
need history before the first timestamp (or inside a hole) are marked unusable.
"""
import logging

import numpy as np
import pandas as pd

from anl.types.dataset import align_timestamp, lag_name, moving_average_name, product_name
from anl.types.defaults import Defaults
from anl.util.exceptions import DataException

log = logging.getLogger(__name__)

SECONDS_PER_DAY = 86400.0


def build_features(d, spec):
    """Return a copy of ``d`` with every feature requested by ``spec`` and ablated columns removed."""
    ablations = spec.ablations
    sources = [s for s, _ in spec.lags] + [s for s, _, _ in spec.moving_averages]
    for source in sources:
        if not d.has_column(source):
            raise DataException("Unknown column: %s" % source, 3, 30003)

    reach = [k for _, k in spec.lags] + [k + w - 1 for _, w, k in spec.moving_averages]
    if reach and max(reach) >= len(d):
        raise DataException("Lag of %d steps is longer than series %s (%d rows)"
                            % (max(reach), d.series_id, len(d)), 3, 30005)

    positions = d.positions
    columns = {}
    for source, k in spec.lags:
        columns[lag_name(source, k)] = shift_on_grid(d.column(source), positions, k)
    for source, window, k in spec.moving_averages:
        grid = _on_grid(d.column(source), positions)
        rolled = pd.Series(grid).rolling(window, min_periods=window).mean().to_numpy()
        columns[moving_average_name(source, window, k)] = _shift(rolled, k)[positions]

    columns.update(calendar_features(d.timestamps, d.step, spec.calendar))
    for name, dates in spec.holidays.items():
        columns[name] = np.fromiter((ts.date() in dates for ts in d.timestamps), dtype=float, count=len(d))

    for a, b in spec.products:
        factors = []
        for name in (a, b):
            if name in ablations:
                continue
            if not d.has_column(name):
                raise DataException("Unknown column: %s" % name, 3, 30003)
            factors.append(d.column(name))
        if factors:
            columns[product_name(a, b)] = np.prod(factors, axis=0)

    usable = d.usable
    for name, values in columns.items():
        usable &= np.isfinite(values)
    unusable = int((d.usable & ~usable).sum())
    if unusable:
        log.debug('build_features(): %d rows of %s lack history for derived features', unusable, d.series_id)

    categorical = [c for c in ('dow', 'tod_index') if c in columns]
    out = d.with_columns(columns, usable=usable, categorical=categorical)
    return out.drop_columns(sorted(ablations))


def calendar_features(index, step, flags):
    columns = {}
    seconds = (index.hour * 3600 + index.minute * 60 + index.second).to_numpy(dtype=float)
    tod = seconds / SECONDS_PER_DAY
    if 'dow' in flags:
        columns['dow'] = index.dayofweek.to_numpy(dtype=float)
    if 'tod' in flags:
        columns['tod'] = tod
        step_seconds = pd.Timedelta(step).total_seconds()
        if step_seconds < SECONDS_PER_DAY:
            columns['tod_index'] = np.floor(seconds / step_seconds)
        else:
            columns['tod_index'] = np.zeros(len(index))
    if 'toy' in flags:
        # fraction of the year elapsed, in [0, 1)
        days_in_year = np.where(index.is_leap_year, 366.0, 365.0)
        columns['toy'] = (index.dayofyear.to_numpy(dtype=float) - 1.0 + tod) / days_in_year
    if 'trend' in flags:
        origin = align_timestamp(Defaults.trend_origin, index)
        columns['trend'] = (index - origin) / pd.Timedelta(days=1)
        columns['trend'] = np.asarray(columns['trend'], dtype=float)
    return columns


def _on_grid(values, positions):
    grid = np.full(int(positions[-1]) + 1 if len(positions) else 0, np.nan)
    grid[positions] = values
    return grid


def _shift(grid, k):
    if k == 0:
        return grid
    shifted = np.full_like(grid, np.nan)
    shifted[k:] = grid[:-k]
    return shifted


def shift_on_grid(values, positions, k):
    """Values k grid steps earlier for every row; NaN where that step has no row."""
    return _shift(_on_grid(values, positions), k)[positions]
