import logging
import os

import numpy as np
import pandas as pd

from anl.types.dataset import CsvSchema, Dataset
from anl.types.defaults import Defaults
from anl.util.exceptions import DataException
from anl.util.helper import atomic_write

log = logging.getLogger(__name__)


def load_csv(path, schema=None, series=None):
    """Load one series from a CSV file.

    A file holding several series (``schema.series`` names the id column) requires ``series``
    to choose one; use load_csv_series to load them all.
    """
    datasets = load_csv_series(path, schema)
    if series is not None:
        try:
            return datasets[str(series)]
        except KeyError:
            raise DataException("Unknown series %s in %s" % (series, path), 3, 30003)
    if len(datasets) != 1:
        raise DataException("%s holds %d series; choose one" % (path, len(datasets)), 3, 30004)
    return next(iter(datasets.values()))


def load_csv_series(path, schema=None):
    """Load every series of a CSV file, keyed by series id in file order of first appearance."""
    if schema is None:
        schema = CsvSchema()
    raw = _read(path, schema)

    roles = [schema.timestamp, schema.target] + ([schema.series] if schema.series else [])
    for name in roles:
        if name not in raw.columns:
            raise DataException("Unknown column %s in %s" % (name, path), 3, 30003)

    covariates = schema.covariates
    if covariates is None:
        covariates = [c for c in raw.columns if c not in roles]
    for name in covariates:
        if name not in raw.columns:
            raise DataException("Unknown column %s in %s" % (name, path), 3, 30003)

    timestamps = _parse_timestamps(raw[schema.timestamp])
    values = {schema.target: _parse_numbers(raw[schema.target], schema.target)}
    for name in covariates:
        if name in schema.categorical:
            values[name] = _parse_categories(raw[name])
        else:
            values[name] = _parse_numbers(raw[name], name)
    frame = pd.DataFrame(values, index=timestamps)

    if schema.series:
        ids = raw[schema.series].astype(str).to_numpy()
    else:
        ids = np.full(len(raw), os.path.splitext(os.path.basename(path))[0])

    datasets = {}
    for series_id in pd.unique(ids):
        part = frame[ids == series_id]
        datasets[str(series_id)] = _build(str(series_id), part, schema)
    log.info('load_csv_series(): %d series from %s', len(datasets), path)
    return datasets


def load_holidays(path):
    """Read an auxiliary calendar: one date per line, blank lines and '#' comments ignored."""
    if not os.path.exists(path):
        raise DataException("No such file: %s" % path, 3, 30001)
    dates = set()
    with open(path, encoding='utf-8') as f:
        for number, line in enumerate(f, start=1):
            line = line.strip()
            if not line or line.startswith('#'):
                continue
            try:
                dates.add(pd.Timestamp(line).date())
            except ValueError as e:
                raise DataException("Malformed date on line %d of %s: %r" % (number, path, line), 3, 30001,
                                    cause=e)
    return frozenset(dates)


def write_frame(frame, path, float_format=None):
    atomic_write(path, frame.to_csv(index=False, float_format=float_format, lineterminator='\n'))


def _read(path, schema):
    if not os.path.exists(path):
        raise DataException("No such file: %s" % path, 3, 30001)
    try:
        return pd.read_csv(path, sep=schema.delimiter, dtype=str, keep_default_na=False, na_values=[''])
    except (pd.errors.ParserError, pd.errors.EmptyDataError, UnicodeDecodeError) as e:
        raise DataException("Malformed CSV %s" % path, 3, 30001, cause=e)


def _parse_timestamps(column):
    parsed = pd.to_datetime(column, format='ISO8601', errors='coerce')
    if parsed.dtype == object:
        # mixed UTC offsets
        parsed = pd.to_datetime(column, format='ISO8601', errors='coerce', utc=True)
    bad = parsed.isna().to_numpy()
    if bad.any():
        i = int(np.argmax(bad))
        raise DataException("Malformed timestamp %r on row %d" % (column.iloc[i], i + 1), 3, 30001)
    return pd.DatetimeIndex(parsed, name='timestamp')


def _parse_numbers(column, name):
    parsed = pd.to_numeric(column, errors='coerce')
    bad = (parsed.isna() & column.notna()).to_numpy()
    if bad.any():
        i = int(np.argmax(bad))
        raise DataException("Malformed value %r in column %s on row %d" % (column.iloc[i], name, i + 1),
                            3, 30001)
    return parsed.to_numpy(dtype=float)


def _parse_categories(column):
    numeric = pd.to_numeric(column, errors='coerce')
    if (numeric.notna() | column.isna()).all():
        return numeric.to_numpy(dtype=float)
    codes = pd.Categorical(column).codes.astype(float)
    codes[codes < 0] = np.nan
    return codes


def _build(series_id, frame, schema):
    frame = frame.sort_index(kind='stable')
    duplicated = frame.index.duplicated()
    if duplicated.any():
        raise DataException("Duplicate timestamp %s in series %s" % (frame.index[duplicated][0], series_id),
                            3, 30002)
    if len(frame) > 1:
        step = pd.Timedelta(int(np.diff(frame.index.asi8).min()), unit='ns')
    else:
        step = pd.Timedelta(days=1)
    frame = clean(frame, schema.target, step, schema.categorical)
    if len(frame) == 0:
        raise DataException("Series %s has no usable rows" % series_id, 3, 30004)
    return Dataset(series_id, frame, schema.target, categorical=schema.categorical, step=step)


def clean(frame, target, step, categorical=(), max_gap=Defaults.max_interpolated_gap):
    """Drop rows without target, fill short covariate gaps, drop rows whose gaps are too long.

    Gaps are measured on the regular time grid, so rows missing from the file count as missing
    values of every covariate.
    """
    dropped = int(frame[target].isna().sum())
    if dropped:
        log.info('clean(): dropped %d rows with missing target', dropped)
    frame = frame[frame[target].notna()]
    covariates = [c for c in frame.columns if c != target]
    if not covariates or len(frame) == 0:
        return frame

    off_grid = (frame.index.asi8 - frame.index.asi8[0]) % step.value != 0
    if off_grid.any():
        raise DataException("Timestamp %s is off the %s grid" % (frame.index[off_grid][0], step), 3, 30008)
    grid = pd.date_range(frame.index[0], frame.index[-1], freq=step)
    regular = frame.reindex(grid)
    for name in covariates:
        values = regular[name]
        missing = values.isna()
        if not missing.any():
            continue
        run_length = missing.groupby((~missing).cumsum()).transform('sum')
        if name in categorical:
            filled = values.ffill()
        else:
            filled = values.interpolate(method='linear', limit_area='inside')
        fillable = missing & (run_length <= max_gap) & filled.notna()
        if name in categorical:
            fillable &= values.bfill().notna()
        regular[name] = values.where(~fillable, filled)

    result = regular.loc[frame.index]
    incomplete = result[covariates].isna().any(axis=1)
    if incomplete.any():
        log.warning('clean(): dropped %d rows with covariate gaps longer than %d steps (first at %s)',
                    int(incomplete.sum()), max_gap, result.index[incomplete.to_numpy()][0])
    return result[~incomplete]
