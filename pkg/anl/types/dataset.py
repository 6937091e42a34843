import datetime
import logging

import numpy as np
import pandas as pd

from anl.types.defaults import Defaults
from anl.util.exceptions import ConfigException, DataException
from anl.util.helper import sha256_bytes

log = logging.getLogger(__name__)

CALENDAR_FEATURES = ('dow', 'tod', 'toy', 'trend')


def align_timestamp(value, index):
    """Convert value to a Timestamp comparable with index (same timezone awareness)."""
    ts = pd.Timestamp(value)
    tz = getattr(index, 'tz', None)
    if tz is not None and ts.tzinfo is None:
        ts = ts.tz_localize(tz)
    elif tz is None and ts.tzinfo is not None:
        ts = ts.tz_convert(None)
    return ts


class Dataset:
    """Time-indexed observations of one series: a target column plus named covariates.

    The frame is indexed by strictly increasing timestamps. Every timestamp difference is a
    positive multiple of ``step``; gaps only come from rows dropped while cleaning. Rows with
    ``usable`` false keep their place on the time grid but are excluded from fitting and
    evaluation, and are the only rows allowed to hold missing values.
    """

    def __init__(self, series_id, frame, target='target', usable=None, categorical=(), step=None):
        if not isinstance(frame.index, pd.DatetimeIndex):
            raise DataException("Dataset frame must be indexed by timestamps", 3, 30000)
        if target not in frame.columns:
            raise DataException("Unknown target column: %s" % target, 3, 30003)
        index = frame.index
        if len(index) > 1:
            deltas = np.diff(index.asi8)
            if (deltas <= 0).any():
                i = int(np.argmax(deltas <= 0)) + 1
                raise DataException("Timestamps not strictly increasing at %s" % index[i], 3, 30002)
            if step is None:
                step = pd.Timedelta(int(deltas.min()), unit='ns')
            step_ns = pd.Timedelta(step).value
            if (deltas % step_ns != 0).any():
                i = int(np.argmax(deltas % step_ns != 0)) + 1
                raise DataException("Timestamp %s is off the %s grid" % (index[i], step), 3, 30008)
        elif step is None:
            step = pd.Timedelta(days=1)

        if usable is None:
            usable = np.ones(len(frame), dtype=bool)
        usable = np.asarray(usable, dtype=bool)
        if usable.shape != (len(frame),):
            raise DataException("Usable mask length differs from the number of rows", 3, 30000)

        missing = frame.loc[usable].isna().any()
        if missing.any():
            raise DataException("Missing values in usable rows of column %s" % missing.idxmax(), 3, 30009)

        self.__series_id = str(series_id)
        self.__frame = frame
        self.__target = target
        self.__usable = usable
        self.__categorical = frozenset(c for c in categorical if c in frame.columns)
        self.__step = pd.Timedelta(step)

    def __len__(self):
        return len(self.__frame)

    def __repr__(self):
        return 'Dataset(series_id=%r, rows=%d, usable=%d, columns=%r)' % (
            self.__series_id, len(self), int(self.__usable.sum()), list(self.__frame.columns))

    @property
    def series_id(self):
        return self.__series_id

    @property
    def frame(self):
        return self.__frame

    @property
    def target_name(self):
        return self.__target

    @property
    def timestamps(self):
        return self.__frame.index

    @property
    def target(self):
        return self.__frame[self.__target].to_numpy(dtype=float)

    @property
    def usable(self):
        return self.__usable.copy()

    @property
    def categorical(self):
        return self.__categorical

    @property
    def step(self):
        return self.__step

    @property
    def columns(self):
        return list(self.__frame.columns)

    @property
    def covariates(self):
        return [c for c in self.__frame.columns if c != self.__target]

    @property
    def positions(self):
        """Integer position of every row on the regular time grid starting at the first timestamp."""
        if len(self) == 0:
            return np.zeros(0, dtype=np.int64)
        return (self.__frame.index.asi8 - self.__frame.index.asi8[0]) // self.__step.value

    def has_column(self, name):
        return name in self.__frame.columns

    def column(self, name):
        if name not in self.__frame.columns:
            raise DataException("Unknown column: %s" % name, 3, 30003)
        return self.__frame[name].to_numpy(dtype=float)

    def with_columns(self, columns, usable=None, categorical=()):
        frame = self.__frame.copy()
        for name, values in columns.items():
            frame[name] = np.asarray(values)
        if usable is None:
            usable = self.__usable
        return Dataset(self.__series_id, frame, self.__target, usable,
                       self.__categorical | frozenset(categorical), self.__step)

    def drop_columns(self, names):
        names = [n for n in names if n in self.__frame.columns and n != self.__target]
        return Dataset(self.__series_id, self.__frame.drop(columns=names), self.__target,
                       self.__usable, self.__categorical - frozenset(names), self.__step)

    def with_target(self, values):
        frame = self.__frame.copy()
        frame[self.__target] = np.asarray(values, dtype=float)
        return Dataset(self.__series_id, frame, self.__target, self.__usable, self.__categorical, self.__step)

    def subset(self, mask):
        mask = np.asarray(mask, dtype=bool)
        return Dataset(self.__series_id, self.__frame.loc[mask], self.__target, self.__usable[mask],
                       self.__categorical, self.__step)

    def usable_only(self):
        return self.subset(self.__usable)

    def between(self, start=None, end=None):
        """Rows with start < timestamp <= end; either bound may be omitted."""
        index = self.__frame.index
        mask = np.ones(len(index), dtype=bool)
        if start is not None:
            mask &= index > align_timestamp(start, index)
        if end is not None:
            mask &= index <= align_timestamp(end, index)
        return self.subset(mask)

    def concat(self, other):
        if other.series_id != self.series_id or other.target_name != self.target_name:
            raise DataException("Cannot join datasets of different series", 3, 30000)
        frame = pd.concat([self.__frame, other.frame])
        usable = np.concatenate([self.__usable, other.usable])
        return Dataset(self.__series_id, frame, self.__target, usable,
                       self.__categorical | other.categorical, self.__step)

    def content_hash(self):
        frame = self.__frame.copy()
        frame['_usable'] = self.__usable
        payload = '%s\n%s\n%s' % (self.__series_id, self.__target, frame.to_csv(float_format='%.17g'))
        return sha256_bytes(payload)

    def to_frame(self):
        frame = self.__frame.copy()
        frame.insert(0, 'series', self.__series_id)
        frame.index.name = 'timestamp'
        return frame.reset_index()


class CsvSchema:
    """Column roles of an input CSV file."""

    def __init__(self, timestamp='timestamp', target='target', series=None, covariates=None,
                 categorical=(), delimiter=Defaults.delimiter):
        if not timestamp or not target:
            raise ConfigException("Schema must name a timestamp and a target column", 2, 20002)
        self.__timestamp = timestamp
        self.__target = target
        self.__series = series
        self.__covariates = list(covariates) if covariates is not None else None
        self.__categorical = tuple(categorical)
        self.__delimiter = delimiter

    @property
    def timestamp(self):
        return self.__timestamp

    @property
    def target(self):
        return self.__target

    @property
    def series(self):
        return self.__series

    @property
    def covariates(self):
        return self.__covariates

    @property
    def categorical(self):
        return self.__categorical

    @property
    def delimiter(self):
        return self.__delimiter

    def to_dict(self):
        return {
            'timestamp': self.timestamp,
            'target': self.target,
            'series': self.series,
            'covariates': self.covariates,
            'categorical': list(self.categorical),
            'delimiter': self.delimiter,
        }

    @staticmethod
    def from_dict(obj):
        return CsvSchema(
            timestamp=obj.get('timestamp', 'timestamp'),
            target=obj.get('target', 'target'),
            series=obj.get('series'),
            covariates=obj.get('covariates'),
            categorical=obj.get('categorical') or (),
            delimiter=obj.get('delimiter', Defaults.delimiter),
        )


def lag_name(source, k):
    return '%s_lag%d' % (source, k)


def moving_average_name(source, window, k):
    return '%s_ma%d_lag%d' % (source, window, k)


def product_name(a, b):
    return '%s_x_%s' % (a, b)


class FeatureSpec:
    """Which derived covariates build_features adds to a dataset.

    ``delay`` is the data-availability delay in steps. A lag or moving average of a column
    observed with the target must reach back at least ``delay`` steps (and at least one step);
    columns listed in ``known_ahead`` (weather forecasts, calendars) may be used undelayed.
    """

    def __init__(self, lags=(), moving_averages=(), calendar=(), holidays=None, products=(), delay=0,
                 ablations=(), known_ahead=()):
        try:
            delay = int(delay)
            lags = [(str(s), int(k)) for s, k in lags]
            moving_averages = [(str(s), int(w), int(k)) for s, w, k in moving_averages]
            products = [(str(a), str(b)) for a, b in products]
        except (TypeError, ValueError) as e:
            raise ConfigException("Malformed feature spec", 2, 20020, cause=e)
        if delay < 0:
            raise ConfigException("Feature delay must be >= 0", 2, 20020)

        known_ahead = frozenset(known_ahead)
        for source, k in lags:
            self.__check_reach(source, k, delay, known_ahead, 'lag')
        for source, window, k in moving_averages:
            if window < 1:
                raise ConfigException("Moving average window must be >= 1: %s" % source, 2, 20020)
            self.__check_reach(source, k, delay, known_ahead, 'moving average')
        calendar = tuple(calendar)
        for flag in calendar:
            if flag not in CALENDAR_FEATURES:
                raise ConfigException("Unknown calendar feature: %s" % flag, 2, 20021)

        self.__lags = lags
        self.__moving_averages = moving_averages
        self.__calendar = calendar
        self.__holidays = {name: frozenset(pd.Timestamp(d).date() for d in dates)
                           for name, dates in (holidays or {}).items()}
        self.__products = products
        self.__delay = delay
        self.__ablations = frozenset(ablations)
        self.__known_ahead = known_ahead

    @staticmethod
    def __check_reach(source, k, delay, known_ahead, what):
        if source in known_ahead:
            if k < 0:
                raise ConfigException("Negative %s of %s" % (what, source), 2, 20020)
        elif k < max(delay, 1):
            raise ConfigException(
                "%s of %s by %d steps reads data unavailable under delay %d"
                % (what.capitalize(), source, k, delay), 2, 20022)

    @property
    def lags(self):
        return list(self.__lags)

    @property
    def moving_averages(self):
        return list(self.__moving_averages)

    @property
    def calendar(self):
        return self.__calendar

    @property
    def holidays(self):
        return dict(self.__holidays)

    @property
    def products(self):
        return list(self.__products)

    @property
    def delay(self):
        return self.__delay

    @property
    def ablations(self):
        return self.__ablations

    @property
    def known_ahead(self):
        return self.__known_ahead

    def with_ablations(self, ablations):
        return FeatureSpec(self.__lags, self.__moving_averages, self.__calendar, self.__holidays,
                           self.__products, self.__delay, ablations, self.__known_ahead)

    def to_dict(self):
        return {
            'lags': [list(x) for x in self.lags],
            'moving_averages': [list(x) for x in self.moving_averages],
            'calendar': list(self.calendar),
            'holidays': {name: sorted(d.isoformat() for d in dates) for name, dates in self.__holidays.items()},
            'products': [list(x) for x in self.products],
            'delay': self.delay,
            'ablations': sorted(self.ablations),
            'known_ahead': sorted(self.known_ahead),
        }

    @staticmethod
    def from_dict(obj):
        return FeatureSpec(
            lags=obj.get('lags') or (),
            moving_averages=obj.get('moving_averages') or (),
            calendar=obj.get('calendar') or (),
            holidays=obj.get('holidays'),
            products=obj.get('products') or (),
            delay=obj.get('delay', 0),
            ablations=obj.get('ablations') or (),
            known_ahead=obj.get('known_ahead') or (),
        )


class TestWindow:
    """Labeled interval (start, end] of test timestamps."""

    __test__ = False

    def __init__(self, label, start, end):
        start, end = pd.Timestamp(start), pd.Timestamp(end)
        if end <= start:
            raise ConfigException("Empty test window %s" % label, 2, 20030)
        self.__label = str(label)
        self.__start = start
        self.__end = end

    @property
    def label(self):
        return self.__label

    @property
    def start(self):
        return self.__start

    @property
    def end(self):
        return self.__end

    def to_dict(self):
        return {'label': self.label, 'start': self.start.isoformat(), 'end': self.end.isoformat()}

    @staticmethod
    def from_dict(obj):
        return TestWindow(obj['label'], obj['start'], obj['end'])


class SplitSpec:
    """Training cut-off and labeled test windows.

    The training set is every usable row with timestamp <= ``train_end``. A test window holds
    the usable rows in (start, end]. Without explicit windows a single window ``test`` covers
    everything after ``train_end``.
    """

    def __init__(self, train_end, test_windows=()):
        train_end = pd.Timestamp(train_end)
        windows = sorted(test_windows, key=lambda w: w.start)
        for w in windows:
            if w.start < train_end:
                raise ConfigException("Test window %s starts before train_end" % w.label, 2, 20031)
        for a, b in zip(windows, windows[1:]):
            if b.start < a.end:
                raise ConfigException("Test windows %s and %s overlap" % (a.label, b.label), 2, 20032)
        self.__train_end = train_end
        self.__test_windows = windows

    @property
    def train_end(self):
        return self.__train_end

    @property
    def test_windows(self):
        return list(self.__test_windows)

    @staticmethod
    def yearly(train_end, years):
        """Windows covering whole calendar years after train_end."""
        def year_end(y):
            return datetime.datetime(y, 12, 31, 23, 59, 59)

        windows = [TestWindow(str(y), year_end(y - 1), year_end(y)) for y in years]
        return SplitSpec(train_end, windows)

    def to_dict(self):
        return {
            'train_end': self.train_end.isoformat(),
            'test_windows': [w.to_dict() for w in self.test_windows],
        }

    @staticmethod
    def from_dict(obj):
        if 'train_end' not in obj:
            raise ConfigException("Split must define train_end", 2, 20030)
        windows = [TestWindow.from_dict(w) for w in obj.get('test_windows') or ()]
        return SplitSpec(obj['train_end'], windows)
