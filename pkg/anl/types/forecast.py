import numpy as np
import pandas as pd

from anl.util.exceptions import NumericalException

UPDATE_KINDS = ('fit', 'refit', 'state', 'quantile')
FEATURE_KINDS = ('feature',)


class ForecastRecord:
    """Mean and quantile forecasts of one step of one series."""

    def __init__(self, timestamp, series_id, mean, quantiles=None, sd=None, window=None, observed=None):
        mean = float(mean)
        quantiles = {float(q): float(v) for q, v in (quantiles or {}).items()}
        if not np.isfinite(mean):
            raise NumericalException("Non-finite mean forecast at %s" % timestamp, 4, 40002)
        values = [quantiles[q] for q in sorted(quantiles)]
        if not np.isfinite(values).all():
            raise NumericalException("Non-finite quantile forecast at %s" % timestamp, 4, 40002)
        if (np.diff(values) < 0).any():
            raise ValueError("Quantile forecasts must be monotone in the level")
        self.__timestamp = pd.Timestamp(timestamp)
        self.__series_id = str(series_id)
        self.__mean = mean
        self.__quantiles = {q: quantiles[q] for q in sorted(quantiles)}
        self.__sd = float(sd) if sd is not None else None
        self.__window = window
        self.__observed = float(observed) if observed is not None else None

    def __repr__(self):
        return 'ForecastRecord(%s, %s, mean=%.6g)' % (self.__series_id, self.__timestamp, self.__mean)

    @property
    def timestamp(self):
        return self.__timestamp

    @property
    def series_id(self):
        return self.__series_id

    @property
    def mean(self):
        return self.__mean

    @property
    def quantiles(self):
        return dict(self.__quantiles)

    @property
    def levels(self):
        return list(self.__quantiles)

    @property
    def sd(self):
        return self.__sd

    @property
    def window(self):
        return self.__window

    @property
    def observed(self):
        return self.__observed

    def to_dict(self):
        return {
            'timestamp': self.timestamp.isoformat(),
            'seriesId': self.series_id,
            'mean': self.mean,
            'levels': self.levels,
            'values': [self.__quantiles[q] for q in self.levels],
            'sd': self.sd,
            'window': self.window,
            'observed': self.observed,
        }

    @staticmethod
    def from_dict(obj):
        return ForecastRecord(
            obj['timestamp'], obj['seriesId'], obj['mean'],
            dict(zip(obj.get('levels') or (), obj.get('values') or ())),
            obj.get('sd'), obj.get('window'), obj.get('observed'),
        )


class AccessRecord:
    """One observation consumed by the run.

    ``position`` is the grid position of the time the access happened: for updates (``fit``,
    ``refit``, ``state``, ``quantile``) the last forecast step before the update, for ``feature``
    reads the step being forecast. ``consumed`` is the grid position of the observation read.
    """

    def __init__(self, kind, position, timestamp, consumed, consumed_timestamp):
        if kind not in UPDATE_KINDS + FEATURE_KINDS:
            raise ValueError("Unknown access kind %r" % kind)
        self.kind = kind
        self.position = int(position)
        self.timestamp = pd.Timestamp(timestamp)
        self.consumed = int(consumed)
        self.consumed_timestamp = pd.Timestamp(consumed_timestamp)

    def __repr__(self):
        return 'AccessRecord(%s at %s consumed %s)' % (self.kind, self.timestamp, self.consumed_timestamp)

    def __eq__(self, other):
        return isinstance(other, AccessRecord) and self.to_dict() == other.to_dict()

    @property
    def is_update(self):
        return self.kind in UPDATE_KINDS

    def to_dict(self):
        return {
            'kind': self.kind,
            'position': self.position,
            'timestamp': self.timestamp.isoformat(),
            'consumed': self.consumed,
            'consumedTimestamp': self.consumed_timestamp.isoformat(),
        }

    @staticmethod
    def from_dict(obj):
        return AccessRecord(obj['kind'], obj['position'], obj['timestamp'], obj['consumed'],
                            obj['consumedTimestamp'])


def access_frame(records):
    """Access log as a table with one row per record."""
    columns = ['kind', 'position', 'timestamp', 'consumed', 'consumed_timestamp']
    rows = [(r.kind, r.position, r.timestamp.isoformat(), r.consumed, r.consumed_timestamp.isoformat())
            for r in records]
    return pd.DataFrame(rows, columns=columns)


def access_records(frame):
    return [AccessRecord(row.kind, row.position, row.timestamp, row.consumed, row.consumed_timestamp)
            for row in frame.itertuples(index=False)]
