import numpy as np
import pandas as pd

from anl.types.defaults import Defaults
from anl.util.exceptions import DataException


class SeriesScores:
    """Sufficient statistics of the scores of one series on one test window.

    ``sst`` and ``sad`` are the squared and absolute deviations of the observations from their
    own mean over the window, the normalizers of the relative metrics.
    """

    def __init__(self, series_id, window, n, sse, sst, sae, sad, rps_sum=None):
        self.series_id = str(series_id)
        self.window = str(window)
        self.n = int(n)
        self.sse = float(sse)
        self.sst = float(sst)
        self.sae = float(sae)
        self.sad = float(sad)
        self.rps_sum = float(rps_sum) if rps_sum is not None else None

    def __repr__(self):
        return 'SeriesScores(%s, %s, n=%d)' % (self.series_id, self.window, self.n)

    @property
    def rmse(self):
        return float(np.sqrt(self.sse / self.n))

    @property
    def mae(self):
        return self.sae / self.n

    @property
    def rps(self):
        return self.rps_sum / self.n if self.rps_sum is not None else None

    def to_dict(self):
        return {
            'seriesId': self.series_id,
            'window': self.window,
            'n': self.n,
            'sse': self.sse,
            'sst': self.sst,
            'sae': self.sae,
            'sad': self.sad,
            'rpsSum': self.rps_sum,
        }

    @staticmethod
    def from_dict(obj):
        return SeriesScores(obj['seriesId'], obj['window'], obj['n'], obj['sse'], obj['sst'], obj['sae'],
                            obj['sad'], obj.get('rpsSum'))


def aggregate_scores(scores):
    """nRMSE, nMAE and nRPS over series, each series normalized by its own deviations from the mean."""
    scores = list(scores)
    if not scores:
        raise DataException("No series to aggregate", 3, 30013)
    for s in scores:
        if not (s.sst > 0 and s.sad > 0):
            raise DataException("Degenerate normalizer: series %s is constant on window %s"
                                % (s.series_id, s.window), 3, 30013)
    n = len(scores)
    nrmse = float(np.sqrt(sum(s.sse / s.sst for s in scores) / n))
    nmae = sum(s.sae / s.sad for s in scores) / n
    nrps = None
    if all(s.rps_sum is not None for s in scores):
        nrps = sum(s.rps_sum / s.sad for s in scores) / n
    return {'nrmse': nrmse, 'nmae': nmae, 'nrps': nrps}


POOLED = 'pooled'


def band(q, n, z=Defaults.band_z):
    """Binomial 95% band q +- z sqrt(q(1-q)/n) of the frequency of an iid calibrated forecast."""
    half = z * np.sqrt(q * (1.0 - q) / n)
    return q - half, q + half


class ReliabilityRow:
    def __init__(self, level, n, frequency, band_lo, band_hi, series=POOLED, filter='all', window=None):
        self.level = float(level)
        self.n = int(n)
        self.frequency = float(frequency)
        self.band_lo = float(band_lo)
        self.band_hi = float(band_hi)
        self.series = str(series)
        self.filter = str(filter)
        self.window = window

    def __repr__(self):
        return 'ReliabilityRow(level=%r, frequency=%.4f, n=%d)' % (self.level, self.frequency, self.n)

    @property
    def inside_band(self):
        return self.band_lo <= self.frequency <= self.band_hi

    @property
    def hits(self):
        return int(round(self.frequency * self.n))

    def to_dict(self):
        return {
            'level': self.level,
            'n': self.n,
            'frequency': self.frequency,
            'bandLo': self.band_lo,
            'bandHi': self.band_hi,
            'series': self.series,
            'filter': self.filter,
            'window': self.window,
        }

    @staticmethod
    def from_dict(obj):
        return ReliabilityRow(obj['level'], obj['n'], obj['frequency'], obj['bandLo'], obj['bandHi'],
                              obj.get('series', POOLED), obj.get('filter', 'all'), obj.get('window'))


def pool_reliability(rows):
    """Sum pooled rows of disjoint series sets per (window, filter, level) and recompute their bands."""
    totals = {}
    for r in rows:
        n, hits = totals.get((r.window, r.filter, r.level), (0, 0))
        totals[(r.window, r.filter, r.level)] = (n + r.n, hits + r.hits)
    return [ReliabilityRow(level, n, hits / n, *band(level, n), series=POOLED, filter=name, window=window)
            for (window, name, level), (n, hits) in totals.items()]


class EvaluationReport:
    """Scores of one strategy: per-series components per window, aggregates and reliability."""

    def __init__(self, strategy, levels, scores, reliability=(), loss_traces=None):
        self.__strategy = str(strategy)
        self.__levels = [float(q) for q in levels]
        self.__scores = list(scores)
        self.__reliability = list(reliability)
        self.__loss_traces = dict(loss_traces or {})

    def __repr__(self):
        return 'EvaluationReport(%s, windows=%r)' % (self.__strategy, self.windows)

    @property
    def strategy(self):
        return self.__strategy

    @property
    def levels(self):
        return list(self.__levels)

    @property
    def scores(self):
        return list(self.__scores)

    @property
    def reliability(self):
        return list(self.__reliability)

    @property
    def loss_traces(self):
        return dict(self.__loss_traces)

    @property
    def windows(self):
        return list(dict.fromkeys(s.window for s in self.__scores))

    @property
    def series(self):
        return list(dict.fromkeys(s.series_id for s in self.__scores))

    def window_scores(self, window):
        return [s for s in self.__scores if s.window == window]

    def aggregate(self, window):
        return aggregate_scores(self.window_scores(window))

    def merge(self, other):
        """Report over the series of both reports; strategy, windows and levels must agree.

        Per-series reliability rows are kept, the pooled rows are summed over both reports.
        """
        if other.strategy != self.strategy or other.levels != self.levels:
            raise DataException("Cannot merge reports of %s and %s" % (self.strategy, other.strategy), 3, 30015)
        traces = dict(self.__loss_traces)
        traces.update(other.loss_traces)
        rows = self.reliability + other.reliability
        reliability = [r for r in rows if r.series != POOLED]
        reliability += pool_reliability(r for r in rows if r.series == POOLED)
        return EvaluationReport(self.strategy, self.levels, self.scores + other.scores, reliability, traces)

    def scores_frame(self):
        rows = [{'strategy': self.strategy, 'series': s.series_id, 'window': s.window, 'n': s.n,
                 'rmse': s.rmse, 'mae': s.mae, 'rps': s.rps} for s in self.__scores]
        return pd.DataFrame(rows, columns=['strategy', 'series', 'window', 'n', 'rmse', 'mae', 'rps'])

    def aggregate_frame(self):
        rows = []
        for window in self.windows:
            row = {'strategy': self.strategy, 'window': window}
            row.update(self.aggregate(window))
            rows.append(row)
        return pd.DataFrame(rows, columns=['strategy', 'window', 'nrmse', 'nmae', 'nrps'])

    def reliability_frame(self):
        rows = [{'strategy': self.strategy, 'window': r.window, 'series': r.series, 'filter': r.filter,
                 'level': r.level, 'n': r.n, 'frequency': r.frequency, 'band_lo': r.band_lo,
                 'band_hi': r.band_hi} for r in self.__reliability]
        return pd.DataFrame(rows, columns=['strategy', 'window', 'series', 'filter', 'level', 'n', 'frequency',
                                           'band_lo', 'band_hi'])

    def to_dict(self):
        return {
            'formatVersion': Defaults.format_version,
            'strategy': self.strategy,
            'levels': self.levels,
            'scores': [s.to_dict() for s in self.__scores],
            'aggregates': {w: self.aggregate(w) for w in self.windows},
            'reliability': [r.to_dict() for r in self.__reliability],
            'lossTraces': self.loss_traces,
        }

    @staticmethod
    def from_dict(obj):
        if obj.get('formatVersion') != Defaults.format_version:
            raise DataException("Unsupported report format version %r" % obj.get('formatVersion'), 3, 30011)
        return EvaluationReport(
            obj['strategy'], obj.get('levels') or (),
            [SeriesScores.from_dict(s) for s in obj.get('scores') or ()],
            [ReliabilityRow.from_dict(r) for r in obj.get('reliability') or ()],
            obj.get('lossTraces'),
        )
