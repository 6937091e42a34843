import os

import numpy as np
import pandas as pd
import pytest

from anl.evaluation.report import comparison_table, evaluate, level_column, trace_levels, write_report
from anl.types.report import EvaluationReport, aggregate_scores
from anl.util import codec
from anl.util.exceptions import DataException
from test.anl.utils import LEVELS, BaseTestCase


def make_trace(seed=0, series=('a', 'b'), windows=('2020', '2021'), n=48, noise=0.5):
    rng = np.random.default_rng(seed)
    frames = []
    for window_index, window in enumerate(windows):
        start = pd.Timestamp('2020-01-01') + pd.Timedelta(days=366 * window_index)
        index = pd.date_range(start, periods=n, freq='h')
        for s in series:
            y = rng.normal(size=n)
            mean = y + noise * rng.normal(size=n)
            frame = pd.DataFrame({'timestamp': index, 'series': s, 'window': window, 'target': y, 'mean': mean})
            for q, z in zip(LEVELS, (-1.2816, 0.0, 1.2816)):
                frame[level_column(q)] = mean + noise * z
            frames.append(frame)
    return pd.concat(frames, ignore_index=True)


class TestEvaluate(BaseTestCase):

    def setUp(self):
        self.trace = make_trace()

    def test_level_columns(self):
        assert 'q0.1' == level_column(0.1)
        assert 'q0.975' == level_column(0.975)
        assert LEVELS == trace_levels(self.trace)

    def test_scores_per_series_and_window(self):
        report = evaluate('offline+offline-qr', self.trace)
        assert ['2020', '2021'] == report.windows
        assert ['a', 'b'] == report.series
        assert 4 == len(report.scores)
        scores = report.window_scores('2020')[0]
        part = self.trace[(self.trace['window'] == '2020') & (self.trace['series'] == 'a')]
        self.assert_allclose(scores.rmse, np.sqrt(np.mean((part['target'] - part['mean']) ** 2)))
        assert 96 == len(report.loss_traces['a'])

    def test_aggregates_come_from_the_stored_components(self):
        report = evaluate('s', self.trace)
        copy = EvaluationReport.from_dict(codec.loads(codec.dumps(report.to_dict())))
        for window in report.windows:
            assert report.aggregate(window) == aggregate_scores(copy.window_scores(window))

    def test_mean_predictor_scores_one(self):
        trace = self.trace.copy()
        for (window, series), rows in trace.groupby(['window', 'series']):
            trace.loc[rows.index, 'mean'] = rows['target'].mean()
        report = evaluate('climatology+none', trace[['timestamp', 'series', 'window', 'target', 'mean']])
        frame = report.aggregate_frame()
        self.assert_allclose(frame['nrmse'].to_numpy(), [1.0, 1.0], atol=1e-12)
        self.assert_allclose(frame['nmae'].to_numpy(), [1.0, 1.0], atol=1e-12)
        assert frame['nrps'].isna().all()
        assert [] == report.reliability

    def test_reliability_rows(self):
        trace = make_trace(n=24 * 40)
        report = evaluate('s', trace, tod_filters=['12:00'])
        frame = report.reliability_frame()
        # two series and the pooled rows, 40 rows at noon per series and window
        noon = frame[frame['filter'] == '12:00']
        assert 3 * 2 * len(LEVELS) == len(noon)
        assert (noon[noon['series'] == 'pooled']['n'] == 80).all()
        assert (noon[noon['series'] != 'pooled']['n'] == 40).all()
        assert 2 * 3 * 2 * len(LEVELS) == len(frame)

    def test_reliability_per_series_and_pooled(self):
        report = evaluate('s', make_trace(windows=('2020',), n=100))
        assert ['a', 'b', 'pooled'] == sorted({r.series for r in report.reliability})
        pooled = [r for r in report.reliability if r.series == 'pooled']
        assert [200] * len(LEVELS) == [r.n for r in pooled]
        for row in pooled:
            hits = sum(r.hits for r in report.reliability if r.series != 'pooled' and r.level == row.level)
            self.assert_allclose(row.frequency, hits / 200.0)
            half = 1.959964 * np.sqrt(row.level * (1 - row.level) / 200)
            self.assert_allclose([row.band_lo, row.band_hi], [row.level - half, row.level + half], rtol=1e-6)

    def test_missing_column(self):
        with pytest.raises(DataException) as excinfo:
            evaluate('s', self.trace.drop(columns=['mean']))
        assert 30003 == excinfo.value.code


class TestComparison(BaseTestCase):

    def test_one_row_per_strategy_and_window(self):
        trace = make_trace()
        table = comparison_table([evaluate('good', trace), evaluate('bad', make_trace(noise=2.0))])
        assert ['good', 'good', 'bad', 'bad'] == list(table['strategy'])
        good = table[table['strategy'] == 'good']['nrmse'].to_numpy()
        bad = table[table['strategy'] == 'bad']['nrmse'].to_numpy()
        assert (good < bad).all()

    def test_incompatible_windows(self):
        with pytest.raises(DataException) as excinfo:
            comparison_table([evaluate('a', make_trace()), evaluate('b', make_trace(windows=('2020',)))])
        assert 30015 == excinfo.value.code
        with pytest.raises(DataException):
            comparison_table([])

    def test_merge(self):
        a = evaluate('s', make_trace(series=('a',)))
        b = evaluate('s', make_trace(series=('b',), seed=1))
        merged = a.merge(b)
        assert ['a', 'b'] == merged.series
        both = evaluate('s', pd.concat([make_trace(series=('a',)), make_trace(series=('b',), seed=1)],
                                       ignore_index=True))
        pooled = [r for r in merged.reliability if r.series == 'pooled']
        expected = [r for r in both.reliability if r.series == 'pooled']
        assert [(r.window, r.level, r.n) for r in expected] == [(r.window, r.level, r.n) for r in pooled]
        assert [96] * 2 * len(LEVELS) == [r.n for r in pooled]
        self.assert_allclose([r.frequency for r in pooled], [r.frequency for r in expected])
        self.assert_allclose([r.band_lo for r in pooled], [r.band_lo for r in expected])
        assert 2 * 2 * len(LEVELS) == sum(r.series != 'pooled' for r in merged.reliability)
        with pytest.raises(DataException) as excinfo:
            a.merge(evaluate('other', make_trace(series=('b',))))
        assert 30015 == excinfo.value.code


class TestWriteReport(BaseTestCase):

    @pytest.fixture(autouse=True)
    def tmp_dir(self, tmp_path):
        self.tmp = str(tmp_path)

    def test_files(self):
        report = evaluate('s', make_trace())
        paths = write_report(report, self.tmp)
        assert sorted(['report', 'metrics', 'scores', 'reliability']) == sorted(paths)
        for path in paths.values():
            assert os.path.exists(path)
        metrics = pd.read_csv(paths['metrics'])
        assert ['strategy', 'window', 'nrmse', 'nmae', 'nrps'] == list(metrics.columns)
        reliability = pd.read_csv(paths['reliability'])
        assert {'level', 'n', 'frequency', 'band_lo', 'band_hi'} <= set(reliability.columns)
        with open(paths['report'], 'rb') as f:
            assert 's' == codec.loads(f.read())['strategy']
