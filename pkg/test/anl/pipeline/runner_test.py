import numpy as np
import pandas as pd
import pytest

from anl.model.covariates import QuantileCovariates
from anl.pipeline.runner import StrategyRunner, run_strategy
from anl.types.strategy import MeanMode, QuantileMode, StrategySpec
from anl.util import codec
from anl.util.exceptions import ConfigException, DataException
from test.anl.utils import (FORMULA, LEVELS, BaseTestCase, VaryByFormatTestsMetaclass, dont_vary_format,
                            make_dataset)


@pytest.fixture(autouse=True)
def split_data(request, hourly_split):
    request.cls.train, request.cls.tests = hourly_split


def spec_of(name, **kwargs):
    options = {'formula': FORMULA, 'levels': LEVELS}
    options.update(kwargs)
    return StrategySpec.parse(name, **options)


class TestStrategySpec(BaseTestCase):

    def test_parse(self):
        spec = spec_of('incremental(yearly)+ogd(0.01)')
        assert MeanMode.INCREMENTAL == spec.mean
        assert QuantileMode.OGD == spec.quantile
        assert 'yearly' == spec.schedule
        assert 0.01 == spec.alpha
        assert 'incremental(yearly)+ogd(0.01)' == spec.name
        assert 'persistence(24)+none' == spec_of('persistence(24)').name
        assert [] == spec_of('persistence(24)').levels

    def test_round_trip(self):
        spec = spec_of('kalman-dynamic+ogd-boa', delay=24, eta=0.5)
        assert spec == StrategySpec.from_dict(codec.loads(codec.dumps(spec.to_dict())))

    def test_invalid(self):
        cases = (
            ('offline+offline-qr+x', {}, 20050),
            ('offline(3)+none', {}, 20050),
            ('magic+none', {}, 20050),
            ('offline+gaussian', {}, 20050),
            ('incremental(hourly)+none', {}, 20042),
            ('offline+ogd', {}, 20051),
            ('offline+ogd(-1)', {}, 20051),
            ('persistence(1)+none', {'delay': 24}, 20052),
            ('offline+offline-qr', {'levels': [0.5, 0.1]}, 20053),
            ('offline+none', {'formula': []}, 20054),
            ('persistence(1)+offline-qr', {'covariates': QuantileCovariates(effects=['x1'])}, 20058),
            ('offline+offline-qr', {'covariates': QuantileCovariates(effects=['x9'])}, 20058),
        )
        for name, kwargs, code in cases:
            with pytest.raises(ConfigException) as excinfo:
                spec_of(name, **kwargs)
            assert code == excinfo.value.code, name
            assert 2 == excinfo.value.exit_code


class TestStrategyRunner(BaseTestCase):

    def test_trace_columns(self):
        result = run_strategy(spec_of('kalman-dynamic+gaussian'), self.train, self.tests)
        trace = result.trace
        assert ['timestamp', 'series', 'window', 'target', 'mean', 'sd', 'q0.1', 'q0.5', 'q0.9'] == \
            list(trace.columns)
        assert 72 == len(trace)
        assert (trace['window'] == 'test').all()
        assert (trace['sd'] > 0).all()
        assert (trace['q0.1'] <= trace['q0.5']).all()
        assert (trace['q0.5'] <= trace['q0.9']).all()
        self.assert_allclose(trace['target'].to_numpy(), self.tests[0][1].target)
        assert result.audit.passed
        assert {'fit', 'update', 'forecast', 'evaluate'} <= set(result.timings)

    def test_quantile_covariates_from_the_kalman_effects(self):
        spec = spec_of('kalman-dynamic+ogd-boa', covariates=QuantileCovariates(effects=['x1', 'x2']))
        runner = StrategyRunner(spec, self.train, self.tests).run()
        assert ['mean', 'mean2', 'f:x1', 'f:x2', 'const'] == runner.quantile_engine._covariates.names
        result = run_strategy(spec, self.train, self.tests)
        assert result.audit.passed
        assert 72 == len(result.trace)

    def test_point_strategy_trace(self):
        result = run_strategy(spec_of('offline+none'), self.train, self.tests)
        assert ['timestamp', 'series', 'window', 'target', 'mean'] == list(result.trace.columns)
        assert result.weights is None

    def test_warm_start_reproduces_the_gam_forecast(self):
        for name in ('kalman-static+none', 'kalman-dynamic+none'):
            runner = StrategyRunner(spec_of(name, burn_in=False), self.train, self.tests)
            record = runner.step()
            expected = runner.mean_engine.gam.predict(self.tests[0][1].frame)[0]
            assert abs(record.mean - expected) < 1e-9

    def test_swapping_the_quantile_learner_keeps_the_mean(self):
        first = run_strategy(spec_of('kalman-dynamic+gaussian'), self.train, self.tests)
        gam, params = first.mean_engine.gam, first.mean_engine.params
        for quantile in ('none', 'offline-qr', 'ogd-boa', 'incremental-qr'):
            other = run_strategy(spec_of('kalman-dynamic+' + quantile), self.train, self.tests, gam, params)
            assert first.trace['mean'].tolist() == other.trace['mean'].tolist()

    def test_quantile_forecasts_are_sorted(self):
        result = run_strategy(spec_of('offline+ogd(1.0)'), self.train, self.tests)
        values = result.trace[['q0.1', 'q0.5', 'q0.9']].to_numpy()
        assert (np.diff(values, axis=1) >= 0).all()

    def test_boa_weights(self):
        result = run_strategy(spec_of('kalman-static+ogd-boa'), self.train, self.tests)
        weights = result.weights
        assert ['timestamp', 'level', 'alpha', 'weight'] == list(weights.columns)
        assert 72 * len(LEVELS) * 9 == len(weights)
        sums = weights.groupby(['timestamp', 'level'])['weight'].sum()
        self.assert_allclose(sums.to_numpy(), np.ones(72 * len(LEVELS)), atol=1e-9)

    def test_events(self):
        runner = StrategyRunner(spec_of('incremental(daily)+offline-qr'), self.train, self.tests)
        seen = {'forecast': 0, 'refit': 0, 'update': 0, 'checkpoint': 0}

        def count(name):
            def listener(*args):
                seen[name] += 1
            return listener

        for name in seen:
            runner.on(name, count(name))
        runner.run(checkpoint_every=24, on_checkpoint=lambda r: None)
        assert 72 == seen['forecast']
        # test steps run from 16:00 on day 17 for three days: the offline fit plus three midnight refits
        assert 4 == seen['refit']
        assert 3 == seen['checkpoint']
        assert len(runner.access_log) == seen['update']

    def test_listener_errors_do_not_stop_the_run(self):
        runner = StrategyRunner(spec_of('offline+none'), self.train, self.tests)

        def broken(record):
            raise RuntimeError('listener')

        runner.on('forecast', broken)
        runner.run()
        assert runner.done

    def test_step_after_the_end(self):
        runner = StrategyRunner(spec_of('persistence(24)'), self.train, self.tests)
        runner.run()
        with pytest.raises(IndexError):
            runner.step()

    def test_test_windows(self):
        test = self.tests[0][1]
        first = test.subset(np.arange(len(test)) < 24)
        second = test.subset(np.arange(len(test)) >= 24)
        result = run_strategy(spec_of('offline+offline-qr'), self.train, [('day1', first), ('rest', second)])
        assert ['day1', 'rest'] == result.report.windows
        assert [24, 48] == [int((result.trace['window'] == w).sum()) for w in ('day1', 'rest')]

    def test_normalized_runs_report_on_the_original_scale(self):
        raw = run_strategy(spec_of('offline+offline-qr'), self.train, self.tests)
        normalized = run_strategy(spec_of('offline+offline-qr', normalize=True), self.train, self.tests)
        self.assert_allclose(normalized.trace['target'].to_numpy(), raw.trace['target'].to_numpy())
        self.assert_allclose(normalized.trace['mean'].to_numpy(), raw.trace['mean'].to_numpy(), rtol=1e-6)

    def test_empty_inputs(self):
        with pytest.raises(DataException) as excinfo:
            StrategyRunner(spec_of('offline+none'), self.train, [])
        assert 30012 == excinfo.value.code
        flat = make_dataset(100, freq='h', target=np.ones(100), columns=('x1', 'x2'))
        train, test = flat.subset(np.arange(100) < 80), flat.subset(np.arange(100) >= 80)
        with pytest.raises(DataException) as excinfo:
            StrategyRunner(spec_of('persistence(1)', normalize=True), train, test)
        assert 30013 == excinfo.value.code


class TestCheckpoint(BaseTestCase, metaclass=VaryByFormatTestsMetaclass):

    def per_format_setup(self, fmt):
        self.fmt = fmt

    def resumed(self, spec, stop):
        runner = StrategyRunner(spec, self.train, self.tests)
        runner.run(until=stop)
        assert stop == runner.cursor
        obj = codec.loads(codec.dumps(runner.to_dict(), self.fmt))
        restored = StrategyRunner.from_dict(obj, self.train, self.tests)
        assert stop == restored.cursor
        return restored.run()

    def test_resume_reproduces_the_uninterrupted_run(self):
        for name in ('kalman-dynamic+ogd-boa', 'incremental(daily)+incremental-qr', 'kalman-static+gaussian'):
            spec = spec_of(name, delay=3)
            full = StrategyRunner(spec, self.train, self.tests).run()
            resumed = self.resumed(spec, 30)
            pd.testing.assert_frame_equal(full.trace(), resumed.trace())
            assert full.access_log == resumed.access_log
            weights = full.weight_trace()
            if weights is not None:
                pd.testing.assert_frame_equal(weights, resumed.weight_trace())

    def test_resume_before_the_first_step(self):
        spec = spec_of('offline+offline-qr')
        full = StrategyRunner(spec, self.train, self.tests).run()
        pd.testing.assert_frame_equal(full.trace(), self.resumed(spec, 0).trace())

    @dont_vary_format
    def test_checkpoint_of_another_series(self):
        runner = StrategyRunner(spec_of('offline+none'), self.train, self.tests)
        runner.run(until=5)
        obj = runner.to_dict()
        obj['seriesId'] = 'other'
        with pytest.raises(DataException) as excinfo:
            StrategyRunner.from_dict(obj, self.train, self.tests)
        assert 30011 == excinfo.value.code
        obj['formatVersion'] = 99
        with pytest.raises(DataException) as excinfo:
            StrategyRunner.from_dict(obj, self.train, self.tests)
        assert 30011 == excinfo.value.code
