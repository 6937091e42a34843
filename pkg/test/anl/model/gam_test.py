import numpy as np
import pandas as pd
import pytest

from anl.model.basis import BasisKind, SplineBasis
from anl.model.gam import (DAILY, YEARLY, Effect, GamModel, Term, available_mask, fit_gam, gcv_score,
                           incremental_refit)
from anl.types.dataset import Dataset
from anl.util import codec
from anl.util.exceptions import ConfigException, DataException, NumericalException
from test.anl.utils import BaseTestCase, make_dataset


def curve_dataset(fn, n=1000, noise=0.0, seed=0):
    rng = np.random.default_rng(seed)
    x = np.linspace(0.0, 1.0, n)
    y = fn(x) + rng.normal(scale=noise, size=n) if noise else fn(x)
    index = pd.date_range('2020-01-01', periods=n, freq='h')
    return Dataset('curve', pd.DataFrame({'target': y, 'x': x}, index=index))


class TestTerm(BaseTestCase):

    def test_parse(self):
        term = Term.parse('temp:cc:12:0:1')
        assert 'temp' == term.covariate
        assert BasisKind.CYCLIC == term.kind
        assert 12 == term.n_knots
        assert (0.0, 1.0) == term.period
        assert term == Term.parse(term.to_string())
        assert BasisKind.CUBIC == Term.parse('x').kind

    def test_malformed(self):
        for value in ('x:spline', 'x:cr:ten', 'x:cr:5:0'):
            with pytest.raises(ConfigException) as excinfo:
                Term.parse(value)
            assert 20041 == excinfo.value.code, value


class TestFitGam(BaseTestCase):

    def test_linear_effect_is_least_squares(self):
        rng = np.random.default_rng(4)
        x = rng.uniform(-1, 1, 400)
        y = 2.0 * x + 1.0 + rng.normal(scale=0.5, size=400)
        index = pd.date_range('2020-01-01', periods=400, freq='D')
        d = Dataset('lin', pd.DataFrame({'target': y, 'x': x}, index=index))

        model = fit_gam(d, ['x:linear'])
        slope, intercept = np.polyfit(x, y, 1)
        effect = model.effects[0]
        self.assert_allclose(effect.coef[0], slope, rtol=1e-8)
        self.assert_allclose(model.predict(d), slope * x + intercept, rtol=1e-8)
        se = 0.5 / np.sqrt(((x - x.mean()) ** 2).sum())
        assert abs(effect.coef[0] - 2.0) < 3 * se

    def test_smooth_curve_is_recovered(self):
        d = curve_dataset(lambda x: np.sin(2 * np.pi * x))
        model = fit_gam(d, ['x:cr:20'])
        rmse = np.sqrt(np.mean((model.predict(d) - d.target) ** 2))
        assert rmse < 1e-3

    def test_heavy_smoothing_gives_a_line(self):
        d = curve_dataset(lambda x: x ** 2, n=500)
        model = fit_gam(d, ['x:cr:10'], lambdas=[1e8])
        grid = np.linspace(0.0, 1.0, 11)
        fitted = model.predict(pd.DataFrame({'x': grid}))
        second = np.diff(fitted, 2)
        assert np.abs(second).max() < 1e-3

    def test_decomposition(self):
        d = make_dataset(300, columns=('x1', 'x2'), seed=5)
        model = fit_gam(d, ['x1:cr:6', 'x2:cr:6'])
        values = model.effect_values(d)
        self.assert_allclose(model.predict(d) - model.intercept, values.sum(axis=1), atol=1e-12)

    def test_fitted_mean_matches_training_mean(self):
        d = make_dataset(300, columns=('x1', 'x2'), seed=6)
        model = fit_gam(d, ['x1:cr:6', 'x2:linear'])
        self.assert_allclose(model.predict(d).mean(), d.target.mean(), atol=1e-8)

    def test_standardized_effects(self):
        d = make_dataset(300, columns=('x1', 'x2'), seed=7)
        model = fit_gam(d, ['x1:cr:6', 'x2:cr:6'])
        F = model.effect_matrix(d)
        assert (300, 3) == F.shape
        self.assert_allclose(F[:, :2].mean(axis=0), np.zeros(2), atol=1e-10)
        self.assert_allclose(F[:, :2].std(axis=0), np.ones(2), atol=1e-10)
        self.assert_allclose(F[:, 2], np.ones(300))
        row = d.frame.iloc[10]
        self.assert_allclose(model.effect_vector(row), F[10], atol=1e-12)

    def test_scaling_the_target_scales_the_fit(self):
        d = make_dataset(300, columns=('x1', 'x2'), seed=12)
        scaled = d.with_target(7.5 * d.target)
        model = fit_gam(d, ['x1:cr:6', 'x2:linear'], lambdas=[0.5, 1.0])
        other = fit_gam(scaled, ['x1:cr:6', 'x2:linear'], lambdas=[0.5, 1.0])
        self.assert_allclose(other.predict(d), 7.5 * model.predict(d), rtol=1e-8)
        self.assert_allclose(other.sigma2, 7.5 ** 2 * model.sigma2, rtol=1e-8)
        self.assert_allclose(other.effect_matrix(d), model.effect_matrix(d), atol=1e-8)

    def test_gcv_picks_the_grid_minimum(self):
        d = curve_dataset(lambda x: np.sin(2 * np.pi * x), n=400, noise=0.3, seed=2)
        model = fit_gam(d, ['x:cr:10'])
        for i in range(-4, 7):
            assert model.gcv <= gcv_score(d, ['x:cr:10'], [10.0 ** i]) + 1e-12
        assert model.edf < 11

    def test_too_few_rows(self):
        d = make_dataset(40, columns=('x1',))
        with pytest.raises(DataException) as excinfo:
            fit_gam(d, ['x1:cr:5'])
        assert 30004 == excinfo.value.code

    def test_rank_deficient_design_names_the_effect(self):
        d = make_dataset(100, columns=('x1',))
        d = d.with_columns({'x2': d.column('x1')})
        with pytest.raises(NumericalException) as excinfo:
            fit_gam(d, ['x1:linear', 'x2:linear'])
        assert 40001 == excinfo.value.code
        assert 4 == excinfo.value.exit_code
        assert 'x2' in excinfo.value.message

    def test_unknown_covariate(self):
        with pytest.raises(DataException) as excinfo:
            fit_gam(make_dataset(100), ['load:cr:5'])
        assert 30003 == excinfo.value.code

    def test_unusable_rows_are_ignored(self):
        d = make_dataset(200, columns=('x1',), seed=8)
        usable = d.usable
        usable[:50] = False
        model = fit_gam(d.with_columns({}, usable=usable), ['x1:linear'])
        assert 150 == model.n_train


class TestGamModel(BaseTestCase):

    def setUp(self):
        self.model = fit_gam(make_dataset(300, columns=('x1', 'x2'), seed=9), ['x1:cr:6', 'x2:linear'])

    def test_prediction_containers_agree(self):
        frame = pd.DataFrame({'x1': [0.3, -1.2], 'x2': [0.5, 0.1]})
        expected = self.model.predict(frame)
        self.assert_allclose(self.model.predict({'x1': 0.3, 'x2': 0.5}), expected[:1])
        self.assert_allclose(self.model.predict_mean(frame.iloc[1]), expected[1])

        with pytest.raises(TypeError):
            self.model.predict([0.3, 0.5])

    def test_missing_covariate(self):
        with pytest.raises(DataException) as excinfo:
            self.model.predict_mean({'x1': 0.3})
        assert 30003 == excinfo.value.code

    def test_vector_at_the_effect_means(self):
        model = GamModel([Effect('x', SplineBasis(BasisKind.LINEAR), [2.0], 0.0)], 1.0, 1.0, [4.0], [0.5])
        self.assert_allclose(model.effect_vector({'x': 2.0}), [0.0, 1.0])
        self.assert_allclose(model.effect_vector({'x': 3.0}), [4.0, 1.0])

    def test_zero_effects_predict_the_intercept(self):
        model = GamModel([Effect('x', SplineBasis(BasisKind.LINEAR), [0.0], 0.0)], 7.5, 1.0, [0.0], [1.0])
        self.assert_allclose(model.predict({'x': [1.0, -3.0]}), [7.5, 7.5])

    def test_record_of_arrays(self):
        effects = [Effect('x', SplineBasis(BasisKind.LINEAR), [2.0], 0.0),
                   Effect('z', SplineBasis(BasisKind.LINEAR), [1.0], 0.0)]
        model = GamModel(effects, 1.0, 1.0, [0.0, 0.0], [1.0, 1.0])
        self.assert_allclose(model.predict({'x': [1.0, -3.0, 0.5], 'z': 10.0}), [13.0, 5.0, 12.0])
        with pytest.raises(DataException) as excinfo:
            model.predict({'x': [1.0, 2.0], 'z': [1.0, 2.0, 3.0]})
        assert 30016 == excinfo.value.code

    def test_non_positive_effect_sd(self):
        with pytest.raises(NumericalException) as excinfo:
            GamModel([Effect('x', SplineBasis(BasisKind.LINEAR), [1.0], 0.0)], 0.0, 1.0, [0.0], [0.0])
        assert 40003 == excinfo.value.code

    def test_serialized_model_predicts_the_same(self):
        frame = pd.DataFrame({'x1': np.linspace(-3, 3, 13), 'x2': np.linspace(-1, 1, 13)})
        for fmt in codec.FORMATS:
            copy = GamModel.from_dict(codec.loads(codec.dumps(self.model.to_dict(), fmt)))
            self.assert_allclose(copy.predict(frame), self.model.predict(frame), atol=1e-12)
            assert self.model.formula == copy.formula

    def test_unsupported_format_version(self):
        obj = codec.loads(codec.dumps(self.model.to_dict()))
        obj['formatVersion'] = 99
        with pytest.raises(DataException) as excinfo:
            GamModel.from_dict(obj)
        assert 30011 == excinfo.value.code


class TestIncrementalRefit(BaseTestCase):

    def test_yearly_refits(self):
        d = make_dataset(3 * 365, start='2019-01-01', seed=10)
        records = incremental_refit(YEARLY, d, ['x1:cr:5'], '2019-12-31', lambdas=[1.0])
        assert [pd.Timestamp('2020-01-01'), pd.Timestamp('2021-01-01')] == [r.boundary for r in records]
        assert [365, 731] == [r.n_rows for r in records]
        assert 365 == records[0].model.n_train

    def test_daily_refits_respect_the_delay(self):
        d = make_dataset(24 * 12, freq='h', seed=11)
        records = incremental_refit(DAILY, d, ['x1:linear'], d.timestamps[24 * 8 - 1], delay=6)
        assert 4 == len(records)
        assert [24 * k - 6 for k in (8, 9, 10, 11)] == [r.n_rows for r in records]
        boundary = d.timestamps[24 * 9]
        assert 24 * 9 - 6 == available_mask(d, 24 * 9, 6).sum()
        assert boundary == records[1].boundary

    def test_daily_refits_track_a_level_shift(self):
        rng = np.random.default_rng(13)
        x = rng.normal(size=500)
        y = 2.0 * x + rng.normal(scale=0.3, size=500)
        y[400:] += 5.0
        index = pd.date_range('2020-01-01', periods=500, freq='D')
        d = Dataset('shift', pd.DataFrame({'target': y, 'x': x}, index=index))

        offline = fit_gam(d.subset(np.arange(500) < 400), ['x:linear'])
        records = incremental_refit(DAILY, d, ['x:linear'], index[399])
        assert 100 == len(records)
        test = d.frame.iloc[400:]
        refitted = np.array([r.model.predict_mean(test.iloc[k]) for k, r in enumerate(records)])
        rmse_offline = np.sqrt(np.mean((offline.predict(test) - y[400:]) ** 2))
        rmse_refitted = np.sqrt(np.mean((refitted - y[400:]) ** 2))
        assert rmse_offline > 4.5
        assert rmse_refitted < rmse_offline - 0.3

    def test_unknown_schedule(self):
        with pytest.raises(ConfigException) as excinfo:
            incremental_refit('weekly', make_dataset(100), ['x1:linear'], '2020-02-01')
        assert 20042 == excinfo.value.code
