import numpy as np
import pytest

from anl.model.aggregation import aggregate, boa_update, learning_rates, observe, run_pool
from anl.model.quantile import ogd_step, pinball, predict_quantile
from anl.types.pool import ExpertPool
from anl.types.quantile import QrModel
from anl.util.exceptions import DataException, NumericalException
from test.anl.utils import BaseTestCase


def drifting_stream(n, seed, level_shift=2.0):
    """(z, mean, y) items with z = (1, x); the noise scale and offset change at mid-stream."""
    rng = np.random.default_rng(seed)
    x = rng.normal(size=n)
    mean = rng.normal(size=n)
    scale = np.where(np.arange(n) < n // 2, 1.0, 2.0)
    offset = np.where(np.arange(n) < n // 2, 0.0, level_shift)
    y = mean + offset + 0.5 * x + scale * rng.normal(size=n)
    return [(np.array([1.0, xi]), mi, yi) for xi, mi, yi in zip(x, mean, y)]


class TestAggregate(BaseTestCase):

    def test_uniform_average(self):
        pool = ExpertPool.create(0.5, [0.0], [0.1, 0.2, 0.3])
        assert 2.0 == pytest.approx(aggregate(pool, [1.0, 2.0, 3.0]))

    def test_vertex(self):
        pool = ExpertPool(0.5, [0.1, 0.2, 0.3], np.zeros((3, 1)), np.log([1e-300, 1.0, 1e-300]))
        assert 2.5 == pytest.approx(aggregate(pool, [1.0, 2.5, 3.0]))

    def test_result_lies_between_the_experts(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            pool = ExpertPool(0.5, [0.1, 0.2, 0.3, 0.4], np.zeros((4, 1)), rng.normal(size=4) * 5)
            forecasts = rng.normal(size=4)
            value = aggregate(pool, forecasts)
            assert forecasts.min() <= value <= forecasts.max()

    def test_non_finite_forecast_names_the_expert(self):
        pool = ExpertPool.create(0.5, [0.0], [0.1, 0.2, 0.3])
        with pytest.raises(NumericalException) as excinfo:
            aggregate(pool, [1.0, np.nan, 3.0])
        assert 40002 == excinfo.value.code
        assert 'expert 1' in excinfo.value.message


class TestBoaUpdate(BaseTestCase):

    def test_identical_losses_keep_uniform_weights(self):
        pool = ExpertPool.create(0.5, [0.0], [0.1, 0.2, 0.3])
        pool = boa_update(pool, [0.4, 0.4, 0.4], 0.4)
        self.assert_allclose(pool.weights, np.full(3, 1 / 3))

    def test_better_expert_takes_over(self):
        pool = ExpertPool.create(0.5, [0.0], [0.1, 0.2], eta=0.1)
        losses = np.array([0.4, 0.5])
        previous = pool.weights[0]
        for _ in range(500):
            pool = boa_update(pool, losses, float(pool.weights @ losses))
            assert pool.weights[0] > previous
            previous = pool.weights[0]
        assert pool.weights[0] > 0.99

    def test_weights_stay_on_the_simplex(self):
        rng = np.random.default_rng(1)
        pool = ExpertPool.create(0.5, [0.0], [0.1, 0.2, 0.3])
        for losses in rng.uniform(size=(10 ** 5, 3)):
            pool = boa_update(pool, losses, float(pool.weights @ losses))
        weights = pool.weights
        assert (weights >= 0).all()
        assert abs(weights.sum() - 1.0) < 1e-9

    def test_self_tuned_learning_rate(self):
        pool = ExpertPool.create(0.5, [0.0], [0.1, 0.2])
        assert np.isinf(learning_rates(pool, pool.sq_regret, pool.max_regret)).all()
        pool = boa_update(pool, [0.2, 0.6], 0.4)
        self.assert_allclose(pool.sq_regret, [0.04, 0.04])
        self.assert_allclose(learning_rates(pool, pool.sq_regret, pool.max_regret),
                             np.full(2, np.sqrt(np.log(2)) / 0.2))

    def test_invalid_losses(self):
        pool = ExpertPool.create(0.5, [0.0], [0.1, 0.2])
        for losses, loss in (([0.1, -0.1], 0.1), ([0.1, np.inf], 0.1), ([0.1, 0.2], np.nan)):
            with pytest.raises(ValueError):
                boa_update(pool, losses, loss)


class TestRunPool(BaseTestCase):

    def test_single_expert_is_plain_ogd(self):
        stream = drifting_stream(500, seed=2)
        trace = run_pool(ExpertPool.create(0.7, [0.1, 0.0], [0.05]), stream)
        m = QrModel(0.7, [0.1, 0.0])
        expected = []
        for z, mean, y in stream:
            expected.append(predict_quantile(m, z, mean))
            m = ogd_step(m, z, y - mean, 0.05)
        self.assert_allclose(trace.forecasts, expected, rtol=1e-12, atol=1e-12)
        self.assert_allclose(trace.weights, np.ones((500, 1)))

    def test_duplicated_expert_does_not_change_the_forecast(self):
        stream = drifting_stream(1000, seed=3)
        plain = run_pool(ExpertPool.create(0.3, [0.0, 0.0], [0.001, 0.1]), stream)
        duplicated = run_pool(ExpertPool.create(0.3, [0.0, 0.0], [0.001, 0.1, 0.1]), stream)
        self.assert_allclose(duplicated.forecasts, plain.forecasts, rtol=0.0, atol=1e-10)
        self.assert_allclose(duplicated.weights[:, 1] + duplicated.weights[:, 2], plain.weights[:, 1], atol=1e-12)

    def test_forecasts_do_not_see_their_own_observation(self):
        stream = drifting_stream(300, seed=4)
        for delay in (0, 2):
            a = run_pool(ExpertPool.create(0.5, [0.0, 0.0], [0.01, 0.1]), stream, delay)
            # move the observation across an expert forecast so the update differs
            z, mean, y = stream[150]
            changed = list(stream)
            changed[150] = (z, mean, y - 200.0 if y > a.expert_forecasts[150].min() else y + 200.0)
            b = run_pool(ExpertPool.create(0.5, [0.0, 0.0], [0.01, 0.1]), changed, delay)
            last_unaffected = 150 + delay
            self.assert_allclose(b.forecasts[:last_unaffected + 1], a.forecasts[:last_unaffected + 1], rtol=0.0)
            assert not np.allclose(b.forecasts[last_unaffected + 1:], a.forecasts[last_unaffected + 1:])

    def test_regret_against_the_best_expert(self):
        stream = drifting_stream(2000, seed=5)
        pool = ExpertPool.create(0.9, [0.0, 0.0], [0.001, 0.01, 0.1])
        trace = run_pool(pool, stream)
        totals = trace.expert_losses.sum(axis=0)
        B = trace.expert_losses.max() - trace.expert_losses.min()
        bound = totals.min() + B * np.sqrt(len(stream)) * np.log(pool.n_distinct)
        assert trace.losses.sum() <= bound
        weights = trace.weights
        self.assert_allclose(weights.sum(axis=1), np.ones(len(stream)), atol=1e-9)

    def test_observe_matches_run_pool(self):
        stream = drifting_stream(20, seed=6)
        pool = ExpertPool.create(0.5, [0.0, 0.0], [0.01, 0.1])
        for z, mean, y in stream:
            forecasts = pool.forecasts(z, mean)
            pool = observe(pool, z, mean, y, forecasts, aggregate(pool, forecasts))
        trace = run_pool(ExpertPool.create(0.5, [0.0, 0.0], [0.01, 0.1]), stream)
        self.assert_allclose(trace.pool.betas, pool.betas)
        self.assert_allclose(trace.pool.weights, pool.weights)
        self.assert_allclose(trace.losses[-1], pinball(stream[-1][2], trace.forecasts[-1], 0.5))


class TestExpertPool(BaseTestCase):

    def test_prior_splits_duplicated_step_sizes(self):
        pool = ExpertPool.create(0.5, [0.0], [0.1, 0.2, 0.2])
        assert 2 == pool.n_distinct
        self.assert_allclose(pool.weights, [0.5, 0.25, 0.25])

    def test_default_step_sizes(self):
        pool = ExpertPool.create(0.5, [1.0, 2.0])
        assert 9 == pool.size
        self.assert_allclose(pool.step_sizes[[0, -1]], [1e-8, 1.0])
        self.assert_allclose(pool.forecasts([1.0, 1.0], 0.5), np.full(9, 3.5))

    def test_validation(self):
        with pytest.raises(ValueError):
            ExpertPool(0.5, [], np.zeros((0, 1)))
        with pytest.raises(ValueError):
            ExpertPool(0.5, [0.1, -0.1], np.zeros((2, 1)))
        with pytest.raises(ValueError):
            ExpertPool(1.5, [0.1], np.zeros((1, 1)))

    def test_round_trip(self):
        pool = boa_update(ExpertPool.create(0.5, [0.0], [0.1, 0.2]), [0.1, 0.3], 0.2)
        copy = ExpertPool.from_dict(pool.to_dict())
        self.assert_allclose(copy.weights, pool.weights)
        self.assert_allclose(copy.sq_regret, pool.sq_regret)

        with pytest.raises(DataException) as excinfo:
            ExpertPool.from_dict({'level': 0.5})
        assert 30011 == excinfo.value.code
