import numpy as np
import pytest

from anl.model.basis import BasisKind, SplineBasis, make_basis
from anl.util.exceptions import ConfigException, DataException
from test.anl.utils import BaseTestCase


class TestMakeBasis(BaseTestCase):

    def setUp(self):
        self.x = np.linspace(0.0, 1.0, 101)

    def test_linear_basis_is_the_identity(self):
        basis = make_basis(BasisKind.LINEAR, self.x)
        assert 1 == basis.dim
        self.assert_allclose(basis.evaluate([-2.0, 0.5, 3.0]), [[-2.0], [0.5], [3.0]])
        assert not basis.penalty.any()

    def test_knots_at_empirical_quantiles(self):
        basis = make_basis('cr', self.x, 5)
        self.assert_allclose(basis.knots, [0.0, 0.25, 0.5, 0.75, 1.0], atol=1e-15)
        assert 5 == basis.dim
        assert (0.0, 1.0) == basis.range

    def test_cubic_basis_interpolates_knot_values(self):
        basis = make_basis('cr', np.random.default_rng(0).normal(size=300), 7)
        self.assert_allclose(basis.evaluate(basis.knots), np.eye(7), atol=1e-12)

    def test_cubic_rows_sum_to_one(self):
        basis = make_basis('cr', self.x, 6)
        X = basis.evaluate(np.linspace(-0.5, 1.5, 41))
        self.assert_allclose(X.sum(axis=1), np.ones(41), atol=1e-12)

    def test_linear_extrapolation_outside_range(self):
        basis = make_basis('cr', self.x, 6)
        coef = np.random.default_rng(1).normal(size=6)
        for xs in ([1.5, 2.0, 2.5], [-2.5, -2.0, -1.5]):
            values = basis.evaluate(xs) @ coef
            self.assert_allclose(values[2] - values[1], values[1] - values[0], atol=1e-10)
            assert np.isfinite(values).all()

    def test_extrapolation_is_continuous_at_the_boundary(self):
        basis = make_basis('cr', self.x, 6)
        inside = basis.evaluate([1.0 - 1e-9, 1e-9])
        outside = basis.evaluate([1.0 + 1e-9, -1e-9])
        self.assert_allclose(inside, outside, atol=1e-7)

    def test_penalty_vanishes_on_linear_functions(self):
        basis = make_basis('cr', np.random.default_rng(2).uniform(size=200), 8)
        S = basis.penalty
        self.assert_allclose(S, S.T, atol=1e-12)
        assert np.linalg.eigvalsh(S).min() > -1e-9
        knots = basis.knots
        for coef in (np.ones(8), 3.0 * knots - 1.0):
            assert abs(coef @ S @ coef) < 1e-8

    def test_cyclic_basis_is_periodic(self):
        basis = make_basis('cc', self.x, 6, period=(0.0, 1.0))
        assert 5 == basis.dim
        self.assert_allclose(basis.evaluate([0.0]), basis.evaluate([1.0]), atol=1e-12)
        self.assert_allclose(basis.evaluate([0.25]), basis.evaluate([1.25]), atol=1e-12)
        self.assert_allclose(basis.evaluate([1.0 - 1e-9]), basis.evaluate([0.0]), atol=1e-7)
        self.assert_allclose(basis.evaluate(self.x).sum(axis=1), np.ones(101), atol=1e-12)

    def test_categorical_basis(self):
        basis = make_basis('categorical', [0, 1, 1, 2, 0])
        assert 3 == basis.dim
        self.assert_allclose(basis.evaluate([2, 0]), [[0, 0, 1], [1, 0, 0]])

    def test_constant_covariate(self):
        with pytest.raises(DataException) as excinfo:
            make_basis('cr', np.ones(50))
        assert 30007 == excinfo.value.code

    def test_too_few_knots(self):
        with pytest.raises(ConfigException) as excinfo:
            make_basis('cr', self.x, 2)
        assert 20040 == excinfo.value.code

    def test_non_finite_input(self):
        basis = make_basis('cr', self.x, 5)
        with pytest.raises(DataException) as excinfo:
            basis.evaluate([0.5, np.nan])
        assert 30009 == excinfo.value.code

    def test_round_trip(self):
        basis = make_basis('cc', self.x, 6, period=(0.0, 1.0))
        copy = SplineBasis.from_dict(basis.to_dict())
        xs = np.linspace(-0.3, 1.3, 17)
        self.assert_allclose(copy.evaluate(xs), basis.evaluate(xs), atol=1e-14)
        assert copy.range == basis.range
