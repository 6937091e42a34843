"""Penalized regression spline bases for one-dimensional additive effects.

Cubic bases are parameterized by the function values at the knots. Second derivatives at the
knots follow from the values through a banded linear system; the wiggliness penalty
``integral f''(x)^2 dx`` is then the quadratic form ``beta' S beta``.
"""
import logging
from enum import Enum

import numpy as np
from scipy import linalg

from anl.types.defaults import Defaults
from anl.util.exceptions import ConfigException, DataException

log = logging.getLogger(__name__)


class BasisKind(str, Enum):
    CUBIC = 'cr'
    CYCLIC = 'cc'
    LINEAR = 'linear'
    CATEGORICAL = 'categorical'


def _cubic_matrices(knots):
    """D and B of the natural cubic spline conditions; second derivatives are B^-1 D beta."""
    h = np.diff(knots)
    k = len(knots)
    D = np.zeros((k - 2, k))
    B = np.zeros((k - 2, k - 2))
    for i in range(k - 2):
        D[i, i] = 1.0 / h[i]
        D[i, i + 1] = -1.0 / h[i] - 1.0 / h[i + 1]
        D[i, i + 2] = 1.0 / h[i + 1]
        B[i, i] = (h[i] + h[i + 1]) / 3.0
        if i < k - 3:
            B[i, i + 1] = B[i + 1, i] = h[i + 1] / 6.0
    return D, B


def _cyclic_matrices(knots):
    h = np.diff(knots)
    m = len(knots) - 1
    D = np.zeros((m, m))
    B = np.zeros((m, m))
    for i in range(m):
        prev = (i - 1) % m
        nxt = (i + 1) % m
        B[i, i] += (h[prev] + h[i]) / 3.0
        B[i, nxt] += h[i] / 6.0
        B[i, prev] += h[prev] / 6.0
        D[i, i] -= 1.0 / h[prev] + 1.0 / h[i]
        D[i, nxt] += 1.0 / h[i]
        D[i, prev] += 1.0 / h[prev]
    return D, B


class SplineBasis:
    def __init__(self, kind, knots=(), lo=None, hi=None, levels=()):
        kind = BasisKind(kind)
        knots = np.asarray(knots, dtype=float)
        if kind in (BasisKind.CUBIC, BasisKind.CYCLIC):
            if len(knots) < 3:
                raise ConfigException("Spline bases need at least 3 knots", 2, 20040)
            if (np.diff(knots) <= 0).any():
                raise DataException("Knots must be strictly increasing", 3, 30007)
        self.__kind = kind
        self.__knots = knots
        self.__lo = float(lo) if lo is not None else (float(knots[0]) if len(knots) else -np.inf)
        self.__hi = float(hi) if hi is not None else (float(knots[-1]) if len(knots) else np.inf)
        self.__levels = np.asarray(levels, dtype=float)

        if kind == BasisKind.CUBIC:
            D, B = _cubic_matrices(knots)
            BinvD = linalg.solve(B, D, assume_a='sym')
            k = len(knots)
            self.__F = np.vstack([np.zeros(k), BinvD, np.zeros(k)])
            self.__S = D.T @ BinvD
        elif kind == BasisKind.CYCLIC:
            D, B = _cyclic_matrices(knots)
            BinvD = linalg.solve(B, D, assume_a='sym')
            self.__F = BinvD
            self.__S = D.T @ BinvD
        else:
            self.__F = None
            self.__S = np.zeros((self.dim, self.dim))
        self.__S = (self.__S + self.__S.T) / 2.0

    @property
    def kind(self):
        return self.__kind

    @property
    def knots(self):
        return self.__knots.copy()

    @property
    def range(self):
        return self.__lo, self.__hi

    @property
    def levels(self):
        return self.__levels.copy()

    @property
    def dim(self):
        if self.__kind == BasisKind.CUBIC:
            return len(self.__knots)
        if self.__kind == BasisKind.CYCLIC:
            return len(self.__knots) - 1
        if self.__kind == BasisKind.LINEAR:
            return 1
        return len(self.__levels)

    @property
    def reproduces_constants(self):
        """True when some coefficient vector yields a constant function (rows sum to one)."""
        return self.__kind != BasisKind.LINEAR

    @property
    def penalty(self):
        return self.__S.copy()

    def evaluate(self, x):
        x = np.asarray(x, dtype=float).reshape(-1)
        if not np.isfinite(x).all():
            raise DataException("Non-finite covariate value", 3, 30009)
        if self.__kind == BasisKind.LINEAR:
            return x[:, None].copy()
        if self.__kind == BasisKind.CATEGORICAL:
            return (x[:, None] == self.__levels[None, :]).astype(float)
        if self.__kind == BasisKind.CYCLIC:
            return self.__evaluate_cyclic(x)
        return self.__evaluate_cubic(x)

    def __evaluate_cubic(self, x):
        knots, F = self.__knots, self.__F
        k = len(knots)
        h = np.diff(knots)
        X = np.zeros((len(x), k))

        inside = (x >= knots[0]) & (x <= knots[-1])
        xi = x[inside]
        j = np.clip(np.searchsorted(knots, xi, side='right') - 1, 0, k - 2)
        X[inside] = self.__interval_rows(xi, j, knots, h, F, j + 1)

        left = x < knots[0]
        if left.any():
            slope = -np.eye(k)[0] / h[0] + np.eye(k)[1] / h[0] - h[0] / 6.0 * F[1]
            X[left] = np.eye(k)[0] + (x[left] - knots[0])[:, None] * slope
        right = x > knots[-1]
        if right.any():
            slope = (np.eye(k)[k - 1] - np.eye(k)[k - 2]) / h[-1] + h[-1] / 6.0 * F[k - 2]
            X[right] = np.eye(k)[k - 1] + (x[right] - knots[-1])[:, None] * slope
        return X

    def __evaluate_cyclic(self, x):
        knots, F = self.__knots, self.__F
        lo, hi = knots[0], knots[-1]
        x = lo + np.mod(x - lo, hi - lo)
        m = len(knots) - 1
        h = np.diff(knots)
        j = np.clip(np.searchsorted(knots, x, side='right') - 1, 0, m - 1)
        return self.__interval_rows(x, j, knots, h, F, (j + 1) % m, dim=m)

    @staticmethod
    def __interval_rows(x, j, knots, h, F, j_next, dim=None):
        dim = dim if dim is not None else len(knots)
        hj = h[j]
        right_gap = knots[j + 1] - x
        left_gap = x - knots[j]
        a_minus = right_gap / hj
        a_plus = left_gap / hj
        c_minus = (right_gap ** 3 / hj - hj * right_gap) / 6.0
        c_plus = (left_gap ** 3 / hj - hj * left_gap) / 6.0
        rows = np.zeros((len(x), dim))
        idx = np.arange(len(x))
        rows[idx, j] += a_minus
        rows[idx, j_next] += a_plus
        rows += c_minus[:, None] * F[j] + c_plus[:, None] * F[j_next]
        return rows

    def to_dict(self):
        return {
            'kind': self.kind.value,
            'knots': self.knots,
            'range': [self.__lo, self.__hi],
            'levels': self.levels,
        }

    @staticmethod
    def from_dict(obj):
        lo, hi = obj.get('range') or (None, None)
        knots = obj.get('knots')
        levels = obj.get('levels')
        return SplineBasis(obj['kind'], knots if knots is not None else (), lo, hi,
                           levels if levels is not None else ())


def make_basis(kind, x_train, n_knots=Defaults.n_knots, period=None):
    """Build a basis for one covariate from its training values.

    Spline knots sit at empirical quantiles of ``x_train``. A cyclic basis wraps on ``period``
    (a (start, end) pair) when given, otherwise on the training range.
    """
    kind = BasisKind(kind)
    x = np.asarray(x_train, dtype=float).reshape(-1)
    if len(x) == 0 or not np.isfinite(x).all():
        raise DataException("Covariate values must be finite and non-empty", 3, 30009)
    lo, hi = float(x.min()), float(x.max())
    if hi == lo:
        raise DataException("Degenerate covariate: constant value %s" % lo, 3, 30007)

    if kind == BasisKind.LINEAR:
        return SplineBasis(kind, lo=lo, hi=hi)
    if kind == BasisKind.CATEGORICAL:
        return SplineBasis(kind, lo=lo, hi=hi, levels=np.unique(x))

    if n_knots < 3:
        raise ConfigException("Spline bases need at least 3 knots, got %d" % n_knots, 2, 20040)
    if kind == BasisKind.CYCLIC and period is not None:
        lo, hi = float(period[0]), float(period[1])
        if hi <= lo:
            raise ConfigException("Empty cyclic period", 2, 20040)
        inner = x[(x > lo) & (x < hi)]
        probs = np.linspace(0.0, 1.0, n_knots)[1:-1]
        knots = np.concatenate([[lo], np.quantile(inner, probs) if len(inner) else [], [hi]])
    else:
        knots = np.quantile(x, np.linspace(0.0, 1.0, n_knots))
    knots = np.unique(knots)
    if len(knots) < 3:
        raise DataException("Degenerate covariate: fewer than 3 distinct knot positions", 3, 30007)
    if len(knots) < n_knots:
        log.info('make_basis(): %d of %d knots distinct', len(knots), n_knots)
    return SplineBasis(kind, knots, lo, hi)
