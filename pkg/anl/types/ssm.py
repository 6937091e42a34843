from typing import NamedTuple

import numpy as np
from scipy import stats

from anl.types.defaults import Defaults
from anl.util.exceptions import DataException, NumericalException


class Normal(NamedTuple):
    mean: float
    var: float

    @property
    def sd(self):
        return float(np.sqrt(self.var))

    def ppf(self, q):
        return self.mean + stats.norm.ppf(q) * self.sd

    def cdf(self, y):
        return float(stats.norm.cdf((y - self.mean) / self.sd))

    def logpdf(self, y):
        return float(stats.norm.logpdf(y, loc=self.mean, scale=self.sd))


class SsmParams:
    """Diagonal state-noise covariance Q (stored as its diagonal) and observation variance sigma2."""

    def __init__(self, q, sigma2):
        q = np.asarray(q, dtype=float).reshape(-1)
        sigma2 = float(sigma2)
        if not np.isfinite(q).all() or (q < 0).any():
            raise NumericalException("State noise variances must be finite and >= 0", 4, 40002)
        if not np.isfinite(sigma2) or sigma2 <= 0:
            raise NumericalException("Observation noise variance must be > 0, got %r" % sigma2, 4, 40002)
        self.__q = q
        self.__sigma2 = sigma2

    def __repr__(self):
        return 'SsmParams(q=%s, sigma2=%r)' % (np.array2string(self.__q, precision=3), self.__sigma2)

    def __eq__(self, other):
        return (isinstance(other, SsmParams) and self.__sigma2 == other.sigma2
                and np.array_equal(self.__q, other.q))

    @property
    def q(self):
        return self.__q.copy()

    @property
    def Q(self):
        return np.diag(self.__q)

    @property
    def sigma2(self):
        return self.__sigma2

    @property
    def dim(self):
        return len(self.__q)

    @property
    def is_static(self):
        return not self.__q.any()

    def scaled(self, c):
        return SsmParams(self.__q * c, self.__sigma2 * c)

    def to_dict(self):
        return {'q': self.q, 'sigma2': self.sigma2}

    @staticmethod
    def from_dict(obj):
        return SsmParams(obj['q'], obj['sigma2'])


class SsmState:
    """Gaussian belief N(theta, P) on the state before observation number t."""

    def __init__(self, theta, P, t=1):
        theta = np.asarray(theta, dtype=float).reshape(-1)
        P = np.asarray(P, dtype=float)
        if P.shape != (len(theta), len(theta)):
            raise ValueError("P must be %dx%d" % (len(theta), len(theta)))
        self.__theta = theta
        self.__P = P
        self.__t = int(t)

    def __repr__(self):
        return 'SsmState(t=%d, theta=%s)' % (self.__t, np.array2string(self.__theta, precision=4))

    @property
    def theta(self):
        return self.__theta.copy()

    @property
    def P(self):
        return self.__P.copy()

    @property
    def t(self):
        return self.__t

    @property
    def dim(self):
        return len(self.__theta)

    def check(self, tol=1e-10):
        """Raise unless P is symmetric and numerically positive semidefinite.

        ``tol`` is relative to the largest entry of P.
        """
        if not (np.isfinite(self.__theta).all() and np.isfinite(self.__P).all()):
            raise NumericalException("Non-finite filter state at step %d" % self.__t, 4, 40002)
        tol = tol * max(1.0, float(np.abs(self.__P).max(initial=0.0)))
        if np.abs(self.__P - self.__P.T).max(initial=0.0) > tol:
            raise NumericalException("Asymmetric state covariance at step %d" % self.__t, 4, 40002)
        if np.linalg.eigvalsh(self.__P).min(initial=0.0) < -tol:
            raise NumericalException("State covariance not positive semidefinite at step %d" % self.__t, 4, 40002)
        return self

    def to_dict(self):
        return {
            'formatVersion': Defaults.format_version,
            'theta': self.theta,
            'P': self.P,
            't': self.t,
        }

    @staticmethod
    def from_dict(obj):
        if obj.get('formatVersion') != Defaults.format_version:
            raise DataException("Unsupported state format version %r" % obj.get('formatVersion'), 3, 30011)
        d = len(obj['theta'])
        return SsmState(obj['theta'], np.asarray(obj['P'], dtype=float).reshape(d, d), obj['t'])
