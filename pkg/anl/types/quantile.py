import numpy as np

from anl.util.exceptions import NumericalException


class QrModel:
    """Linear correction of the mean forecast for quantile level q: quantile = mean + beta' z."""

    def __init__(self, level, beta):
        level = float(level)
        if not 0.0 < level < 1.0:
            raise ValueError("Quantile level must be in (0, 1), got %r" % level)
        beta = np.asarray(beta, dtype=float).reshape(-1)
        if not np.isfinite(beta).all():
            raise NumericalException("Non-finite quantile regression coefficients at level %r" % level, 4, 40002)
        self.__level = level
        self.__beta = beta

    def __repr__(self):
        return 'QrModel(level=%r, beta=%s)' % (self.__level, np.array2string(self.__beta, precision=4))

    @property
    def level(self):
        return self.__level

    @property
    def beta(self):
        return self.__beta.copy()

    @property
    def dim(self):
        return len(self.__beta)

    def to_dict(self):
        return {'level': self.level, 'beta': self.beta}

    @staticmethod
    def from_dict(obj):
        return QrModel(obj['level'], obj['beta'])
