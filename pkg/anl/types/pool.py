import numpy as np
from scipy.special import logsumexp

from anl.types.defaults import Defaults
from anl.types.quantile import QrModel
from anl.util.exceptions import DataException


class ExpertPool:
    """OGD experts of one quantile level, one per step size, with their aggregation weights.

    Weights are kept as normalized log-weights. The prior is uniform over the distinct step
    sizes and split evenly among experts sharing a step size, so duplicating an expert leaves
    the aggregated forecast unchanged.
    """

    def __init__(self, level, step_sizes, betas, log_weights=None, eta=None, sq_regret=None, max_regret=None):
        step_sizes = np.asarray(step_sizes, dtype=float).reshape(-1)
        betas = np.atleast_2d(np.asarray(betas, dtype=float))
        if len(step_sizes) < 1:
            raise ValueError("An expert pool needs at least one expert")
        if (step_sizes <= 0).any():
            raise ValueError("Step sizes must be > 0")
        if betas.shape[0] != len(step_sizes):
            raise ValueError("One coefficient vector per step size required")
        k = len(step_sizes)
        if log_weights is None:
            log_weights = ExpertPool.prior(step_sizes)
        self.__level = QrModel(level, betas[0]).level
        self.__step_sizes = step_sizes
        self.__betas = betas
        self.__log_weights = np.asarray(log_weights, dtype=float)
        self.__eta = float(eta) if eta is not None else None
        self.__sq_regret = np.zeros(k) if sq_regret is None else np.asarray(sq_regret, dtype=float)
        self.__max_regret = np.zeros(k) if max_regret is None else np.asarray(max_regret, dtype=float)

    @staticmethod
    def prior(step_sizes):
        _, inverse, counts = np.unique(step_sizes, return_inverse=True, return_counts=True)
        log_weights = -np.log(len(counts)) - np.log(counts[inverse].astype(float))
        return log_weights

    @staticmethod
    def create(level, beta0, step_sizes=Defaults.step_sizes, eta=None):
        """Pool whose experts all start from the same coefficients beta0."""
        beta0 = np.asarray(beta0, dtype=float).reshape(-1)
        betas = np.tile(beta0, (len(step_sizes), 1))
        return ExpertPool(level, step_sizes, betas, eta=eta)

    def __repr__(self):
        return 'ExpertPool(level=%r, K=%d)' % (self.__level, self.size)

    @property
    def level(self):
        return self.__level

    @property
    def step_sizes(self):
        return self.__step_sizes.copy()

    @property
    def size(self):
        return len(self.__step_sizes)

    @property
    def n_distinct(self):
        return len(np.unique(self.__step_sizes))

    @property
    def betas(self):
        return self.__betas.copy()

    @property
    def experts(self):
        return [QrModel(self.__level, beta) for beta in self.__betas]

    @property
    def log_weights(self):
        return self.__log_weights.copy()

    @property
    def weights(self):
        return np.exp(self.__log_weights - logsumexp(self.__log_weights))

    @property
    def eta(self):
        return self.__eta

    @property
    def sq_regret(self):
        return self.__sq_regret.copy()

    @property
    def max_regret(self):
        return self.__max_regret.copy()

    def forecasts(self, z, mean):
        """Quantile forecast of every expert."""
        return float(mean) + self.__betas @ np.asarray(z, dtype=float).reshape(-1)

    def replace(self, betas=None, log_weights=None, sq_regret=None, max_regret=None):
        return ExpertPool(
            self.__level, self.__step_sizes,
            self.__betas if betas is None else betas,
            self.__log_weights if log_weights is None else log_weights,
            self.__eta,
            self.__sq_regret if sq_regret is None else sq_regret,
            self.__max_regret if max_regret is None else max_regret,
        )

    def to_dict(self):
        return {
            'level': self.level,
            'stepSizes': self.step_sizes,
            'betas': self.betas,
            'logWeights': self.log_weights,
            'eta': self.eta,
            'sqRegret': self.sq_regret,
            'maxRegret': self.max_regret,
        }

    @staticmethod
    def from_dict(obj):
        try:
            return ExpertPool(obj['level'], obj['stepSizes'], obj['betas'], obj['logWeights'], obj.get('eta'),
                              obj.get('sqRegret'), obj.get('maxRegret'))
        except KeyError as e:
            raise DataException("Malformed expert pool document, missing %s" % e, 3, 30011)
