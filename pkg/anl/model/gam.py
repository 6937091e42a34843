"""Offline additive mean model.

``y_t = intercept + sum_j f_j(x_tj) + e_t`` where every ``f_j`` is a penalized spline (or a linear
or categorical effect) centered over the training rows. Smoothing parameters are chosen by
generalized cross-validation on a log grid, one effect at a time.
"""
import logging
from collections import namedtuple

import numpy as np
import pandas as pd
from methoddispatch import SingleDispatch, singledispatch
from scipy import linalg

from anl.model.basis import BasisKind, SplineBasis, make_basis
from anl.types.dataset import Dataset, align_timestamp
from anl.types.defaults import Defaults
from anl.util.exceptions import ConfigException, DataException, NumericalException

log = logging.getLogger(__name__)

DAILY = 'daily'
YEARLY = 'yearly'
SCHEDULES = (DAILY, YEARLY)

RefitRecord = namedtuple('RefitRecord', ['boundary', 'model', 'n_rows'])


class Term:
    """One formula entry: ``covariate:kind[:n_knots[:period_start:period_end]]``."""

    def __init__(self, covariate, kind=BasisKind.CUBIC, n_knots=Defaults.n_knots, period=None):
        self.covariate = str(covariate)
        try:
            self.kind = BasisKind(kind)
        except ValueError:
            raise ConfigException("Unknown basis kind %r for %s" % (kind, covariate), 2, 20041)
        self.n_knots = int(n_knots)
        self.period = tuple(float(p) for p in period) if period is not None else None

    def __repr__(self):
        return 'Term(%s)' % self.to_string()

    def __eq__(self, other):
        return isinstance(other, Term) and self.to_string() == other.to_string()

    def to_string(self):
        parts = [self.covariate, self.kind.value, str(self.n_knots)]
        if self.period is not None:
            parts += ['%r' % p for p in self.period]
        return ':'.join(parts)

    @staticmethod
    def parse(value):
        if isinstance(value, Term):
            return value
        if isinstance(value, (list, tuple)):
            return Term(*value)
        parts = str(value).split(':')
        try:
            if len(parts) == 1:
                return Term(parts[0])
            if len(parts) == 2:
                return Term(parts[0], parts[1])
            if len(parts) == 3:
                return Term(parts[0], parts[1], int(parts[2]))
            if len(parts) == 5:
                return Term(parts[0], parts[1], int(parts[2]), (parts[3], parts[4]))
        except ValueError as e:
            raise ConfigException("Malformed formula term %r" % value, 2, 20041, cause=e)
        raise ConfigException("Malformed formula term %r" % value, 2, 20041)


class Effect:
    def __init__(self, covariate, basis, coef, offset, smoothing=0.0):
        self.__covariate = covariate
        self.__basis = basis
        self.__coef = np.asarray(coef, dtype=float)
        self.__offset = float(offset)
        self.__smoothing = float(smoothing)

    @property
    def covariate(self):
        return self.__covariate

    @property
    def basis(self):
        return self.__basis

    @property
    def coef(self):
        return self.__coef.copy()

    @property
    def offset(self):
        return self.__offset

    @property
    def smoothing(self):
        return self.__smoothing

    def values(self, x):
        return self.__basis.evaluate(x) @ self.__coef - self.__offset

    def scaled(self, factor):
        return Effect(self.__covariate, self.__basis, self.__coef * factor, self.__offset * factor,
                      self.__smoothing)

    def to_dict(self):
        return {
            'covariate': self.covariate,
            'basis': self.basis.to_dict(),
            'coef': self.coef,
            'offset': self.offset,
            'smoothing': self.smoothing,
        }

    @staticmethod
    def from_dict(obj):
        return Effect(obj['covariate'], SplineBasis.from_dict(obj['basis']), obj['coef'], obj['offset'],
                      obj.get('smoothing', 0.0))


class GamModel(SingleDispatch):
    """Fitted additive model with effect standardization statistics.

    Inputs to the prediction methods may be a DataFrame, a Dataset, or one covariate record
    (a dict or a pandas Series).
    """

    def __init__(self, effects, intercept, sigma2, effect_means, effect_sds, edf=None, gcv=None, n_train=None,
                 formula=()):
        effect_sds = np.asarray(effect_sds, dtype=float)
        if len(effects) != len(effect_sds) or len(effects) != len(effect_means):
            raise ValueError("One mean and one sd per effect required")
        if (effect_sds <= 0).any():
            raise NumericalException("Effect standard deviations must be positive", 4, 40003)
        self.__effects = list(effects)
        self.__intercept = float(intercept)
        self.__sigma2 = float(sigma2)
        self.__means = np.asarray(effect_means, dtype=float)
        self.__sds = effect_sds
        self.__edf = edf
        self.__gcv = gcv
        self.__n_train = n_train
        self.__formula = [Term.parse(t) for t in formula]

    @property
    def effects(self):
        return list(self.__effects)

    @property
    def intercept(self):
        return self.__intercept

    @property
    def sigma2(self):
        return self.__sigma2

    @property
    def effect_means(self):
        return self.__means.copy()

    @property
    def effect_sds(self):
        return self.__sds.copy()

    @property
    def smoothing(self):
        return [e.smoothing for e in self.__effects]

    @property
    def edf(self):
        return self.__edf

    @property
    def gcv(self):
        return self.__gcv

    @property
    def n_train(self):
        return self.__n_train

    @property
    def formula(self):
        return list(self.__formula)

    @property
    def covariates(self):
        return [e.covariate for e in self.__effects]

    @property
    def dim(self):
        """Number of retained effects d; effect vectors have length d + 1."""
        return len(self.__effects)

    @singledispatch
    def _columns(self, data):
        raise TypeError("Unsupported covariate container: %s" % type(data).__name__)

    @_columns.register(pd.DataFrame)
    def _frame_columns(self, data):
        columns = {}
        for name in self.covariates:
            if name not in data.columns:
                raise DataException("Missing covariate: %s" % name, 3, 30003)
            columns[name] = data[name].to_numpy(dtype=float)
        return columns, len(data)

    @_columns.register(Dataset)
    def _dataset_columns(self, data):
        return self._frame_columns(data.frame)

    @_columns.register(dict)
    def _dict_columns(self, data):
        columns = {}
        for name in self.covariates:
            if name not in data:
                raise DataException("Missing covariate: %s" % name, 3, 30003)
            columns[name] = np.atleast_1d(np.asarray(data[name], dtype=float)).reshape(-1)
        lengths = {len(v) for v in columns.values() if len(v) != 1}
        if len(lengths) > 1:
            raise DataException("Covariates of different lengths: %s" % sorted(lengths), 3, 30016)
        n = lengths.pop() if lengths else 1
        return {k: np.repeat(v, n) if len(v) == 1 else v for k, v in columns.items()}, n

    @_columns.register(pd.Series)
    def _series_columns(self, data):
        return self._dict_columns(data.to_dict())

    def effect_values(self, data):
        """Unstandardized effect contributions, one column per effect."""
        columns, n = self._columns(data)
        values = np.zeros((n, self.dim))
        for j, effect in enumerate(self.__effects):
            values[:, j] = effect.values(columns[effect.covariate])
        return values

    def predict(self, data):
        values = self.effect_values(data)
        out = np.full(values.shape[0], self.__intercept)
        for j in range(self.dim):
            out += values[:, j]
        return out

    def predict_mean(self, row):
        return float(self.predict(row)[0])

    def effect_matrix(self, data):
        """Standardized effects with a trailing column of ones."""
        values = self.effect_values(data)
        standardized = (values - self.__means) / self.__sds
        return np.hstack([standardized, np.ones((values.shape[0], 1))])

    def effect_vector(self, row):
        return self.effect_matrix(row)[0]

    def to_dict(self):
        return {
            'formatVersion': Defaults.format_version,
            'effects': [e.to_dict() for e in self.__effects],
            'intercept': self.intercept,
            'sigma2': self.sigma2,
            'effectMeans': self.effect_means,
            'effectSds': self.effect_sds,
            'edf': self.edf,
            'gcv': self.gcv,
            'nTrain': self.n_train,
            'formula': [t.to_string() for t in self.__formula],
        }

    @staticmethod
    def from_dict(obj):
        if obj.get('formatVersion') != Defaults.format_version:
            raise DataException("Unsupported model format version %r" % obj.get('formatVersion'), 3, 30011)
        return GamModel(
            effects=[Effect.from_dict(e) for e in obj['effects']],
            intercept=obj['intercept'],
            sigma2=obj['sigma2'],
            effect_means=obj['effectMeans'],
            effect_sds=obj['effectSds'],
            edf=obj.get('edf'),
            gcv=obj.get('gcv'),
            n_train=obj.get('nTrain'),
            formula=obj.get('formula') or (),
        )


class _Block:
    """Centered and constrained design columns of one term."""

    def __init__(self, term, x):
        self.term = term
        self.basis = make_basis(term.kind, x, term.n_knots, term.period)
        raw = self.basis.evaluate(x)
        self.center = raw.mean(axis=0)
        if self.basis.reproduces_constants:
            self.Z = linalg.null_space(np.ones((1, self.basis.dim)))
        else:
            self.Z = np.eye(self.basis.dim)
        self.X = (raw - self.center) @ self.Z
        S = self.Z.T @ self.basis.penalty @ self.Z
        norm_s = np.linalg.norm(S, 1)
        if norm_s > 0:
            S = S * (np.linalg.norm(self.X, np.inf) ** 2 / norm_s)
        self.S = (S + S.T) / 2.0
        self.penalized = norm_s > 0

    @property
    def width(self):
        return self.X.shape[1]


class _PenalizedDesign:
    def __init__(self, data, terms):
        self.terms = terms
        self.y = data.target
        self.n = len(self.y)
        self.blocks = [_Block(t, data.column(t.covariate)) for t in terms]
        self.X = np.hstack([np.ones((self.n, 1))] + [b.X for b in self.blocks])
        self.slices = []
        start = 1
        for b in self.blocks:
            self.slices.append(slice(start, start + b.width))
            start += b.width
        self.XtX = self.X.T @ self.X
        self.Xty = self.X.T @ self.y

    @property
    def p(self):
        return self.X.shape[1]

    def check_rank(self):
        current = np.ones((self.n, 1))
        for block in self.blocks:
            current = np.hstack([current, block.X])
            if np.linalg.matrix_rank(current) < current.shape[1]:
                raise NumericalException("Rank-deficient design at effect %s" % block.term.covariate, 4, 40001)

    def penalty(self, lambdas):
        P = np.zeros((self.p, self.p))
        for block, sl, lam in zip(self.blocks, self.slices, lambdas):
            P[sl, sl] = lam * block.S
        return P

    def solve(self, lambdas):
        A = self.XtX + self.penalty(lambdas)
        try:
            beta = linalg.solve(A, self.Xty, assume_a='pos')
            hat = linalg.solve(A, self.XtX, assume_a='pos')
        except (linalg.LinAlgError, ValueError) as e:
            raise NumericalException("Penalized normal equations not positive definite", 4, 40001, cause=e)
        residuals = self.y - self.X @ beta
        rss = float(residuals @ residuals)
        edf = float(np.trace(hat))
        if self.n - edf <= 0:
            gcv = np.inf
        else:
            gcv = self.n * rss / (self.n - edf) ** 2
        return beta, rss, edf, gcv


def _usable_training(train):
    return train.usable_only() if isinstance(train, Dataset) else train


def gcv_score(train, formula, lambdas):
    """GCV criterion n * RSS / (n - edf)^2 of the penalized fit with the given smoothing weights."""
    design = _PenalizedDesign(_usable_training(train), [Term.parse(t) for t in formula])
    return design.solve(lambdas)[3]


def fit_gam(train, formula, lambdas=None, grid=Defaults.gcv_log10_grid, sweeps=Defaults.gcv_sweeps):
    """Fit the additive model on the usable rows of ``train``.

    ``lambdas`` fixes the smoothing weight of every term; otherwise each penalized term is tuned
    coordinate-wise over ``10**grid`` by GCV, ``sweeps`` times.
    """
    terms = [Term.parse(t) for t in formula]
    if not terms:
        raise ConfigException("Empty formula", 2, 20041)
    data = _usable_training(train)
    for term in terms:
        if not data.has_column(term.covariate):
            raise DataException("Unknown column: %s" % term.covariate, 3, 30003)

    design = _PenalizedDesign(data, terms)
    required = Defaults.rows_per_coefficient * design.p
    if design.n < required:
        raise DataException("fit_gam() needs %d usable rows for %d coefficients, got %d"
                            % (required, design.p, design.n), 3, 30004)
    design.check_rank()

    if lambdas is not None:
        lambdas = [float(v) for v in lambdas]
        if len(lambdas) != len(terms):
            raise ValueError("One smoothing weight per term required")
        beta, rss, edf, gcv = design.solve(lambdas)
    else:
        candidates = [10.0 ** i for i in grid]
        lambdas = [1.0] * len(terms)
        beta, rss, edf, gcv = design.solve(lambdas)
        for sweep in range(sweeps):
            for j, block in enumerate(design.blocks):
                if not block.penalized:
                    continue
                for lam in candidates:
                    trial = list(lambdas)
                    trial[j] = lam
                    result = design.solve(trial)
                    if result[3] < gcv:
                        lambdas = trial
                        beta, rss, edf, gcv = result
            log.debug('fit_gam(): sweep %d gcv=%.6g lambdas=%s', sweep, gcv, lambdas)

    sigma2 = rss / max(design.n - edf, 1.0)
    intercept = float(beta[0])
    effects, means, sds = [], [], []
    for block, sl, lam in zip(design.blocks, design.slices, lambdas):
        coef = block.Z @ beta[sl]
        effect = Effect(block.term.covariate, block.basis, coef, float(block.center @ coef), lam)
        values = block.X @ beta[sl]
        mean, sd = float(values.mean()), float(values.std())
        if sd <= 1e-12 * max(1.0, float(np.abs(design.y).max())):
            log.warning('fit_gam(): dropping constant effect %s', block.term.covariate)
            intercept += mean
            continue
        effects.append(effect)
        means.append(mean)
        sds.append(sd)

    model = GamModel(effects, intercept, sigma2, means, sds, edf=edf, gcv=gcv, n_train=design.n, formula=terms)
    log.info('fit_gam(): %d effects on %d rows, edf=%.2f, sigma2=%.6g', len(effects), design.n, edf, sigma2)
    return model


def schedule_key(ts, schedule):
    if schedule == DAILY:
        return ts.date()
    if schedule == YEARLY:
        return ts.year
    raise ConfigException("Unknown refit schedule %r" % schedule, 2, 20042)


def available_mask(stream, position, delay):
    """Usable rows observed by the time the forecast at grid position ``position`` is made."""
    return stream.usable & (stream.positions <= position - 1 - delay)


def incremental_refit(schedule, stream, formula, train_end, delay=0, lambdas=None):
    """Refit the model at every schedule boundary of the rows after ``train_end``.

    Each fit uses every usable row available under the delay at the boundary; the returned
    records tell which model serves the forecasts until the next boundary.
    """
    if schedule not in SCHEDULES:
        raise ConfigException("Unknown refit schedule %r" % schedule, 2, 20042)
    index = stream.timestamps
    test = np.flatnonzero(index > align_timestamp(train_end, index))
    positions = stream.positions
    records = []
    last_key = None
    for i in test:
        key = schedule_key(index[i], schedule)
        if key == last_key:
            continue
        last_key = key
        mask = available_mask(stream, positions[i], delay)
        model = fit_gam(stream.subset(mask), formula, lambdas)
        records.append(RefitRecord(index[i], model, int(mask.sum())))
        log.info('incremental_refit(): refit at %s on %d rows', index[i], int(mask.sum()))
    return records
