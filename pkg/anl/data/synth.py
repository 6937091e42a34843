"""Synthetic net-load series with known additive effects and a drifting coefficient vector.

``y_t = theta_t' f(x_t) + e_t`` where ``f`` stacks the true effects and a trailing 1, ``theta_t``
follows a piecewise schedule of coefficient vectors plus an optional random walk, and
``e_t ~ N(0, sigma^2)``.
"""
import logging
from typing import NamedTuple

import numpy as np
import pandas as pd

from anl.model.basis import BasisKind, make_basis
from anl.types.dataset import Dataset
from anl.util.case import keys_to_camel, keys_to_snake
from anl.util.exceptions import ConfigException

log = logging.getLogger(__name__)

SPLINE = 'spline'
LINEAR = 'linear'
EFFECT_SHAPES = (SPLINE, LINEAR)

_fields = ('length', 'start', 'freq', 'n_effects', 'sigma', 'schedule', 'q_diag', 'prior_var', 'effect_shape',
           'n_series', 'series_id', 'n_knots')


class SynthConfig:
    """Generator configuration.

    ``schedule`` is a list of ``(first_step, theta)`` pairs; theta has one coefficient per effect
    plus the intercept and applies from ``first_step`` (0-based) until the next entry.
    """

    def __init__(self, length=1000, start='2020-01-01', freq='D', n_effects=3, sigma=1.0, schedule=None,
                 q_diag=None, prior_var=0.0, effect_shape=SPLINE, n_series=1, series_id='synthetic', n_knots=8):
        try:
            length = int(length)
            n_effects = int(n_effects)
            n_series = int(n_series)
            n_knots = int(n_knots)
            sigma = float(sigma)
            prior_var = float(prior_var)
        except (TypeError, ValueError) as e:
            raise ConfigException("Malformed generator config", 2, 20010, cause=e)
        if length < 1:
            raise ConfigException("length must be > 0, got %d" % length, 2, 20010)
        if n_effects < 1:
            raise ConfigException("n_effects must be > 0, got %d" % n_effects, 2, 20010)
        if not np.isfinite(sigma) or sigma < 0:
            raise ConfigException("sigma must be >= 0, got %r" % sigma, 2, 20010)
        if not np.isfinite(prior_var) or prior_var < 0:
            raise ConfigException("prior_var must be >= 0, got %r" % prior_var, 2, 20010)
        if n_series < 1:
            raise ConfigException("n_series must be > 0, got %d" % n_series, 2, 20010)
        if effect_shape not in EFFECT_SHAPES:
            raise ConfigException("effect_shape must be one of %s, got %r" % (EFFECT_SHAPES, effect_shape),
                                  2, 20010)
        if n_knots < 3:
            raise ConfigException("n_knots must be >= 3, got %d" % n_knots, 2, 20010)
        try:
            start = pd.Timestamp(start)
            pd.tseries.frequencies.to_offset(freq)
        except ValueError as e:
            raise ConfigException("Malformed start or freq", 2, 20010, cause=e)

        dim = n_effects + 1
        if schedule is None:
            schedule = [(0, np.ones(dim))]
        entries = []
        for entry in schedule:
            if isinstance(entry, dict):
                entry = (entry.get('start', entry.get('first_step')), entry.get('theta'))
            try:
                first, theta = int(entry[0]), np.asarray(entry[1], dtype=float).reshape(-1)
            except (TypeError, ValueError, IndexError) as e:
                raise ConfigException("Malformed schedule entry %r" % (entry,), 2, 20010, cause=e)
            if len(theta) != dim or not np.isfinite(theta).all():
                raise ConfigException("schedule theta must hold %d finite values" % dim, 2, 20010)
            entries.append((first, theta))
        firsts = [first for first, _ in entries]
        if not entries or firsts[0] != 0 or (np.diff(firsts) <= 0).any():
            raise ConfigException("schedule must start at step 0 with increasing steps", 2, 20010)

        if q_diag is None:
            q_diag = np.zeros(dim)
        q_diag = np.asarray(q_diag, dtype=float).reshape(-1)
        if len(q_diag) != dim or not np.isfinite(q_diag).all() or (q_diag < 0).any():
            raise ConfigException("q_diag must hold %d values >= 0" % dim, 2, 20010)

        self.length = length
        self.start = start
        self.freq = freq
        self.n_effects = n_effects
        self.sigma = sigma
        self.schedule = entries
        self.q_diag = q_diag
        self.prior_var = prior_var
        self.effect_shape = effect_shape
        self.n_series = n_series
        self.series_id = str(series_id)
        self.n_knots = n_knots

    @property
    def covariates(self):
        return ['x%d' % (j + 1) for j in range(self.n_effects)]

    def theta_schedule(self):
        """Scheduled coefficient vector of every step, shape (length, n_effects + 1)."""
        theta = np.empty((self.length, self.n_effects + 1))
        bounds = [first for first, _ in self.schedule[1:]] + [self.length]
        for (first, value), end in zip(self.schedule, bounds):
            theta[min(first, self.length):min(end, self.length)] = value
        return theta

    def to_dict(self):
        return keys_to_camel({
            'length': self.length,
            'start': self.start.isoformat(),
            'freq': self.freq,
            'n_effects': self.n_effects,
            'sigma': self.sigma,
            'schedule': [{'start': first, 'theta': theta.tolist()} for first, theta in self.schedule],
            'q_diag': self.q_diag.tolist(),
            'prior_var': self.prior_var,
            'effect_shape': self.effect_shape,
            'n_series': self.n_series,
            'series_id': self.series_id,
            'n_knots': self.n_knots,
        })

    @staticmethod
    def from_dict(obj):
        obj = keys_to_snake(dict(obj))
        for key in obj:
            if key not in _fields:
                raise ConfigException("Unknown generator config key: %s" % key, 2, 20001)
        return SynthConfig(**obj)


class SynthTruth(NamedTuple):
    dataset: Dataset
    effects: np.ndarray
    theta: np.ndarray
    signal: np.ndarray
    effect_functions: list

    def effect_matrix(self, frame):
        """True effects of the covariate columns of ``frame`` with a trailing column of ones."""
        columns = [fn(frame[name].to_numpy(dtype=float)) for name, fn in self.effect_functions]
        return np.column_stack(columns + [np.ones(len(frame))])


class _SplineEffect:
    def __init__(self, basis, coef, mean, sd):
        self.basis, self.coef, self.mean, self.sd = basis, coef, mean, sd

    def __call__(self, x):
        return (self.basis.evaluate(x) @ self.coef - self.mean) / self.sd


def _identity(x):
    return np.asarray(x, dtype=float)


def _covariates(cfg, rng):
    n = cfg.length
    t = np.arange(n, dtype=float)
    columns = {}
    for j, name in enumerate(cfg.covariates):
        period = max(n / (j + 1.5), 2.0)
        seasonal = np.sin(2.0 * np.pi * t / period + rng.uniform(0.0, 2.0 * np.pi))
        innovations = rng.normal(0.0, np.sqrt(1.0 - 0.9 ** 2), n)
        ar = np.empty(n)
        ar[0] = rng.normal()
        for i in range(1, n):
            ar[i] = 0.9 * ar[i - 1] + innovations[i]
        columns[name] = seasonal + 0.5 * ar
    return columns


def _series(cfg, rng, series_id):
    n, d = cfg.length, cfg.n_effects
    columns = _covariates(cfg, rng)

    functions = []
    for name in cfg.covariates:
        x = columns[name]
        if cfg.effect_shape == LINEAR:
            functions.append((name, _identity))
            continue
        basis = make_basis(BasisKind.CUBIC, x, cfg.n_knots)
        coef = rng.normal(size=basis.dim)
        values = basis.evaluate(x) @ coef
        sd = float(values.std())
        if sd <= 0:
            sd = 1.0
        functions.append((name, _SplineEffect(basis, coef, float(values.mean()), sd)))

    F = np.column_stack([fn(columns[name]) for name, fn in functions] + [np.ones(n)])
    walk = rng.normal(size=(n, d + 1)) * np.sqrt(cfg.q_diag)
    walk[0] = rng.normal(size=d + 1) * np.sqrt(cfg.prior_var)
    theta = cfg.theta_schedule() + np.cumsum(walk, axis=0)
    signal = np.einsum('ij,ij->i', theta, F)
    y = signal + rng.normal(0.0, 1.0, n) * cfg.sigma

    index = pd.date_range(cfg.start, periods=n, freq=cfg.freq, name='timestamp')
    frame = pd.DataFrame({'target': y, **columns}, index=index)
    dataset = Dataset(series_id, frame, 'target', step=index[1] - index[0] if n > 1 else None)
    return SynthTruth(dataset, F, theta, signal, functions)


def _series_ids(cfg):
    if cfg.n_series == 1:
        return [cfg.series_id]
    return ['%s-%d' % (cfg.series_id, i + 1) for i in range(cfg.n_series)]


def synthesize_with_truth(cfg, seed):
    """Generate every series of ``cfg``; returns SynthTruth items keyed by series id.

    Each series draws from its own child of ``np.random.SeedSequence(seed)``, so results do
    not depend on how many series are generated after it.
    """
    children = np.random.SeedSequence(int(seed)).spawn(cfg.n_series)
    result = {}
    for series_id, child in zip(_series_ids(cfg), children):
        result[series_id] = _series(cfg, np.random.default_rng(child), series_id)
    log.info('synthesize(): %d series of %d rows, seed %d', cfg.n_series, cfg.length, seed)
    return result


def synthesize_all(cfg, seed):
    return {k: truth.dataset for k, truth in synthesize_with_truth(cfg, seed).items()}


def synthesize(cfg, seed):
    """First series of ``cfg``."""
    return next(iter(synthesize_with_truth(cfg, seed).values())).dataset
