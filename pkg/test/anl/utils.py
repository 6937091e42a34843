import os
import random
import string
import unittest

import numpy as np
import pandas as pd

from anl.data.split import split
from anl.data.synth import LINEAR, SynthConfig, synthesize_with_truth
from anl.model.basis import BasisKind, SplineBasis
from anl.model.gam import Effect, GamModel
from anl.types.dataset import Dataset, SplitSpec
from anl.util.codec import FORMATS

FORMULA = ['x1:cr:5', 'x2:cr:5']
LEVELS = [0.1, 0.5, 0.9]


class BaseTestCase(unittest.TestCase):

    def assert_allclose(self, actual, expected, rtol=1e-10, atol=0.0):
        np.testing.assert_allclose(actual, expected, rtol=rtol, atol=atol)

    @classmethod
    def get_series_id(cls, prefix=''):
        return prefix + random_string(8)


class VaryByFormatTestsMetaclass(type):
    """
    Metaclass to run tests with every document format.
    Usage:
        * set this as metaclass of the TestCase class
        * create the following method:
        def per_format_setup(self, fmt):
            # do something here that will run before each test.
        * now every test will run once per format (json, msgpack) and before test is run
          per_format_setup is called
        * exclude tests with the @dont_vary_format decorator
    """

    def __new__(cls, clsname, bases, dct):
        for key, value in tuple(dct.items()):
            if key.startswith('test') and not getattr(value, 'dont_vary_format', False):
                for fmt in FORMATS:
                    dct[key + '_' + fmt] = cls.wrap_as(fmt, key, value)
                del dct[key]

        return super().__new__(cls, clsname, bases, dct)

    @staticmethod
    def wrap_as(fmt, old_name, old_func):
        def wrapper(self):
            if hasattr(self, 'per_format_setup'):
                self.per_format_setup(fmt)
            old_func(self)

        wrapper.__name__ = old_name + '_' + fmt
        return wrapper


def dont_vary_format(func):
    func.dont_vary_format = True
    return func


def random_string(length, alphabet=string.ascii_letters):
    return ''.join([random.choice(alphabet) for x in range(length)])


def new_dict(src, **kw):
    new = src.copy()
    new.update(kw)
    return new


def make_dataset(n=200, freq='D', start='2020-01-01', seed=0, series_id='s', columns=('x1',), target=None):
    """Dataset of iid normal covariates; the target is their sum plus small noise unless given."""
    rng = np.random.default_rng(seed)
    index = pd.date_range(start, periods=n, freq=freq, name='timestamp')
    data = {name: rng.normal(size=n) for name in columns}
    if target is None:
        target = sum(data.values()) + rng.normal(scale=0.1, size=n)
    frame = pd.DataFrame({'target': np.asarray(target, dtype=float), **data}, index=index)
    return Dataset(series_id, frame, 'target')


def linear_truth(length, seed, n_effects=2, sigma=1.0, q=0.0, schedule=None, prior_var=0.0, freq='D'):
    """Synthetic series whose true effects are the covariates themselves."""
    cfg = SynthConfig(length=length, freq=freq, n_effects=n_effects, sigma=sigma, schedule=schedule,
                      q_diag=np.full(n_effects + 1, float(q)), prior_var=prior_var, effect_shape=LINEAR)
    return synthesize_with_truth(cfg, seed)[cfg.series_id]


def identity_gam(covariates, sigma2=1.0, intercept=0.0):
    """Additive model with standardized effect vector (x_1, ..., x_d, 1)."""
    effects = [Effect(name, SplineBasis(BasisKind.LINEAR, lo=-1.0, hi=1.0), [1.0], 0.0) for name in covariates]
    d = len(effects)
    return GamModel(effects, intercept, sigma2, np.zeros(d), np.ones(d),
                    formula=['%s:linear' % name for name in covariates])


def split_after(d, n_train):
    """Training set of the first n_train rows, one test window with the rest."""
    return split(d, SplitSpec(d.timestamps[n_train - 1]))


def write_text(path, text):
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        f.write(text)
    return path
