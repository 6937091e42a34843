import logging
import os

import pytest

from anl.data.synth import SynthConfig, synthesize
from test.anl.utils import split_after


@pytest.fixture(scope='session', autouse=True)
def log_level():
    level = logging.getLevelName(os.environ.get('ANL_LOG', 'WARNING').upper())
    if isinstance(level, int):
        logging.getLogger('anl').setLevel(level)
    yield


@pytest.fixture(scope='session')
def hourly_series():
    """Hourly series with slowly drifting coefficients: 400 training rows, then three test days."""
    cfg = SynthConfig(length=472, freq='h', n_effects=2, sigma=0.5, q_diag=[1e-4, 1e-4, 1e-4], n_knots=5)
    return synthesize(cfg, 7)


@pytest.fixture(scope='session')
def hourly_split(hourly_series):
    return split_after(hourly_series, 400)
