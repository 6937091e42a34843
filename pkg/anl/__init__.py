from anl.data.io import load_csv, load_csv_series
from anl.data.synth import SynthConfig, synthesize, synthesize_with_truth
from anl.model.gam import GamModel, fit_gam
from anl.pipeline.audit import audit_no_lookahead
from anl.pipeline.runner import StrategyRunner, run_strategy
from anl.types.dataset import CsvSchema, Dataset, FeatureSpec, SplitSpec
from anl.types.options import Config
from anl.types.strategy import StrategySpec
from anl.util.exceptions import (AnlException, ConfigException, DataException, LookaheadException,
                                 NumericalException)

import logging

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

lib_version = '0.1.0'
