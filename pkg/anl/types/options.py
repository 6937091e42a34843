import logging
import os

from anl.data.io import load_holidays
from anl.data.synth import SynthConfig
from anl.evaluation.reliability import parse_tod
from anl.model.covariates import QuantileCovariates
from anl.model.gam import Term
from anl.types.dataset import CsvSchema, FeatureSpec, SplitSpec
from anl.types.defaults import Defaults
from anl.types.strategy import QuantileMode, StrategySpec
from anl.util.case import camel_to_snake, snake_to_camel
from anl.util.codec import FORMATS, dumps, loads
from anl.util.exceptions import AnlException, ConfigException
from anl.util.helper import sha256_bytes

log = logging.getLogger(__name__)

_fields = ('data', 'synth', 'features', 'formula', 'quantile_covariates', 'strategies', 'split', 'levels',
           'step_sizes', 'eta', 'lambdas', 'normalize', 'burn_in', 'seed', 'jobs', 'output', 'checkpoint_format',
           'checkpoint_every', 'enable_incremental_qr', 'tod_filters')
_data_fields = ('path', 'schema', 'series', 'holidays')
_schema_fields = ('timestamp', 'target', 'series', 'covariates', 'categorical', 'delimiter')
_feature_fields = ('lags', 'moving_averages', 'calendar', 'products', 'delay', 'ablations', 'known_ahead')
_covariate_fields = ('include_mean', 'include_mean_squared', 'effects', 'columns', 'categorical')
_split_fields = ('train_end', 'test_windows', 'years')
_window_fields = ('label', 'start', 'end')


def _section(obj, fields, where):
    """Shallow copy of a configuration section with snake_case keys; unknown keys are rejected."""
    if obj is None:
        return {}
    if not isinstance(obj, dict):
        raise ConfigException("%s must be an object" % where, 2, 20000)
    out = {}
    for key, value in obj.items():
        name = camel_to_snake(str(key))
        if name not in fields:
            prefix = where + '.' if where else ''
            raise ConfigException("Unknown configuration key: %s%s" % (prefix, key), 2, 20001)
        out[name] = value
    return out


def _camel(obj):
    return {snake_to_camel(k): v for k, v in obj.items()}


class Config:
    """Validated settings of a command-line session.

    Built from a JSON document (``from_file``/``from_dict``) or keyword arguments. Everything,
    including every strategy, is checked on construction so no work starts on a bad config.
    """

    def __init__(self, data=None, synth=None, features=None, formula=(), quantile_covariates=None, strategies=(),
                 split=None, levels=Defaults.levels, step_sizes=Defaults.step_sizes, eta=None, lambdas=None,
                 normalize=False, burn_in=True, seed=0, jobs=1, output='out',
                 checkpoint_format=Defaults.checkpoint_format, checkpoint_every=None, enable_incremental_qr=False,
                 tod_filters=()):
        data = _section(data, _data_fields, 'data')
        self.__data_path = data.get('path')
        self.__schema_dict = _section(data.get('schema'), _schema_fields, 'data.schema')
        self.__schema = CsvSchema.from_dict(self.__schema_dict)
        series = data.get('series')
        if isinstance(series, str):
            series = [series]
        self.__series = [str(s) for s in series] if series else None
        holidays = data.get('holidays') or {}
        if not isinstance(holidays, dict):
            raise ConfigException("data.holidays must map column names to files", 2, 20000)
        self.__holidays = {str(k): str(v) for k, v in holidays.items()}

        if synth is not None and not isinstance(synth, SynthConfig):
            synth = SynthConfig.from_dict(synth)
        self.__synth = synth

        self.__features_dict = _section(features, _feature_fields, 'features')
        self.__features = self.__feature_spec({})

        if isinstance(formula, str):
            formula = [formula]
        self.__formula = [Term.parse(t) for t in formula]
        if not self.__formula and self.__synth is not None and self.__data_path is None:
            # one cubic spline per generated covariate
            self.__formula = [Term(c) for c in self.__synth.covariates]

        self.__covariates_dict = _section(quantile_covariates, _covariate_fields, 'quantileCovariates')
        self.__covariates = QuantileCovariates(**self.__covariates_dict)

        split = _section(split, _split_fields, 'split')
        if split:
            if 'train_end' not in split:
                raise ConfigException("split.trainEnd is required", 2, 20030)
            if split.get('years'):
                self.__split = SplitSpec.yearly(split['train_end'], [int(y) for y in split['years']])
            else:
                windows = [_section(w, _window_fields, 'split.testWindows')
                           for w in split.get('test_windows') or ()]
                self.__split = SplitSpec.from_dict({'train_end': split['train_end'], 'test_windows': windows})
        else:
            self.__split = None
        self.__split_dict = split

        try:
            self.__seed = int(seed)
            self.__jobs = int(jobs)
            self.__checkpoint_every = int(checkpoint_every) if checkpoint_every else None
        except (TypeError, ValueError) as e:
            raise ConfigException("seed, jobs and checkpointEvery must be integers", 2, 20000, cause=e)
        if self.__jobs < 1:
            raise ConfigException("jobs must be >= 1, got %d" % self.__jobs, 2, 20000)
        if self.__checkpoint_every is not None and self.__checkpoint_every < 1:
            raise ConfigException("checkpointEvery must be >= 1", 2, 20000)
        if checkpoint_format not in FORMATS:
            raise ConfigException("checkpointFormat must be one of %s" % (FORMATS,), 2, 20000)

        self.__levels = [float(q) for q in levels]
        self.__step_sizes = [float(a) for a in step_sizes]
        self.__eta = eta
        self.__lambdas = lambdas
        self.__normalize = bool(normalize)
        self.__burn_in = bool(burn_in)
        self.__output = str(output)
        self.__checkpoint_format = checkpoint_format
        self.__enable_incremental_qr = bool(enable_incremental_qr)
        self.__tod_filters = [str(t) for t in tod_filters]
        for tod in self.__tod_filters:
            parse_tod(tod)

        self.__strategies = [str(s) for s in strategies]
        self.__specs = self.__build_specs(self.__strategies)

    def __feature_spec(self, holidays):
        obj = dict(self.__features_dict)
        obj['holidays'] = holidays
        return FeatureSpec.from_dict(obj)

    def __build_specs(self, names):
        specs = []
        for name in names:
            try:
                spec = StrategySpec.parse(
                    name, levels=self.__levels, formula=[t.to_string() for t in self.__formula],
                    covariates=self.__covariates, delay=self.__features.delay, normalize=self.__normalize,
                    burn_in=self.__burn_in, step_sizes=self.__step_sizes, eta=self.__eta, lambdas=self.__lambdas)
            except ConfigException as e:
                raise e.with_stage('strategy %s' % name)
            if spec.quantile == QuantileMode.INCREMENTAL_QR and not self.__enable_incremental_qr:
                raise ConfigException("Strategy %s needs enableIncrementalQr" % name, 2, 20055)
            if spec.name in [s.name for s in specs]:
                raise ConfigException("Duplicate strategy %s" % spec.name, 2, 20056)
            specs.append(spec)
        return specs

    @property
    def data_path(self):
        return self.__data_path

    @property
    def schema(self):
        return self.__schema

    @property
    def series(self):
        return None if self.__series is None else list(self.__series)

    @property
    def holidays(self):
        return dict(self.__holidays)

    @property
    def synth(self):
        return self.__synth

    @property
    def features(self):
        return self.__features

    @property
    def formula(self):
        return list(self.__formula)

    @property
    def quantile_covariates(self):
        return self.__covariates

    @property
    def strategies(self):
        return list(self.__strategies)

    @property
    def split(self):
        return self.__split

    @property
    def levels(self):
        return list(self.__levels)

    @property
    def step_sizes(self):
        return list(self.__step_sizes)

    @property
    def eta(self):
        return self.__eta

    @property
    def lambdas(self):
        return None if self.__lambdas is None else [float(v) for v in self.__lambdas]

    @property
    def seed(self):
        return self.__seed

    @property
    def jobs(self):
        return self.__jobs

    @property
    def output(self):
        return self.__output

    @property
    def checkpoint_format(self):
        return self.__checkpoint_format

    @property
    def checkpoint_every(self):
        return self.__checkpoint_every

    @property
    def enable_incremental_qr(self):
        return self.__enable_incremental_qr

    @property
    def tod_filters(self):
        return list(self.__tod_filters)

    def feature_spec(self):
        """FeatureSpec with the holiday calendars read from their files."""
        if not self.__holidays:
            return self.__features
        base = os.path.dirname(self.__data_path) if self.__data_path else ''
        calendars = {}
        for name, path in self.__holidays.items():
            calendars[name] = load_holidays(path if os.path.isabs(path) else os.path.join(base, path))
        return self.__feature_spec(calendars)

    def strategy_specs(self, names=None):
        """Configured strategies, optionally only those named (canonical or as written)."""
        if names is None:
            return list(self.__specs)
        selected = []
        for name in names:
            wanted = self.__build_specs([name])[0].name
            match = [s for s in self.__specs if s.name == wanted]
            if not match:
                raise ConfigException("Strategy %s is not configured" % name, 2, 20057)
            selected += match
        return selected

    def with_overrides(self, seed=None, jobs=None, strategies=None, tod_filters=None, checkpoint_every=None):
        """Copy with command-line values replacing configured ones."""
        obj = self.to_dict()
        if seed is not None:
            obj['seed'] = seed
        if jobs is not None:
            obj['jobs'] = jobs
        if strategies is not None:
            names = [s.name for s in self.strategy_specs(strategies)]
            obj['strategies'] = names
        if tod_filters is not None:
            obj['todFilters'] = list(tod_filters)
        if checkpoint_every is not None:
            obj['checkpointEvery'] = checkpoint_every
        return Config.from_dict(obj)

    @property
    def config_hash(self):
        return sha256_bytes(dumps(self.to_dict()))

    def to_dict(self):
        data = {}
        if self.__data_path is not None:
            data['path'] = self.__data_path
        if self.__schema_dict:
            data['schema'] = _camel(self.__schema_dict)
        if self.__series is not None:
            data['series'] = self.__series
        if self.__holidays:
            data['holidays'] = self.__holidays
        split = dict(self.__split_dict)
        if 'test_windows' in split:
            split['test_windows'] = [_camel(w) for w in split['test_windows']]
        return {
            'data': data,
            'synth': self.__synth.to_dict() if self.__synth is not None else None,
            'features': _camel(self.__features_dict),
            'formula': [t.to_string() for t in self.__formula],
            'quantileCovariates': _camel(self.__covariates_dict),
            'strategies': self.strategies,
            'split': _camel(split) if split else None,
            'levels': self.levels,
            'stepSizes': self.step_sizes,
            'eta': self.__eta,
            'lambdas': self.__lambdas,
            'normalize': self.__normalize,
            'burnIn': self.__burn_in,
            'seed': self.seed,
            'jobs': self.jobs,
            'output': self.output,
            'checkpointFormat': self.checkpoint_format,
            'checkpointEvery': self.checkpoint_every,
            'enableIncrementalQr': self.enable_incremental_qr,
            'todFilters': self.tod_filters,
        }

    @staticmethod
    def from_dict(obj):
        options = _section(obj, _fields, '')
        for key in ('levels', 'step_sizes'):
            if options.get(key) is None:
                options.pop(key, None)
        for key in ('formula', 'strategies', 'tod_filters'):
            if options.get(key) is None:
                options.pop(key, None)
        return Config(**options)

    @staticmethod
    def from_file(path):
        if not os.path.exists(path):
            raise ConfigException("No such config file: %s" % path, 2, 20002)
        with open(path, 'rb') as f:
            raw = f.read()
        try:
            obj = loads(raw)
        except AnlException as e:
            raise ConfigException("Malformed config file %s" % path, 2, 20000, cause=e.cause)
        if not isinstance(obj, dict):
            raise ConfigException("Config file %s must hold an object" % path, 2, 20000)
        config = Config.from_dict(obj)
        log.info('Config.from_file(): %s, %d strategies', path, len(config.strategies))
        return config
