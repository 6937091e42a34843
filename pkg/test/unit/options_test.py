import json

import pytest

from anl.types.options import Config
from anl.types.strategy import MeanMode
from anl.util.exceptions import ConfigException

BASE = {
    'synth': {'length': 300, 'nEffects': 2},
    'levels': [0.1, 0.5, 0.9],
    'strategies': ['offline+offline-qr', 'kalman-dynamic+ogd-boa', 'persistence(7)'],
    'features': {'delay': 2},
    'seed': 5,
}


def config(**kwargs):
    obj = dict(BASE)
    obj.update(kwargs)
    return Config.from_dict(obj)


def test_defaults():
    c = Config()
    assert 0 == c.seed
    assert 1 == c.jobs
    assert 'out' == c.output
    assert 21 == len(c.levels)
    assert [] == c.strategy_specs()
    assert c.split is None


def test_strategies_share_the_settings():
    c = config()
    specs = c.strategy_specs()
    assert ['offline+offline-qr', 'kalman-dynamic+ogd-boa', 'persistence(7)+none'] == [s.name for s in specs]
    assert all(s.delay == 2 for s in specs)
    assert [0.1, 0.5, 0.9] == specs[1].levels
    # generated data gets one spline per covariate
    assert ['x1:cr:10', 'x2:cr:10'] == [t.to_string() for t in specs[0].formula]
    assert MeanMode.PERSISTENCE == specs[2].mean


def test_unknown_keys_are_rejected():
    with pytest.raises(ConfigException) as excinfo:
        config(levls=[0.5])
    assert 20001 == excinfo.value.code
    with pytest.raises(ConfigException) as excinfo:
        config(split={'trainEnd': '2020-06-01', 'testWindow': []})
    assert 'split.testWindow' in excinfo.value.message


def test_invalid_values():
    cases = (
        ({'jobs': 0}, 20000),
        ({'checkpointFormat': 'xml'}, 20000),
        ({'split': {'years': [2021]}}, 20030),
        ({'todFilters': ['noon']}, 20060),
        ({'strategies': ['offline+incremental-qr']}, 20055),
        ({'strategies': ['offline', 'offline+none']}, 20056),
        ({'strategies': ['persistence(1)']}, 20052),
    )
    for kwargs, code in cases:
        with pytest.raises(ConfigException) as excinfo:
            config(**kwargs)
        assert code == excinfo.value.code, kwargs
    config(strategies=['offline+incremental-qr'], enableIncrementalQr=True)


def test_invalid_strategy_names_the_strategy():
    with pytest.raises(ConfigException) as excinfo:
        config(strategies=['offline+ogd'])
    assert excinfo.value.message.startswith('strategy offline+ogd:')


def test_overrides():
    c = config().with_overrides(seed=9, jobs=3, strategies=['persistence(7)+none', 'offline+offline-qr'],
                                tod_filters=['12:00'], checkpoint_every=50)
    assert (9, 3, 50) == (c.seed, c.jobs, c.checkpoint_every)
    assert ['persistence(7)+none', 'offline+offline-qr'] == c.strategies
    assert ['12:00'] == c.tod_filters
    with pytest.raises(ConfigException) as excinfo:
        config().with_overrides(strategies=['climatology'])
    assert 20057 == excinfo.value.code


def test_round_trip_and_hash():
    c = config(split={'trainEnd': '2020-06-30', 'years': [2021]})
    copy = Config.from_dict(c.to_dict())
    assert c.to_dict() == copy.to_dict()
    assert c.config_hash == copy.config_hash
    assert c.config_hash != config(seed=6).config_hash
    assert ['2021'] == [w.label for w in copy.split.test_windows]


def test_from_file(tmp_path):
    path = tmp_path / 'config.json'
    path.write_text(json.dumps(BASE))
    assert 5 == Config.from_file(str(path)).seed
    with pytest.raises(ConfigException) as excinfo:
        Config.from_file(str(tmp_path / 'missing.json'))
    assert 20002 == excinfo.value.code
    path.write_text('{"seed": ')
    with pytest.raises(ConfigException) as excinfo:
        Config.from_file(str(path))
    assert 20000 == excinfo.value.code
