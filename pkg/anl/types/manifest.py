from anl.types.defaults import Defaults
from anl.util.codec import pretty_json
from anl.util.exceptions import DataException
from anl.util.helper import sha256_bytes


class RunManifest:
    """Inputs and outputs of one (series, strategy) run.

    ``outputs`` maps an output name (trace, report, access, weights) to a path relative to the
    manifest and ``hashes`` the same names to the sha256 of the written files. ``delay`` is the
    data-availability delay the access log is audited against. ``timings`` holds wall-clock
    seconds per stage and is the only part of a manifest that differs between reruns with equal
    keys; ``fingerprint`` leaves it out.
    """

    def __init__(self, strategy, series_id, dataset_hash, seed, windows=(), levels=(), outputs=None, hashes=None,
                 checkpoints=(), timings=None, config_hash=None, delay=0):
        self.strategy = str(strategy)
        self.series_id = str(series_id)
        self.dataset_hash = dataset_hash
        self.seed = int(seed) if seed is not None else None
        self.windows = list(windows)
        self.levels = [float(q) for q in levels]
        self.outputs = dict(outputs or {})
        self.hashes = dict(hashes or {})
        self.checkpoints = list(checkpoints)
        self.timings = dict(timings or {})
        self.config_hash = config_hash
        self.delay = int(delay)

    def __repr__(self):
        return 'RunManifest(%s, %s)' % (self.series_id, self.strategy)

    @property
    def key(self):
        """Inputs that determine the outputs; reruns with equal keys reproduce equal outputs."""
        return (self.strategy, self.series_id, self.dataset_hash, self.seed, self.config_hash)

    @property
    def fingerprint(self):
        """sha256 of the manifest without its timings."""
        return sha256_bytes(pretty_json(self.to_dict(timings=False)))

    def to_dict(self, timings=True):
        obj = {
            'formatVersion': Defaults.format_version,
            'strategy': self.strategy,
            'seriesId': self.series_id,
            'datasetHash': self.dataset_hash,
            'seed': self.seed,
            'windows': self.windows,
            'levels': self.levels,
            'outputs': self.outputs,
            'hashes': self.hashes,
            'checkpoints': self.checkpoints,
            'configHash': self.config_hash,
            'delay': self.delay,
        }
        if timings:
            obj['timings'] = self.timings
        return obj

    @staticmethod
    def from_dict(obj):
        if obj.get('formatVersion') != Defaults.format_version:
            raise DataException("Unsupported manifest format version %r" % obj.get('formatVersion'), 3, 30011)
        try:
            return RunManifest(
                strategy=obj['strategy'],
                series_id=obj['seriesId'],
                dataset_hash=obj.get('datasetHash'),
                seed=obj.get('seed'),
                windows=obj.get('windows') or (),
                levels=obj.get('levels') or (),
                outputs=obj.get('outputs'),
                hashes=obj.get('hashes'),
                checkpoints=obj.get('checkpoints') or (),
                timings=obj.get('timings'),
                config_hash=obj.get('configHash'),
                delay=obj.get('delay', 0),
            )
        except KeyError as e:
            raise DataException("Malformed manifest, missing %s" % e, 3, 30011)
