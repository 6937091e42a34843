"""Command-line entry point.

    anl [--config PATH] [--seed N] [--jobs N] [--force] synth|fit-gam|run|report|audit ...

Exit status: 0 success, 1 unexpected error, 2 configuration error, 3 data error, 4 numerical
failure. The log level is read from the ANL_LOG environment variable.
"""
import argparse
import glob
import logging
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor

import pandas as pd

from anl.data.features import build_features
from anl.data.io import load_csv_series, write_frame
from anl.data.split import split
from anl.data.synth import SynthConfig, synthesize_all
from anl.evaluation.report import comparison_table, evaluate, write_report
from anl.model.gam import fit_gam
from anl.pipeline.audit import audit_no_lookahead, write_access_log
from anl.pipeline.runner import StrategyRunner, run_strategy
from anl.types.dataset import SplitSpec
from anl.types.forecast import access_records
from anl.types.manifest import RunManifest
from anl.types.options import Config
from anl.types.report import EvaluationReport
from anl.types.strategy import StrategySpec
from anl.util.codec import MSGPACK, dumps, loads, pretty_json
from anl.util.exceptions import AnlException, ConfigException, DataException, LookaheadException, catch_all
from anl.util.helper import StageTimer, atomic_write, sha256_file

log = logging.getLogger(__name__)

MANIFEST = 'manifest.json'
_unsafe_re = re.compile(r'[^A-Za-z0-9._-]+')


def slug(name):
    """File-system safe form of a series id or strategy name."""
    return _unsafe_re.sub('_', str(name)).strip('_') or '_'


def run_directory(output, series_id, strategy):
    return os.path.join(output, 'runs', slug(series_id), slug(strategy))


def _refuse_overwrite(path, force):
    if os.path.exists(path) and not force:
        raise ConfigException("%s exists; use --force to overwrite" % path, 2, 20070)


def _read(path):
    if not os.path.exists(path):
        raise DataException("No such file: %s" % path, 3, 30001)
    with open(path, 'rb') as f:
        return f.read()


def _datasets(config):
    """Raw series named by the config: the data file, or the generator when no file is set."""
    if config.data_path is not None:
        datasets = load_csv_series(config.data_path, config.schema)
    elif config.synth is not None:
        datasets = synthesize_all(config.synth, config.seed)
    else:
        raise ConfigException("Config names neither data.path nor synth", 2, 20003)
    if config.series is not None:
        for series_id in config.series:
            if series_id not in datasets:
                raise DataException("Unknown series %s" % series_id, 3, 30003)
        datasets = {k: datasets[k] for k in config.series}
    return datasets


def _split_spec(config, dataset):
    if config.split is not None:
        return config.split
    index = dataset.timestamps
    train_end = index[max(len(index) // 2 - 1, 0)]
    log.info('No split configured; training on %s up to %s', dataset.series_id, train_end)
    return SplitSpec(train_end)


def _prepared(config):
    """(train, test windows, content hash) per series, features built on the whole series first."""
    spec = config.feature_spec()
    prepared = {}
    for series_id, dataset in _datasets(config).items():
        featured = build_features(dataset, spec)
        train, tests = split(featured, _split_spec(config, featured))
        prepared[series_id] = (train, tests, featured.content_hash())
    return prepared


def _execute(func, jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [func(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
        return list(pool.map(func, jobs))


def _raise_failures(results):
    for result in results:
        if 'error' in result:
            raise AnlException.from_dict(result['error'])


@catch_all
def cmd_synth(config, path=None, force=False):
    """Write the generated series to CSV; returns the path written."""
    cfg = config.synth if config.synth is not None else SynthConfig()
    if path is None:
        path = config.data_path or os.path.join(config.output, 'synthetic.csv')
    _refuse_overwrite(path, force)
    datasets = synthesize_all(cfg, config.seed)
    frames = [d.to_frame() for d in datasets.values()]
    frame = pd.concat(frames, ignore_index=True)
    if len(datasets) == 1:
        frame = frame.drop(columns=['series'])
    frame['timestamp'] = pd.to_datetime(frame['timestamp']).map(lambda ts: ts.isoformat())
    write_frame(frame, path)
    log.info('cmd_synth(): %d rows to %s', len(frame), path)
    return path


@catch_all
def cmd_fit_gam(config, force=False):
    """Fit the additive model on the training rows of every series; returns the model paths."""
    if not config.formula:
        raise ConfigException("fit-gam needs a formula", 2, 20054)
    paths = []
    for series_id, (train, _, _) in _prepared(config).items():
        path = os.path.join(config.output, 'gam', '%s.json' % slug(series_id))
        _refuse_overwrite(path, force)
        model = fit_gam(train, config.formula, config.lambdas)
        atomic_write(path, pretty_json(model.to_dict()))
        paths.append(path)
    return paths


def _latest_checkpoint(directory):
    found = sorted(glob.glob(os.path.join(directory, 'step-*')))
    return found[-1] if found else None


def _run_one(job):
    timer = StageTimer()
    spec = StrategySpec.from_dict(job['spec'])
    train, tests = job['train'], job['tests']
    run_dir = job['run_dir']
    checkpoint_dir = os.path.join(run_dir, 'checkpoints')
    extension = 'msgpack' if job['checkpoint_format'] == MSGPACK else 'json'

    runner = None
    if job['resume']:
        latest = _latest_checkpoint(checkpoint_dir)
        if latest is not None:
            runner = StrategyRunner.from_dict(loads(_read(latest)), train, tests)
            log.info('Resuming %s on %s from %s', spec.name, runner.series_id, latest)
    else:
        for stale in glob.glob(os.path.join(checkpoint_dir, 'step-*')):
            os.unlink(stale)
    if runner is None:
        runner = StrategyRunner(spec, train, tests)
    runner.on('refit', lambda info: log.debug('%s refit: %s', spec.name, info))

    checkpoints = []

    def on_checkpoint(r):
        path = os.path.join(checkpoint_dir, 'step-%08d.%s' % (r.cursor, extension))
        atomic_write(path, dumps(r.to_dict(), job['checkpoint_format']))
        checkpoints.append(os.path.relpath(path, run_dir))
        log.info('Checkpoint of %s at step %d: %s', spec.name, r.cursor, path)

    with timer.stage('run'):
        result = run_strategy(spec, train, tests, tod_filters=job['tod_filters'], runner=runner,
                              checkpoint_every=job['checkpoint_every'], on_checkpoint=on_checkpoint)

    outputs = {'trace': 'trace.csv', 'access': 'access.csv'}
    with timer.stage('write'):
        write_frame(result.trace, os.path.join(run_dir, outputs['trace']))
        write_access_log(result.access_log, os.path.join(run_dir, outputs['access']))
        outputs.update({k: os.path.relpath(v, run_dir)
                        for k, v in write_report(result.report, run_dir, 'report').items()})
        if result.weights is not None:
            outputs['weights'] = 'weights.csv'
            write_frame(result.weights, os.path.join(run_dir, outputs['weights']))

    timings = dict(result.timings)
    timings.update(timer.timings)
    manifest = RunManifest(
        spec.name, result.series_id, job['dataset_hash'], job['seed'],
        windows=result.report.windows, levels=spec.levels, outputs=outputs,
        hashes={k: sha256_file(os.path.join(run_dir, v)) for k, v in sorted(outputs.items())},
        checkpoints=checkpoints, timings=timings, config_hash=job['config_hash'], delay=spec.delay,
    )
    atomic_write(os.path.join(run_dir, MANIFEST), pretty_json(manifest.to_dict()))
    return manifest


def _run_job(job):
    try:
        manifest = _run_one(job)
    except Exception as e:
        if not isinstance(e, AnlException):
            log.exception(e)
        return {'error': AnlException.from_exception(e).to_dict()}
    return {'manifest': manifest.to_dict()}


@catch_all
def cmd_run(config, strategies=None, force=False, resume=False):
    """Run every (series, strategy) pair; returns one RunManifest per pair."""
    specs = config.strategy_specs(strategies)
    if not specs:
        raise ConfigException("No strategies to run", 2, 20057)
    prepared = _prepared(config)

    jobs = []
    for series_id, (train, tests, digest) in prepared.items():
        for spec in specs:
            run_dir = run_directory(config.output, series_id, spec.name)
            _refuse_overwrite(os.path.join(run_dir, MANIFEST), force or resume)
            jobs.append({
                'spec': spec.to_dict(),
                'train': train,
                'tests': tests,
                'run_dir': run_dir,
                'dataset_hash': digest,
                'seed': config.seed,
                'config_hash': config.config_hash,
                'checkpoint_every': config.checkpoint_every,
                'checkpoint_format': config.checkpoint_format,
                'tod_filters': config.tod_filters,
                'resume': resume,
            })
    log.info('cmd_run(): %d runs on %d workers', len(jobs), config.jobs)
    results = _execute(_run_job, jobs, config.jobs)
    _raise_failures(results)
    return [RunManifest.from_dict(r['manifest']) for r in results]


def _manifest_paths(config, paths):
    if paths:
        return list(paths)
    found = sorted(glob.glob(os.path.join(config.output, 'runs', '*', '*', MANIFEST)))
    if not found:
        raise DataException("No manifest under %s" % config.output, 3, 30001)
    return found


def load_manifest(path):
    return RunManifest.from_dict(loads(_read(path)))


def _output(manifest_path, manifest, name):
    return os.path.join(os.path.dirname(manifest_path), manifest.outputs[name])


def _report_of(path, manifest, tod_filters):
    if tod_filters:
        trace = pd.read_csv(_output(path, manifest, 'trace'), dtype={'series': str, 'window': str})
        return evaluate(manifest.strategy, trace, manifest.levels, tod_filters)
    return EvaluationReport.from_dict(loads(_read(_output(path, manifest, 'report'))))


@catch_all
def cmd_report(config, manifests=None, output=None, tod_filters=None, force=False):
    """Comparison, score, reliability and weight tables over runs; returns the paths written."""
    tod_filters = config.tod_filters if tod_filters is None else list(tod_filters)
    output = output or os.path.join(config.output, 'report')
    paths = {name: os.path.join(output, '%s.csv' % name)
             for name in ('comparison', 'scores', 'reliability', 'weights')}
    for path in paths.values():
        _refuse_overwrite(path, force)

    reports, weights = {}, []
    for path in _manifest_paths(config, manifests):
        manifest = load_manifest(path)
        report = _report_of(path, manifest, tod_filters)
        if manifest.strategy in reports:
            reports[manifest.strategy] = reports[manifest.strategy].merge(report)
        else:
            reports[manifest.strategy] = report
        if 'weights' in manifest.outputs:
            frame = pd.read_csv(_output(path, manifest, 'weights'))
            frame.insert(0, 'series', manifest.series_id)
            frame.insert(0, 'strategy', manifest.strategy)
            weights.append(frame)

    merged = list(reports.values())
    write_frame(comparison_table(merged), paths['comparison'], float_format='%.10g')
    write_frame(pd.concat([r.scores_frame() for r in merged], ignore_index=True), paths['scores'],
                float_format='%.10g')
    write_frame(pd.concat([r.reliability_frame() for r in merged], ignore_index=True), paths['reliability'],
                float_format='%.10g')
    if weights:
        write_frame(pd.concat(weights, ignore_index=True), paths['weights'], float_format='%.10g')
    else:
        del paths['weights']
    log.info('cmd_report(): %d strategies to %s', len(merged), output)
    return paths


@catch_all
def cmd_audit(config, paths=None, delay=None):
    """Re-run the no-lookahead audit on access logs (CSV) or the runs of manifests."""
    results = []
    for path in _manifest_paths(config, paths):
        if path.endswith('.csv'):
            access_path = path
            used = config.features.delay if delay is None else int(delay)
        else:
            manifest = load_manifest(path)
            access_path = _output(path, manifest, 'access')
            used = manifest.delay if delay is None else int(delay)
        frame = pd.read_csv(access_path, parse_dates=['timestamp', 'consumed_timestamp'])
        results.append((path, audit_no_lookahead(access_records(frame), used)))
    for path, result in results:
        if not result.passed:
            raise LookaheadException("%s: %s" % (path, result.message), 3, 30020)
    return results


def _configure_logging():
    name = os.environ.get('ANL_LOG', 'WARNING').upper()
    level = logging.getLevelName(name)
    logging.basicConfig(level=level if isinstance(level, int) else logging.WARNING,
                        format='%(asctime)s %(levelname)s %(name)s: %(message)s', stream=sys.stderr)
    if not isinstance(level, int):
        log.warning('Unknown ANL_LOG level %r, using WARNING', name)


def _csv_list(value):
    return [v.strip() for v in value.split(',') if v.strip()]


def build_parser():
    parser = argparse.ArgumentParser(prog='anl', description='Adaptive probabilistic net-load forecasting')
    parser.add_argument('--config', help='JSON configuration file')
    parser.add_argument('--seed', type=int, help='random seed, overrides the config')
    parser.add_argument('--jobs', type=int, help='parallel runs, overrides the config')
    parser.add_argument('--force', action='store_true', help='overwrite existing outputs')
    commands = parser.add_subparsers(dest='command', required=True)

    synth = commands.add_parser('synth', help='write a synthetic dataset')
    synth.add_argument('--output', help='CSV path (default: data.path or <output>/synthetic.csv)')

    commands.add_parser('fit-gam', help='fit the additive model of every series')

    run = commands.add_parser('run', help='run strategies and write traces, reports and manifests')
    run.add_argument('--strategies', type=_csv_list, help='comma separated subset of the configured strategies')
    run.add_argument('--checkpoint-every', type=int, help='write a checkpoint every N steps')
    run.add_argument('--tod-filter', action='append', help='time of day HH:MM for reliability tables')
    run.add_argument('--resume', action='store_true', help='continue from the latest checkpoints')

    report = commands.add_parser('report', help='comparison tables over manifests')
    report.add_argument('manifests', nargs='*', help='manifest files (default: every run under the output)')
    report.add_argument('--output', help='report directory (default: <output>/report)')
    report.add_argument('--tod-filter', action='append', help='time of day HH:MM for reliability tables')

    audit = commands.add_parser('audit', help='check access logs for lookahead')
    audit.add_argument('paths', nargs='*', help='manifests or access log CSVs (default: every run)')
    audit.add_argument('--delay', type=int, help='delay in steps, overrides the recorded one')
    return parser


@catch_all
def _load_config(args):
    config = Config.from_file(args.config) if args.config else Config()
    return config.with_overrides(
        seed=args.seed, jobs=args.jobs,
        strategies=getattr(args, 'strategies', None),
        tod_filters=getattr(args, 'tod_filter', None),
        checkpoint_every=getattr(args, 'checkpoint_every', None),
    )


def main(argv=None):
    args = build_parser().parse_args(argv)
    _configure_logging()
    stage = 'config'
    try:
        config = _load_config(args)
        stage = args.command
        if args.command == 'synth':
            print(cmd_synth(config, args.output, args.force))
        elif args.command == 'fit-gam':
            for path in cmd_fit_gam(config, args.force):
                print(path)
        elif args.command == 'run':
            for manifest in cmd_run(config, force=args.force, resume=args.resume):
                print(os.path.join(run_directory(config.output, manifest.series_id, manifest.strategy), MANIFEST))
        elif args.command == 'report':
            for path in cmd_report(config, args.manifests, args.output, args.tod_filter, args.force).values():
                print(path)
        elif args.command == 'audit':
            for path, result in cmd_audit(config, args.paths, args.delay):
                print('%s: %s' % (path, result.message))
    except AnlException as e:
        e.with_stage(stage)
        sys.stderr.write('anl: %s\n' % e)
        return e.exit_code
    return 0


def run():
    sys.exit(main())
