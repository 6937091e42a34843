"""Walk-forward execution of one strategy on one series.

Every test step runs strictly in this order: observations that have become available are fed to
the learners, scheduled refits run, the mean is forecast, then the quantiles. An observation at
grid position u is available to the forecast at position p when ``u <= p - 1 - delay``.
"""
import logging
from typing import NamedTuple

import numpy as np
import pandas as pd

from anl.evaluation.report import evaluate, level_column
from anl.model.quantile import sort_quantiles
from anl.pipeline.audit import audit_no_lookahead
from anl.pipeline.engines import StreamView, mean_engine, quantile_engine
from anl.types.defaults import Defaults
from anl.types.forecast import AccessRecord, ForecastRecord
from anl.types.strategy import QuantileMode, StrategySpec
from anl.util.eventemitter import EventEmitter
from anl.util.exceptions import DataException, LookaheadException
from anl.util.helper import StageTimer

log = logging.getLogger(__name__)


class RunResult(NamedTuple):
    spec: StrategySpec
    series_id: str
    records: list
    trace: pd.DataFrame
    report: object
    access_log: list
    weights: object
    audit: object
    mean_engine: object
    timings: dict


def _test_parts(test):
    if isinstance(test, (list, tuple)):
        return list(test)
    return [('test', test)]


class StrategyRunner(EventEmitter):
    """Runs ``spec`` over the test windows after ``train``.

    Events: ``refit`` (a model was refitted), ``update`` (an AccessRecord), ``forecast`` (a
    ForecastRecord) and ``checkpoint``.
    """

    def __init__(self, spec, train, test, gam=None, ssm_params=None):
        super().__init__()
        parts = _test_parts(test)
        if not parts:
            raise DataException("No test window", 3, 30012)
        stream = train.usable_only()
        labels = [None] * len(stream)
        for label, part in parts:
            part = part.usable_only()
            if len(part) == 0:
                raise DataException("Empty test window %s" % label, 3, 30012)
            stream = stream.concat(part)
            labels += [label] * len(part)
        if len(train.usable_only()) == 0:
            raise DataException("Empty training set", 3, 30012)

        self.__spec = spec
        self.__series_id = stream.series_id
        self.__raw_target = stream.target
        self.__n_train = len(train.usable_only())
        self.__test_rows = np.arange(self.__n_train, len(stream))
        self.__windows = np.asarray(labels, dtype=object)
        self.__positions = stream.positions
        self.__timestamps = stream.timestamps
        self.__step = stream.step
        self.__stream = stream
        self.__gam = gam
        self.__ssm_params = ssm_params

        p0 = int(self.__positions[self.__test_rows[0]])
        train_positions = self.__positions[:self.__n_train]
        self.__fit_rows = np.flatnonzero(train_positions <= p0 - 1 - spec.delay)
        if len(self.__fit_rows) == 0:
            raise DataException("No training row is available before the first test step", 3, 30012)

        self.__loc, self.__scale = 0.0, 1.0
        if spec.normalize:
            y = self.__raw_target[self.__fit_rows]
            self.__loc, self.__scale = float(y.mean()), float(y.std())
            if not self.__scale > 0:
                raise DataException("Cannot normalize constant series %s" % self.__series_id, 3, 30013)
            stream = stream.with_target((self.__raw_target - self.__loc) / self.__scale)

        self.__view = StreamView(stream, self.__windows)
        self.__mean = mean_engine(spec, self.__view)
        self.__quantile = quantile_engine(spec, self.__view, self.__mean.effect_columns)
        self.__fitted = False
        self.__cursor = 0
        self.__feedback = []
        self.__next_feedback = 0
        self.__payloads = {}
        self.__records = []
        self.__weights = []
        self.__access = []
        self.__timer = StageTimer()

    @property
    def spec(self):
        return self.__spec

    @property
    def series_id(self):
        return self.__series_id

    @property
    def done(self):
        return self.__cursor >= len(self.__test_rows)

    @property
    def cursor(self):
        """Number of test steps forecast so far."""
        return self.__cursor

    @property
    def records(self):
        return list(self.__records)

    @property
    def access_log(self):
        return list(self.__access)

    @property
    def mean_engine(self):
        return self.__mean

    @property
    def quantile_engine(self):
        return self.__quantile

    @property
    def timings(self):
        return self.__timer.timings

    def __timestamp_at(self, position):
        return self.__timestamps[0] + int(position) * self.__step

    def __log_access(self, kind, position, consumed_row):
        consumed = int(self.__positions[consumed_row])
        record = AccessRecord(kind, position, self.__timestamp_at(position), consumed,
                              self.__timestamps[consumed_row])
        self.__access.append(record)
        self._emit('update', record)

    def fit(self):
        """Offline stage: fit the mean and quantile learners on the rows available at the first test step."""
        if self.__fitted:
            return
        rows = self.__fit_rows
        p0 = int(self.__positions[self.__test_rows[0]])
        with self.__timer.stage('fit'):
            means = self.__mean.fit(rows, self.__gam, self.__ssm_params)
            self.__quantile.fit(rows, means)
        self.__log_access('fit', p0 - 1, rows[-1])

        # training rows not yet available at the first test step reach online learners later
        if self.__spec.burn_in and self.__mean.observes:
            self.__feedback = [int(i) for i in range(rows[-1] + 1, self.__n_train)]
        self.__fitted = True
        self._emit('refit', {'stage': 'fit', 'rows': len(rows)})
        log.info('StrategyRunner.fit(): %s on %s, %d training rows', self.__spec.name, self.__series_id, len(rows))

    def __consume(self, p):
        """Feed every pending observation available to the forecast at grid position p."""
        limit = p - 1 - self.__spec.delay
        while self.__next_feedback < len(self.__feedback):
            i = self.__feedback[self.__next_feedback]
            if self.__positions[i] > limit:
                break
            if self.__mean.observes:
                self.__mean.observe(i)
                self.__log_access('state', p - 1, i)
            payload = self.__payloads.pop(i, None)
            if payload is not None and self.__quantile.observes:
                self.__quantile.observe(i, payload)
                self.__log_access('quantile', p - 1, i)
            self.__next_feedback += 1

    def __available(self, p):
        return self.__positions <= p - 1 - self.__spec.delay

    def step(self):
        """Forecast the next test row; returns its ForecastRecord."""
        if not self.__fitted:
            self.fit()
        if self.done:
            raise IndexError("No test step left")
        i = int(self.__test_rows[self.__cursor])
        p = int(self.__positions[i])
        with self.__timer.stage('update'):
            self.__consume(p)
        with self.__timer.stage('refit'):
            available = self.__available(p)
            for engine in (self.__mean, self.__quantile):
                consumed = engine.refresh(i, available)
                if consumed is not None and len(consumed):
                    self.__log_access('refit', p - 1, int(np.max(consumed)))
                    self._emit('refit', {'stage': type(engine).__name__, 'timestamp': self.__timestamps[i]})

        with self.__timer.stage('forecast'):
            for j in self.__mean.feature_reads(i):
                self.__log_access('feature', p, j)
            mean, var = self.__mean.forecast(i)
            values, payload = self.__quantile.forecast(i, mean, var)
        if payload is not None:
            self.__payloads[i] = payload
        weights = self.__quantile.weights()
        if weights is not None and self.__spec.quantile == QuantileMode.OGD_BOA:
            self.__weights.append(weights)
        self.__feedback.append(i)

        record = self.__record(i, mean, var, values)
        self.__records.append(record)
        self.__cursor += 1
        self._emit('forecast', record)
        return record

    def __record(self, i, mean, var, values):
        levels = self.__spec.levels
        values = sort_quantiles(levels, values) if len(levels) else values
        loc, scale = self.__loc, self.__scale
        sd = float(np.sqrt(var)) * scale if var is not None else None
        return ForecastRecord(
            self.__timestamps[i], self.__series_id, mean * scale + loc,
            {q: v * scale + loc for q, v in zip(levels, values)},
            sd=sd, window=self.__windows[i], observed=self.__raw_target[i],
        )

    def run(self, until=None, checkpoint_every=None, on_checkpoint=None):
        """Forecast test rows until ``until`` steps are done (all by default).

        With ``checkpoint_every`` n, ``on_checkpoint(runner)`` is called after every n steps.
        """
        self.fit()
        stop = len(self.__test_rows) if until is None else min(int(until), len(self.__test_rows))
        while self.__cursor < stop:
            self.step()
            if checkpoint_every and self.__cursor % checkpoint_every == 0 and on_checkpoint is not None:
                on_checkpoint(self)
                self._emit('checkpoint', self.__cursor)
        return self

    def trace(self):
        """Forecast trace: timestamp, series, window, target, mean, optional sd, one column per level."""
        levels = self.__spec.levels
        rows = []
        for r in self.__records:
            row = {'timestamp': r.timestamp.isoformat(), 'series': r.series_id, 'window': r.window,
                   'target': r.observed, 'mean': r.mean}
            if r.sd is not None:
                row['sd'] = r.sd
            quantiles = r.quantiles
            for q in levels:
                row[level_column(q)] = quantiles[q]
            rows.append(row)
        columns = ['timestamp', 'series', 'window', 'target', 'mean']
        if self.__records and self.__records[0].sd is not None:
            columns.append('sd')
        columns += [level_column(q) for q in levels]
        return pd.DataFrame(rows, columns=columns)

    def weight_trace(self):
        """BOA weights in long format: timestamp, level, alpha, weight."""
        if not self.__weights:
            return None
        levels = self.__spec.levels
        alphas = self.__spec.step_sizes
        rows = []
        for record, weights in zip(self.__records, self.__weights):
            ts = record.timestamp.isoformat()
            for j, q in enumerate(levels):
                for k, alpha in enumerate(alphas):
                    rows.append((ts, q, alpha, float(weights[j][k])))
        return pd.DataFrame(rows, columns=['timestamp', 'level', 'alpha', 'weight'])

    def result(self, tod_filters=()):
        trace = self.trace()
        with self.__timer.stage('evaluate'):
            report = evaluate(self.__spec.name, trace, self.__spec.levels, tod_filters)
        audit = audit_no_lookahead(self.__access, self.__spec.delay)
        return RunResult(self.__spec, self.__series_id, self.records, trace, report, self.access_log,
                         self.weight_trace(), audit, self.__mean, self.timings)

    def to_dict(self):
        """Complete state after the last forecast step; restore with ``from_dict`` and the same data."""
        return {
            'formatVersion': Defaults.format_version,
            'spec': self.__spec.to_dict(),
            'seriesId': self.__series_id,
            'fitted': self.__fitted,
            'cursor': self.__cursor,
            'feedback': self.__feedback,
            'nextFeedback': self.__next_feedback,
            'payloads': [[i, payload] for i, payload in sorted(self.__payloads.items())],
            'mean': self.__mean.to_dict() if self.__fitted else None,
            'quantile': self.__quantile.to_dict() if self.__fitted else None,
            'records': [r.to_dict() for r in self.__records],
            'weights': [np.asarray(w).tolist() for w in self.__weights],
            'access': [a.to_dict() for a in self.__access],
        }

    @staticmethod
    def from_dict(obj, train, test, gam=None, ssm_params=None):
        if obj.get('formatVersion') != Defaults.format_version:
            raise DataException("Unsupported checkpoint format version %r" % obj.get('formatVersion'), 3, 30011)
        spec = StrategySpec.from_dict(obj['spec'])
        runner = StrategyRunner(spec, train, test, gam, ssm_params)
        runner.__restore(obj)
        return runner

    def __restore(self, obj):
        if obj['seriesId'] != self.__series_id:
            raise DataException("Checkpoint of series %s used for %s" % (obj['seriesId'], self.__series_id),
                                3, 30011)
        self.__fitted = bool(obj['fitted'])
        self.__cursor = int(obj['cursor'])
        self.__feedback = [int(i) for i in obj['feedback']]
        self.__next_feedback = int(obj['nextFeedback'])
        self.__payloads = {int(i): payload for i, payload in obj['payloads']}
        if self.__fitted:
            self.__mean.load(obj['mean'])
            self.__quantile.load(obj['quantile'])
        self.__records = [ForecastRecord.from_dict(r) for r in obj['records']]
        self.__weights = [np.asarray(w, dtype=float) for w in obj['weights']]
        self.__access = [AccessRecord.from_dict(a) for a in obj['access']]


def run_strategy(spec, train, test, gam=None, ssm_params=None, tod_filters=(), runner=None, checkpoint_every=None,
                 on_checkpoint=None):
    """Run ``spec`` on one series and score it.

    ``test`` is a Dataset or a list of (label, Dataset) windows. ``gam`` and ``ssm_params``
    replace the fitted mean model and state-noise parameters when given. A ``runner`` restored
    from a checkpoint continues where it stopped. Raises LookaheadException when the access log
    fails the no-lookahead audit.
    """
    if runner is None:
        runner = StrategyRunner(spec, train, test, gam, ssm_params)
    runner.run(checkpoint_every=checkpoint_every, on_checkpoint=on_checkpoint)
    result = runner.result(tod_filters)
    if not result.audit.passed:
        raise LookaheadException("Run of %s on %s consumed unavailable data: %s"
                                 % (spec.name, runner.series_id, result.audit.message), 3, 30020)
    return result
