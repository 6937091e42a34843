"""Scoring of forecast traces and the tables written next to them."""
import logging
import os

import numpy as np
import pandas as pd

from anl.data.io import write_frame
from anl.evaluation.metrics import rps, series_scores
from anl.evaluation.reliability import reliability_table
from anl.types.report import POOLED, EvaluationReport
from anl.util.codec import pretty_json
from anl.util.exceptions import DataException
from anl.util.helper import atomic_write

log = logging.getLogger(__name__)

TRACE_COLUMNS = ('timestamp', 'series', 'window', 'target', 'mean')


def level_column(q):
    return 'q%s' % repr(float(q))


def trace_levels(trace):
    """Quantile levels present as columns of a trace, ascending."""
    return sorted(float(c[1:]) for c in trace.columns if c.startswith('q') and _is_float(c[1:]))


def _is_float(text):
    try:
        float(text)
    except ValueError:
        return False
    return True


def evaluate(strategy, trace, levels=None, tod_filters=()):
    """Score a forecast trace (one row per forecast step) per series and window.

    The trace holds the columns timestamp, series, window, target, mean and one column per
    quantile level. Reliability is reported per series and pooled over the series of each window.
    """
    for name in TRACE_COLUMNS:
        if name not in trace.columns:
            raise DataException("Trace lacks column %s" % name, 3, 30003)
    if levels is None:
        levels = trace_levels(trace)
    levels = [float(q) for q in levels]
    columns = [level_column(q) for q in levels]

    scores, rows, traces = [], [], {}
    for window in pd.unique(trace['window']):
        part = trace[trace['window'] == window]
        for series_id in pd.unique(part['series']):
            rows_s = part[part['series'] == series_id]
            y = rows_s['target'].to_numpy(dtype=float)
            quantiles = rows_s[columns].to_numpy(dtype=float) if levels else None
            scores.append(series_scores(series_id, window, y, rows_s['mean'].to_numpy(dtype=float),
                                        levels, quantiles))
            if levels:
                losses = rps(levels, quantiles, y)
                rows += reliability_table(levels, quantiles, y, pd.to_datetime(rows_s['timestamp']), tod_filters,
                                          series=str(series_id), window=str(window))
            else:
                losses = np.abs(y - rows_s['mean'].to_numpy(dtype=float))
            traces.setdefault(str(series_id), []).extend(float(v) for v in np.atleast_1d(losses))
        if levels:
            rows += reliability_table(levels, part[columns].to_numpy(dtype=float),
                                      part['target'].to_numpy(dtype=float),
                                      pd.to_datetime(part['timestamp']), tod_filters, series=POOLED,
                                      window=str(window))
    report = EvaluationReport(strategy, levels, scores, rows, traces)
    log.info('evaluate(): %s scored on %d series, %d windows', strategy, len(report.series), len(report.windows))
    return report


def comparison_table(reports):
    """Aggregate scores of several strategies, one row per (strategy, window)."""
    reports = list(reports)
    if not reports:
        raise DataException("No reports to compare", 3, 30015)
    windows = reports[0].windows
    levels = reports[0].levels
    for report in reports[1:]:
        if report.windows != windows:
            raise DataException("Incompatible test windows: %s has %s, %s has %s"
                                % (reports[0].strategy, windows, report.strategy, report.windows), 3, 30015)
        if report.levels and levels and report.levels != levels:
            raise DataException("Incompatible levels between %s and %s" % (reports[0].strategy, report.strategy),
                                3, 30015)
    return pd.concat([r.aggregate_frame() for r in reports], ignore_index=True)


def write_report(report, directory, name='report'):
    """Write the report as JSON plus one CSV table per kind of score."""
    paths = {
        'report': os.path.join(directory, '%s.json' % name),
        'metrics': os.path.join(directory, '%s_metrics.csv' % name),
        'scores': os.path.join(directory, '%s_scores.csv' % name),
        'reliability': os.path.join(directory, '%s_reliability.csv' % name),
    }
    atomic_write(paths['report'], pretty_json(report.to_dict()))
    write_frame(report.aggregate_frame(), paths['metrics'], float_format='%.10g')
    write_frame(report.scores_frame(), paths['scores'], float_format='%.10g')
    write_frame(report.reliability_frame(), paths['reliability'], float_format='%.10g')
    return paths
