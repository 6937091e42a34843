import logging

import numpy as np

from anl.types.dataset import align_timestamp
from anl.util.exceptions import DataException

log = logging.getLogger(__name__)

DEFAULT_WINDOW = 'test'


def split(d, s):
    """Partition the usable rows of ``d`` into a training set and labeled test windows.

    Training rows have timestamps <= ``s.train_end``; every window holds the usable rows of its
    (start, end] interval. Without explicit windows, one window ``test`` holds every usable row
    after ``train_end``.
    """
    index = d.timestamps
    usable = d.usable
    train_end = align_timestamp(s.train_end, index)
    train_mask = usable & (index <= train_end)
    if not train_mask.any():
        raise DataException("Empty training set: no usable row of %s at or before %s" % (d.series_id, s.train_end),
                            3, 30012)
    train = d.subset(train_mask)

    if s.test_windows:
        windows = [(w.label, align_timestamp(w.start, index), align_timestamp(w.end, index))
                   for w in s.test_windows]
    else:
        windows = [(DEFAULT_WINDOW, train_end, None)]
    tests = []
    for label, start, end in windows:
        mask = usable & (index > start)
        if end is not None:
            mask &= index <= end
        if not mask.any():
            raise DataException("Empty test window %s of series %s" % (label, d.series_id), 3, 30012)
        tests.append((label, d.subset(mask)))
    log.debug('split(): %s train=%d windows=%s', d.series_id, len(train), [(k, len(v)) for k, v in tests])
    return train, tests


def window_labels(tests):
    """Window label of every row of the concatenated test windows."""
    return np.concatenate([np.full(len(ds), label, dtype=object) for label, ds in tests])
