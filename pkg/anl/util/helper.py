import hashlib
import logging
import os
import tempfile
import time
from contextlib import contextmanager


log = logging.getLogger(__name__)


def atomic_write(path, data):
    """Write bytes or text to path through a temporary file in the same directory and a rename."""
    if isinstance(data, str):
        data = data.encode('utf-8')
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix='.%s.' % os.path.basename(path), dir=directory)
    try:
        with os.fdopen(fd, 'wb') as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    log.debug('atomic_write(): %d bytes to %s', len(data), path)


def sha256_bytes(data):
    if isinstance(data, str):
        data = data.encode('utf-8')
    return hashlib.sha256(data).hexdigest()


def sha256_file(path):
    digest = hashlib.sha256()
    with open(path, 'rb') as f:
        for chunk in iter(lambda: f.read(1 << 16), b''):
            digest.update(chunk)
    return digest.hexdigest()


class StageTimer:
    """Collects wall-clock seconds per named stage."""

    def __init__(self):
        self.__timings = {}

    @contextmanager
    def stage(self, name):
        start = time.perf_counter()
        try:
            yield
        finally:
            self.__timings[name] = self.__timings.get(name, 0.0) + time.perf_counter() - start

    @property
    def timings(self):
        return dict(self.__timings)
