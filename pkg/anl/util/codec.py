import json
import logging

import msgpack
import numpy as np

from anl.util.exceptions import DataException

log = logging.getLogger(__name__)

JSON = 'json'
MSGPACK = 'msgpack'
FORMATS = (JSON, MSGPACK)


def to_plain(obj):
    """Convert numpy containers and scalars into builtin types both codecs accept."""
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_plain(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def dumps(obj, fmt=JSON):
    obj = to_plain(obj)
    if fmt == MSGPACK:
        return msgpack.packb(obj, use_bin_type=True)
    elif fmt == JSON:
        return json.dumps(obj, separators=(',', ':'), sort_keys=True).encode('utf-8')
    raise ValueError("Unsupported format: %s" % fmt)


def loads(data: bytes):
    """Decode a document written by dumps; the format is detected from the payload."""
    if isinstance(data, str):
        data = data.encode('utf-8')
    stripped = data.lstrip()
    try:
        if stripped[:1] in (b'{', b'['):
            return json.loads(data.decode('utf-8'))
        return msgpack.unpackb(data, raw=False, strict_map_key=False)
    except (ValueError, msgpack.ExtraData, msgpack.FormatError, msgpack.StackError) as e:
        raise DataException("Undecodable document", 3, 30010, cause=e)


def pretty_json(obj):
    return (json.dumps(to_plain(obj), indent=2, sort_keys=True) + '\n').encode('utf-8')
