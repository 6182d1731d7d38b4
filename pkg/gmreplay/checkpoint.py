# -*- coding: utf-8 -*-
# License: GPL-2.0+ <http://spdx.org/licenses/GPL-2.0+>
# See the LICENSE file for more details on Licensing

"""
Binary checkpoint of a trained GMR model.

Layout, header big-endian::

    b"GMRC"                      magic
    u8                           format version (1)
    u8                           flags, bit 0 = pi-weighted responsibilities
    u32 K, u32 d, u32 C, u32 H, u32 W
    f64le[K]                     weight logits
    f64le[K*d]                   centroids, row major
    f64le[K*d]                   standard deviations, row major
    f64le[C*K]                   classifier weights, row major (absent when C = 0)
    f64le[C]                     classifier bias (absent when C = 0)
    f64le ema_alpha, mean, var   loss statistics
    u64le warmup, samples_seen
"""

import logging
import struct

import numpy as np

from gmreplay import classifier, gmm
from gmreplay.exceptions import GmreplayDataError
from gmreplay.replay import GmrModel

log = logging.getLogger("gmreplay.checkpoint")

MAGIC = b"GMRC"
FORMAT_VERSION = 1
_HEADER = struct.Struct(">4sBBIIIII")
_STATS_FLOATS = np.dtype("<f8")
_STATS_INTS = np.dtype("<u8")


def dumps(model, shape):
    """Serialize ``model`` (a :class:`~gmreplay.replay.GmrModel`) with image ``shape``."""
    K, d = model.gmm.K, model.gmm.d
    C = model.clf.C if model.clf is not None else 0
    flags = 1 if model.weighted else 0
    parts = [_HEADER.pack(MAGIC, FORMAT_VERSION, flags, K, d, C, shape[0], shape[1])]
    arrays = [model.gmm.weight_logits, model.gmm.mu, model.gmm.sigma]
    if C:
        arrays += [model.clf.W, model.clf.b]
    parts += [np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays]
    stats = model.stats
    parts.append(np.array([stats.ema_alpha, stats.mean, stats.var], dtype=_STATS_FLOATS).tobytes())
    parts.append(np.array([stats.warmup, stats.samples_seen], dtype=_STATS_INTS).tobytes())
    return b"".join(parts)


def loads(data):
    """Inverse of :func:`dumps`.

    :returns: (GmrModel, (H, W))
    :raises GmreplayDataError: on bad magic, unknown version or truncated data
    """
    if len(data) < _HEADER.size:
        raise GmreplayDataError("truncated checkpoint header")
    magic, version, flags, K, d, C, H, W = _HEADER.unpack_from(data)
    if magic != MAGIC:
        raise GmreplayDataError("not a gmreplay checkpoint")
    if version != FORMAT_VERSION:
        raise GmreplayDataError("unsupported checkpoint version {}".format(version))
    counts = [K, K * d, K * d] + ([C * K, C] if C else []) + [3]
    expected = _HEADER.size + 8 * sum(counts) + 16
    if len(data) != expected:
        raise GmreplayDataError("checkpoint has {} bytes, expected {}".format(len(data), expected))

    offset = _HEADER.size
    arrays = []
    for count in counts:
        arrays.append(np.frombuffer(data, dtype="<f8", count=count, offset=offset).astype(np.float64))
        offset += 8 * count
    warmup, seen = np.frombuffer(data, dtype=_STATS_INTS, count=2, offset=offset)

    params = gmm.GmmParams(arrays[0], arrays[1].reshape(K, d), arrays[2].reshape(K, d))
    clf = classifier.ClassifierParams(arrays[3].reshape(C, K), arrays[4]) if C else None
    ema_alpha, mean, var = arrays[-1]
    stats = gmm.LossStats(float(ema_alpha), int(warmup))
    stats.mean, stats.var, stats.samples_seen = float(mean), float(var), int(seen)
    return GmrModel(params, clf, stats, weighted=bool(flags & 1)), (H, W)


def save_checkpoint(path, model, shape):
    with open(path, "wb") as ckpt:
        ckpt.write(dumps(model, shape))
    log.info("checkpoint written to %s", path)


def load_checkpoint(path):
    try:
        with open(path, "rb") as ckpt:
            return loads(ckpt.read())
    except IOError as e:
        raise GmreplayDataError("Unable to read checkpoint {}: {}".format(path, e.strerror))
