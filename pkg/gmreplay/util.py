# -*- coding: utf-8 -*-
# License: GPL-2.0+ <http://spdx.org/licenses/GPL-2.0+>
# See the LICENSE file for more details on Licensing

"""
This module contains helper functions for gmreplay.
"""

import errno
import fcntl
import logging
import os
import time

import numpy as np

log = logging.getLogger("gmreplay.util")


def ensure_dir(path):
    """Create ``path`` (and parents) if missing, return it."""
    if path and not os.path.isdir(path):
        os.makedirs(path)
    return path


def derive_seed(seed, *streams):
    """64-bit integer seed for a named sub-stream of ``seed`` (PCG64 seed sequence)."""
    sequence = np.random.SeedSequence([int(seed), *[int(s) for s in streams]])
    return int(sequence.generate_state(1, dtype=np.uint64)[0])


def write_pgm(path, pixels):
    """Write a 2-d array of values in [0, 1] as a binary portable graymap (P5).

    :param path: destination file
    :param pixels: H x W float array, values are clamped to [0, 1]
    """
    pixels = np.asarray(pixels, dtype=np.float64)
    if pixels.ndim != 2:
        raise ValueError("PGM images must be two dimensional")
    data = np.rint(255.0 * np.clip(pixels, 0.0, 1.0)).astype(np.uint8)
    height, width = data.shape
    with open(path, "wb") as pgm:
        pgm.write("P5\n{} {}\n255\n".format(width, height).encode("ascii"))
        pgm.write(data.tobytes())


def read_pgm(path):
    """Read a binary P5 graymap written by :func:`write_pgm` into a uint8 array."""
    with open(path, "rb") as pgm:
        data = pgm.read()
    # header is four whitespace separated tokens, then exactly one whitespace byte
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos:pos + 1].isspace():
            pos += 1
        start = pos
        while not data[pos:pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise ValueError("{} is not a binary PGM file".format(path))
    width, height = int(tokens[1]), int(tokens[2])
    return np.frombuffer(data[pos + 1:pos + 1 + width * height], dtype=np.uint8).reshape(height, width)


class Filelock(object):
    """Exclusive advisory lock on ``<path>.lock``, used to serialize appends to a shared file."""

    def __init__(self, path, timeout=25, wait_time=0.5):
        self.lock_path = path + ".lock"
        self.fd = open(self.lock_path, "w+")
        self.timeout = timeout
        self.wait_time = wait_time

    def __enter__(self):
        start_time = time.time()
        while 1:
            try:
                fcntl.lockf(self.fd, fcntl.LOCK_EX | fcntl.LOCK_NB)
                log.debug("Lock acquired on %s", self.lock_path)
                break
            except (OSError, IOError) as ex:
                if ex.errno in (errno.EAGAIN, errno.EACCES):
                    log.debug("Waiting for lock on %s", self.lock_path)
                    time.sleep(self.wait_time)
                else:
                    raise ex

            if (start_time + self.timeout) <= time.time():
                log.warning("Lock timeout reached on %s, continuing without it", self.lock_path)
                break
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        fcntl.lockf(self.fd, fcntl.LOCK_UN)
        log.debug("Lock lifted on %s", self.lock_path)

    def __del__(self):
        self.fd.close()
