# -*- coding: utf-8 -*-
# License: GPL-2.0+ <http://spdx.org/licenses/GPL-2.0+>
# See the LICENSE file for more details on Licensing

"""
Per-epoch metric records shared by the GMR and EWC training loops, and their CSV form.
"""

import csv
import io
import logging
import os

from gmreplay.exceptions import GmreplayDataError
from gmreplay.util import Filelock

log = logging.getLogger("gmreplay.metrics")

#: CSV header of the metrics file, in column order
METRICS_FIELDS = [
    "run_id",
    "seed",
    "sub_task",
    "epoch",
    "train_loss",
    "ce_loss",
    "test_accuracy",
    "inlier_fraction",
    "boundaries",
    "replay_count",
    "wall_time",
]

#: CSV header of the inlier-fraction trace written by the ``boundaries`` command
TRACE_FIELDS = ["run_id", "batch", "sub_task", "epoch", "inlier_fraction", "detected", "true_boundary"]


def _format(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ";".join(str(v) for v in value)
    return str(value)


class MetricsLog(object):
    """Append-only list of per-epoch rows, at most one per (run, sub-task, epoch).

    Training loops also attach the latest trained model (``model``). GMR adds the per-batch
    inlier-fraction trace (``trace``) and the true sub-task boundaries (``true_boundaries``)
    of its latest run.

    :param sink: optional callable receiving every appended row, e.g. a CSV writer, so
        rows of a run that fails later are already on disk
    """

    def __init__(self, sink=None):
        self.sink = sink
        self.rows = []
        self._keys = set()
        self.model = None
        self.trace = []
        self.true_boundaries = []

    def append(self, **row):
        missing = [f for f in METRICS_FIELDS if f not in row]
        if missing:
            raise GmreplayDataError("metrics row lacks {}".format(", ".join(missing)))
        key = (row["run_id"], row["sub_task"], row["epoch"])
        if key in self._keys:
            raise GmreplayDataError("duplicate metrics row for run {} sub-task {} epoch {}".format(*key))
        self._keys.add(key)
        self.rows.append({f: row[f] for f in METRICS_FIELDS})
        if self.sink is not None:
            self.sink(self.rows[-1])
        return self.rows[-1]

    def run_ids(self):
        seen = []
        for row in self.rows:
            if row["run_id"] not in seen:
                seen.append(row["run_id"])
        return seen

    def max_accuracy(self, run_id):
        """Highest joint-test accuracy observed during training of ``run_id``."""
        values = [float(r["test_accuracy"]) for r in self.rows if r["run_id"] == run_id]
        if not values:
            raise GmreplayDataError("no rows for run {}".format(run_id))
        return max(values)

    def to_csv(self, header=True):
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        if header:
            writer.writerow(METRICS_FIELDS)
        for row in self.rows:
            writer.writerow([_format(row[f]) for f in METRICS_FIELDS])
        return buffer.getvalue()


def append_csv(path, fields, rows):
    """Append ``rows`` (dicts) to the CSV at ``path``, writing the header when the file is
    new. Appends to one file are serialized through a :class:`Filelock`.
    """
    with Filelock(path):
        new_file = not os.path.exists(path) or os.path.getsize(path) == 0
        with open(path, "a", newline="") as csv_file:
            writer = csv.writer(csv_file, lineterminator="\n")
            if new_file:
                writer.writerow(fields)
            for row in rows:
                writer.writerow([_format(row.get(f)) for f in fields])


def read_metrics_csv(path):
    """Load a metrics CSV written by :func:`append_csv` back into a :class:`MetricsLog`."""
    metrics = MetricsLog()
    try:
        with open(path, "r", newline="") as csv_file:
            reader = csv.DictReader(csv_file)
            if reader.fieldnames != METRICS_FIELDS:
                raise GmreplayDataError("{} is not a metrics file (header {})".format(path, reader.fieldnames))
            for row in reader:
                row["sub_task"] = int(row["sub_task"])
                row["epoch"] = int(row["epoch"])
                row["test_accuracy"] = float(row["test_accuracy"])
                metrics.append(**row)
    except IOError as e:
        raise GmreplayDataError("Unable to read metrics {}: {}".format(path, e.strerror))
    return metrics
