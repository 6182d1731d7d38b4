# -*- coding: utf-8 -*-
# License: GPL-2.0+ <http://spdx.org/licenses/GPL-2.0+>
# See the LICENSE file for more details on Licensing

""" This module is for testing metric rows, CSV sinks and the file helpers they use."""

import errno
import os
from unittest import mock

import numpy as np
import pytest

from gmreplay import metrics, util
from gmreplay.exceptions import GmreplayDataError


def _row(**overrides):
    row = dict(run_id="r", seed=0, sub_task=1, epoch=1, train_loss=-1.5, ce_loss=0.25, test_accuracy=0.5,
               inlier_fraction=None, boundaries=[], replay_count=0, wall_time=None)
    row.update(overrides)
    return row


class TestMetricsLog(object):
    def test_duplicate_rows_rejected(self):
        log = metrics.MetricsLog()
        log.append(**_row())
        with pytest.raises(GmreplayDataError, match="duplicate"):
            log.append(**_row(train_loss=0.0))

    def test_missing_field(self):
        row = _row()
        del row["ce_loss"]
        with pytest.raises(GmreplayDataError, match="ce_loss"):
            metrics.MetricsLog().append(**row)

    def test_max_accuracy(self):
        log = metrics.MetricsLog()
        log.append(**_row(epoch=1, test_accuracy=0.4))
        log.append(**_row(epoch=2, test_accuracy=0.9))
        log.append(**_row(epoch=3, test_accuracy=0.7))
        assert log.max_accuracy("r") == 0.9
        with pytest.raises(GmreplayDataError):
            log.max_accuracy("other")

    def test_csv_format(self):
        log = metrics.MetricsLog()
        log.append(**_row(boundaries=[3, 17]))
        lines = log.to_csv().splitlines()
        assert lines[0] == ",".join(metrics.METRICS_FIELDS)
        assert lines[1] == "r,0,1,1,-1.5,0.25,0.5,,3;17,0,"

    def test_sink_sees_every_row(self):
        seen = []
        log = metrics.MetricsLog(sink=seen.append)
        log.append(**_row(epoch=1))
        log.append(**_row(epoch=2))
        assert [r["epoch"] for r in seen] == [1, 2]

    def test_run_ids_in_order(self):
        log = metrics.MetricsLog()
        for run_id in ("b", "a", "b"):
            log.append(**_row(run_id=run_id, epoch=len(log.rows)))
        assert log.run_ids() == ["b", "a"]


class TestCsvFiles(object):
    def test_header_written_once(self, tmpdir):
        path = str(tmpdir.join("metrics.csv"))
        metrics.append_csv(path, metrics.METRICS_FIELDS, [_row(epoch=1)])
        metrics.append_csv(path, metrics.METRICS_FIELDS, [_row(epoch=2)])
        with open(path) as csv_file:
            lines = csv_file.read().splitlines()
        assert len(lines) == 3
        assert lines[0].startswith("run_id,")

    def test_read_back(self, tmpdir):
        path = str(tmpdir.join("metrics.csv"))
        metrics.append_csv(path, metrics.METRICS_FIELDS, [_row(epoch=1, test_accuracy=0.25), _row(epoch=2, test_accuracy=0.75)])
        loaded = metrics.read_metrics_csv(path)
        assert loaded.max_accuracy("r") == 0.75
        assert loaded.to_csv() == open(path).read()

    def test_not_a_metrics_file(self, tmpdir):
        path = tmpdir.join("other.csv")
        path.write("a,b\n1,2\n")
        with pytest.raises(GmreplayDataError):
            metrics.read_metrics_csv(str(path))


class TestPgm(object):
    def test_write_and_read(self, tmpdir):
        path = str(tmpdir.join("grid.pgm"))
        pixels = np.array([[0.0, 0.5], [1.0, 2.0], [-1.0, 0.2]])
        util.write_pgm(path, pixels)
        with open(path, "rb") as pgm:
            assert pgm.read().startswith(b"P5\n2 3\n255\n")
        assert util.read_pgm(path).tolist() == [[0, 128], [255, 255], [0, 51]]

    def test_pixels_that_look_like_whitespace(self, tmpdir):
        path = str(tmpdir.join("ws.pgm"))
        util.write_pgm(path, np.array([[10 / 255.0, 32 / 255.0, 9 / 255.0]]))
        assert util.read_pgm(path).tolist() == [[10, 32, 9]]


class TestSeeds(object):
    def test_derive_seed_is_stable_and_distinct(self):
        assert util.derive_seed(1, 2, 3) == util.derive_seed(1, 2, 3)
        assert util.derive_seed(1, 2, 3) != util.derive_seed(1, 3, 2)


class TestFilelock(object):
    def test_lock_file_created(self, tmpdir):
        path = str(tmpdir.join("metrics.csv"))
        with util.Filelock(path):
            assert os.path.exists(path + ".lock")

    def test_waits_for_busy_lock(self, tmpdir):
        path = str(tmpdir.join("metrics.csv"))
        busy = OSError(errno.EAGAIN, "busy")
        with mock.patch("gmreplay.util.fcntl.lockf", side_effect=[busy, None, None]) as lockf, \
                mock.patch("gmreplay.util.time.sleep") as sleep:
            with util.Filelock(path, wait_time=0.5):
                pass
        sleep.assert_called_once_with(0.5)
        assert lockf.call_count == 3
