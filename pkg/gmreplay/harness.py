# -*- coding: utf-8 -*-
# License: GPL-2.0+ <http://spdx.org/licenses/GPL-2.0+>
# See the LICENSE file for more details on Licensing

"""
Experiment runner: loads the data of a config, runs the seeded repetitions (or the EWC
grid), registers every run and writes the artifacts named after the config hash:

    metrics-<hash>.csv     one row per (run, sub-task, epoch), streamed while training
    summary-<hash>.csv     mean and std of the per-run maximum joint-test accuracy
    trace-<hash>.csv       per-batch inlier fractions (``boundaries`` command)
    sampling-<hash>.csv    sampling bound report (``sampling`` command)
    <run_id>.ckpt          trained GMR model
"""

import csv
import hashlib
import logging
import os

import numpy as np

from gmreplay import classifier, dataio, ewc, gmm, sql
from gmreplay.checkpoint import load_checkpoint, save_checkpoint
from gmreplay.exceptions import GmreplayDataError, RunNotFoundError
from gmreplay.metrics import METRICS_FIELDS, TRACE_FIELDS, MetricsLog, append_csv
from gmreplay.replay import run_gmr
from gmreplay.util import ensure_dir, write_pgm

log = logging.getLogger("gmreplay.harness")

SUMMARY_FIELDS = ["config_hash", "model", "dataset", "slt", "epsilon", "runs", "mean", "std"]
TABLE_FIELDS = ["model", "dataset", "slt", "mean", "std", "diff", "config_hash"]
SAMPLING_FIELDS = ["run_id", "train_mean", "sample_mean", "sample_stderr", "count", "holds"]

BASELINE_SLT = "D10"

# random stream ids of the harness, see dataio.make_rng
STREAM_GRID = 10
STREAM_SAMPLING = 11


class RunResult(object):
    """What :func:`run_config` produced."""

    def __init__(self, config_hash, metrics, summary, run_ids, best_epsilon=None):
        self.config_hash = config_hash
        self.metrics = metrics
        self.summary = summary
        self.run_ids = run_ids
        self.best_epsilon = best_epsilon


def artifact_path(config, kind, suffix="csv"):
    return os.path.join(config.out_dir, "{}-{}.{}".format(kind, config.config_hash(), suffix))


def run_prefix(config):
    return "{}-{}-{}-{}".format(config.model, config.dataset, config.slt, config.config_hash())


def load_slt_data(config):
    """Sub-tasks of ``config.slt`` on ``config.dataset`` plus the joint test set.

    :returns: (list of :class:`~gmreplay.dataio.SubTaskData`, joint test Dataset, image shape)
    """
    train, test = dataio.load_dataset(
        config.data_dir, config.dataset, config.split_seed, config.class_seed, config.dataset_classes
    )
    sub_tasks = dataio.build_slt(train, dataio.get_slt(config.slt), test)
    return sub_tasks, test, train.shape


def _prepare_out_dir(config):
    ensure_dir(config.out_dir)
    sql.out_dir_changed(config.out_dir)


def _truncate(path):
    open(path, "w").close()


def _tracked(config, seed, run_id, train, epsilon=None, metrics_path=None):
    """Register ``run_id``, call ``train()`` and mark the run failed if it raises."""
    sql.record_run(
        run_id=run_id,
        config_hash=config.config_hash(),
        model=config.model,
        dataset=config.dataset,
        slt=config.slt,
        seed=seed,
        epsilon=epsilon,
        metrics_path=metrics_path,
    )
    try:
        return train()
    except BaseException:
        log.error("run %s failed, partial metrics kept in %s", run_id, metrics_path)
        sql.update_run(run_id, status="failed")
        raise


def summarize_runs(config, metrics, run_ids, epsilon=None):
    """Summary row: mean and std (population) of the max joint-test accuracy per run, in percent."""
    best = np.array([100.0 * metrics.max_accuracy(rid) for rid in run_ids])
    return {
        "config_hash": config.config_hash(),
        "model": config.model,
        "dataset": config.dataset,
        "slt": config.slt,
        "epsilon": epsilon,
        "runs": len(run_ids),
        "mean": float(np.mean(best)),
        "std": float(np.std(best)),
    }


def run_config(config, data=None):
    """Run every repetition of ``config``, streaming metrics to disk.

    :param data: optional pre-loaded result of :func:`load_slt_data`
    :returns: :class:`RunResult`
    """
    _prepare_out_dir(config)
    data = data if data is not None else load_slt_data(config)
    sub_tasks, joint_test, shape = data
    metrics_path = artifact_path(config, "metrics")
    _truncate(metrics_path)
    metrics = MetricsLog(sink=lambda row: append_csv(metrics_path, METRICS_FIELDS, [row]))
    seeds = [config.seed + rep for rep in range(config.repetitions)]
    prefix = run_prefix(config)
    log.info("running %s (%d repetitions), metrics in %s", prefix, len(seeds), metrics_path)

    if config.model == "gmr":
        run_ids, best_epsilon = [], None
        for seed in seeds:
            run_id = "{}-s{}".format(prefix, seed)
            _tracked(config, seed, run_id,
                     lambda: run_gmr(iter(sub_tasks), joint_test, config, seed, run_id=run_id, metrics=metrics),
                     metrics_path=metrics_path)
            ckpt = os.path.abspath(os.path.join(config.out_dir, run_id + ".ckpt"))
            save_checkpoint(ckpt, metrics.model, shape)
            sql.update_run(run_id, status="done", max_accuracy=metrics.max_accuracy(run_id), checkpoint_path=ckpt)
            run_ids.append(run_id)
    else:
        def runner(sub_tasks, joint_test, config, seed, epsilon, run_id, metrics):
            result = _tracked(config, seed, run_id,
                              lambda: ewc.run_ewc(sub_tasks, joint_test, config, seed, epsilon, run_id=run_id, metrics=metrics),
                              epsilon=epsilon, metrics_path=metrics_path)
            sql.update_run(run_id, status="done", max_accuracy=metrics.max_accuracy(run_id))
            return result

        grid = ewc.run_ewc_grid(sub_tasks, joint_test, config, seeds, run_id=prefix, metrics=metrics, runner=runner)
        best_epsilon = grid.best_epsilon
        run_ids = grid.run_ids[best_epsilon]

    summary = summarize_runs(config, metrics, run_ids, best_epsilon)
    summary_path = artifact_path(config, "summary")
    _truncate(summary_path)
    append_csv(summary_path, SUMMARY_FIELDS, [summary])
    log.info("%s: max accuracy %.2f +- %.2f over %d runs", prefix, summary["mean"], summary["std"], summary["runs"])
    return RunResult(config.config_hash(), metrics, summary, run_ids, best_epsilon)


def run_suite(config):
    """Run ``config`` on every SLT and write the results table.

    :returns: (table rows, table path)
    """
    summaries = [run_config(config.copy(slt=name)).summary for name in dataio.SLT_TABLE]
    path = table_path(config.out_dir, summaries)
    return emit_summary(summaries, path), path


def table_path(out_dir, summaries):
    """``table-<hash>.csv`` where the hash covers every config hash in ``summaries``."""
    joined = "\n".join(sorted(str(row["config_hash"]) for row in summaries))
    return os.path.join(out_dir, "table-{}.csv".format(hashlib.sha256(joined.encode("utf-8")).hexdigest()[:12]))


def emit_summary(summaries, path):
    """Table of mean, std and difference to the D10 baseline of the same model and
    dataset, one row per SLT in table order.

    :raises GmreplayDataError: when a model/dataset pair has no D10 row
    """
    groups = {}
    for row in summaries:
        groups.setdefault((row["model"], row["dataset"]), {})[row["slt"]] = row
    order = list(dataio.SLT_TABLE)

    table = []
    for (model, dataset), by_slt in groups.items():
        if BASELINE_SLT not in by_slt:
            raise GmreplayDataError("missing baseline {} for {} on {}".format(BASELINE_SLT, model, dataset))
        baseline = float(by_slt[BASELINE_SLT]["mean"])
        for slt in sorted(by_slt, key=lambda name: order.index(name) if name in order else len(order)):
            row = by_slt[slt]
            mean = float(row["mean"])
            table.append({
                "model": model,
                "dataset": dataset,
                "slt": slt,
                "mean": round(mean, 4),
                "std": round(float(row["std"]), 4),
                "diff": round(mean - baseline, 4),
                "config_hash": row["config_hash"],
            })

    _truncate(path)
    append_csv(path, TABLE_FIELDS, table)
    log.info("results table written to %s", path)
    return table


def read_summary_csv(path):
    try:
        with open(path, "r", newline="") as csv_file:
            reader = csv.DictReader(csv_file)
            if reader.fieldnames != SUMMARY_FIELDS:
                raise GmreplayDataError("{} is not a summary file".format(path))
            return list(reader)
    except IOError as e:
        raise GmreplayDataError("Unable to read summary {}: {}".format(path, e.strerror))


def emit_sample_grid(model, classes, rows, cols, path, rng, shape, confidence=0.95, zero_noise=False):
    """Write a rows x cols grid of class-conditional samples as a PGM image.

    Each cell draws its class uniformly from ``classes``.

    :returns: (target classes, classes predicted by the model itself), row major
    """
    if not classes:
        raise GmreplayDataError("no classes to sample from")
    height, width = shape
    grid = np.zeros((rows * height, cols * width))
    targets = rng.choice(np.asarray(classes, dtype=np.int64), size=rows * cols)
    samples = np.vstack([model.conditional_sample(int(c), 1, rng, confidence, zero_noise) for c in targets])
    for cell, sample in enumerate(samples):
        r, c = divmod(cell, cols)
        grid[r * height:(r + 1) * height, c * width:(c + 1) * width] = sample.reshape(height, width)
    write_pgm(path, grid)

    predictions = classifier.predict(model.clf, model.gammas(np.clip(samples, 0.0, 1.0)))
    hits = float(np.mean(np.isin(predictions, classes)))
    log.info("sample grid %s: %.0f%% of %d cells classified into %s", path, 100 * hits, len(targets), list(classes))
    return targets, predictions


def resolve_checkpoint(run_id=None, checkpoint=None, out_dir=None):
    """Checkpoint path given directly or looked up in the run registry.

    :param out_dir: output directory whose registry holds ``run_id``; the registry is
        rebound to it before the lookup
    """
    if checkpoint is not None:
        return checkpoint
    if out_dir is not None:
        if not os.path.isdir(out_dir):
            raise RunNotFoundError(run_id)
        sql.out_dir_changed(out_dir)
    row = sql.find_run(run_id)
    if row is None or not row.checkpoint_path:
        raise RunNotFoundError(run_id)
    return row.checkpoint_path


def sample_from_checkpoint(config, path, classes=None):
    """Load ``path`` and write ``samples-<run>-c<classes>.pgm`` next to the other artifacts."""
    model, shape = load_checkpoint(path)
    classes = list(classes if classes is not None else config.sample_classes)
    name = os.path.splitext(os.path.basename(path))[0]
    out = os.path.join(ensure_dir(config.out_dir), "samples-{}-c{}.pgm".format(name, "_".join(str(c) for c in classes)))
    emit_sample_grid(model, classes, config.grid_rows, config.grid_cols, out,
                     dataio.make_rng(config.seed, STREAM_GRID), shape, config.confidence)
    return out


def run_sampling_report(config, path, data=None):
    """Sampling bound of the checkpoint at ``path`` against the configured training data."""
    model, _ = load_checkpoint(path)
    sub_tasks, _, _ = data if data is not None else load_slt_data(config)
    train = np.vstack([s.train.images for s in sub_tasks])
    report = gmm.check_sampling_bound(model.gmm, train, config.sampling_count, dataio.make_rng(config.seed, STREAM_SAMPLING))
    row = dict(report.as_row(), run_id=os.path.splitext(os.path.basename(path))[0])
    ensure_dir(config.out_dir)
    append_csv(artifact_path(config, "sampling"), SAMPLING_FIELDS, [row])
    return report


def run_boundaries(config, data=None):
    """Train one GMR run and dump its per-batch inlier-fraction trace.

    :returns: (detected boundary batches, true boundary batches)
    """
    ensure_dir(config.out_dir)
    sub_tasks, joint_test, _ = data if data is not None else load_slt_data(config)
    run_id = "{}-s{}".format(run_prefix(config), config.seed)
    metrics = run_gmr(iter(sub_tasks), joint_test, config, config.seed, run_id=run_id)
    path = artifact_path(config, "trace")
    _truncate(path)
    append_csv(path, TRACE_FIELDS, metrics.trace)
    detected = [row["batch"] for row in metrics.trace if row["detected"]]
    log.info("%s: detected boundaries %s, true boundaries %s", run_id, detected, metrics.true_boundaries)
    return detected, list(metrics.true_boundaries)
