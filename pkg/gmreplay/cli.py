# -*- coding: utf-8 -*-
# License: GPL-2.0+ <http://spdx.org/licenses/GPL-2.0+>
# See the LICENSE file for more details on Licensing

"""
This is the primary user entry point for gmreplay
"""

import argparse
import glob
import logging
import os
import sys

from gmreplay import config, harness
from gmreplay.exceptions import GmreplayException

config_data = config.get_config()

# Only log to a file when specifically configured to
if config_data.LOG_FILE is not None:
    logging.basicConfig(filename=config_data.LOG_FILE, level=logging.DEBUG)

log = logging.getLogger("gmreplay")
log.addHandler(logging.NullHandler())  # this is needed when running in library mode

if not config_data.DEBUG:
    log.setLevel(logging.INFO)

description = """gmreplay trains Gaussian mixture replay models and an EWC baseline on
sequential learning tasks and writes metrics, checkpoints, sample grids and result tables."""


def _experiment_config(args):
    """Experiment config from --config, environment overrides and the common flags."""
    experiment = config.load_experiment_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = args.out
    if getattr(args, "reps", None) is not None:
        overrides["repetitions"] = args.reps
    return experiment.copy(**overrides)


################################################################################
# command handlers
################################################################################


def _train(args):
    """Handler for 'train' command. Expects the following elements in args:
        * config(str or None)
        * seed(int or None)
        * out(str or None)
        * reps(int or None)

    :param args: args from argparser
    """
    experiment = _experiment_config(args)
    result = harness.run_config(experiment)
    print("{} {}: {:.2f} +- {:.2f} ({} runs)".format(
        experiment.model, experiment.slt, result.summary["mean"], result.summary["std"], result.summary["runs"]
    ))


def _suite(args):
    experiment = _experiment_config(args)
    table, path = harness.run_suite(experiment)
    _print_table(table)
    print("table written to {}".format(path))


def _sample(args):
    experiment = _experiment_config(args)
    checkpoint = harness.resolve_checkpoint(run_id=args.run, checkpoint=args.checkpoint, out_dir=experiment.out_dir)
    path = harness.sample_from_checkpoint(experiment, checkpoint, classes=args.classes)
    print("sample grid written to {}".format(path))


def _boundaries(args):
    experiment = _experiment_config(args)
    detected, true = harness.run_boundaries(experiment)
    print("detected boundaries: {}".format(" ".join(str(b) for b in detected) or "none"))
    print("true boundaries:     {}".format(" ".join(str(b) for b in true) or "none"))


def _summarize(args):
    out_dir = args.out or config.load_experiment_config(args.config).out_dir
    files = args.files or sorted(glob.glob(os.path.join(out_dir, "summary-*.csv")))
    if not files:
        log.error("no summary files found in {}".format(out_dir))
        sys.exit(1)
    summaries = [row for path in files for row in harness.read_summary_csv(path)]
    path = harness.table_path(out_dir, summaries)
    _print_table(harness.emit_summary(summaries, path))
    print("table written to {}".format(path))


def _sampling(args):
    experiment = _experiment_config(args)
    checkpoint = harness.resolve_checkpoint(run_id=args.run, checkpoint=args.checkpoint, out_dir=experiment.out_dir)
    report = harness.run_sampling_report(experiment, checkpoint)
    print("train {:.3f}  samples {:.3f} +- {:.3f}  bound {}".format(
        report.train_mean, report.sample_mean, report.sample_stderr, "holds" if report.holds else "VIOLATED"
    ))


def _print_table(table):
    print("{!s:<6} {!s:<14} {!s:<12} {!s:>8} {!s:>7} {!s:>7}".format("Model", "Dataset", "SLT", "Mean", "Std", "Diff"))
    print("-" * 60)
    for row in table:
        print("{!s:<6} {!s:<14} {!s:<12} {:>8.2f} {:>7.2f} {:>+7.2f}".format(
            row["model"], row["dataset"], row["slt"], row["mean"], row["std"], row["diff"]
        ))


def _add_common(parser, reps=False):
    parser.add_argument("--config", default=None, help="experiment config file (key = value lines)")
    parser.add_argument("--seed", type=int, default=None, help="base seed, overrides the config")
    parser.add_argument("--out", default=None, help="output directory, overrides the config")
    if reps:
        parser.add_argument("--reps", type=int, default=None, help="number of repetitions, overrides the config")


def _add_checkpoint(parser):
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--checkpoint", help="path to a model checkpoint")
    source.add_argument("--run", help="run id to look up in the run registry")


def get_argparser():
    parser = argparse.ArgumentParser(description=description)
    subparsers = parser.add_subparsers(
        title="Command Types",
        description="Types of commands available",
        help="<command> --help",
    )

    # train
    trainarg = subparsers.add_parser("train", help="run one experiment config")
    _add_common(trainarg, reps=True)
    trainarg.set_defaults(func=_train)

    # suite
    suitearg = subparsers.add_parser("suite", help="run every SLT for the configured model and dataset")
    _add_common(suitearg, reps=True)
    suitearg.set_defaults(func=_suite)

    # sample
    samplearg = subparsers.add_parser("sample", help="write a grid of class-conditional samples as PGM")
    _add_common(samplearg)
    _add_checkpoint(samplearg)
    samplearg.add_argument(
        "--classes",
        type=int,
        nargs="+",
        default=None,
        help="classes to sample from (default: sample_classes of the config)",
    )
    samplearg.set_defaults(func=_sample)

    # boundaries
    boundarg = subparsers.add_parser("boundaries", help="train once and dump the inlier-fraction trace")
    _add_common(boundarg)
    boundarg.set_defaults(func=_boundaries)

    # summarize
    sumarg = subparsers.add_parser("summarize", help="build the results table from summary files")
    _add_common(sumarg)
    sumarg.add_argument("files", nargs="*", help="summary CSV files (default: every summary-*.csv in the output directory)")
    sumarg.set_defaults(func=_summarize)

    # sampling
    samplingarg = subparsers.add_parser("sampling", help="check the sampling bound of a checkpoint")
    _add_common(samplingarg)
    _add_checkpoint(samplingarg)
    samplingarg.set_defaults(func=_sampling)

    return parser


def _configure_logging(level=logging.DEBUG):
    """Set up logging framework, when running in main script mode. Should not
    be called when running in library mode.

    :param int level: the stream log level to be set (one of the constants from logging.*)
    """
    logging.basicConfig(format="%(levelname)s:%(message)s", level=level)


def main(argv=None):
    parser = get_argparser()
    args = parser.parse_args(argv)

    _configure_logging()

    if not hasattr(args, "func"):
        # If no cmdline args were provided, func is missing
        # https://bugs.python.org/issue16308
        parser.print_help()
        sys.exit(1)

    try:
        args.func(args)
    except GmreplayException as e:
        log.error(str(e))
        sys.exit(1)
