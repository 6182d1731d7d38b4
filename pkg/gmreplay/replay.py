# -*- coding: utf-8 -*-
# License: GPL-2.0+ <http://spdx.org/licenses/GPL-2.0+>
# See the LICENSE file for more details on Licensing

"""
Gaussian mixture replay: sequential training over sub-tasks where the mixture generates
stand-ins for past sub-tasks, filters untypical samples and flags sub-task boundaries
from its own loss statistics.
"""

import logging
import time

import numpy as np

from gmreplay import classifier, gmm
from gmreplay.dataio import Dataset, concatenate, iterate_batches, make_rng
from gmreplay.exceptions import GmreplayReplayError
from gmreplay.metrics import MetricsLog
from gmreplay.util import derive_seed

log = logging.getLogger("gmreplay.replay")

# random stream ids, see dataio.make_rng
STREAM_INIT = 1
STREAM_SHUFFLE = 2
STREAM_REPLAY = 3


class ReplayPlan(object):
    """How many samples to generate for each sub-task.

    :param strategy: ``proportional`` (everything seen so far) or ``constant`` (kappa * nu(t))
    :param kappa: factor of the constant strategy
    """

    def __init__(self, strategy="proportional", kappa=2.0):
        if strategy not in ("proportional", "constant"):
            raise ValueError("unknown replay strategy {!r}".format(strategy))
        self.strategy = strategy
        self.kappa = kappa
        self.xi = []


def replay_quota(plan, history, nu):
    """xi(t) for the sub-task following ``history`` (sample counts nu(1..t-1)).

    No past sub-tasks means nothing to replay, whatever the strategy.
    """
    if not history:
        xi = 0
    elif plan.strategy == "proportional":
        xi = int(sum(history))
    else:
        xi = int(round(plan.kappa * nu))
    plan.xi.append(xi)
    return xi


class ReplaySet(object):
    """Accepted generated samples with their labels."""

    def __init__(self, samples, labels, drawn, requested):
        self.samples = samples
        self.labels = labels
        self.drawn = drawn
        self.requested = requested

    @property
    def short(self):
        return len(self.labels) < self.requested

    @property
    def acceptance_rate(self):
        return len(self.labels) / self.drawn if self.drawn else 1.0


def generate_filtered(gmm_params, clf_params, count, stats, c, max_attempts_factor, rng,
                      weighted=False, weights_override=None, label=None):
    """Draw samples from the mixture and drop the outliers until ``count`` are accepted or
    ``max_attempts_factor * count`` draws are spent.

    :param weights_override: control signal for class-conditional generation
    :param label: fixed label for every sample; by default the classifier's prediction
    :raises GmreplayReplayError: if nothing at all was accepted
    """
    if count <= 0:
        return ReplaySet(np.zeros((0, gmm_params.d)), np.zeros(0, dtype=np.int64), 0, 0)
    if not stats.past_warmup:
        log.warning("loss statistics still warming up, replay samples are not filtered")

    budget = max_attempts_factor * count
    accepted, drawn = [], 0
    while sum(len(a) for a in accepted) < count and drawn < budget:
        wanted = min(count - sum(len(a) for a in accepted), budget - drawn)
        candidates = gmm.sample(gmm_params, wanted, rng, weights_override=weights_override)
        drawn += wanted
        keep = ~stats.outlier_mask(gmm.log_likelihoods(gmm_params, candidates), c)
        accepted.append(candidates[keep])

    samples = np.concatenate(accepted)[:count]
    if len(samples) == 0:
        raise GmreplayReplayError("no generated sample passed the outlier filter after {} draws".format(drawn))
    if label is None:
        labels = classifier.predict(clf_params, gmm.responsibilities(gmm_params, samples, weighted=weighted))
    else:
        labels = np.full(len(samples), label, dtype=np.int64)
    replay = ReplaySet(samples, np.asarray(labels, dtype=np.int64), drawn, count)
    if replay.short:
        log.warning("replay set short: %d of %d samples accepted after %d draws", len(samples), count, drawn)
    return replay


class BoundaryDetector(object):
    """Flags sub-task boundaries from the per-batch inlier fraction.

    Fractions are averaged over windows of ``window_size`` batches. The reference is the
    highest window mean seen since the last anchor. A window whose mean lies below
    ``(1 - drop_threshold) * reference`` is a boundary, reported at the batch closing the
    window; the reference is then dropped and ``warmup`` batches are skipped.

    :param c: outlier scale used to compute the inlier fractions fed in
    """

    def __init__(self, window_size=10, drop_threshold=0.2, c=1.0, warmup=50):
        self.window_size = window_size
        self.drop_threshold = drop_threshold
        self.c = c
        self.warmup = warmup
        self.reference = None
        self.boundaries = []
        self._window = []
        self._since_anchor = 0
        self._index = 0

    def update(self, fraction):
        """Feed the inlier fraction of the next batch; True if it closes a boundary window."""
        index = self._index
        self._index += 1
        self._since_anchor += 1
        if self._since_anchor <= self.warmup:
            return False

        self._window.append(fraction)
        if len(self._window) < self.window_size:
            return False
        current = float(np.mean(self._window))
        self._window = []

        if self.reference is not None and current < (1.0 - self.drop_threshold) * self.reference:
            log.info("sub-task boundary at batch %d: window inlier fraction %.3f, reference %.3f", index, current, self.reference)
            self.boundaries.append(index)
            self.reference = None
            self._since_anchor = 0
            return True

        self.reference = current if self.reference is None else max(self.reference, current)
        return False


def detect_boundaries(fractions, detector):
    """Run ``detector`` over a stream of per-batch inlier fractions.

    :returns: batch indices flagged as boundaries
    """
    for fraction in fractions:
        detector.update(fraction)
    return list(detector.boundaries)


def epoch_schedule(t, first, cap):
    """Epochs for sub-task ``t`` (1-based): ``first`` doubled per sub-task, capped."""
    return min(first * 2 ** (t - 1), cap)


class GmrModel(object):
    """Mixture, classifier and loss statistics trained side by side."""

    def __init__(self, gmm_params, clf_params, stats, weighted=False):
        self.gmm = gmm_params
        self.clf = clf_params
        self.stats = stats
        self.weighted = weighted

    @classmethod
    def create(cls, config, dim, class_count, rng):
        return cls(
            gmm.init_params(config.components, dim, rng),
            classifier.init_classifier(class_count, config.components),
            gmm.LossStats(config.ema_alpha, config.stats_warmup),
            weighted=config.weighted_responsibilities,
        )

    def parameter_count(self):
        return classifier.gmr_parameter_count(self.gmm.K, self.gmm.d, self.clf.C)

    def gammas(self, images):
        return gmm.responsibilities(self.gmm, images, weighted=self.weighted)

    def accuracy(self, dataset):
        return classifier.accuracy(self.clf, self.gammas(dataset.images), dataset.labels)

    def fit_batch(self, images, targets, config, batch_index=None):
        """One concurrent step of mixture and classifier on a mini-batch.

        :returns: (mean log-likelihood, cross-entropy, inlier fraction or None during warmup)
        """
        per_sample = gmm.log_likelihoods(self.gmm, images)
        fraction = None
        if self.stats.past_warmup:
            fraction = 1.0 - float(np.mean(self.stats.outlier_mask(per_sample, config.outlier_c)))
        self.stats.update(per_sample)

        gammas = self.gammas(images)
        self.gmm, mean_ll = gmm.gmm_train_step(
            self.gmm, images, config.gmm_lr, config.sigma_min, config.gmm_step_clip, batch_index=batch_index
        )
        self.clf, ce = classifier.ce_train_step(self.clf, gammas, targets, config.classifier_lr, batch_index=batch_index)
        return mean_ll, ce, fraction

    def conditional_sample(self, target, n, rng, confidence=0.95, zero_noise=False):
        """Samples steered towards class ``target`` by inverting the classifier."""
        control = classifier.invert_for_class(self.clf, target, confidence)
        return gmm.sample(self.gmm, n, rng, weights_override=control.weights, zero_noise=zero_noise)


def make_replay(model, count, seen_classes, config, rng):
    """Replay set of ``count`` samples as a :class:`Dataset` with values clamped to [0, 1]."""
    class_count = model.clf.C
    if config.replay_labels == "conditional":
        parts = []
        per_class = np.full(len(seen_classes), count // len(seen_classes))
        per_class[: count % len(seen_classes)] += 1
        for target, n in zip(seen_classes, per_class):
            control = classifier.invert_for_class(model.clf, target, config.confidence)
            parts.append(generate_filtered(model.gmm, model.clf, int(n), model.stats, config.outlier_c,
                                           config.max_attempts_factor, rng, weighted=model.weighted,
                                           weights_override=control.weights, label=target))
        samples = np.concatenate([p.samples for p in parts])
        labels = np.concatenate([p.labels for p in parts])
    else:
        replay = generate_filtered(model.gmm, model.clf, count, model.stats, config.outlier_c,
                                   config.max_attempts_factor, rng, weighted=model.weighted)
        samples, labels = replay.samples, replay.labels
    log.info("replay class balance: %s", gmm.class_balance(labels, class_count).tolist())
    return Dataset(np.clip(samples, 0.0, 1.0), labels, class_count)


def run_gmr(sub_tasks, joint_test, config, seed, run_id="gmr", model=None, metrics=None):
    """Train GMR over the sub-tasks in order.

    :param sub_tasks: iterable of :class:`~gmreplay.dataio.SubTaskData`, consumed once and in
        order; a finished sub-task is never looked at again, so a generator works
    :param joint_test: test set of every class, used for every accuracy measurement
    :param config: :class:`~gmreplay.config.ExperimentConfig`
    :param model: optional pre-built :class:`GmrModel`
    :param metrics: optional :class:`~gmreplay.metrics.MetricsLog` to append to
    :returns: :class:`~gmreplay.metrics.MetricsLog` with ``model``, ``trace`` and
        ``true_boundaries`` of this run attached
    """
    metrics = MetricsLog() if metrics is None else metrics
    metrics.trace, metrics.true_boundaries = [], []
    plan = ReplayPlan(config.strategy, config.kappa)
    detector = BoundaryDetector(config.window_size, config.drop_threshold, config.outlier_c, config.detector_warmup)
    history, seen_classes = [], []
    batch_index = 0
    started = time.time()

    for t, sub_task in enumerate(sub_tasks, start=1):
        if model is None:
            model = GmrModel.create(config, sub_task.train.dim, joint_test.class_count, make_rng(seed, STREAM_INIT))
        xi = replay_quota(plan, history, sub_task.nu)
        train = sub_task.train
        replay_count = 0
        if t > 1 and xi > 0:
            replay = make_replay(model, xi, seen_classes, config, make_rng(seed, STREAM_REPLAY, t))
            replay_count = len(replay)
            train = concatenate(train, replay)
        if t > 1:
            metrics.true_boundaries.append(batch_index)
        history.append(sub_task.nu)
        seen_classes.extend(c for c in sub_task.classes if c not in seen_classes)
        epochs = epoch_schedule(t, config.epochs, config.epoch_cap)
        log.info("%s: sub-task %d classes %s, %d real + %d replayed samples, %d epochs",
                 run_id, t, list(sub_task.classes), sub_task.nu, replay_count, epochs)

        for epoch in range(1, epochs + 1):
            lls, ces, fractions, flagged = [], [], [], []
            shuffle_seed = derive_seed(seed, STREAM_SHUFFLE, t, epoch)
            for images, targets in iterate_batches(train, config.batch_size, shuffle_seed):
                mean_ll, ce, fraction = model.fit_batch(images, targets, config, batch_index=batch_index)
                lls.append(mean_ll)
                ces.append(ce)
                detected = False
                if fraction is not None:
                    fractions.append(fraction)
                    detected = detector.update(fraction)
                    if detected:
                        flagged.append(batch_index)
                metrics.trace.append({
                    "run_id": run_id, "batch": batch_index, "sub_task": t, "epoch": epoch,
                    "inlier_fraction": fraction, "detected": int(detected),
                    "true_boundary": int(t > 1 and batch_index == metrics.true_boundaries[-1]),
                })
                batch_index += 1

            acc = model.accuracy(joint_test)
            metrics.append(
                run_id=run_id, seed=seed, sub_task=t, epoch=epoch,
                train_loss=float(np.mean(lls)), ce_loss=float(np.mean(ces)), test_accuracy=acc,
                inlier_fraction=float(np.mean(fractions)) if fractions else None,
                boundaries=flagged, replay_count=replay_count,
                wall_time=round(time.time() - started, 3) if config.record_wall_time else None,
            )
            log.info("%s: sub-task %d epoch %d/%d log-likelihood %.3f ce %.4f accuracy %.4f",
                     run_id, t, epoch, epochs, np.mean(lls), np.mean(ces), acc)
        # the loop keeps no reference to a finished sub-task, only its sample count
        del train, sub_task

    metrics.model = model
    return metrics
