# -*- coding: utf-8 -*-
# License: GPL-2.0+ <http://spdx.org/licenses/GPL-2.0+>
# See the LICENSE file for more details on Licensing

"""
Elastic Weight Consolidation baseline: a fully connected rectifier network trained with
Adam on cross-entropy plus a quadratic penalty anchoring the parameters that mattered
for earlier sub-tasks.
"""

import logging
import time

import numpy as np
from scipy.special import log_softmax, softmax

from gmreplay.dataio import iterate_batches, make_rng
from gmreplay.exceptions import GmreplayModelError
from gmreplay.metrics import MetricsLog
from gmreplay.util import derive_seed

log = logging.getLogger("gmreplay.ewc")

STREAM_INIT = 1
STREAM_SHUFFLE = 2

FISHER_CHUNK = 500


class MlpParams(object):
    """Weights (fan_in x fan_out) and biases of every layer, output layer last."""

    def __init__(self, layers):
        self.layers = [(np.asarray(W, dtype=np.float64), np.asarray(b, dtype=np.float64)) for W, b in layers]

    @property
    def sizes(self):
        return [self.layers[0][0].shape[0]] + [W.shape[1] for W, _ in self.layers]

    def arrays(self):
        """Flat list [W1, b1, W2, b2, ...]; gradients and Fisher records use the same layout."""
        return [a for layer in self.layers for a in layer]

    @classmethod
    def from_arrays(cls, arrays):
        return cls(list(zip(arrays[0::2], arrays[1::2])))

    def copy(self):
        return MlpParams.from_arrays([a.copy() for a in self.arrays()])

    def is_finite(self):
        return all(np.all(np.isfinite(a)) for a in self.arrays())


class TaskAnchor(object):
    """Parameter snapshot after a sub-task and the diagonal Fisher estimate at that point."""

    def __init__(self, theta_star, fisher):
        self.theta_star = [a.copy() for a in theta_star]
        self.fisher = [np.asarray(f, dtype=np.float64) for f in fisher]
        if any(np.any(f < 0) for f in self.fisher):
            raise GmreplayModelError("Fisher entries must be non-negative")


def init_mlp(sizes, rng):
    """Layers of ``sizes`` (input first), uniform in +-1/sqrt(fan_in)."""
    layers = []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        bound = 1.0 / np.sqrt(fan_in)
        layers.append((rng.uniform(-bound, bound, size=(fan_in, fan_out)), rng.uniform(-bound, bound, size=fan_out)))
    return MlpParams(layers)


def mlp_parameter_count(sizes):
    return sum(fan_in * fan_out + fan_out for fan_in, fan_out in zip(sizes[:-1], sizes[1:]))


def mlp_forward(params, X):
    """Logits and the cached layer inputs/pre-activations needed by :func:`mlp_backward`."""
    inputs, pre = [], []
    a = np.atleast_2d(X)
    last = len(params.layers) - 1
    for i, (W, b) in enumerate(params.layers):
        inputs.append(a)
        z = a @ W + b
        pre.append(z)
        a = z if i == last else np.maximum(z, 0.0)
    return a, (inputs, pre)


def mlp_backward(params, cache, delta):
    """Backpropagate ``delta`` (gradient w.r.t. the logits, one row per sample).

    :returns: gradient arrays in :meth:`MlpParams.arrays` order, summed over rows
    """
    inputs, pre = cache
    grads = []
    for i in reversed(range(len(params.layers))):
        W, _ = params.layers[i]
        grads.append(delta.sum(axis=0))
        grads.append(inputs[i].T @ delta)
        if i > 0:
            delta = (delta @ W.T) * (pre[i - 1] > 0)
    return grads[::-1]


def predict(params, X):
    logits, _ = mlp_forward(params, X)
    return np.argmax(logits, axis=1)


def accuracy(params, dataset):
    if len(dataset) == 0:
        return 0.0
    hits = 0
    for start in range(0, len(dataset), FISHER_CHUNK):
        chunk = slice(start, start + FISHER_CHUNK)
        hits += int(np.sum(predict(params, dataset.images[chunk]) == dataset.labels[chunk]))
    return hits / len(dataset)


def cross_entropy(params, X, targets):
    logits, _ = mlp_forward(params, X)
    return float(-np.mean(np.sum(targets * log_softmax(logits, axis=1), axis=1)))


def ewc_penalty(params, anchors, lam):
    """(lam / 2) sum_t sum_i F_i^t (theta_i - theta_i^t)^2 over every stored anchor."""
    total = 0.0
    for anchor in anchors:
        for theta, star, fisher in zip(params.arrays(), anchor.theta_star, anchor.fisher):
            total += float(np.sum(fisher * (theta - star) ** 2))
    return 0.5 * lam * total


def ewc_loss(params, anchors, X, targets, lam):
    """Cross-entropy on the batch plus :func:`ewc_penalty`."""
    if lam < 0:
        raise GmreplayModelError("lambda must be >= 0")
    return cross_entropy(params, X, targets) + ewc_penalty(params, anchors, lam)


def ewc_gradients(params, anchors, X, targets, lam):
    """Gradient of :func:`ewc_loss`.

    :returns: (loss, gradient arrays)
    """
    logits, cache = mlp_forward(params, X)
    n = logits.shape[0]
    loss = float(-np.mean(np.sum(targets * log_softmax(logits, axis=1), axis=1)))
    grads = mlp_backward(params, cache, (softmax(logits, axis=1) - targets) / n)
    for anchor in anchors:
        for i, (theta, star, fisher) in enumerate(zip(params.arrays(), anchor.theta_star, anchor.fisher)):
            grads[i] = grads[i] + lam * fisher * (theta - star)
    return loss + ewc_penalty(params, anchors, lam), grads


def compute_fisher_diag(params, dataset):
    """Empirical Fisher diagonal: mean over samples of the squared gradient of
    ln y_true with respect to every parameter.
    """
    sums = [np.zeros_like(a) for a in params.arrays()]
    for start in range(0, len(dataset), FISHER_CHUNK):
        X = dataset.images[start:start + FISHER_CHUNK]
        labels = dataset.labels[start:start + FISHER_CHUNK]
        logits, (inputs, pre) = mlp_forward(params, X)
        targets = np.zeros_like(logits)
        targets[np.arange(len(labels)), labels] = 1.0
        delta = targets - softmax(logits, axis=1)
        # per-sample weight gradients are outer products, so their squares are
        # outer products of the squared factors
        for i in reversed(range(len(params.layers))):
            W, _ = params.layers[i]
            sums[2 * i] += (inputs[i] ** 2).T @ (delta ** 2)
            sums[2 * i + 1] += np.sum(delta ** 2, axis=0)
            if i > 0:
                delta = (delta @ W.T) * (pre[i - 1] > 0)
    return [s / max(len(dataset), 1) for s in sums]


class AdamOptimizer(object):
    """Adaptive moment estimation over a list of arrays."""

    def __init__(self, lr, beta1=0.9, beta2=0.999, epsilon=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.m = None
        self.v = None
        self.t = 0

    def step(self, arrays, grads):
        if self.m is None:
            self.m = [np.zeros_like(a) for a in arrays]
            self.v = [np.zeros_like(a) for a in arrays]
        self.t += 1
        updated = []
        for i, (a, g) in enumerate(zip(arrays, grads)):
            self.m[i] = self.beta1 * self.m[i] + (1 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1 - self.beta2) * g ** 2
            m_hat = self.m[i] / (1 - self.beta1 ** self.t)
            v_hat = self.v[i] / (1 - self.beta2 ** self.t)
            updated.append(a - self.lr * m_hat / (np.sqrt(v_hat) + self.epsilon))
        return updated


def run_ewc(sub_tasks, joint_test, config, seed, epsilon, run_id="ewc", lam=None, metrics=None):
    """Train the EWC baseline over the sub-tasks in order.

    :param epsilon: Adam step size; lambda defaults to 1 / epsilon
    :param lam: explicit lambda, overriding 1 / epsilon
    :param metrics: optional :class:`~gmreplay.metrics.MetricsLog` to append to
    :returns: :class:`~gmreplay.metrics.MetricsLog` with the trained parameters and anchors
        attached as ``model``
    """
    lam = 1.0 / epsilon if lam is None else lam
    metrics = MetricsLog() if metrics is None else metrics
    params = None
    anchors = []
    optimizer = AdamOptimizer(epsilon)
    batch_index = 0
    started = time.time()

    for t, sub_task in enumerate(sub_tasks, start=1):
        if params is None:
            sizes = [sub_task.train.dim] + list(config.hidden_sizes) + [joint_test.class_count]
            params = init_mlp(sizes, make_rng(seed, STREAM_INIT))
            log.info("%s: network %s, %d parameters, lambda %g", run_id, sizes, mlp_parameter_count(sizes), lam)
        for epoch in range(1, config.ewc_epochs + 1):
            losses, ces = [], []
            shuffle_seed = derive_seed(seed, STREAM_SHUFFLE, t, epoch)
            for images, targets in iterate_batches(sub_task.train, config.batch_size, shuffle_seed):
                penalty = ewc_penalty(params, anchors, lam)
                loss, grads = ewc_gradients(params, anchors, images, targets, lam)
                if not np.isfinite(loss):
                    raise GmreplayModelError("non-finite EWC loss", batch_index=batch_index)
                params = MlpParams.from_arrays(optimizer.step(params.arrays(), grads))
                if not params.is_finite():
                    raise GmreplayModelError("non-finite network parameters", batch_index=batch_index)
                losses.append(loss)
                ces.append(loss - penalty)
                batch_index += 1
            acc = accuracy(params, joint_test)
            metrics.append(
                run_id=run_id, seed=seed, sub_task=t, epoch=epoch,
                train_loss=float(np.mean(losses)), ce_loss=float(np.mean(ces)), test_accuracy=acc,
                inlier_fraction=None, boundaries=[], replay_count=0,
                wall_time=round(time.time() - started, 3) if config.record_wall_time else None,
            )
            log.info("%s: sub-task %d epoch %d/%d loss %.4f accuracy %.4f", run_id, t, epoch, config.ewc_epochs, np.mean(losses), acc)
        anchors.append(TaskAnchor(params.arrays(), compute_fisher_diag(params, sub_task.train)))
        log.debug("%s: %d anchors stored", run_id, len(anchors))

    metrics.model = (params, anchors)
    return metrics


class GridResult(object):
    """Max joint-test accuracies per step size of an EWC grid search."""

    def __init__(self):
        self.scores = {}
        self.run_ids = {}

    def add(self, epsilon, run_id, max_accuracy):
        self.scores.setdefault(epsilon, []).append(max_accuracy)
        self.run_ids.setdefault(epsilon, []).append(run_id)

    @property
    def best_epsilon(self):
        """Step size with the highest max accuracy averaged over repetitions; the
        first one listed wins ties.
        """
        if not self.scores:
            raise GmreplayModelError("empty EWC grid")
        return max(self.scores, key=lambda eps: float(np.mean(self.scores[eps])))


def grid_run_id(prefix, seed, epsilon):
    return "{}-s{}-e{:g}".format(prefix, seed, epsilon)


def run_ewc_grid(sub_tasks, joint_test, config, seeds, run_id="ewc", metrics=None, runner=None):
    """Run every step size of ``config.ewc_grid`` (lambda = 1 / epsilon) for every seed.

    :param runner: replacement for :func:`run_ewc` with the same signature, e.g. one that
        registers the run before delegating
    :returns: :class:`GridResult`
    """
    runner = runner or run_ewc
    metrics = MetricsLog() if metrics is None else metrics
    result = GridResult()
    for epsilon in config.ewc_grid:
        for seed in seeds:
            rid = grid_run_id(run_id, seed, epsilon)
            runner(sub_tasks, joint_test, config, seed, epsilon, run_id=rid, metrics=metrics)
            result.add(epsilon, rid, metrics.max_accuracy(rid))
    best = result.best_epsilon
    log.info("%s: best step size %g, mean max accuracy %.4f", run_id, best, np.mean(result.scores[best]))
    return result
