# -*- coding: utf-8 -*-
# License: GPL-2.0+ <http://spdx.org/licenses/GPL-2.0+>
# See the LICENSE file for more details on Licensing

"""
Linear softmax classifier on top of GMM responsibilities.
"""

import logging

import numpy as np
from scipy.special import log_softmax, softmax

from gmreplay.exceptions import GmreplayModelError

log = logging.getLogger("gmreplay.classifier")


class ClassifierParams(object):
    """Weight matrix W (C x K) and bias b (C)."""

    def __init__(self, W, b):
        self.W = np.asarray(W, dtype=np.float64)
        self.b = np.asarray(b, dtype=np.float64)
        if self.W.ndim != 2 or self.b.shape != (self.W.shape[0],):
            raise GmreplayModelError("Inconsistent classifier shapes {}, {}".format(self.W.shape, self.b.shape))

    @property
    def C(self):
        return self.W.shape[0]

    @property
    def K(self):
        return self.W.shape[1]

    def copy(self):
        return ClassifierParams(self.W.copy(), self.b.copy())


class ControlSignal(object):
    """Simplex over GMM components steering sampling towards one class."""

    def __init__(self, weights, degenerate=False):
        self.weights = weights
        self.degenerate = degenerate


def init_classifier(C, K):
    return ClassifierParams(np.zeros((C, K)), np.zeros(C))


def gmr_parameter_count(K, d, C):
    """Stored values of a GMM with K diagonal components in d dimensions plus its
    C-class linear read-out: 2Kd + CK + C."""
    return 2 * K * d + C * K + C


def _logits(params, gamma):
    return np.atleast_2d(gamma) @ params.W.T + params.b


def forward(params, gamma):
    """y = softmax(W gamma + b) for a single K-simplex or a B x K batch."""
    gamma = np.asarray(gamma, dtype=np.float64)
    y = softmax(_logits(params, gamma), axis=1)
    return y[0] if gamma.ndim == 1 else y


def predict(params, gamma):
    """Arg-max class; ties go to the lowest index."""
    gamma = np.asarray(gamma, dtype=np.float64)
    labels = np.argmax(_logits(params, gamma), axis=1)
    return int(labels[0]) if gamma.ndim == 1 else labels


def accuracy(params, gammas, labels):
    labels = np.asarray(labels)
    if labels.size == 0:
        return 0.0
    return float(np.mean(predict(params, gammas) == labels))


def ce_loss(params, gammas, targets):
    """Mean cross-entropy -1/N sum_i sum_j t_ij ln y_ij."""
    log_y = log_softmax(_logits(params, gammas), axis=1)
    return float(-np.mean(np.sum(targets * log_y, axis=1)))


def ce_gradients(params, gammas, targets):
    """Closed-form gradient of :func:`ce_loss`: ((y - t)^T gamma / N, mean(y - t))."""
    gammas = np.atleast_2d(gammas)
    delta = softmax(_logits(params, gammas), axis=1) - targets
    n = gammas.shape[0]
    return delta.T @ gammas / n, delta.mean(axis=0)


def ce_train_step(params, gammas, targets, lr, batch_index=None):
    """One SGD step on the cross-entropy of a batch.

    :returns: (updated :class:`ClassifierParams`, mean loss before the step)
    :raises GmreplayModelError: if the loss is not finite
    """
    if lr < 0:
        raise GmreplayModelError("Classifier learning rate must be >= 0")
    loss = ce_loss(params, gammas, targets)
    if not np.isfinite(loss):
        raise GmreplayModelError("non-finite cross-entropy", batch_index=batch_index)
    g_W, g_b = ce_gradients(params, gammas, targets)
    new = ClassifierParams(params.W - lr * g_W, params.b - lr * g_b)
    if not (np.all(np.isfinite(new.W)) and np.all(np.isfinite(new.b))):
        raise GmreplayModelError("non-finite classifier parameters", batch_index=batch_index)
    return new, loss


def invert_for_class(params, target, confidence=0.95):
    """Approximate input of the classifier that yields a confident decision for ``target``:
    i = W^T (ln o - b), shifted by its minimum and normalized to unit sum.

    :param target: class id
    :param confidence: probability o_C put on ``target``, the rest is spread evenly
    :returns: :class:`ControlSignal`; ``degenerate`` is set (and the weights are uniform)
        when the shifted signal sums to zero
    """
    C = params.C
    if C < 2:
        raise GmreplayModelError("Control signals need at least two classes")
    if not 0.0 < confidence < 1.0:
        raise GmreplayModelError("confidence must lie in (0, 1)")
    if not 0 <= target < C:
        raise GmreplayModelError("class {} outside 0..{}".format(target, C - 1))

    o = np.full(C, (1.0 - confidence) / (C - 1))
    o[target] = confidence
    raw = params.W.T @ (np.log(o) - params.b)
    shifted = raw - raw.min()
    total = shifted.sum()
    if not np.isfinite(total) or total <= 1e-12 * max(1.0, np.abs(raw).max()):
        log.warning("degenerate control signal for class %d, falling back to uniform weights", target)
        return ControlSignal(np.full(params.K, 1.0 / params.K), degenerate=True)
    return ControlSignal(shifted / total)
