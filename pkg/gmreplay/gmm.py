# -*- coding: utf-8 -*-
# License: GPL-2.0+ <http://spdx.org/licenses/GPL-2.0+>
# See the LICENSE file for more details on Licensing

"""
Diagonal-covariance Gaussian mixture used as generator, outlier detector and feature
extractor. Trained by stochastic gradient ascent on the log-likelihood.
"""

import logging
import math

import numpy as np
from scipy.special import log_softmax, logsumexp, softmax

from gmreplay.exceptions import GmreplayModelError

log = logging.getLogger("gmreplay.gmm")

LOG_2PI = math.log(2.0 * math.pi)

# rows evaluated at once when scoring whole datasets
EVAL_CHUNK = 2000


class GmmParams(object):
    """Complete state of the mixture.

    :param weight_logits: K unconstrained reals, the mixture weights are their softmax
    :param mu: K x d centroids
    :param sigma: K x d diagonal standard deviations, strictly positive
    """

    def __init__(self, weight_logits, mu, sigma):
        self.weight_logits = np.asarray(weight_logits, dtype=np.float64)
        self.mu = np.asarray(mu, dtype=np.float64)
        self.sigma = np.asarray(sigma, dtype=np.float64)
        if self.mu.shape != self.sigma.shape or self.mu.shape[0] != self.weight_logits.shape[0]:
            raise GmreplayModelError("Inconsistent GMM parameter shapes {}, {}, {}".format(
                self.weight_logits.shape, self.mu.shape, self.sigma.shape))
        if np.any(self.sigma <= 0):
            raise GmreplayModelError("Standard deviations must be strictly positive")

    @property
    def K(self):
        return self.mu.shape[0]

    @property
    def d(self):
        return self.mu.shape[1]

    @property
    def weights(self):
        return softmax(self.weight_logits)

    def copy(self):
        return GmmParams(self.weight_logits.copy(), self.mu.copy(), self.sigma.copy())


def init_params(K, d, rng, sigma_init=0.5):
    """Centroids uniform in [0.4, 0.6], every sigma at ``sigma_init``, uniform weights."""
    return GmmParams(np.zeros(K), rng.uniform(0.4, 0.6, size=(K, d)), np.full((K, d), sigma_init))


def log_normalizers(params):
    """Per-component log normalizer f(Sigma_k) = -1/2 [d ln 2pi + sum_j ln sigma_kj^2]."""
    return -0.5 * params.d * LOG_2PI - np.sum(np.log(params.sigma), axis=1)


def log_joint_densities(params, x):
    """ln N_k(x) for every component, mixture weights not applied.

    :param x: d-vector or B x d matrix
    :returns: K-vector or B x K matrix
    """
    x = np.asarray(x, dtype=np.float64)
    X = np.atleast_2d(x)
    precision = 1.0 / params.sigma ** 2
    # sum_j (x_j - mu_kj)^2 / sigma_kj^2, expanded so it is a pair of matrix products
    quad = (X ** 2) @ precision.T - 2.0 * X @ (params.mu * precision).T + np.sum(params.mu ** 2 * precision, axis=1)
    quad = np.maximum(quad, 0.0)
    log_dens = log_normalizers(params) - 0.5 * quad
    return log_dens[0] if x.ndim == 1 else log_dens


def _weighted_log_densities(params, X):
    return log_softmax(params.weight_logits) + log_joint_densities(params, X)


def log_likelihoods(params, batch):
    """Per-sample ln p(x_i) = ln sum_k pi_k N_k(x_i), computed with log-sum-exp."""
    batch = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    out = np.empty(batch.shape[0])
    for start in range(0, batch.shape[0], EVAL_CHUNK):
        chunk = batch[start:start + EVAL_CHUNK]
        out[start:start + EVAL_CHUNK] = logsumexp(_weighted_log_densities(params, chunk), axis=1)
    return out


def log_likelihood(params, batch):
    """Summed log-likelihood of a non-empty batch."""
    batch = np.atleast_2d(batch)
    if batch.shape[0] == 0:
        raise GmreplayModelError("log_likelihood of an empty batch")
    return float(np.sum(log_likelihoods(params, batch)))


def mean_log_likelihood(params, batch):
    batch = np.atleast_2d(batch)
    return log_likelihood(params, batch) / batch.shape[0]


def responsibilities(params, x, weighted=False):
    """Softmax over the component log-densities.

    :param x: d-vector or B x d matrix
    :param weighted: add ln pi_k before the softmax (standard posterior); off by default
    :returns: K-simplex per sample
    """
    x = np.asarray(x, dtype=np.float64)
    X = np.atleast_2d(x)
    gammas = np.empty((X.shape[0], params.K))
    for start in range(0, X.shape[0], EVAL_CHUNK):
        chunk = X[start:start + EVAL_CHUNK]
        scores = _weighted_log_densities(params, chunk) if weighted else log_joint_densities(params, chunk)
        gammas[start:start + EVAL_CHUNK] = softmax(scores, axis=1)
    return gammas[0] if x.ndim == 1 else gammas


def gradients(params, batch):
    """Analytic gradients of the batch-mean log-likelihood.

    :returns: (d weight_logits, d mu, d sigma)
    """
    X = np.atleast_2d(np.asarray(batch, dtype=np.float64))
    B = X.shape[0]
    posterior = softmax(_weighted_log_densities(params, X), axis=1)
    mass = posterior.sum(axis=0)
    first = posterior.T @ X
    second = posterior.T @ (X ** 2)
    mu, sigma = params.mu, params.sigma

    g_logits = mass / B - params.weights
    g_mu = (first - mass[:, None] * mu) / sigma ** 2 / B
    scatter = second - 2.0 * mu * first + mass[:, None] * mu ** 2
    g_sigma = (scatter / sigma ** 3 - mass[:, None] / sigma) / B
    return g_logits, g_mu, g_sigma


def gmm_train_step(params, batch, lr, sigma_min=0.01, step_clip=None, batch_index=None):
    """One gradient ascent step on the log-likelihood of ``batch``.

    :param lr: step size, 0 leaves the parameters untouched
    :param sigma_min: floor applied to every sigma after the step
    :param step_clip: optional bound on the absolute per-entry update
    :returns: (updated :class:`GmmParams`, batch mean log-likelihood before the step)
    :raises GmreplayModelError: if a gradient is not finite
    """
    if lr < 0:
        raise GmreplayModelError("GMM learning rate must be >= 0")
    mean_ll = mean_log_likelihood(params, batch)
    grads = gradients(params, batch)
    if not (np.isfinite(mean_ll) and all(np.all(np.isfinite(g)) for g in grads)):
        raise GmreplayModelError("non-finite GMM gradient, step rejected", batch_index=batch_index)
    if lr == 0:
        return params.copy(), mean_ll

    steps = [lr * g for g in grads]
    if step_clip is not None:
        steps = [np.clip(s, -step_clip, step_clip) for s in steps]
    new_sigma = np.maximum(params.sigma + steps[2], sigma_min)
    return GmmParams(params.weight_logits + steps[0], params.mu + steps[1], new_sigma), mean_ll


def sample(params, n, rng, weights_override=None, zero_noise=False, return_components=False):
    """Draw ``n`` samples: k ~ Multinomial(pi), x = sigma_k * z + mu_k with z ~ N(0, I).

    :param weights_override: K-simplex replacing pi (control signal for conditional sampling)
    :param zero_noise: force z = 0 so every sample equals its centroid
    :raises GmreplayModelError: if the override is not a simplex within 1e-6
    """
    weights = params.weights
    if weights_override is not None:
        weights = np.asarray(weights_override, dtype=np.float64)
        if weights.shape != (params.K,) or np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-6:
            raise GmreplayModelError("weights_override must be a {}-simplex".format(params.K))
    weights = weights / weights.sum()
    components = rng.choice(params.K, size=n, p=weights)
    noise = np.zeros((n, params.d)) if zero_noise else rng.standard_normal((n, params.d))
    samples = params.sigma[components] * noise + params.mu[components]
    if return_components:
        return samples, components
    return samples


class LossStats(object):
    """Exponentially weighted mean and variance of the per-sample log-likelihood.

    :param ema_alpha: weight of every new sample, in (0, 1)
    :param warmup: samples to see before :meth:`is_outlier` reports anything
    """

    def __init__(self, ema_alpha=0.01, warmup=500):
        if not 0.0 < ema_alpha < 1.0:
            raise GmreplayModelError("ema_alpha must lie in (0, 1)")
        self.ema_alpha = ema_alpha
        self.warmup = warmup
        self.mean = 0.0
        self.var = 0.0
        self.samples_seen = 0

    @property
    def past_warmup(self):
        return self.samples_seen >= self.warmup

    @property
    def std(self):
        return math.sqrt(self.var)

    def update(self, values):
        alpha = self.ema_alpha
        for value in np.atleast_1d(np.asarray(values, dtype=np.float64)):
            if not math.isfinite(value):
                raise GmreplayModelError("non-finite loss value in statistics update")
            if self.samples_seen == 0:
                self.mean = float(value)
            else:
                diff = value - self.mean
                increment = alpha * diff
                self.mean += increment
                self.var = (1.0 - alpha) * (self.var + diff * increment)
            self.samples_seen += 1
        return self

    def threshold(self, c):
        if math.isinf(c) and c > 0:
            return -math.inf
        return self.mean - c * self.std

    def outlier_mask(self, values, c):
        values = np.asarray(values, dtype=np.float64)
        if not self.past_warmup:
            return np.zeros(values.shape, dtype=bool)
        return values < self.threshold(c)

    def is_outlier(self, value, c):
        return bool(self.outlier_mask(value, c))

    def copy(self):
        other = LossStats(self.ema_alpha, self.warmup)
        other.mean, other.var, other.samples_seen = self.mean, self.var, self.samples_seen
        return other


def loss_stats_update(stats, values):
    """Feed per-sample log-likelihoods into ``stats``; returns the same object."""
    return stats.update(values)


def is_outlier(stats, value, c):
    """True iff ``value`` lies strictly below mean - c * std (never during warmup)."""
    return stats.is_outlier(value, c)


class SamplingReport(object):
    """Outcome of :func:`check_sampling_bound`."""

    def __init__(self, train_mean, sample_mean, sample_stderr, count):
        self.train_mean = train_mean
        self.sample_mean = sample_mean
        self.sample_stderr = sample_stderr
        self.count = count

    @property
    def holds(self):
        return self.sample_mean >= self.train_mean - 3.0 * self.sample_stderr

    def as_row(self):
        return {
            "train_mean": self.train_mean,
            "sample_mean": self.sample_mean,
            "sample_stderr": self.sample_stderr,
            "count": self.count,
            "holds": int(self.holds),
        }


def check_sampling_bound(params, data, n, rng):
    """Compare the mean log-likelihood of ``n`` generated samples with the mean
    log-likelihood of the training data ``data``.
    """
    train_mean = float(np.mean(log_likelihoods(params, data)))
    sample_ll = log_likelihoods(params, sample(params, n, rng))
    stderr = float(np.std(sample_ll, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    report = SamplingReport(train_mean, float(np.mean(sample_ll)), stderr, n)
    log.info("sampling bound: train %.3f, samples %.3f +- %.3f -> %s",
             report.train_mean, report.sample_mean, report.sample_stderr, "holds" if report.holds else "VIOLATED")
    return report


def class_balance(labels, class_count):
    """Histogram of (pseudo-)labels."""
    return np.bincount(np.asarray(labels, dtype=np.int64), minlength=class_count)
