# -*- coding: utf-8 -*-
# License: GPL-2.0+ <http://spdx.org/licenses/GPL-2.0+>
# See the LICENSE file for more details on Licensing

""" This module is for testing the EWC baseline network, penalty, Fisher estimate and
grid search."""

import numpy as np
import pytest

from gmreplay import config, dataio, ewc
from gmreplay.exceptions import GmreplayModelError


def toy_config(**overrides):
    settings = dict(hidden_sizes=[6], batch_size=10, ewc_epochs=2, ewc_grid=[1e-2, 1e-3])
    settings.update(overrides)
    return config.ExperimentConfig(defaults=config.ConfigData(), **settings)


def toy_slt(name):
    rng = np.random.default_rng(0)
    labels = np.repeat(np.arange(10), 20)
    images = np.clip(labels[:, None] / 10.0 + rng.normal(0, 0.02, size=(200, 4)), 0.0, 1.0)
    data = dataio.Dataset(images, labels, 10)
    return dataio.build_slt(data, dataio.get_slt(name), data), data


def _numeric_grads(loss_fn, params, eps=1e-6):
    arrays = params.arrays()
    grads = []
    for i, array in enumerate(arrays):
        grad = np.zeros_like(array)
        for idx in np.ndindex(array.shape):
            plus = [a.copy() for a in arrays]
            minus = [a.copy() for a in arrays]
            plus[i][idx] += eps
            minus[i][idx] -= eps
            grad[idx] = (loss_fn(ewc.MlpParams.from_arrays(plus)) - loss_fn(ewc.MlpParams.from_arrays(minus))) / (2 * eps)
        grads.append(grad)
    return grads


class TestNetwork(object):
    def setup_method(self, method):
        rng = np.random.default_rng(1)
        self.params = ewc.init_mlp([3, 5, 4, 2], rng)
        self.X = rng.uniform(size=(6, 3))
        self.targets = np.eye(2)[rng.integers(0, 2, size=6)]

    def test_shapes_and_count(self):
        assert self.params.sizes == [3, 5, 4, 2]
        assert ewc.mlp_parameter_count([3, 5, 4, 2]) == sum(a.size for a in self.params.arrays())
        logits, _ = ewc.mlp_forward(self.params, self.X)
        assert logits.shape == (6, 2)

    def test_default_sized_network(self):
        assert ewc.mlp_parameter_count([784, 800, 800, 800, 10]) == 784 * 800 + 800 + 2 * (800 * 800 + 800) + 800 * 10 + 10

    def test_backprop_matches_finite_differences(self):
        _, grads = ewc.ewc_gradients(self.params, [], self.X, self.targets, 0.0)
        numeric = _numeric_grads(lambda p: ewc.cross_entropy(p, self.X, self.targets), self.params)
        for analytic, expected in zip(grads, numeric):
            assert (np.abs(analytic - expected) / np.maximum(1.0, np.abs(expected))).max() < 1e-4

    def test_penalty_gradient_matches_finite_differences(self):
        rng = np.random.default_rng(2)
        anchor = ewc.TaskAnchor([a + rng.normal(0, 0.1, a.shape) for a in self.params.arrays()],
                                [rng.uniform(0, 2, a.shape) for a in self.params.arrays()])
        _, grads = ewc.ewc_gradients(self.params, [anchor], self.X, self.targets, 3.0)
        numeric = _numeric_grads(lambda p: ewc.ewc_loss(p, [anchor], self.X, self.targets, 3.0), self.params)
        for analytic, expected in zip(grads, numeric):
            assert (np.abs(analytic - expected) / np.maximum(1.0, np.abs(expected))).max() < 1e-4


class TestPenalty(object):
    def _params(self):
        return ewc.MlpParams([(np.array([[1.0]]), np.array([1.0]))])

    def test_no_anchors_is_cross_entropy(self):
        params = self._params()
        X, targets = np.array([[0.5]]), np.array([[1.0]])
        assert ewc.ewc_loss(params, [], X, targets, 100.0) == pytest.approx(ewc.cross_entropy(params, X, targets))

    def test_penalty_arithmetic(self):
        anchor = ewc.TaskAnchor([np.zeros((1, 1)), np.zeros(1)], [np.ones((1, 1)), np.zeros(1)])
        assert ewc.ewc_penalty(self._params(), [anchor], 2.0) == pytest.approx(1.0)

    def test_loss_adds_penalty(self, monkeypatch):
        monkeypatch.setattr(ewc, "cross_entropy", lambda params, X, targets: 0.5)
        anchor = ewc.TaskAnchor([np.zeros((1, 1)), np.zeros(1)], [np.ones((1, 1)), np.zeros(1)])
        assert ewc.ewc_loss(self._params(), [anchor], np.array([[0.5]]), np.array([[1.0]]), 2.0) == pytest.approx(1.5)

    def test_zero_at_every_anchor(self):
        rng = np.random.default_rng(6)
        params = ewc.init_mlp([3, 5, 2], rng)
        anchors = [ewc.TaskAnchor(params.arrays(), [rng.uniform(0, 3, a.shape) for a in params.arrays()]) for _ in range(3)]
        assert ewc.ewc_penalty(params, anchors, 5.0) == 0.0
        X = rng.uniform(size=(4, 3))
        targets = np.eye(2)[[0, 1, 1, 0]]
        loss, grads = ewc.ewc_gradients(params, anchors, X, targets, 5.0)
        plain_loss, plain_grads = ewc.ewc_gradients(params, [], X, targets, 5.0)
        assert loss == plain_loss
        for with_anchors, without in zip(grads, plain_grads):
            assert np.array_equal(with_anchors, without)

    def test_negative_lambda(self):
        with pytest.raises(GmreplayModelError):
            ewc.ewc_loss(self._params(), [], np.array([[0.5]]), np.array([[1.0]]), -1.0)

    def test_negative_fisher(self):
        with pytest.raises(GmreplayModelError):
            ewc.TaskAnchor([np.zeros(1)], [np.array([-0.1])])


class TestFisher(object):
    def test_saturated_model_has_zero_fisher(self):
        params = ewc.MlpParams([(np.zeros((2, 2)), np.array([800.0, -800.0]))])
        data = dataio.Dataset(np.full((5, 2), 0.5), np.zeros(5), 2)
        assert all(np.all(f == 0) for f in ewc.compute_fisher_diag(params, data))

    def test_matches_per_sample_gradients(self):
        rng = np.random.default_rng(3)
        params = ewc.init_mlp([3, 4, 2], rng)
        data = dataio.Dataset(rng.uniform(size=(7, 3)), rng.integers(0, 2, size=7), 2)
        expected = [np.zeros_like(a) for a in params.arrays()]
        for x, label in zip(data.images, data.labels):
            logits, cache = ewc.mlp_forward(params, x[None, :])
            probs = np.exp(logits - logits.max())
            probs /= probs.sum()
            delta = np.eye(2)[[label]] - probs
            for acc, grad in zip(expected, ewc.mlp_backward(params, cache, delta)):
                acc += grad ** 2 / len(data)
        for fisher, reference in zip(ewc.compute_fisher_diag(params, data), expected):
            assert fisher == pytest.approx(reference)


class TestAdam(object):
    def test_first_step_has_learning_rate_size(self):
        optimizer = ewc.AdamOptimizer(0.1)
        (updated,) = optimizer.step([np.array([1.0, -2.0])], [np.array([3.0, -0.5])])
        assert updated == pytest.approx([0.9, -1.9])

    def test_minimizes_quadratic(self):
        optimizer = ewc.AdamOptimizer(0.05)
        x = [np.array([3.0])]
        for _ in range(2000):
            x = optimizer.step(x, [2 * x[0]])
        assert abs(x[0][0]) < 0.05


class TestRunEwc(object):
    def test_rows_per_epoch(self):
        sub_tasks, data = toy_slt("D5-5a")
        metrics = ewc.run_ewc(sub_tasks, data, toy_config(), seed=0, epsilon=1e-2, run_id="toy")
        assert [(r["sub_task"], r["epoch"]) for r in metrics.rows] == [(1, 1), (1, 2), (2, 1), (2, 2)]
        params, anchors = metrics.model
        assert len(anchors) == 2
        assert params.sizes == [4, 6, 10]
        # the first sub-task has no anchors, so its objective is the cross-entropy
        assert metrics.rows[0]["train_loss"] == pytest.approx(metrics.rows[0]["ce_loss"])
        assert metrics.rows[2]["train_loss"] >= metrics.rows[2]["ce_loss"]

    def test_deterministic(self):
        sub_tasks, data = toy_slt("D5-5a")
        first = ewc.run_ewc(sub_tasks, data, toy_config(), seed=4, epsilon=1e-2)
        second = ewc.run_ewc(sub_tasks, data, toy_config(), seed=4, epsilon=1e-2)
        assert first.to_csv() == second.to_csv()

    def test_zero_lambda_matches_unregularized_training(self, monkeypatch):
        sub_tasks, data = toy_slt("D5-5a")
        regularized = ewc.run_ewc(sub_tasks, data, toy_config(), seed=2, epsilon=1e-2, lam=0.0)

        gradients, penalty = ewc.ewc_gradients, ewc.ewc_penalty
        monkeypatch.setattr(ewc, "ewc_gradients", lambda params, anchors, X, targets, lam: gradients(params, [], X, targets, lam))
        monkeypatch.setattr(ewc, "ewc_penalty", lambda params, anchors, lam: penalty(params, [], lam))
        control = ewc.run_ewc(sub_tasks, data, toy_config(), seed=2, epsilon=1e-2, lam=0.0)
        assert regularized.to_csv() == control.to_csv()

    def test_grid_selects_best_mean(self):
        sub_tasks, data = toy_slt("D10")
        calls = []

        def runner(sub_tasks, joint_test, config, seed, epsilon, run_id, metrics):
            calls.append((seed, epsilon))
            accuracy = {1e-2: 0.5, 1e-3: 0.7}[epsilon] + 0.01 * seed
            metrics.append(run_id=run_id, seed=seed, sub_task=1, epoch=1, train_loss=0.0, ce_loss=0.0,
                           test_accuracy=accuracy, inlier_fraction=None, boundaries=[], replay_count=0, wall_time=None)

        result = ewc.run_ewc_grid(sub_tasks, data, toy_config(), [0, 1], run_id="grid", runner=runner)
        assert calls == [(0, 1e-2), (1, 1e-2), (0, 1e-3), (1, 1e-3)]
        assert result.best_epsilon == 1e-3
        assert result.scores[1e-3] == pytest.approx([0.7, 0.71])
        assert result.run_ids[1e-3] == ["grid-s0-e0.001", "grid-s1-e0.001"]

    def test_grid_tie_keeps_first(self):
        result = ewc.GridResult()
        result.add(1e-3, "a", 0.5)
        result.add(1e-4, "b", 0.5)
        assert result.best_epsilon == 1e-3
