import json
import math
import os
import tempfile
import unittest

import numpy as np

from chefshat.actions import ContractViolation
from chefshat.neural import (
    ActorCriticLoss,
    CatalogMismatchError,
    DimensionMismatchError,
    Loss,
    Network,
    NonFiniteLossError,
    OptimizerState,
    PPOActorLoss,
    QRegressionLoss,
    ValueLoss,
    WeightFileError,
    adam_step,
    backward,
    forward,
    kl_divergence,
    load_weights,
    masked_softmax,
    numerical_gradient,
    read_weight_file,
    save_weights,
    write_weight_file,
)

WIDTH = 6
BATCH = 5


def worst_relative_error(analytic, numeric, floor=1e-4):
    """largest entry-wise relative error; entries far below `floor` compare absolutely"""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        scale = np.maximum(np.abs(a) + np.abs(n), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / scale)))
    return worst


def random_masks(rng, n=BATCH, width=WIDTH):
    masks = rng.random((n, width)) < 0.6
    masks[np.arange(n), rng.integers(width, size=n)] = True
    return masks


def matmul_oracle(net, x):
    """the forward pass written out entry by entry"""
    def dense(layer, rows):
        out = []
        for row in rows:
            values = []
            for o in range(layer.fan_out):
                z = math.fsum(row[i] * layer.weight[i, o] for i in range(layer.fan_in))
                z += layer.bias[o]
                if layer.activation == "relu":
                    z = max(z, 0.0)
                elif layer.activation == "tanh":
                    z = math.tanh(z)
                values.append(z)
            out.append(values)
        return out

    rows = x.tolist()
    for layer in net.trunk:
        rows = dense(layer, rows)
    return {name: np.array(dense(head, rows)) for name, head in net.heads.items()}


class ConstantLoss(Loss):
    def evaluate(self, outputs):
        return 2.5, {name: np.zeros_like(out) for name, out in outputs.items()}


class GradientTestCase(unittest.TestCase):
    """analytic gradients against central differences, parameter by parameter"""

    ACTIVATIONS = ("tanh", "relu")

    def setUp(self):
        self.rng = np.random.default_rng(3)
        self.x = self.rng.normal(size=(BATCH, 5))

    def build(self, heads, activation="tanh"):
        return Network.build(heads, hidden=(8,), activation=activation, input_width=5,
                             rng=self.rng, head_scale=1.0)

    def check(self, net, loss):
        n_params = sum(p.size for p in net.parameters())
        self.assertGreaterEqual(n_params, 100)
        analytic = backward(net, loss, self.x).grads
        numeric = numerical_gradient(net, loss, self.x, h=1e-5)
        self.assertLess(worst_relative_error(analytic, numeric), 1e-4)

    def test_q_regression(self):
        for activation in self.ACTIVATIONS:
            net = self.build({"q": WIDTH}, activation)
            actions = self.rng.integers(WIDTH, size=BATCH)
            self.check(net, QRegressionLoss(actions, self.rng.normal(size=BATCH)))

    def test_actor_critic(self):
        for activation in self.ACTIVATIONS:
            net = self.build({"policy": WIDTH, "value": 1}, activation)
            masks = random_masks(self.rng)
            actions = [self.rng.choice(np.flatnonzero(m)) for m in masks]
            loss = ActorCriticLoss(
                actions, masks, self.rng.normal(size=BATCH), self.rng.normal(size=BATCH),
                entropy_coef=0.1, value_coef=0.5,
            )
            self.check(net, loss)

    def test_ppo_actor(self):
        for activation in self.ACTIVATIONS:
            net = self.build({"policy": WIDTH}, activation)
            masks = random_masks(self.rng)
            actions = [self.rng.choice(np.flatnonzero(m)) for m in masks]
            old = masked_softmax(self.rng.normal(size=(BATCH, WIDTH)), masks)
            loss = PPOActorLoss(actions, masks, self.rng.normal(size=BATCH), old, beta=0.7)
            self.check(net, loss)

    def test_value(self):
        # the q head gets no gradient from this loss
        for activation in self.ACTIVATIONS:
            net = self.build({"value": 1, "q": WIDTH}, activation)
            self.check(net, ValueLoss(self.rng.normal(size=BATCH)))

    def test_constant_loss(self):
        net = self.build({"policy": WIDTH, "value": 1}, "relu")
        report = backward(net, ConstantLoss(), self.x)
        self.assertEqual(report.loss, 2.5)
        for g in report.grads:
            self.assertFalse(np.any(g))

    def test_duplicated_batch(self):
        net = self.build({"policy": WIDTH, "value": 1}, "relu")
        masks = random_masks(self.rng)
        actions = [self.rng.choice(np.flatnonzero(m)) for m in masks]
        returns, advantages = self.rng.normal(size=BATCH), self.rng.normal(size=BATCH)

        def twice(a):
            return np.concatenate([a, a])

        once = backward(net, ActorCriticLoss(actions, masks, returns, advantages), self.x)
        doubled = backward(
            net,
            ActorCriticLoss(twice(actions), twice(masks), twice(returns), twice(advantages)),
            twice(self.x),
        )
        self.assertAlmostEqual(once.loss, doubled.loss, places=12)
        for a, b in zip(once.grads, doubled.grads):
            np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-14)


class LossTestCase(unittest.TestCase):

    def test_ppo_identity_policy(self):
        rng = np.random.default_rng(0)
        logits = rng.normal(size=(4, WIDTH))
        masks = random_masks(rng, 4)
        p = masked_softmax(logits, masks)
        actions = [int(np.flatnonzero(m)[0]) for m in masks]
        advantages = np.array([1.0, -0.5, 2.0, 0.25])
        value, _ = PPOActorLoss(actions, masks, advantages, p, beta=1.0).evaluate(
            {"policy": logits}
        )
        self.assertAlmostEqual(value, -advantages.mean())
        np.testing.assert_allclose(kl_divergence(p, p, masks), 0.0, atol=1e-12)

    def test_zero_advantage_leaves_entropy(self):
        rng = np.random.default_rng(1)
        logits = rng.normal(size=(3, WIDTH))
        masks = np.ones((3, WIDTH), dtype=bool)
        returns = rng.normal(size=3)
        loss = ActorCriticLoss([0, 1, 2], masks, returns, np.zeros(3), entropy_coef=0.01)
        _, grads = loss.evaluate({"policy": logits, "value": returns[:, None]})
        p = masked_softmax(logits, masks)
        h = -(p * np.log(p)).sum(axis=1, keepdims=True)
        np.testing.assert_allclose(grads["policy"], (0.01 / 3) * p * (np.log(p) + h))
        np.testing.assert_allclose(grads["value"], 0.0)

    def test_kl_two_points(self):
        m = np.ones(2, dtype=bool)
        kl = kl_divergence(np.array([0.9, 0.1]), np.array([0.5, 0.5]), m)
        self.assertAlmostEqual(float(kl), 0.9 * np.log(1.8) + 0.1 * np.log(0.2), places=12)

    def test_masked_softmax(self):
        mask = np.zeros(200, dtype=bool)
        mask[[4, 9]] = True
        p = masked_softmax(np.full(200, 1000.0), mask)
        self.assertEqual(p[4], 0.5)
        self.assertEqual(p.sum(), 1.0)
        self.assertEqual(masked_softmax(np.zeros(200), ~mask)[4], 0.0)
        with self.assertRaises(ContractViolation):
            masked_softmax(np.zeros(200), np.zeros(200, dtype=bool))

    def test_non_finite_loss(self):
        net = Network.build({"q": 3}, hidden=(), input_width=2)
        loss = QRegressionLoss([0], [np.inf])
        with self.assertRaises(NonFiniteLossError):
            backward(net, loss, np.zeros((1, 2)))


class NetworkTestCase(unittest.TestCase):

    def test_forward_matches_oracle(self):
        rng = np.random.default_rng(7)
        for activation in ("relu", "tanh"):
            net = Network.build({"policy": 200, "value": 1}, hidden=(16, 8),
                                activation=activation, rng=rng, head_scale=1.0)
            for layer in net.layers():
                layer.bias[:] = rng.normal(size=layer.fan_out)
            x = rng.uniform(0, 1, size=(4, 28))
            expected = matmul_oracle(net, x)
            for name, out in forward(net, x).items():
                np.testing.assert_allclose(out, expected[name], rtol=1e-12, atol=1e-12)

    def test_zero_network(self):
        net = Network.build({"q": 200}, hidden=(4,), rng=np.random.default_rng(0))
        for p in net.parameters():
            p[...] = 0.0
        self.assertFalse(np.any(forward(net, np.ones(28))["q"]))

    def test_shapes(self):
        net = Network.build({"policy": 200, "value": 1}, hidden=(16, 16),
                            rng=np.random.default_rng(0))
        out = forward(net, np.zeros(28))
        self.assertEqual(out["policy"].shape, (200,))
        self.assertEqual(forward(net, np.zeros((7, 28)))["value"].shape, (7, 1))
        with self.assertRaises(DimensionMismatchError):
            forward(net, np.zeros(27))

    def test_copy_and_assign(self):
        a = Network.build({"q": 4}, hidden=(3,), input_width=2, rng=np.random.default_rng(1))
        b = a.copy()
        b.parameters()[0][0, 0] += 1.0
        self.assertNotEqual(a.parameters()[0][0, 0], b.parameters()[0][0, 0])
        a.assign(b)
        for p, q in zip(a.parameters(), b.parameters()):
            np.testing.assert_array_equal(p, q)


class AdamTestCase(unittest.TestCase):

    def test_quadratic_loss_decreases(self):
        rng = np.random.default_rng(8)
        net = Network.build({"q": 1}, hidden=(), input_width=3, rng=rng)
        x = rng.normal(size=(16, 3))
        loss = QRegressionLoss(np.zeros(16, dtype=int), x @ np.array([2.0, -3.0, 1.5]) + 0.5)
        state = OptimizerState.for_network(net, learning_rate=1e-3)
        losses = []
        for _ in range(100):
            report = backward(net, loss, x)
            losses.append(report.loss)
            adam_step(net, state, report)
        self.assertTrue(all(b < a for a, b in zip(losses, losses[1:])))

    def test_zero_gradient_keeps_parameters(self):
        net = Network.build({"q": 3}, hidden=(4,), input_width=2, rng=np.random.default_rng(9))
        before = [p.copy() for p in net.parameters()]
        report = backward(net, ConstantLoss(), np.ones((2, 2)))
        adam_step(net, OptimizerState.for_network(net), report)
        for p0, p1 in zip(before, net.parameters()):
            np.testing.assert_array_equal(p0, p1)

    def test_first_step_moves_by_learning_rate(self):
        rng = np.random.default_rng(2)
        net = Network.build({"q": 3}, hidden=(4,), activation="tanh", input_width=2,
                            rng=rng, head_scale=1.0)
        before = [p.copy() for p in net.parameters()]
        report = backward(net, QRegressionLoss([0, 2], [1.0, -1.0]), rng.normal(size=(2, 2)))
        adam_step(net, OptimizerState.for_network(net, learning_rate=0.01), report)
        for p0, p1, g in zip(before, net.parameters(), report.grads):
            big = np.abs(g) > 1e-4
            np.testing.assert_allclose((p1 - p0)[big], -0.01 * np.sign(g[big]), rtol=1e-3)

    def test_fits_a_line(self):
        rng = np.random.default_rng(4)
        net = Network.build({"q": 1}, hidden=(), input_width=1, rng=rng)
        x = rng.uniform(-1, 1, size=(32, 1))
        y = 3.0 * x[:, 0] - 0.5
        state = OptimizerState.for_network(net, learning_rate=0.01)
        loss = QRegressionLoss(np.zeros(32, dtype=int), y)
        for _ in range(3000):
            adam_step(net, state, backward(net, loss, x))
        self.assertLess(backward(net, loss, x).loss, 1e-3)

    def test_clip_norm(self):
        rng = np.random.default_rng(5)
        net = Network.build({"q": 2}, hidden=(3,), input_width=2, rng=rng)
        report = backward(net, QRegressionLoss([0], [100.0]), np.ones((1, 2)))
        state = OptimizerState.for_network(net, learning_rate=0.1, clip_norm=0.5)
        self.assertGreater(report.global_norm(), 0.5)
        adam_step(net, state, report)
        self.assertEqual(state.step, 1)
        self.assertTrue(net.is_finite())


class WeightFileTestCase(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.tmp.name, "w.json")
        self.net = Network.build({"policy": 200, "value": 1}, hidden=(8,),
                                 rng=np.random.default_rng(6))

    def tearDown(self):
        self.tmp.cleanup()

    def test_round_trip(self):
        save_weights(self.net, self.path)
        loaded = load_weights(self.path)
        x = np.random.default_rng(0).normal(size=(3, 28))
        for name, out in forward(self.net, x).items():
            np.testing.assert_array_equal(forward(loaded, x)[name], out)

    def test_several_networks(self):
        write_weight_file(self.path, "ppo", {"actor": self.net, "critic": self.net.copy()},
                          {"beta": 2.0})
        header, networks = read_weight_file(self.path)
        self.assertEqual(header["agent_kind"], "ppo")
        self.assertEqual(header["settings"], {"beta": 2.0})
        self.assertEqual(sorted(networks), ["actor", "critic"])
        with self.assertRaises(WeightFileError):
            load_weights(self.path)
        self.assertIsInstance(load_weights(self.path, "critic"), Network)

    def edit(self, **changes):
        save_weights(self.net, self.path)
        with open(self.path, encoding="utf-8") as f:
            doc = json.load(f)
        doc.update(changes)
        with open(self.path, "w", encoding="utf-8") as f:
            json.dump(doc, f)

    def test_catalog_mismatch(self):
        self.edit(action_catalog_hash="0" * 64)
        with self.assertRaises(CatalogMismatchError):
            load_weights(self.path)

    def test_bad_files(self):
        self.edit(format_version=99)
        with self.assertRaises(WeightFileError):
            load_weights(self.path)
        save_weights(self.net, self.path)
        with open(self.path, encoding="utf-8") as f:
            text = f.read()
        with open(self.path, "w", encoding="utf-8") as f:
            f.write(text[: len(text) // 2])
        with self.assertRaises(WeightFileError):
            load_weights(self.path)
