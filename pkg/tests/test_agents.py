import itertools
import os
import tempfile
import unittest

import numpy as np

from chefshat.actions import NUM_ACTIONS, possible_actions, masked_argmax
from chefshat.agents import (
    EpsilonSchedule,
    Experience,
    KlController,
    RandomAgent,
    ReplayBuffer,
    build_agent,
    discounted_returns,
    load_agent,
)
from chefshat.agents.base import stack
from chefshat.cards import ConfigurationError
from chefshat.engine import OBSERVATION_SIZE, new_match, observe
from chefshat.jsonutil import json_dump, json_load
from chefshat.neural import CatalogMismatchError, forward

GAMMA = 0.9
S0, S1 = 0, 1


class TinyMDP:
    """
    Two states, slots 0 and 1 allowed in both. From s0, slot 0 leads to s1,
    slot 1 ends the episode; from s1 both end it, slot 0 with the win reward.
    """

    mask = np.zeros(NUM_ACTIONS, dtype=bool)
    mask[[0, 1]] = True
    transitions = {
        (S0, 0): (-0.01, S1),
        (S0, 1): (-0.01, None),
        (S1, 0): (1.0, None),
        (S1, 1): (-0.01, None),
    }

    @staticmethod
    def observation(state):
        v = np.zeros(OBSERVATION_SIZE)
        v[state] = 1.0
        return v

    @classmethod
    def experiences(cls):
        out = []
        for (s, a), (r, nxt) in cls.transitions.items():
            terminal = nxt is None
            out.append(
                Experience(
                    cls.observation(s),
                    cls.mask,
                    a,
                    r,
                    cls.observation(0 if terminal else nxt),
                    np.zeros(NUM_ACTIONS, dtype=bool) if terminal else cls.mask,
                    terminal,
                )
            )
        return out

    @classmethod
    def q_values(cls, gamma=GAMMA):
        """value iteration"""
        q = {key: 0.0 for key in cls.transitions}
        for _ in range(100):
            for (s, a), (r, nxt) in cls.transitions.items():
                q[s, a] = r if nxt is None else r + gamma * max(q[nxt, 0], q[nxt, 1])
        return q

    @classmethod
    def optimal_policy(cls, gamma=GAMMA):
        """exhaustive evaluation of the four deterministic policies"""

        def episode_return(policy):
            total, s, discount = 0.0, S0, 1.0
            while s is not None:
                r, s = cls.transitions[s, policy[s]]
                total += discount * r
                discount *= gamma
            return total

        return max(itertools.product((0, 1), repeat=2), key=episode_return)

    @classmethod
    def play(cls, agent, rng):
        s = S0
        while s is not None:
            obs = cls.observation(s)
            a = agent.act(obs, cls.mask, rng)
            r, nxt = cls.transitions[s, a]
            terminal = nxt is None
            agent.record(
                Experience(
                    obs,
                    cls.mask,
                    a,
                    r,
                    cls.observation(0 if terminal else nxt),
                    np.zeros(NUM_ACTIONS, dtype=bool) if terminal else cls.mask,
                    terminal,
                )
            )
            s = nxt
        agent.end_of_match(())

    @classmethod
    def greedy_policy(cls, agent, head):
        net = agent.networks()[next(iter(agent.networks()))]
        return tuple(
            masked_argmax(forward(net, cls.observation(s))[head], cls.mask) for s in (S0, S1)
        )


def small(kind, **overrides):
    settings = {"hidden": [], "gamma": GAMMA}
    settings.update(overrides)
    return build_agent(kind, seed=1, overrides=settings)


class ReturnsTestCase(unittest.TestCase):

    def test_discounted_returns(self):
        np.testing.assert_allclose(discounted_returns([-0.01, -0.01, 1.0], 1.0), [0.98, 0.99, 1.0])
        np.testing.assert_allclose(
            discounted_returns([-0.01, -0.01, 1.0], 0.99), [0.9602, 0.98, 1.0]
        )
        np.testing.assert_allclose(discounted_returns([0.3], 0.5), [0.3])


class ScheduleTestCase(unittest.TestCase):

    def test_epsilon_schedule(self):
        s = EpsilonSchedule(1.0, 0.1, 0.9)
        values = [s.step() for _ in range(100)]
        self.assertTrue(all(a >= b for a, b in zip(values, values[1:])))
        self.assertEqual(values[-1], 0.1)
        self.assertAlmostEqual(values[0], 0.9)
        with self.assertRaises(ConfigurationError):
            EpsilonSchedule(1.0, 0.1, 1.5)

    def test_kl_controller(self):
        kl = KlController(beta=1.0, kl_target=0.01)
        self.assertEqual([kl.update(0.2), kl.update(0.001)], [2.0, 1.0])
        self.assertEqual(kl.update(0.01), 1.0)
        for _ in range(2000):
            kl.update(0.0)
        self.assertEqual(kl.beta, KlController.MIN_BETA)
        with self.assertRaises(ConfigurationError):
            KlController(beta=0.0)
        with self.assertRaises(ConfigurationError):
            KlController(kl_target=-1.0)

    def test_replay_buffer(self):
        buffer = ReplayBuffer(3)
        experiences = TinyMDP.experiences()
        for e in experiences:
            buffer.push(e)
        self.assertEqual(len(buffer), 3)
        batch = buffer.sample(3, np.random.default_rng(0))
        ids = {id(e) for e in batch}
        self.assertEqual(len(ids), 3)
        self.assertEqual(ids, {id(e) for e in experiences[1:]})
        with self.assertRaises(ConfigurationError):
            ReplayBuffer(0)


class MaskRespectTestCase(unittest.TestCase):
    """every agent only ever picks allowed slots"""

    def test_act_respects_mask(self):
        rng = np.random.default_rng(9)
        agents = [RandomAgent()] + [small(k, hidden=[16]) for k in ("dql", "a2c", "ppo")]
        states = []
        for seed in range(30):
            state = new_match((), seed)
            states.append(state)
        for agent in agents:
            for learning in (True, False):
                agent.set_learning(learning)
                for i in range(3000):
                    state = states[i % len(states)]
                    mask = rng.random(NUM_ACTIONS) < rng.uniform(0.005, 0.2)
                    mask[rng.integers(NUM_ACTIONS)] = True
                    if i % 3 == 0:
                        mask = possible_actions(state, state.turn)
                    obs = observe(state, state.turn)
                    self.assertTrue(mask[agent.act(obs, mask, rng)])

    def test_random_agent_single_slot(self):
        mask = np.zeros(NUM_ACTIONS, dtype=bool)
        mask[42] = True
        self.assertEqual(RandomAgent().act(np.zeros(28), mask, np.random.default_rng(0)), 42)
        self.assertIsNone(RandomAgent().last_outputs)


class DQLTestCase(unittest.TestCase):

    def agent(self, **overrides):
        settings = dict(replay_capacity=4, batch_size=4, target_sync=10, learning_rate=0.001)
        settings.update(overrides)
        agent = small("dql", **settings)
        for e in TinyMDP.experiences():
            agent.buffer.push(e)
        return agent

    def test_targets(self):
        agent = self.agent(gamma=0.0)
        batch = TinyMDP.experiences()
        np.testing.assert_array_equal(agent.targets(batch), stack(batch, "reward"))
        agent = self.agent()
        y = agent.targets(batch)
        self.assertEqual(y[2], 1.0)
        q_next = forward(agent.target, TinyMDP.observation(S1))["q"]
        self.assertAlmostEqual(y[0], -0.01 + GAMMA * q_next[masked_argmax(
            forward(agent.online, TinyMDP.observation(S1))["q"], TinyMDP.mask)])

    def test_no_update_before_a_batch(self):
        agent = small("dql", batch_size=8)
        self.assertIsNone(agent.train_step())

    def test_target_sync(self):
        agent = self.agent(target_sync=3)
        for i in range(1, 7):
            frozen = [p.copy() for p in agent.target.parameters()]
            agent.train_step()
            synced = i % 3 == 0
            for t, o, f in zip(agent.target.parameters(), agent.online.parameters(), frozen):
                if synced:
                    np.testing.assert_array_equal(t, o)
                else:
                    np.testing.assert_array_equal(t, f)

    def test_converges_to_value_iteration(self):
        agent = self.agent()
        for _ in range(5000):
            agent.train_step()
        self.assertEqual(TinyMDP.greedy_policy(agent, "q"), TinyMDP.optimal_policy())
        agent.optimizer.learning_rate = 1e-4
        for _ in range(3000):
            agent.train_step()
        oracle = TinyMDP.q_values()
        for (s, a), value in oracle.items():
            q = forward(agent.online, TinyMDP.observation(s))["q"][a]
            self.assertAlmostEqual(q, value, delta=1e-3)

    def test_epsilon_decays_per_update(self):
        agent = self.agent()
        start = agent.epsilon.value
        agent.train_step()
        self.assertAlmostEqual(agent.epsilon.value, start * 0.995)


class PolicyLearnerTestCase(unittest.TestCase):

    def train(self, kind, episodes, **overrides):
        agent = small(kind, **overrides)
        rng = np.random.default_rng(11)
        for _ in range(episodes):
            TinyMDP.play(agent, rng)
        return agent

    def test_a2c_learns_tiny_mdp(self):
        agent = self.train("a2c", 2000, learning_rate=0.01)
        self.assertEqual(agent.updates, 2000)
        self.assertEqual(TinyMDP.greedy_policy(agent, "policy"), TinyMDP.optimal_policy())

    def test_ppo_learns_tiny_mdp(self):
        agent = self.train("ppo", 2000, learning_rate=0.01, critic_learning_rate=0.01)
        self.assertEqual(agent.updates, 2000)
        self.assertEqual(TinyMDP.greedy_policy(agent, "policy"), TinyMDP.optimal_policy())
        self.assertGreater(agent.kl.beta, 0.0)
        self.assertEqual(agent.rollout, [])

    def test_empty_episode_is_a_no_op(self):
        agent = small("a2c")
        self.assertIsNone(agent.train_step())
        agent.end_of_match(())
        self.assertEqual(agent.updates, 0)

    def test_frozen_agent_does_not_learn(self):
        agent = small("a2c").set_learning(False)
        before = [p.copy() for p in agent.net.parameters()]
        TinyMDP.play(agent, np.random.default_rng(0))
        for p, q in zip(before, agent.net.parameters()):
            np.testing.assert_array_equal(p, q)


class RegistryTestCase(unittest.TestCase):

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()

    def tearDown(self):
        self.tmp.cleanup()

    def test_unknown_kind(self):
        with self.assertRaises(ConfigurationError):
            build_agent("sarsa")

    def test_defaults(self):
        agent = build_agent("dql", seed=3)
        self.assertEqual(agent.settings["batch_size"], 64)
        self.assertEqual(agent.settings["hidden"], [256, 256])
        self.assertEqual(agent.epsilon.value, 1.0)

    def test_save_and_load(self):
        for kind in ("dql", "a2c", "ppo"):
            agent = small(kind, hidden=[8])
            TinyMDP.play(agent, np.random.default_rng(0))
            path = os.path.join(self.tmp.name, f"{kind}.json")
            agent.save(path)
            loaded = load_agent(path)
            self.assertEqual(loaded.kind, kind)
            self.assertFalse(loaded.learning)
            self.assertEqual(loaded.updates, agent.updates)
            self.assertEqual(loaded.epsilon.value, agent.epsilon.value)
            obs = TinyMDP.observation(S0)
            for name, net in agent.networks().items():
                for head, out in forward(net, obs).items():
                    np.testing.assert_array_equal(forward(loaded.networks()[name], obs)[head], out)

    def test_load_checks_catalog(self):
        agent = small("ppo", hidden=[4])
        path = os.path.join(self.tmp.name, "p.json")
        agent.save(path)
        doc = json_load(path)
        doc["action_catalog_hash"] = "0" * 64
        json_dump(doc, path)
        with self.assertRaises(CatalogMismatchError):
            load_agent(path)

    def test_clone(self):
        agent = small("dql", hidden=[4], replay_capacity=8, batch_size=2)
        for e in TinyMDP.experiences():
            agent.record(e)
        frozen = agent.clone(name="frozen", learning=False)
        self.assertEqual(frozen.name, "frozen")
        self.assertEqual(len(frozen.buffer), 0)
        self.assertEqual(len(agent.buffer), 4)
        self.assertIsNot(frozen.online, agent.online)
        copy = agent.clone()
        self.assertEqual(len(copy.buffer), 4)
