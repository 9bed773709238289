"""Advantage actor-critic, one shared trunk with a policy and a value head."""

import numpy as np

from ..actions import NUM_ACTIONS
from ..neural import (
    ActorCriticLoss,
    Network,
    OptimizerState,
    adam_step,
    backward,
    forward,
)
from .base import LearnerAgent, discounted_returns, stack


class A2CAgent(LearnerAgent):
    kind = "a2c"

    def __init__(self, settings, seed=0, name=None, networks=None):
        super().__init__(settings, seed, name)
        s = self.settings
        if networks:
            self.net = networks["actor_critic"]
        else:
            self.net = Network.build(
                {"policy": NUM_ACTIONS, "value": 1},
                s["hidden"],
                s["activation"],
                rng=self.rng,
            )
        self.optimizer = OptimizerState.for_network(
            self.net, s["learning_rate"], clip_norm=s.get("clip_norm")
        )
        self.episode = []

    def networks(self):
        return {"actor_critic": self.net}

    def leftovers(self):
        return {id(self.episode): []}

    def act(self, state, mask, rng):
        logits = forward(self.net, state)["policy"]
        self.last_outputs = logits
        return self.policy_action(logits, mask, rng)

    def record(self, experience):
        if self.learning:
            self.episode.append(experience)

    def end_of_match(self, positions):
        if self.learning:
            self.train_step()
        self.episode = []

    def train_step(self):
        """one combined actor/critic step on the match just played"""
        if not self.episode:
            return None
        states = stack(self.episode, "state")
        returns = discounted_returns([e.reward for e in self.episode], self.gamma)
        values = forward(self.net, states)["value"][:, 0]
        loss = ActorCriticLoss(
            stack(self.episode, "action", dtype=np.int64),
            stack(self.episode, "mask", dtype=bool),
            returns,
            returns - values,
            entropy_coef=self.settings["entropy_coef"],
            value_coef=self.settings["value_coef"],
        )
        report = backward(self.net, loss, states)
        adam_step(self.net, self.optimizer, report)
        self.episode = []
        self.updates += 1
        self.epsilon.step()
        return report.loss
