"""
Proximal policy optimization with an adaptive KL penalty, separate actor and
critic networks.
"""

import numpy as np

from ..actions import NUM_ACTIONS
from ..log import get_logger
from ..neural import (
    Network,
    OptimizerState,
    PPOActorLoss,
    ValueLoss,
    adam_step,
    backward,
    forward,
    kl_divergence,
    masked_softmax,
)
from .base import KlController, LearnerAgent, discounted_returns, stack

logger = get_logger("chefshat.agents.ppo")


class PPOAgent(LearnerAgent):
    kind = "ppo"

    def __init__(self, settings, seed=0, name=None, networks=None):
        super().__init__(settings, seed, name)
        s = self.settings
        if networks:
            self.actor = networks["actor"]
            self.critic = networks["critic"]
        else:
            self.actor = Network.build(
                {"policy": NUM_ACTIONS}, s["hidden"], s["activation"], rng=self.rng
            )
            self.critic = Network.build(
                {"value": 1}, s["hidden"], s["activation"], rng=self.rng
            )
        self.actor_optimizer = OptimizerState.for_network(
            self.actor, s["learning_rate"], clip_norm=s.get("clip_norm")
        )
        self.critic_optimizer = OptimizerState.for_network(
            self.critic, s["critic_learning_rate"], clip_norm=s.get("clip_norm")
        )
        self.kl = KlController(s["beta"], s["kl_target"])
        self.episode = []
        self.rollout = []
        self.last_kl = None

    def networks(self):
        return {"actor": self.actor, "critic": self.critic}

    def leftovers(self):
        return {id(self.episode): [], id(self.rollout): []}

    def extra_state(self):
        return {"beta": self.kl.beta}

    def restore_state(self, state):
        super().restore_state(state)
        self.kl.beta = state.get("beta", self.kl.beta)

    def act(self, state, mask, rng):
        logits = forward(self.actor, state)["policy"]
        self.last_outputs = logits
        return self.policy_action(logits, mask, rng)

    def record(self, experience):
        if self.learning:
            self.episode.append(experience)

    def end_of_match(self, positions):
        if self.learning and self.episode:
            self.rollout.append(self.episode)
        self.episode = []
        if self.learning and len(self.rollout) >= self.settings["rollout_matches"]:
            self.train_step()

    def train_step(self):
        """E epochs of the KL-penalised surrogate over the rollout, then adapt beta"""
        if not self.rollout:
            return None
        experiences = [e for episode in self.rollout for e in episode]
        returns = np.concatenate(
            [discounted_returns([e.reward for e in ep], self.gamma) for ep in self.rollout]
        )
        self.rollout = []
        states = stack(experiences, "state")
        masks = stack(experiences, "mask", dtype=bool)
        actions = stack(experiences, "action", dtype=np.int64)

        old_probs = masked_softmax(forward(self.actor, states)["policy"], masks)
        rows = np.arange(len(actions))
        keep = old_probs[rows, actions] > 0.0
        if not keep.all():
            logger.warning(
                "%s: %d samples with zero old probability left out",
                self.name,
                int((~keep).sum()),
            )
            if not keep.any():
                return None
            states, masks, actions = states[keep], masks[keep], actions[keep]
            returns, old_probs = returns[keep], old_probs[keep]

        advantages = returns - forward(self.critic, states)["value"][:, 0]
        for _ in range(self.settings["epochs"]):
            actor_loss = PPOActorLoss(actions, masks, advantages, old_probs, self.kl.beta)
            adam_step(self.actor, self.actor_optimizer, backward(self.actor, actor_loss, states))
            critic_report = backward(self.critic, ValueLoss(returns), states)
            adam_step(self.critic, self.critic_optimizer, critic_report)

        new_probs = masked_softmax(forward(self.actor, states)["policy"], masks)
        self.last_kl = float(np.mean(kl_divergence(old_probs, new_probs, masks)))
        self.kl.update(self.last_kl)
        self.updates += 1
        self.epsilon.step()
        return self.last_kl
