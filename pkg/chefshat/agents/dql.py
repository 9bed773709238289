"""Deep Q-learning with experience replay, a target network and double-Q targets."""

import numpy as np

from ..actions import NUM_ACTIONS, epsilon_greedy, masked_argmax
from ..log import get_logger
from ..neural import Network, OptimizerState, QRegressionLoss, adam_step, backward, forward
from .base import LearnerAgent, ReplayBuffer, stack

logger = get_logger("chefshat.agents.dql")


class DQLAgent(LearnerAgent):
    kind = "dql"

    def __init__(self, settings, seed=0, name=None, networks=None):
        super().__init__(settings, seed, name)
        s = self.settings
        if networks:
            self.online = networks["online"]
        else:
            self.online = Network.build(
                {"q": NUM_ACTIONS}, s["hidden"], s["activation"], rng=self.rng
            )
        self.target = self.online.copy()
        self.optimizer = OptimizerState.for_network(
            self.online, s["learning_rate"], clip_norm=s.get("clip_norm")
        )
        self.buffer = ReplayBuffer(s["replay_capacity"])
        self._since_train = 0

    def networks(self):
        return {"online": self.online}

    def leftovers(self):
        return {id(self.buffer): ReplayBuffer(self.buffer.capacity)}

    def act(self, state, mask, rng):
        q = forward(self.online, state)["q"]
        self.last_outputs = q
        if self.learning:
            return epsilon_greedy(q, mask, self.epsilon.value, rng)
        return masked_argmax(q, mask)

    def record(self, experience):
        if not self.learning:
            return
        self.buffer.push(experience)
        self._since_train += 1
        if self._since_train >= self.settings["train_every"]:
            self._since_train = 0
            self.train_step()

    def targets(self, batch):
        """
        y = r for terminal transitions, otherwise
        y = r + gamma Q_target(s', argmax_{a allowed in s'} Q_online(s', a))
        """
        y = stack(batch, "reward")
        live = ~stack(batch, "terminal", dtype=bool)
        if live.any():
            next_states = stack(batch, "next_state")[live]
            next_masks = stack(batch, "next_mask", dtype=bool)[live]
            q_online = forward(self.online, next_states)["q"]
            q_target = forward(self.target, next_states)["q"]
            best = [masked_argmax(q, m) for q, m in zip(q_online, next_masks)]
            y[live] += self.gamma * q_target[np.arange(len(best)), best]
        return y

    def train_step(self):
        """one regression step on a replay batch; a no-op until the buffer fills a batch"""
        batch_size = self.settings["batch_size"]
        if len(self.buffer) < batch_size:
            return None
        batch = self.buffer.sample(batch_size, self.rng)
        loss = QRegressionLoss(stack(batch, "action", dtype=np.int64), self.targets(batch))
        report = backward(self.online, loss, stack(batch, "state"))
        adam_step(self.online, self.optimizer, report)

        self.updates += 1
        if self.updates % self.settings["target_sync"] == 0:
            self.target.assign(self.online)
            logger.debug("%s: target synced after %d updates", self.name, self.updates)
        self.epsilon.step()
        return report.loss
