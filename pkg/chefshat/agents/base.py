"""
What every player shares: the acting/learning interface, transitions, the
replay buffer, the epsilon schedule and the adaptive KL penalty.
"""

import copy
import json
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Dict, List, Optional

import numpy as np

from ..actions import masked_argmax, masked_sample, masked_uniform
from ..cards import ConfigurationError
from ..neural import Network, masked_softmax, write_weight_file


@dataclass
class Experience:
    """one of the agent's own transitions, from one of its turns to the next"""

    state: np.ndarray
    mask: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    next_mask: np.ndarray
    terminal: bool


def discounted_returns(rewards, gamma) -> np.ndarray:
    """
    R_t = r_t + gamma R_{t+1}, computed backwards

    >>> discounted_returns([-0.01, -0.01, 1.0], 1.0).round(6).tolist()
    [0.98, 0.99, 1.0]
    >>> discounted_returns([-0.01, -0.01, 1.0], 0.99).round(6).tolist()
    [0.9602, 0.98, 1.0]
    """
    returns = np.zeros(len(rewards), dtype=np.float64)
    running = 0.0
    for t in reversed(range(len(rewards))):
        running = rewards[t] + gamma * running
        returns[t] = running
    return returns


class EpsilonSchedule:
    """
    multiplicative decay per policy update, floored at `minimum`

    >>> s = EpsilonSchedule(1.0, 0.5, 0.5)
    >>> s.step(), s.step()
    (0.5, 0.5)
    """

    def __init__(self, start=1.0, minimum=0.1, decay=0.995):
        if not 0.0 <= minimum <= 1.0 or not 0.0 < decay <= 1.0:
            raise ConfigurationError(f"bad epsilon schedule: minimum {minimum}, decay {decay}")
        self.start = start
        self.minimum = minimum
        self.decay = decay
        self.value = max(start, minimum)

    def step(self):
        self.value = max(self.minimum, self.value * self.decay)
        return self.value

    @classmethod
    def from_settings(cls, settings):
        return cls(settings["start"], settings["minimum"], settings["decay"])


class ReplayBuffer:
    """ring buffer of Experience; a batch is drawn uniformly without replacement"""

    def __init__(self, capacity):
        if capacity <= 0:
            raise ConfigurationError(f"replay capacity must be positive, got {capacity}")
        self.capacity = capacity
        self._items: List[Experience] = []
        self._next = 0

    def __len__(self):
        return len(self._items)

    def push(self, experience: Experience):
        if len(self._items) < self.capacity:
            self._items.append(experience)
        else:
            self._items[self._next] = experience
        self._next = (self._next + 1) % self.capacity

    def sample(self, batch_size, rng) -> List[Experience]:
        indexes = rng.choice(len(self._items), size=batch_size, replace=False)
        return [self._items[i] for i in indexes]


class KlController:
    """
    beta doubles when the KL overshoots 1.5 x target and halves under target / 1.5,
    kept within [MIN_BETA, MAX_BETA]

    >>> kl = KlController(beta=1.0, kl_target=0.01)
    >>> kl.update(0.2), kl.update(0.001)
    (2.0, 1.0)
    """

    MIN_BETA = 1e-8
    MAX_BETA = 1e8

    def __init__(self, beta=1.0, kl_target=0.01):
        if beta <= 0 or kl_target <= 0:
            raise ConfigurationError(
                f"beta and kl_target must be positive, got {beta} and {kl_target}"
            )
        self.beta = beta
        self.kl_target = kl_target

    def update(self, kl):
        if kl > 1.5 * self.kl_target:
            self.beta = min(self.MAX_BETA, self.beta * 2.0)
        elif kl < self.kl_target / 1.5:
            self.beta = max(self.MIN_BETA, self.beta / 2.0)
        return self.beta


def stack(experiences, attr, dtype=np.float64):
    return np.asarray([getattr(e, attr) for e in experiences], dtype=dtype)


class Agent(ABC):
    """
    A player. `act` picks an index of the 200-slot catalog that the mask
    allows; learners also consume their own transitions.
    """

    kind = "agent"

    def __init__(self, name=None, seed=0):
        self.name = name or self.kind
        self.seed = int(seed)
        self.learning = True
        # raw 200-slot outputs of the last act() call, for the confidence trace
        self.last_outputs: Optional[np.ndarray] = None

    @abstractmethod
    def act(self, state, mask, rng) -> int:
        pass

    def record(self, experience: Experience):
        pass

    def end_of_match(self, positions):
        pass

    def train_step(self):
        return None

    @property
    def is_learner(self):
        return False

    def set_learning(self, flag):
        self.learning = bool(flag)
        return self

    def leftovers(self):
        """id -> empty stand-in, for collected experience a frozen copy drops"""
        return {}

    def clone(self, name=None, learning=None):
        memo = self.leftovers() if learning is False else {}
        other = copy.deepcopy(self, memo)
        if name is not None:
            other.name = name
        if learning is not None:
            other.set_learning(learning)
        return other

    def __repr__(self):
        return f"<{type(self).__name__} {self.name}>"


class LearnerAgent(Agent):
    """an agent with networks, an epsilon schedule and a weight file"""

    def __init__(self, settings, seed=0, name=None):
        super().__init__(name, seed)
        # plain dicts only, so agents deep-copy and serialise cleanly
        self.settings = json.loads(json.dumps(settings))
        self.rng = np.random.default_rng(self.seed)
        self.epsilon = EpsilonSchedule.from_settings(self.settings["epsilon"])
        self.updates = 0

    @property
    def is_learner(self):
        return True

    @property
    def gamma(self):
        return self.settings["gamma"]

    def networks(self) -> Dict[str, Network]:
        raise NotImplementedError

    def extra_state(self):
        return {}

    def restore_state(self, state):
        self.epsilon.value = state.get("epsilon", self.epsilon.value)
        self.updates = state.get("updates", 0)

    def save(self, path):
        state = {
            "settings": self.settings,
            "seed": self.seed,
            "name": self.name,
            "epsilon": self.epsilon.value,
            "updates": self.updates,
            **self.extra_state(),
        }
        write_weight_file(path, self.kind, self.networks(), state)

    def policy_action(self, logits, mask, rng):
        """
        Epsilon-greedy choice for policy learners: while training, a uniformly
        random allowed slot with probability epsilon, else a draw from the
        masked policy; when frozen, a draw (or the argmax with greedy_eval).
        """
        if self.learning:
            if rng.random() < self.epsilon.value:
                return masked_uniform(mask, rng)
        elif self.settings.get("greedy_eval"):
            return masked_argmax(logits, mask)
        return masked_sample(masked_softmax(logits, mask), mask, rng)
