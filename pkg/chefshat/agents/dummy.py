from ..actions import masked_uniform
from .base import Agent


class RandomAgent(Agent):
    """picks uniformly among the allowed actions"""

    kind = "random"

    def act(self, state, mask, rng):
        return masked_uniform(mask, rng)
