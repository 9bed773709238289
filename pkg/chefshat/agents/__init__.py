"""
The players: a random baseline and three learners behind one interface.

>>> agent = build_agent("random", name="r1")
>>> agent.kind, agent.name, agent.is_learner
('random', 'r1', False)
"""

from ..conf import AGENT_KINDS, agent_settings, load_conf, merge_dict
from ..cards import ConfigurationError
from ..neural import WeightFileError, read_weight_file
from .a2c import A2CAgent
from .base import (
    Agent,
    EpsilonSchedule,
    Experience,
    KlController,
    LearnerAgent,
    ReplayBuffer,
    discounted_returns,
)
from .dql import DQLAgent
from .dummy import RandomAgent
from .ppo import PPOAgent

__all__ = [
    "Agent",
    "LearnerAgent",
    "RandomAgent",
    "DQLAgent",
    "A2CAgent",
    "PPOAgent",
    "Experience",
    "ReplayBuffer",
    "EpsilonSchedule",
    "KlController",
    "discounted_returns",
    "build_agent",
    "load_agent",
    "LEARNERS",
]

LEARNERS = {cls.kind: cls for cls in (DQLAgent, A2CAgent, PPOAgent)}


def build_agent(kind, conf=None, seed=0, name=None, overrides=None) -> Agent:
    """a fresh agent of `kind`, hyperparameters from `conf` (the defaults when None)"""
    if kind == RandomAgent.kind:
        return RandomAgent(name=name, seed=seed)
    if kind not in LEARNERS:
        raise ConfigurationError(
            f"unknown agent kind {kind!r}, expected random or one of {AGENT_KINDS}"
        )
    if conf is None:
        conf = load_conf()
    settings = merge_dict(agent_settings(conf, kind), overrides or {})
    return LEARNERS[kind](settings, seed=seed, name=name)


def load_agent(path, name=None) -> Agent:
    header, networks = read_weight_file(path)
    kind = header.get("agent_kind")
    if kind not in LEARNERS:
        raise WeightFileError(f"{path}: unknown agent kind {kind!r}")
    state = header.get("settings", {})
    try:
        agent = LEARNERS[kind](
            state["settings"],
            seed=state.get("seed", 0),
            name=name or state.get("name"),
            networks=networks,
        )
    except KeyError as e:
        raise WeightFileError(f"{path}: missing {e} for a {kind} agent")
    agent.restore_state(state)
    agent.set_learning(False)
    return agent
