"""
Matches, series and the three experiments: learners against random players,
self-play over generations, and the learners against each other.

All randomness comes from the master seed through `chefshat.seeding`, so a
rerun with the same seed plays the same cards and the same moves.
"""

import hashlib
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .actions import bind, possible_actions
from .agents import Agent, Experience, RandomAgent, build_agent
from .cards import NUM_SEATS, ChefsHatError, ConfigurationError, InvalidArgumentError, format_hand
from .engine import (
    STEP_REWARD,
    WIN_REWARD,
    MatchRecord,
    PreconditionError,
    CorruptedStateError,
    RuleViolation,
    apply_move,
    new_match,
    observe,
)
from .jsonutil import json_dumps
from .log import get_logger
from .neural import network_to_dict
from .seeding import make_rng, split_seed
from .timer import Timer

__all__ = [
    "MatchFault",
    "SeriesResult",
    "EvaluationSummary",
    "GenerationPool",
    "ExperimentConfig",
    "play_match",
    "play_series",
    "evaluate",
    "rank_agents",
    "draw_opponent_categories",
    "run_vs_random",
    "run_self_play",
    "run_generation_head_to_head",
    "run_vs_others",
    "weights_digest",
    "PROTOCOLS",
]

logger = get_logger("chefshat.arena")

PROTOCOLS = ("vs_random", "vs_myself", "vs_others")
OPPONENT_CATEGORIES = ("pool", "fresh", "random")


class MatchFault(ChefsHatError):
    """an agent picked something the engine refused; carries the match so far"""

    def __init__(self, message, record: MatchRecord):
        super().__init__(message)
        self.record = record


@dataclass
class SeriesResult:
    wins: List[int]
    positions_history: List[tuple]
    reward_sums: List[float]
    games: int
    seed: int = 0

    @classmethod
    def empty(cls, seed=0):
        return cls([0] * NUM_SEATS, [], [0.0] * NUM_SEATS, 0, seed)

    def add(self, record: MatchRecord):
        self.wins[record.winner] += 1
        self.positions_history.append(tuple(record.finish_positions))
        for seat, total in enumerate(record.reward_sums()):
            self.reward_sums[seat] += total
        self.games += 1

    def averaged_reward(self, seat):
        return self.reward_sums[seat] / self.games if self.games else 0.0


@dataclass
class EvaluationSummary:
    """win counts of every seat over R series of G games"""

    agents: List[str]
    games: int
    wins_per_run: List[List[int]] = field(default_factory=list)
    seeds: List[int] = field(default_factory=list)

    @property
    def runs(self):
        return len(self.wins_per_run)

    @property
    def means(self) -> List[float]:
        return np.asarray(self.wins_per_run, dtype=np.float64).mean(axis=0).tolist()

    @property
    def stds(self) -> List[float]:
        return np.asarray(self.wins_per_run, dtype=np.float64).std(axis=0).tolist()

    def per_hundred(self) -> List[float]:
        """mean wins of each seat scaled to 100 games"""
        return [100.0 * m / self.games for m in self.means]

    def rows(self, experiment, phase):
        """
        results.csv rows, one per agent and run; `mean` and `std` count wins
        per series of `games` games, not per 100
        """
        means, stds = self.means, self.stds
        rows = []
        for seat, name in enumerate(self.agents):
            for run, (wins, seed) in enumerate(zip(self.wins_per_run, self.seeds)):
                rows.append(
                    {
                        "experiment": experiment,
                        "phase": phase,
                        "agent": name,
                        "run": run,
                        "wins": wins[seat],
                        "mean": round(means[seat], 6),
                        "std": round(stds[seat], 6),
                        "seed": seed,
                    }
                )
        return rows

    def __str__(self):
        scale = 100.0 / self.games
        return ", ".join(
            f"{name} {mean:.1f} +- {std * scale:.2f} per 100"
            for name, mean, std in zip(self.agents, self.per_hundred(), self.stds)
        )


class GenerationPool:
    """frozen snapshots of the best and second-best agent of each generation"""

    def __init__(self):
        self.snapshots: List[tuple] = []  # (generation, tag, agent)
        self.champions: List[Agent] = []
        self.generation = -1

    def __len__(self):
        return len(self.snapshots)

    def append(self, generation, best: Agent, second: Agent, champion: Agent):
        if generation != self.generation + 1:
            raise InvalidArgumentError(
                f"generation {generation} appended after {self.generation}"
            )
        self.snapshots.append((generation, "best", best.clone(learning=False)))
        self.snapshots.append((generation, "second", second.clone(learning=False)))
        self.champions.append(champion.clone(name=f"gen{generation}", learning=False))
        self.generation = generation

    def draw(self, rng) -> Agent:
        _, _, agent = self.snapshots[rng.integers(len(self.snapshots))]
        return agent.clone(learning=False)

    def champion(self, generation) -> Agent:
        return self.champions[generation]


@dataclass
class ExperimentConfig:
    protocol: str = "vs_random"
    training_games: int = 1000
    eval_runs: int = 10
    eval_games: int = 100
    generations: int = 10
    generation_games: int = 200
    validation_games: int = 200
    seed: int = 2020
    carry_roles: bool = True
    special_probability: float = 1.0

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ConfigurationError(f"unknown protocol {self.protocol!r}")
        if self.training_games < 0:
            raise ConfigurationError("training_games must not be negative")
        for name in ("eval_runs", "eval_games", "generations",
                     "generation_games", "validation_games"):
            if getattr(self, name) <= 0:
                raise ConfigurationError(f"{name} must be positive")

    @classmethod
    def from_conf(cls, conf, protocol, **overrides):
        e = conf.experiment
        values = dict(
            protocol=protocol,
            training_games=e.training_games,
            eval_runs=e.eval_runs,
            eval_games=e.eval_games,
            generations=e.generations,
            generation_games=e.generation_games,
            validation_games=e.validation_games,
            seed=conf.seed,
            carry_roles=e.carry_roles,
            special_probability=conf.game.special_probability,
        )
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)


def _check_lineup(agents):
    if len(agents) != NUM_SEATS:
        raise InvalidArgumentError(f"a match needs {NUM_SEATS} agents, got {len(agents)}")
    if len({id(a) for a in agents}) != NUM_SEATS:
        raise InvalidArgumentError("the same agent object sits at two seats")


def play_match(
    agents: Sequence[Agent],
    previous_positions=(),
    seed=0,
    learn=False,
    telemetry=None,
    special_probability=1.0,
) -> MatchRecord:
    """
    One match from the deal to the last finisher. With `learn`, each agent is
    fed its own transitions, from one of its turns to its next, the last one
    terminal.
    """
    _check_lineup(agents)
    state = new_match(previous_positions, seed, special_probability)
    rng = make_rng(seed, "agents")
    record = MatchRecord(
        seed=seed,
        previous_positions=tuple(previous_positions),
        roles=state.roles,
        special=state.special,
    )
    match_index = None
    if telemetry is not None:
        match_index = telemetry.begin_match(seed, previous_positions, special_probability)
    pending = [None] * NUM_SEATS

    while not state.is_over:
        seat = state.turn
        agent = agents[seat]
        obs = observe(state, seat)
        mask = possible_actions(state, seat)
        if learn and pending[seat] is not None:
            agent.record(Experience(*pending[seat], obs, mask, False))
            pending[seat] = None

        index = agent.act(obs, mask, rng)
        if not 0 <= index < len(mask) or not mask[index]:
            raise MatchFault(
                f"{agent} picked slot {index}, not allowed with hand "
                f"[{format_hand(state.hands[seat])}]",
                record,
            )
        move = bind(index, state, seat)
        try:
            after = apply_move(state, seat, move)
        except RuleViolation as e:
            raise MatchFault(f"{agent}: {e} with hand [{format_hand(state.hands[seat])}]", record)

        won = not state.finished_order and after.finished_order[:1] == (seat,)
        reward = WIN_REWARD if won else STEP_REWARD
        record.moves.append((seat, move))
        record.per_step_rewards[seat].append(reward)
        pending[seat] = (obs, mask, index, reward)
        if telemetry is not None:
            telemetry.step(match_index, seat, agent, index, mask, move, state, after, reward)
        state = after

    record.finish_positions = tuple(state.finished_order)
    if learn:
        for seat, agent in enumerate(agents):
            if pending[seat] is not None:
                obs = observe(state, seat)
                agent.record(
                    Experience(*pending[seat], obs, np.zeros_like(pending[seat][1]), True)
                )
            agent.end_of_match(record.finish_positions)
    logger.debug(
        "match seed %d: finish %s in %d moves",
        seed,
        list(record.finish_positions),
        len(record.moves),
    )
    return record


def play_series(
    agents,
    games,
    seed,
    learn=False,
    telemetry=None,
    carry_roles=True,
    special_probability=1.0,
) -> SeriesResult:
    """`games` matches in a row, roles carried from one to the next"""
    result = SeriesResult.empty(seed)
    previous = ()
    for i in range(games):
        record = play_match(
            agents,
            previous,
            split_seed(seed, "match", i),
            learn=learn,
            telemetry=telemetry,
            special_probability=special_probability,
        )
        result.add(record)
        if carry_roles:
            previous = record.finish_positions
    if telemetry is not None:
        telemetry.flush()
    return result


def weights_digest(agent: Agent) -> Optional[str]:
    if not agent.is_learner:
        return None
    doc = {name: network_to_dict(net) for name, net in agent.networks().items()}
    return hashlib.sha1(json_dumps(doc).encode("utf-8")).hexdigest()


def evaluate(agents, runs, games, seed, telemetry=None, carry_roles=True,
             special_probability=1.0) -> EvaluationSummary:
    """
    R independent series of G games with learning off. The weights are hashed
    before and after, evaluation must leave them alone.
    """
    _check_lineup(agents)
    learning = [a.name for a in agents if a.is_learner and a.learning]
    if learning:
        raise PreconditionError(f"evaluate with learning on for {learning}")
    before = [weights_digest(a) for a in agents]

    summary = EvaluationSummary(agents=[a.name for a in agents], games=games)
    with Timer(f"evaluate-{runs}x{games}", games=runs * games, logger=logger):
        for run in range(runs):
            series_seed = split_seed(seed, "series", run)
            result = play_series(
                agents,
                games,
                series_seed,
                learn=False,
                telemetry=telemetry,
                carry_roles=carry_roles,
                special_probability=special_probability,
            )
            summary.wins_per_run.append(list(result.wins))
            summary.seeds.append(series_seed)

    if [weights_digest(a) for a in agents] != before:
        raise CorruptedStateError("weights changed during evaluation")
    logger.info("evaluation: %s", summary)
    return summary


def rank_agents(result: SeriesResult) -> List[int]:
    """
    seats by averaged summed reward, then wins, then seat index

    >>> r = SeriesResult([3, 3, 0, 0], [], [1.0, 2.0, -1.0, -1.0], 6)
    >>> rank_agents(r)
    [1, 0, 2, 3]
    """
    return sorted(
        range(NUM_SEATS),
        key=lambda s: (-result.averaged_reward(s), -result.wins[s], s),
    )


def _train(agents, config, games, seed, telemetry, label):
    for agent in agents:
        agent.set_learning(True)
    with Timer(label, games=games, logger=logger):
        result = play_series(
            agents,
            games,
            seed,
            learn=True,
            telemetry=telemetry,
            carry_roles=config.carry_roles,
            special_probability=config.special_probability,
        )
    for agent in agents:
        agent.set_learning(False)
    return result


def _evaluate(agents, config, seed, telemetry):
    return evaluate(
        agents,
        config.eval_runs,
        config.eval_games,
        seed,
        telemetry=telemetry,
        carry_roles=config.carry_roles,
        special_probability=config.special_probability,
    )


def _randoms(n, start=1):
    return [RandomAgent(name=f"random{i}") for i in range(start, start + n)]


def run_vs_random(kind, config: ExperimentConfig, conf=None, telemetry=None, learner=None):
    """
    Train one learner against three random agents, then freeze it and
    evaluate. Returns (learner, summary).
    """
    if learner is None:
        learner = build_agent(kind, conf, seed=split_seed(config.seed, "agent", kind), name=kind)
    agents = [learner] + _randoms(3)
    logger.info("%s vs random: %d training games", learner.name, config.training_games)
    _train(agents, config, config.training_games, split_seed(config.seed, "train"),
           telemetry, f"train-{learner.name}")
    summary = _evaluate(agents, config, split_seed(config.seed, "eval"), telemetry)
    return learner, summary


def draw_opponent_categories(rng, slots=NUM_SEATS - 1):
    """each slot independently and uniformly one of pool, fresh or random"""
    return [OPPONENT_CATEGORIES[rng.integers(len(OPPONENT_CATEGORIES))] for _ in range(slots)]


def _generation_lineup(kind, g, pool, config, conf, rng):
    seed = config.seed
    if g == 0:
        return [
            build_agent(kind, conf, seed=split_seed(seed, "gen", 0, "fresh", i),
                        name=f"{kind}-g0-{i}")
            for i in range(NUM_SEATS)
        ]
    agents = [pool.champion(g - 1).clone(name=f"{kind}-g{g}-0", learning=True)]
    for slot, category in enumerate(draw_opponent_categories(rng), 1):
        if category == "pool":
            agent = pool.draw(rng)
            agent.name = f"{agent.name}@g{g}-{slot}"
        elif category == "fresh":
            agent = build_agent(kind, conf, seed=split_seed(seed, "gen", g, "fresh", slot),
                                name=f"{kind}-g{g}-{slot}")
        else:
            agent = RandomAgent(name=f"random-g{g}-{slot}")
        agents.append(agent)
    return agents


def run_self_play(kind, config: ExperimentConfig, conf=None, telemetry=None) -> GenerationPool:
    """
    Each generation trains a lineup, ranks it on a frozen validation block and
    keeps the best two. The best learner seeds the next generation, the other
    seats draw from the pool, fresh agents and random agents.
    """
    pool = GenerationPool()
    rng = make_rng(config.seed, "opponents")
    for g in range(config.generations):
        agents = _generation_lineup(kind, g, pool, config, conf, rng)
        logger.info("generation %d: %s", g, [a.name for a in agents])
        # pool snapshots sit out the training, everyone else learns
        frozen = [a for a in agents if a.is_learner and not a.learning]
        trainees = [a for a in agents if a not in frozen]
        for agent in trainees:
            agent.set_learning(True)
        games = config.generation_games + config.validation_games
        with Timer(f"generation-{g}", games=games, logger=logger) as timer:
            play_series(
                agents,
                config.generation_games,
                split_seed(config.seed, "gen", g, "train"),
                learn=True,
                telemetry=telemetry,
                carry_roles=config.carry_roles,
                special_probability=config.special_probability,
            )
            timer.lap("training")
            for agent in agents:
                agent.set_learning(False)
            validation = play_series(
                agents,
                config.validation_games,
                split_seed(config.seed, "gen", g, "validate"),
                telemetry=telemetry,
                carry_roles=config.carry_roles,
                special_probability=config.special_probability,
            )
            timer.lap("validation")
        order = rank_agents(validation)
        champion = next(agents[s] for s in order if agents[s].is_learner)
        pool.append(g, agents[order[0]], agents[order[1]], champion)
        logger.info(
            "generation %d ranking: %s",
            g,
            [(agents[s].name, round(validation.averaged_reward(s), 4)) for s in order],
        )
    return pool


def run_generation_head_to_head(
    pool: GenerationPool,
    config: ExperimentConfig,
    telemetry=None,
    opponent: Optional[Agent] = None,
    generations: Optional[Sequence[int]] = None,
):
    """
    Three champions, by default the first, middle and last, frozen against a
    fourth seat: `opponent` (for instance the best agent trained against
    random players) or a random agent.
    """
    last = pool.generation
    if generations is None:
        generations = [0, last // 2, last]
    if len(generations) != NUM_SEATS - 1:
        raise InvalidArgumentError(f"pick {NUM_SEATS - 1} generations, got {list(generations)}")
    for g in generations:
        if not 0 <= g <= last:
            raise InvalidArgumentError(f"generation {g} is not in the pool (0..{last})")
    agents = [pool.champion(g).clone(name=f"gen{g}") for g in generations]
    if opponent is None:
        agents.append(RandomAgent(name="random"))
    else:
        agents.append(opponent.clone(learning=False) if opponent.is_learner else opponent)
    return _evaluate(agents, config, split_seed(config.seed, "head_to_head"), telemetry)


def run_vs_others(learners: Sequence[Agent], config: ExperimentConfig, telemetry=None):
    """
    The three learners and a random agent: evaluated, trained together, and
    evaluated again. Returns (before, after).
    """
    if len(learners) != NUM_SEATS - 1:
        raise InvalidArgumentError(f"expected {NUM_SEATS - 1} learners, got {len(learners)}")
    agents = list(learners) + [RandomAgent(name="random")]
    for agent in agents:
        agent.set_learning(False)
    before = _evaluate(agents, config, split_seed(config.seed, "before"), telemetry)
    _train(agents, config, config.training_games, split_seed(config.seed, "joint"),
           telemetry, "joint-training")
    after = _evaluate(agents, config, split_seed(config.seed, "after"), telemetry)
    return before, after
