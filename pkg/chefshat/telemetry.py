"""
What a run leaves behind: the confidence trace of the learners, the results
table and the match transcripts, plus the replay that re-verifies them.

Recording never touches a random source, so a run gives the same matches with
or without a `Telemetry` attached.
"""

import os
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np

from .actions import ContractViolation
from .cards import NUM_SEATS, ChefsHatError, InvalidArgumentError
from .engine import (
    Move,
    RuleViolation,
    STEP_REWARD,
    WIN_REWARD,
    apply_move,
    new_match,
    state_digest,
)
from .file import read_dicts_from_csv, write_dicts_to_csv
from .jsonutil import read_jsonl, write_jsonl
from .log import get_logger
from .neural import masked_softmax

__all__ = [
    "StepLog",
    "Telemetry",
    "ReplayMismatch",
    "record_step",
    "export_qtrace",
    "read_qtrace",
    "write_results",
    "read_results",
    "write_transcripts",
    "read_transcripts",
    "replay_transcripts",
    "QTRACE_FIELDS",
    "RESULT_FIELDS",
]

logger = get_logger("chefshat.telemetry")

QTRACE_FIELDS = ["match", "turn", "seat", "agent", "action_index", "confidence"]
RESULT_FIELDS = ["experiment", "phase", "agent", "run", "wins", "mean", "std", "seed"]


class ReplayMismatch(ChefsHatError):
    def __init__(self, match_index, step, message):
        super().__init__(f"match {match_index}, step {step}: {message}")
        self.match_index = match_index
        self.step = step


@dataclass(frozen=True)
class StepLog:
    match: int
    turn: int
    seat: int
    agent: str
    action_index: int
    confidence: float
    # not part of the csv trace
    allowed: Optional[int] = field(default=None, compare=False)

    def to_row(self):
        return {k: getattr(self, k) for k in QTRACE_FIELDS}

    @classmethod
    def from_row(cls, row):
        return cls(
            match=int(row["match"]),
            turn=int(row["turn"]),
            seat=int(row["seat"]),
            agent=row["agent"],
            action_index=int(row["action_index"]),
            confidence=float(row["confidence"]),
        )


def record_step(outputs, mask, chosen, match=0, turn=0, seat=0, agent="") -> StepLog:
    """
    confidence is the softmax of the outputs over the allowed slots, read at
    the chosen one

    >>> mask = np.zeros(200, dtype=bool); mask[:4] = True
    >>> record_step(np.zeros(200), mask, 2).confidence
    0.25
    """
    mask = np.asarray(mask, dtype=bool)
    if not mask[chosen]:
        raise ContractViolation(f"slot {chosen} was not allowed")
    confidence = float(masked_softmax(outputs, mask)[chosen])
    return StepLog(
        match=match,
        turn=turn,
        seat=seat,
        agent=agent,
        action_index=int(chosen),
        confidence=confidence,
        allowed=int(mask.sum()),
    )


def export_qtrace(logs: List[StepLog], path, append=False):
    if not logs:
        raise InvalidArgumentError("no steps to export")
    write_dicts_to_csv(path, QTRACE_FIELDS, (log.to_row() for log in logs), append=append)
    return path


def read_qtrace(path) -> List[StepLog]:
    return [StepLog.from_row(row) for row in read_dicts_from_csv(path, QTRACE_FIELDS)]


def write_results(path, rows):
    """rows are dicts with the RESULT_FIELDS keys, written in the given order"""
    write_dicts_to_csv(path, RESULT_FIELDS, rows)
    return path


def read_results(path):
    rows = []
    for row in read_dicts_from_csv(path, RESULT_FIELDS):
        row["run"] = int(row["run"])
        row["wins"] = int(row["wins"])
        row["mean"] = float(row["mean"])
        row["std"] = float(row["std"])
        row["seed"] = int(row["seed"])
        rows.append(row)
    return rows


class Telemetry:
    """
    Collects one transcript line per move and, for learners, one StepLog per
    action. Matches are numbered in the order they are started.

    With an `out_dir`, every `flush` (the arena calls it at the end of each
    series) appends the buffered lines to `qtrace.csv` and
    `transcripts.jsonl` there and empties the buffers. Without one the whole
    run stays in memory until `write`.
    """

    QTRACE_NAME = "qtrace.csv"
    TRANSCRIPTS_NAME = "transcripts.jsonl"

    def __init__(self, out_dir=None, trace=True, transcripts=True):
        self.out_dir = out_dir
        self.trace = trace
        self.transcripts = transcripts
        self.steps: List[StepLog] = []
        self.lines: List[dict] = []
        self.matches = 0
        self.steps_written = 0
        self.lines_written = 0
        self._current = None

    def begin_match(self, seed, previous_positions, special_probability=1.0):
        index = self.matches
        self.matches += 1
        self._current = {
            "seed": int(seed),
            "match_index": index,
            "previous_positions": list(previous_positions),
            "special_probability": special_probability,
        }
        return index

    def step(self, match_index, seat, agent, index, mask, move, before, after, reward):
        if self.trace and agent.is_learner and agent.last_outputs is not None:
            self.steps.append(
                record_step(
                    agent.last_outputs,
                    mask,
                    index,
                    match=match_index,
                    turn=before.turn_counter,
                    seat=seat,
                    agent=agent.kind,
                )
            )
        if self.transcripts:
            line = dict(self._current)
            line.update(
                step=before.turn_counter,
                seat=seat,
                action_index=int(index),
                move=move.to_dict(),
                board_after=[c.face for c in after.board],
                rewards=_step_rewards(seat, reward),
                finished=list(after.finished_order),
                state_hash=state_digest(after),
            )
            self.lines.append(line)

    @property
    def qtrace_path(self):
        return os.path.join(self.out_dir, self.QTRACE_NAME)

    @property
    def transcripts_path(self):
        return os.path.join(self.out_dir, self.TRANSCRIPTS_NAME)

    def flush(self):
        """move the buffers into the files of out_dir; a no-op without one"""
        if self.out_dir is None:
            return
        if self.steps:
            export_qtrace(self.steps, self.qtrace_path, append=self.steps_written > 0)
            self.steps_written += len(self.steps)
            self.steps = []
        if self.lines:
            write_transcripts(self.lines, self.transcripts_path, append=self.lines_written > 0)
            self.lines_written += len(self.lines)
            self.lines = []

    def write(self, out_dir=None):
        """flush what is left; returns the paths of the files written so far"""
        if out_dir is not None:
            if self.out_dir is not None and self.out_dir != out_dir:
                raise InvalidArgumentError(f"telemetry already writes to {self.out_dir}")
            self.out_dir = out_dir
        if self.out_dir is None:
            raise InvalidArgumentError("telemetry has no output directory")
        self.flush()
        written = []
        if self.steps_written:
            written.append(self.qtrace_path)
        if self.lines_written:
            written.append(self.transcripts_path)
            logger.info("%d transcript lines written to %s", self.lines_written, self.transcripts_path)
        return written


def _step_rewards(seat, reward):
    """the reward of one move, spread over the seats; only the mover's is set"""
    rewards = [0.0] * NUM_SEATS
    rewards[seat] = reward
    return rewards


def write_transcripts(lines, path, append=False):
    n = write_jsonl(path, lines, append=append)
    logger.debug("%d transcript lines written to %s", n, path)
    return path


def read_transcripts(path):
    """transcript lines grouped by match, in file order"""
    matches = OrderedDict()
    for line in read_jsonl(path):
        matches.setdefault(line["match_index"], []).append(line)
    return matches


def _replay_one(match_index, lines):
    first = lines[0]
    state = new_match(
        first["previous_positions"], first["seed"], first["special_probability"]
    )
    for line in lines:
        step = line["step"]
        if line["seed"] != first["seed"]:
            raise ReplayMismatch(match_index, step, "seed changes within the match")
        if step != state.turn_counter:
            raise ReplayMismatch(match_index, step, f"expected step {state.turn_counter}")
        move = Move.from_dict(line["move"])
        winner_before = bool(state.finished_order)
        try:
            state = apply_move(state, line["seat"], move)
        except RuleViolation as e:
            raise ReplayMismatch(match_index, step, f"illegal move: {e}")
        reward = (
            WIN_REWARD
            if not winner_before and state.finished_order[:1] == (line["seat"],)
            else STEP_REWARD
        )
        expected = _step_rewards(line["seat"], reward)
        if line["rewards"] != expected:
            raise ReplayMismatch(
                match_index, step, f"rewards {line['rewards']}, expected {expected}"
            )
        if line["board_after"] != [c.face for c in state.board]:
            raise ReplayMismatch(match_index, step, "board differs")
        if line["finished"] != list(state.finished_order):
            raise ReplayMismatch(match_index, step, "finishing order differs")
        if line["state_hash"] != state_digest(state):
            raise ReplayMismatch(match_index, step, "state hash differs")
    if not state.is_over:
        raise ReplayMismatch(match_index, state.turn_counter, "transcript ends mid-match")
    return state


def replay_transcripts(path) -> int:
    """re-run every transcribed match from its seed; returns how many verified"""
    n = 0
    for match_index, lines in read_transcripts(path).items():
        _replay_one(match_index, lines)
        n += 1
    logger.info("%d matches of %s replayed and verified", n, path)
    return n
