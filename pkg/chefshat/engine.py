"""
The Chef's Hat rules as a deterministic state machine.

A match goes: shuffle, deal, roles from the previous finishing order, special
action, card exchange, golden-11 lead, then pizzas until three players have
emptied their hands. `MatchState` values are immutable; `apply_move` returns
a new state.

`legal_moves_oracle` enumerates the whole move grammar and filters it with the
same rule checks `apply_move` enforces. It is the reference the 200-slot mask
in `chefshat.actions` is tested against.
"""

import enum
import hashlib
from dataclasses import dataclass, field, replace
from typing import Callable, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from .cards import (
    DECK_SIZE,
    HAND_SIZE,
    JOKER,
    MAX_FACE,
    MIN_FACE,
    NUM_JOKERS,
    NUM_SEATS,
    ROLE_ORDER,
    Card,
    ChefsHatError,
    Hand,
    InvalidArgumentError,
    Role,
    deal,
    face_counts,
    new_shuffled_deck,
)
from .jsonutil import json_dumps
from .seeding import make_rng

__all__ = [
    "MoveKind",
    "Move",
    "SpecialAction",
    "Violation",
    "RuleViolation",
    "PreconditionError",
    "CorruptedStateError",
    "MatchState",
    "MatchRecord",
    "assign_roles",
    "check_special_action",
    "exchange_cards",
    "highest_cards",
    "initial_player",
    "new_match",
    "apply_move",
    "check_move",
    "legal_moves_oracle",
    "observe",
    "state_digest",
    "replay_match",
    "WIN_REWARD",
    "STEP_REWARD",
    "OBSERVATION_SIZE",
]

WIN_REWARD = 1.0
STEP_REWARD = -0.01

HAND_SLOTS = HAND_SIZE
BOARD_SLOTS = MAX_FACE
OBSERVATION_SIZE = HAND_SLOTS + BOARD_SLOTS  # 28
OBSERVATION_SCALE = 13.0


class PreconditionError(ChefsHatError):
    pass


class CorruptedStateError(ChefsHatError):
    pass


class Violation(enum.Enum):
    WRONG_TURN = "wrong_turn"
    VALUE_NOT_LOWER = "value_not_lower"
    INSUFFICIENT_COPIES = "insufficient_copies"
    QUANTITY_TOO_SMALL = "quantity_too_small"
    FIRST_ACTION_NOT_ELEVEN = "first_action_not_eleven"
    PASS_ON_FIRST_ACTION = "pass_on_first_action"
    MALFORMED_MOVE = "malformed_move"
    MATCH_OVER = "match_over"
    INACTIVE_SEAT = "inactive_seat"
    ALREADY_PASSED = "already_passed"


class RuleViolation(ChefsHatError):
    def __init__(self, reason: Violation, seat: int, move: "Move"):
        super().__init__(f"seat {seat} cannot play {move}: {reason.value}")
        self.reason = reason
        self.seat = seat
        self.move = move


class MoveKind(enum.Enum):
    PASS = "pass"
    DISCARD = "discard"
    JOKERS_ALONE = "jokers_alone"


@dataclass(frozen=True)
class Move:
    """
    A player's action. For JOKERS_ALONE the number of jokers is in `jokers`.

    >>> str(Move.discard(5, 2, 1))
    'discard 2x5+J'
    >>> Move.discard(5, 2, 1).total
    3
    """

    kind: MoveKind
    face: int = 0
    copies: int = 0
    jokers: int = 0

    @classmethod
    def pass_(cls):
        return cls(MoveKind.PASS)

    @classmethod
    def discard(cls, face, copies, jokers=0):
        return cls(MoveKind.DISCARD, face, copies, jokers)

    @classmethod
    def jokers_alone(cls, count):
        return cls(MoveKind.JOKERS_ALONE, 0, 0, count)

    @property
    def is_pass(self):
        return self.kind is MoveKind.PASS

    @property
    def total(self):
        """number of cards laid down"""
        return self.copies + self.jokers

    @property
    def value(self):
        """the face value the discard counts as"""
        if self.kind is MoveKind.JOKERS_ALONE:
            return JOKER
        return self.face

    def is_well_formed(self):
        if self.kind is MoveKind.PASS:
            return self.face == self.copies == self.jokers == 0
        if self.kind is MoveKind.JOKERS_ALONE:
            return self.face == self.copies == 0 and 1 <= self.jokers <= NUM_JOKERS
        return (
            MIN_FACE <= self.face <= MAX_FACE
            and 1 <= self.copies <= self.face
            and self.jokers in (0, 1)
        )

    def to_dict(self):
        return {
            "kind": self.kind.value,
            "face": self.face,
            "copies": self.copies,
            "jokers": self.jokers,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(MoveKind(d["kind"]), d["face"], d["copies"], d["jokers"])

    def __str__(self):
        if self.kind is MoveKind.PASS:
            return "pass"
        if self.kind is MoveKind.JOKERS_ALONE:
            if not self.jokers:
                return "jokers alone (all held)"
            return f"jokers alone x{self.jokers}"
        suffix = "+J" if self.jokers else ""
        return f"discard {self.copies}x{self.face}{suffix}"


class SpecialAction(enum.Enum):
    NONE = "no_special"
    FOOD_FIGHT = "food_fight"
    DINNER_IS_SERVED = "dinner_is_served"


@dataclass(frozen=True)
class MatchState:
    hands: Tuple[Hand, ...]
    board: Tuple[Card, ...] = ()
    roles: Tuple[Role, ...] = (Role.NONE,) * NUM_SEATS
    turn: int = 0
    passed: Tuple[bool, ...] = (False,) * NUM_SEATS
    finished_order: Tuple[int, ...] = ()
    first_action_pending: bool = True
    special: SpecialAction = SpecialAction.NONE
    turn_counter: int = 0
    last_discarder: Optional[int] = None
    # cards already cleared by making pizzas
    pizza_cards: int = 0
    pizzas: int = 0

    @property
    def is_over(self):
        return len(self.finished_order) == NUM_SEATS

    def is_active(self, seat):
        return not self.is_over and seat not in self.finished_order

    @property
    def board_value(self):
        """face value of the current discard group, None on an empty board"""
        if not self.board:
            return None
        faces = [c.face for c in self.board if not c.is_joker]
        return faces[0] if faces else JOKER

    @property
    def board_count(self):
        return len(self.board)

    def card_total(self):
        return sum(len(h) for h in self.hands) + len(self.board) + self.pizza_cards

    def to_dict(self):
        return {
            "hands": [[c.face for c in h] for h in self.hands],
            "golden": _golden_seat(self.hands),
            "board": [c.face for c in self.board],
            "roles": [r.value for r in self.roles],
            "turn": self.turn,
            "passed": list(self.passed),
            "finished_order": list(self.finished_order),
            "first_action_pending": self.first_action_pending,
            "special": self.special.value,
            "turn_counter": self.turn_counter,
            "last_discarder": self.last_discarder,
            "pizza_cards": self.pizza_cards,
            "pizzas": self.pizzas,
        }


@dataclass
class MatchRecord:
    seed: int
    previous_positions: Tuple[int, ...] = ()
    moves: List[Tuple[int, Move]] = field(default_factory=list)
    finish_positions: Tuple[int, ...] = ()
    per_step_rewards: List[List[float]] = field(
        default_factory=lambda: [[] for _ in range(NUM_SEATS)]
    )
    roles: Tuple[Role, ...] = (Role.NONE,) * NUM_SEATS
    special: SpecialAction = SpecialAction.NONE

    @property
    def winner(self):
        return self.finish_positions[0]

    def reward_sums(self):
        return [sum(r) for r in self.per_step_rewards]

    def action_counts(self):
        return [len(r) for r in self.per_step_rewards]

    def check_reward_identity(self, tol=1e-9):
        """True when the winner got 1 - 0.01(k-1) and everyone else -0.01 k"""
        for seat, total in enumerate(self.reward_sums()):
            k = len(self.per_step_rewards[seat])
            if seat == self.winner:
                expected = WIN_REWARD + STEP_REWARD * (k - 1)
            else:
                expected = STEP_REWARD * k
            if abs(total - expected) > tol:
                return False
        return True


def assign_roles(previous_positions: Sequence[int]) -> Tuple[Role, ...]:
    """
    >>> [r.value for r in assign_roles([2, 0, 3, 1])]
    ['sous_chef', 'dishwasher', 'chef', 'waiter']
    >>> assign_roles([]) == (Role.NONE,) * 4
    True
    """
    if not previous_positions:
        return (Role.NONE,) * NUM_SEATS
    if sorted(previous_positions) != list(range(NUM_SEATS)):
        raise InvalidArgumentError(
            f"previous positions {list(previous_positions)} are not a permutation"
        )
    roles = [Role.NONE] * NUM_SEATS
    for position, seat in enumerate(previous_positions):
        roles[seat] = ROLE_ORDER[position]
    return tuple(roles)


_INVERTED = {
    Role.CHEF: Role.DISHWASHER,
    Role.SOUS_CHEF: Role.WAITER,
    Role.WAITER: Role.SOUS_CHEF,
    Role.DISHWASHER: Role.CHEF,
    Role.NONE: Role.NONE,
}


def check_special_action(hands, roles, rng=None, probability=1.0):
    """
    Returns (special action, roles after it). A Food Fight inverts the roles.

    The two-joker holder evokes the action with `probability`; the random
    source is only drawn from when that is below 1.
    """
    if any(r is Role.NONE for r in roles):
        return SpecialAction.NONE, tuple(roles)
    holder = None
    for seat, hand in enumerate(hands):
        if face_counts(hand)[JOKER] == NUM_JOKERS:
            holder = seat
            break
    if holder is None:
        return SpecialAction.NONE, tuple(roles)
    if probability < 1.0:
        if rng is None:
            raise PreconditionError("a random source is needed to evoke with p < 1")
        if rng.random() >= probability:
            return SpecialAction.NONE, tuple(roles)
    if roles[holder] is Role.DISHWASHER:
        return SpecialAction.FOOD_FIGHT, tuple(_INVERTED[r] for r in roles)
    return SpecialAction.DINNER_IS_SERVED, tuple(roles)


def highest_cards(hand: Sequence[Card], count: int) -> List[Card]:
    """
    Default return policy: give back the own highest face values.

    >>> [str(c) for c in highest_cards([Card(2), Card(9), Card(4)], 2)]
    ['4', '9']
    """
    return sorted(hand)[-count:]


ReturnPolicy = Callable[[Sequence[Card], int], List[Card]]


def _without(hand, cards):
    rest = list(hand)
    for card in cards:
        rest.remove(card)
    return rest


def exchange_cards(hands, roles, special, return_policy: ReturnPolicy = None):
    """
    Dishwasher gives its two highest cards to the Chef, the Waiter its lowest
    to the Sous-Chef; the receivers return as many cards chosen by
    `return_policy` from the hand they held before receiving.
    """
    if special is SpecialAction.DINNER_IS_SERVED:
        return tuple(hands)
    if any(r is Role.NONE for r in roles):
        raise PreconditionError("card exchange needs assigned roles")
    if return_policy is None:
        return_policy = highest_cards
    seat_of = {role: seat for seat, role in enumerate(roles)}
    new_hands = [list(h) for h in hands]

    for giver_role, receiver_role, count, pick in (
        (Role.DISHWASHER, Role.CHEF, 2, lambda h, n: sorted(h)[-n:]),
        (Role.WAITER, Role.SOUS_CHEF, 1, lambda h, n: sorted(h)[:n]),
    ):
        giver, receiver = seat_of[giver_role], seat_of[receiver_role]
        given = pick(new_hands[giver], count)
        returned = list(return_policy(tuple(new_hands[receiver]), count))
        if len(returned) != count:
            raise PreconditionError(
                f"return policy gave {len(returned)} cards, expected {count}"
            )
        new_hands[giver] = _without(new_hands[giver], given) + returned
        new_hands[receiver] = _without(new_hands[receiver], returned) + given

    return tuple(tuple(sorted(h)) for h in new_hands)


def _golden_seat(hands):
    for seat, hand in enumerate(hands):
        if any(c.golden for c in hand):
            return seat
    return None


def initial_player(hands) -> int:
    seat = _golden_seat(hands)
    if seat is None:
        raise CorruptedStateError("no hand holds the golden 11")
    return seat


def new_match(
    previous_positions=(), seed=0, special_probability=1.0, return_policy=None
) -> MatchState:
    """Everything that happens before the first discard, driven by one seed."""
    rng = make_rng(seed, "deck")
    hands = deal(new_shuffled_deck(rng))
    roles = assign_roles(previous_positions)
    special, roles = check_special_action(hands, roles, rng, special_probability)
    if roles[0] is not Role.NONE:
        hands = exchange_cards(hands, roles, special, return_policy)
    return MatchState(
        hands=hands,
        roles=roles,
        turn=initial_player(hands),
        special=special,
        first_action_pending=True,
    )


def check_move(state: MatchState, seat: int, move: Move) -> Optional[Violation]:
    """Everything but the turn order; None when `move` is allowed for `seat`."""
    if state.is_over:
        return Violation.MATCH_OVER
    if seat in state.finished_order:
        return Violation.INACTIVE_SEAT
    if state.passed[seat]:
        return Violation.ALREADY_PASSED
    if not move.is_well_formed():
        return Violation.MALFORMED_MOVE
    if move.kind is MoveKind.PASS:
        if state.first_action_pending:
            return Violation.PASS_ON_FIRST_ACTION
        return None

    counts = face_counts(state.hands[seat])
    if counts[JOKER] < move.jokers:
        return Violation.INSUFFICIENT_COPIES
    if move.kind is MoveKind.DISCARD and counts[move.face] < move.copies:
        return Violation.INSUFFICIENT_COPIES
    if state.first_action_pending:
        if move.kind is not MoveKind.DISCARD or move.face != MAX_FACE:
            return Violation.FIRST_ACTION_NOT_ELEVEN
    if state.board:
        if move.value >= state.board_value:
            return Violation.VALUE_NOT_LOWER
        if move.total < state.board_count:
            return Violation.QUANTITY_TOO_SMALL
    return None


def _take(hand, move):
    """split hand into (rest, played) for a discard"""
    rest = list(hand)
    played = []
    for face, count in ((move.face, move.copies), (JOKER, move.jokers)):
        for _ in range(count):
            card = next(c for c in rest if c.face == face)
            rest.remove(card)
            played.append(card)
    return tuple(rest), tuple(sorted(played))


def _next_seat(start, eligible):
    """first seat clockwise after `start` (wrapping round to it) in eligible"""
    for step in range(1, NUM_SEATS + 1):
        seat = (start + step) % NUM_SEATS
        if seat in eligible:
            return seat
    raise CorruptedStateError("no eligible seat to move to")


def apply_move(state: MatchState, seat: int, move: Move) -> MatchState:
    if state.is_over:
        raise RuleViolation(Violation.MATCH_OVER, seat, move)
    if seat != state.turn:
        raise RuleViolation(Violation.WRONG_TURN, seat, move)
    violation = check_move(state, seat, move)
    if violation is not None:
        raise RuleViolation(violation, seat, move)

    hands = list(state.hands)
    passed = list(state.passed)
    board = state.board
    finished = list(state.finished_order)
    last_discarder = state.last_discarder
    first_action_pending = state.first_action_pending
    pizza_cards = state.pizza_cards

    if move.is_pass:
        passed[seat] = True
    else:
        # the covered group goes to the pizza pile
        pizza_cards += len(board)
        hands[seat], board = _take(hands[seat], move)
        last_discarder = seat
        first_action_pending = False
        if not hands[seat]:
            finished.append(seat)

    common = dict(
        hands=tuple(hands),
        pizza_cards=pizza_cards,
        last_discarder=last_discarder,
        first_action_pending=first_action_pending,
        turn_counter=state.turn_counter + 1,
    )

    if len(finished) == NUM_SEATS - 1:
        (last,) = [s for s in range(NUM_SEATS) if s not in finished]
        finished.append(last)
        return replace(
            state, board=board, passed=tuple(passed), finished_order=tuple(finished),
            **common,
        )

    active = [s for s in range(NUM_SEATS) if s not in finished]
    waiting = [s for s in active if not passed[s]]
    if waiting:
        return replace(
            state,
            board=board,
            passed=tuple(passed),
            finished_order=tuple(finished),
            turn=_next_seat(seat, waiting),
            **common,
        )

    # everyone still in has passed: make the pizza
    leader = last_discarder
    if leader in finished:
        leader = _next_seat(leader, active)
    return replace(
        state,
        board=(),
        passed=(False,) * NUM_SEATS,
        finished_order=tuple(finished),
        turn=leader,
        pizzas=state.pizzas + 1,
        **dict(common, pizza_cards=pizza_cards + len(board)),
    )


def _move_grammar():
    yield Move.pass_()
    for face in range(MIN_FACE, MAX_FACE + 1):
        for copies in range(1, face + 1):
            for jokers in (0, 1):
                yield Move.discard(face, copies, jokers)
    for count in range(1, NUM_JOKERS + 1):
        yield Move.jokers_alone(count)


MOVE_GRAMMAR = tuple(_move_grammar())


def legal_moves_oracle(state: MatchState, seat: int) -> FrozenSet[Move]:
    """brute force: every move of the grammar that the rules accept"""
    if not state.is_active(seat):
        return frozenset()
    return frozenset(m for m in MOVE_GRAMMAR if check_move(state, seat, m) is None)


def observe(state: MatchState, seat: int) -> np.ndarray:
    """
    28 values in [0, 1): the seat's hand (17 slots) and the board (11 slots),
    face values ascending, jokers as 12, zero padded, divided by 13.
    """
    vector = np.zeros(OBSERVATION_SIZE, dtype=np.float64)
    hand = sorted(c.face for c in state.hands[seat])[:HAND_SLOTS]
    board = sorted(c.face for c in state.board)[:BOARD_SLOTS]
    vector[: len(hand)] = hand
    vector[HAND_SLOTS : HAND_SLOTS + len(board)] = board
    return vector / OBSERVATION_SCALE


def state_digest(state: MatchState) -> str:
    return hashlib.sha1(json_dumps(state.to_dict()).encode("utf-8")).hexdigest()


def replay_match(
    record: MatchRecord, special_probability=1.0, return_policy=None
) -> List[MatchState]:
    """
    Rebuild the state trajectory of a recorded match, initial state first.
    Raises CorruptedStateError when the moves do not reproduce the record.
    """
    state = new_match(
        record.previous_positions, record.seed, special_probability, return_policy
    )
    trajectory = [state]
    for seat, move in record.moves:
        try:
            state = apply_move(state, seat, move)
        except RuleViolation as e:
            raise CorruptedStateError(f"replay of seed {record.seed} diverged: {e}")
        trajectory.append(state)
    if tuple(state.finished_order) != tuple(record.finish_positions):
        raise CorruptedStateError(
            f"replay of seed {record.seed} finished {list(state.finished_order)}, "
            f"record says {list(record.finish_positions)}"
        )
    if state.card_total() != DECK_SIZE:
        raise CorruptedStateError("cards were lost during replay")
    return trajectory


if __name__ == "__main__":
    import doctest

    doctest.testmod()
