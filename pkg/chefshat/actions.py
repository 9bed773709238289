"""
The fixed 200-slot action catalog, the per-state validity mask and the masked
selection rules.

Layout::

    0..120    discard q cards of face v, no joker     (q-1)*11 + (v-1)
    121..197  discard q cards of face v plus a joker  121 + (q-1)*11 + (v-1), q <= 7
    198       play every joker held, alone
    199       pass

Slots with q > v cannot occur with the deck (face v has v copies) and are never
allowed; they are the gray regions of the catalog.
"""

import hashlib

import numpy as np

from .cards import JOKER, MAX_FACE, ChefsHatError, face_counts
from .engine import MatchState, Move, MoveKind

NUM_ACTIONS = 200
PLAIN_BASE = 0
JOKER_BASE = MAX_FACE * MAX_FACE  # 121
MAX_COPIES_WITH_JOKER = 7
JOKERS_ALONE_INDEX = 198
PASS_INDEX = 199

# decode(198): play every joker held, bound to a count by `bind`
ALL_JOKERS = Move(MoveKind.JOKERS_ALONE)


class StructuralInvalidError(ChefsHatError, ValueError):
    pass


class InexpressibleMoveError(ChefsHatError, ValueError):
    pass


class ContractViolation(ChefsHatError):
    pass


def _discard_index(face, copies, jokers):
    if jokers:
        return JOKER_BASE + (copies - 1) * MAX_FACE + (face - 1)
    return PLAIN_BASE + (copies - 1) * MAX_FACE + (face - 1)


def _discard_slot(index):
    """(face, copies, jokers) of a discard slot"""
    if index < JOKER_BASE:
        offset, jokers = index - PLAIN_BASE, 0
    else:
        offset, jokers = index - JOKER_BASE, 1
    copies, face = divmod(offset, MAX_FACE)
    return face + 1, copies + 1, jokers


def is_structurally_valid(index):
    """
    >>> is_structurally_valid(0), is_structurally_valid(11), is_structurally_valid(199)
    (True, False, True)
    """
    if not 0 <= index < NUM_ACTIONS:
        return False
    if index >= JOKERS_ALONE_INDEX:
        return True
    face, copies, _ = _discard_slot(index)
    return copies <= face


def decode(index) -> Move:
    """
    >>> decode(0)
    Move(kind=<MoveKind.DISCARD: 'discard'>, face=1, copies=1, jokers=0)
    >>> decode(199).is_pass
    True
    """
    index = int(index)
    if not is_structurally_valid(index):
        raise StructuralInvalidError(f"action index {index} is not a playable slot")
    if index == PASS_INDEX:
        return Move.pass_()
    if index == JOKERS_ALONE_INDEX:
        return ALL_JOKERS
    return Move.discard(*_discard_slot(index))


def encode(move: Move) -> int:
    """
    >>> encode(Move.discard(1, 1)), encode(Move.pass_()), encode(Move.jokers_alone(2))
    (0, 199, 198)
    """
    if move.kind is MoveKind.PASS:
        return PASS_INDEX
    if move.kind is MoveKind.JOKERS_ALONE:
        return JOKERS_ALONE_INDEX
    if not move.is_well_formed():
        raise InexpressibleMoveError(f"{move} is not a valid discard")
    if move.jokers and move.copies > MAX_COPIES_WITH_JOKER:
        raise InexpressibleMoveError(
            f"{move}: at most {MAX_COPIES_WITH_JOKER} copies can go with a joker"
        )
    return _discard_index(move.face, move.copies, move.jokers)


def bind(index, state: MatchState, seat: int) -> Move:
    """decode `index` into the concrete move `seat` would make in `state`"""
    move = decode(index)
    if move.kind is MoveKind.JOKERS_ALONE:
        return Move.jokers_alone(face_counts(state.hands[seat])[JOKER])
    return move


def possible_actions(state: MatchState, seat: int) -> np.ndarray:
    """
    The validity mask: walks face values and quantities against the cards at
    hand and the playing field, first action restricted to 11s.
    """
    mask = np.zeros(NUM_ACTIONS, dtype=bool)
    if not state.is_active(seat) or state.passed[seat]:
        return mask

    counts = face_counts(state.hands[seat])
    jokers = counts[JOKER]
    first_action = state.first_action_pending
    board_value = state.board_value
    board_count = state.board_count

    for face in range(1, MAX_FACE + 1):
        if counts[face] == 0:
            continue
        if first_action and face != MAX_FACE:
            continue
        if board_value is not None and face >= board_value:
            continue
        for copies in range(1, counts[face] + 1):
            if copies >= board_count:
                mask[_discard_index(face, copies, 0)] = True
            if jokers and copies <= MAX_COPIES_WITH_JOKER and copies + 1 >= board_count:
                mask[_discard_index(face, copies, 1)] = True

    if jokers and board_value is None and not first_action:
        mask[JOKERS_ALONE_INDEX] = True
    if not first_action:
        mask[PASS_INDEX] = True
    return mask


def _allowed(mask):
    allowed = np.flatnonzero(mask)
    if allowed.size == 0:
        raise ContractViolation("the action mask allows nothing")
    return allowed


def masked_argmax(q, mask) -> int:
    """
    argmax over allowed slots, ties to the lowest index

    >>> mask = np.zeros(200, dtype=bool); mask[[5, 7]] = True
    >>> masked_argmax(np.zeros(200), mask)
    5
    """
    allowed = _allowed(mask)
    values = np.asarray(q, dtype=np.float64)[allowed]
    return int(allowed[int(np.argmax(values))])


def masked_uniform(mask, rng) -> int:
    allowed = _allowed(mask)
    return int(allowed[rng.integers(allowed.size)])


def masked_sample(probabilities, mask, rng) -> int:
    """draw from a distribution restricted to (and renormalised over) allowed slots"""
    allowed = _allowed(mask)
    p = np.asarray(probabilities, dtype=np.float64)[allowed]
    total = p.sum()
    if not total > 0:
        return masked_uniform(mask, rng)
    return int(rng.choice(allowed, p=p / total))


def epsilon_greedy(q, mask, epsilon, rng) -> int:
    """a uniformly random allowed slot with probability epsilon, else masked_argmax"""
    if not 0.0 <= epsilon <= 1.0:
        raise ContractViolation(f"epsilon {epsilon} outside [0, 1]")
    if rng.random() < epsilon:
        return masked_uniform(mask, rng)
    return masked_argmax(q, mask)


def describe(index) -> str:
    if not is_structurally_valid(index):
        return "structurally invalid"
    return str(decode(index))


def catalog_rows():
    return [(i, describe(i)) for i in range(NUM_ACTIONS)]


def catalog_csv() -> str:
    lines = ["index,move"]
    lines.extend(f"{i},{text}" for i, text in catalog_rows())
    return "\n".join(lines) + "\n"


def catalog_hash() -> str:
    """sha256 of the catalog document, stored in weight files"""
    return hashlib.sha256(catalog_csv().encode("utf-8")).hexdigest()


if __name__ == "__main__":
    import doctest

    doctest.testmod()
