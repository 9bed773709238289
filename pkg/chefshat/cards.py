"""
Cards, the 68-card deck and the kitchen roles.

Face value v (1..11) appears v times, lower faces being rarer, plus two
jokers. Jokers are stored with face 12, the value they take when played alone.
One of the 11s is the golden mozzarella whose holder opens every match.
"""

import enum
from dataclasses import dataclass
from typing import List, Sequence, Tuple

NUM_SEATS = 4
MIN_FACE = 1
MAX_FACE = 11
JOKER = 12
NUM_JOKERS = 2
DECK_SIZE = sum(range(MIN_FACE, MAX_FACE + 1)) + NUM_JOKERS  # 68
HAND_SIZE = DECK_SIZE // NUM_SEATS  # 17


class ChefsHatError(Exception):
    pass


class ConfigurationError(ChefsHatError):
    pass


class InvalidArgumentError(ChefsHatError, ValueError):
    pass


@dataclass(frozen=True, order=True)
class Card:
    face: int
    golden: bool = False

    def __post_init__(self):
        if not MIN_FACE <= self.face <= JOKER:
            raise InvalidArgumentError(f"face value {self.face} out of range")
        if self.golden and self.face != MAX_FACE:
            raise InvalidArgumentError("only an 11 can be golden")

    @classmethod
    def joker(cls):
        return cls(JOKER)

    @property
    def is_joker(self):
        return self.face == JOKER

    def __str__(self):
        if self.is_joker:
            return "J"
        return f"{self.face}*" if self.golden else str(self.face)


Deck = Tuple[Card, ...]
Hand = Tuple[Card, ...]


class Role(enum.Enum):
    CHEF = "chef"
    SOUS_CHEF = "sous_chef"
    WAITER = "waiter"
    DISHWASHER = "dishwasher"
    NONE = "none"


# finishing position -> role
ROLE_ORDER = (Role.CHEF, Role.SOUS_CHEF, Role.WAITER, Role.DISHWASHER)


def canonical_deck() -> Deck:
    """
    >>> deck = canonical_deck()
    >>> len(deck), sum(c.golden for c in deck), sum(c.is_joker for c in deck)
    (68, 1, 2)
    """
    cards = []
    for face in range(MIN_FACE, MAX_FACE + 1):
        for copy in range(face):
            cards.append(Card(face, golden=(face == MAX_FACE and copy == 0)))
    cards.extend(Card.joker() for _ in range(NUM_JOKERS))
    return tuple(cards)


def validate_deck(deck: Sequence[Card]):
    if len(deck) != DECK_SIZE:
        raise ConfigurationError(f"deck has {len(deck)} cards, expected {DECK_SIZE}")
    if sorted(deck) != sorted(canonical_deck()):
        raise ConfigurationError("deck composition differs from the canonical deck")


def new_shuffled_deck(rng) -> Deck:
    """a uniformly random permutation of the canonical deck"""
    deck = canonical_deck()
    order = rng.permutation(DECK_SIZE)
    return tuple(deck[i] for i in order)


def deal(deck: Sequence[Card]) -> Tuple[Hand, ...]:
    """deal the deck round-robin, seat 0 first; every hand gets 17 cards"""
    validate_deck(deck)
    return tuple(tuple(sorted(deck[seat::NUM_SEATS])) for seat in range(NUM_SEATS))


def face_counts(hand: Sequence[Card]) -> List[int]:
    """
    counts[v] is the number of cards of face v in hand, counts[12] the jokers

    >>> face_counts([Card(3), Card(3), Card.joker()])[3]
    2
    """
    counts = [0] * (JOKER + 1)
    for card in hand:
        counts[card.face] += 1
    return counts


def format_hand(hand: Sequence[Card]) -> str:
    return " ".join(str(c) for c in hand)


if __name__ == "__main__":
    import doctest

    doctest.testmod()
