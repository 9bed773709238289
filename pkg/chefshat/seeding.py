"""
Hierarchical seeds.

Every random source in an experiment is derived from one master seed by
hashing a path of labels, so that any single match can be replayed from its
own seed without re-running what came before it::

    master seed ──split(seed, "series", r)──▶ series seed
    series seed ──split(seed, "match", i)──▶ match seed
    match seed  ──split(seed, "agents")────▶ seed of the agents' action rng

The split is ``sha256("<seed>/<label>/<label>...")`` truncated to 63 bits.
"""

import hashlib

import numpy as np

SEED_MASK = (1 << 63) - 1


def split_seed(seed, *path):
    """
    Derive a child seed from `seed` and a path of labels.

    >>> split_seed(7, "series", 0) == split_seed(7, "series", 0)
    True
    >>> split_seed(7, "series", 0) != split_seed(7, "series", 1)
    True
    >>> 0 <= split_seed(123, "match", 5) < 2 ** 63
    True
    """
    text = "/".join([str(int(seed))] + [str(p) for p in path])
    digest = hashlib.sha256(text.encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") & SEED_MASK


def make_rng(seed, *path):
    """numpy Generator seeded with `split_seed(seed, *path)`, or `seed` itself"""
    if path:
        seed = split_seed(seed, *path)
    return np.random.default_rng(int(seed))


if __name__ == "__main__":
    import doctest

    doctest.testmod()
