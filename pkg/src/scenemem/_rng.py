"""Named-stream seed derivation.

Every stochastic call in the package takes an explicit 64-bit seed. Child
seeds are derived by hashing (parent seed, stream name, entity key), so the
value a consumer sees never depends on iteration order elsewhere.
"""

from __future__ import annotations

import hashlib

import numpy as np

MASK64 = (1 << 64) - 1


def child_seed(parent: int, stream: str, *key: object) -> int:
    h = hashlib.blake2b(digest_size=8)
    h.update(str(int(parent) & MASK64).encode())
    h.update(b"\x1f")
    h.update(stream.encode())
    for part in key:
        h.update(b"\x1f")
        h.update(repr(part).encode())
    return int.from_bytes(h.digest(), "little")


def rng_for(parent: int, stream: str, *key: object) -> np.random.Generator:
    return np.random.default_rng(child_seed(parent, stream, *key))


def stable_hash(text: str) -> int:
    return int.from_bytes(hashlib.blake2b(text.encode(), digest_size=8).digest(), "little")


def round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def weighted_choice(rng: np.random.Generator, weights) -> int:
    """Index drawn proportionally to ``weights`` (all non-negative, positive sum)."""
    w = np.asarray(weights, dtype=np.float64)
    total = w.sum()
    if not total > 0:
        raise ValueError("weights must have a positive sum")
    u = rng.random() * total
    idx = int(np.searchsorted(np.cumsum(w), u, side="right"))
    return min(idx, len(w) - 1)


def sample_without_replacement(rng: np.random.Generator, weights, k: int) -> list[int]:
    """Sequential weighted draws with renormalisation after each pick.

    Items with zero weight are never drawn; fewer than ``k`` indices come back
    when the positive-weight pool runs out.
    """
    w = np.array(weights, dtype=np.float64)
    picked: list[int] = []
    for _ in range(k):
        if not w.sum() > 0:
            break
        i = weighted_choice(rng, w)
        picked.append(i)
        w[i] = 0.0
    return picked
