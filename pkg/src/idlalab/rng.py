"""Keyed counter-based random streams.

Every stochastic component draws from a stream addressed by a triple
(master seed, actor, context): explorer walks use (seed, explorer index,
shell index), plain Monte Carlo uses (seed, sample index, 0).  The output
sequence is a pure function of the triple, so two schedulers that consume
the same (actor, context) segments see identical randomness no matter how
the segments are interleaved.  That property is what lets the direct and
wave-ordered growth constructions agree site for site.

Generator: the splitmix64 sequence.  State advances by a fixed odd
constant, output is the standard 64-bit avalanche finalizer.  The stream
key is produced by folding seed, actor and context through the same
finalizer three times.  The compiled kernels implement the identical
arithmetic; tests pin bit equality between the two implementations.

Conventions frozen here and mirrored in the kernels:
  * uniform double in [0,1): (u64 >> 11) * 2**-53
  * index in [0,m): high 64 bits of u64 * m
  * per-step direction k: axis = k >> 1, sign = +1 if k even else -1
"""

from __future__ import annotations

import numpy as np

MASK = (1 << 64) - 1
GOLD = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D049BB133111EB
_KEYA = 0xC2B2AE3D27D4EB4F
_KEYB = 0x165667B19E3779F9
_INV53 = 1.0 / 9007199254740992.0  # 2**-53


def mix64(z: int) -> int:
    """splitmix64 finalizer on a 64-bit integer."""
    z &= MASK
    z ^= z >> 30
    z = (z * _MIX1) & MASK
    z ^= z >> 27
    z = (z * _MIX2) & MASK
    z ^= z >> 31
    return z


def stream_key(seed: int, actor: int, context: int) -> int:
    """Initial state for the (seed, actor, context) stream."""
    s = mix64((seed + GOLD) & MASK)
    s = mix64((s + actor * _KEYA) & MASK)
    s = mix64((s + context * _KEYB) & MASK)
    return s


class Stream:
    """Sequential draws from one keyed stream."""

    __slots__ = ("state", "draws")

    def __init__(self, seed: int, actor: int = 0, context: int = 0):
        self.state = stream_key(seed, actor, context)
        self.draws = 0

    def next_u64(self) -> int:
        self.state = (self.state + GOLD) & MASK
        self.draws += 1
        return mix64(self.state)

    def uniform(self) -> float:
        return (self.next_u64() >> 11) * _INV53

    def index(self, m: int) -> int:
        """Uniform integer in [0, m) (multiply-high reduction)."""
        return (self.next_u64() * m) >> 64

    def step(self, d: int) -> tuple[int, int]:
        """One lattice step: (axis, +1/-1)."""
        k = self.index(2 * d)
        return k >> 1, 1 - 2 * (k & 1)


def bulk_mix64(z: np.ndarray) -> np.ndarray:
    z = z.astype(np.uint64, copy=True)
    with np.errstate(over="ignore"):
        z ^= z >> np.uint64(30)
        z *= np.uint64(_MIX1)
        z ^= z >> np.uint64(27)
        z *= np.uint64(_MIX2)
        z ^= z >> np.uint64(31)
    return z


def bulk_uniform(seed: int, actors: np.ndarray, context: int, draw: int) -> np.ndarray:
    """Vectorized draw number `draw` (0-based) from many streams at once.

    Equals Stream(seed, a, context).uniform() called draw+1 times, keeping
    the last value, for each a in actors.
    """
    with np.errstate(over="ignore"):
        s = bulk_mix64(np.full(len(actors), (seed + GOLD) & MASK, dtype=np.uint64))
        s = bulk_mix64(s + actors.astype(np.uint64) * np.uint64(_KEYA))
        s = bulk_mix64(s + np.uint64((context * _KEYB) & MASK))
        s += np.uint64(((draw + 1) * GOLD) & MASK)
    return (bulk_mix64(s) >> np.uint64(11)).astype(np.float64) * _INV53
