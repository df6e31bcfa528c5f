"""Counter-based random streams.

Every stream is a Philox generator whose 128-bit key is derived from
``(master_seed, domain, id)``.  Draws therefore depend only on those values,
never on which worker consumes them or in which order.

Monte Carlo engines work on fixed-size blocks of replicates: replicate ``r``
belongs to block ``r // BLOCK_SIZE`` and its draws come from that block's
stream.  Because the block partition does not depend on the worker count,
results are bit-identical however blocks are scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

BLOCK_SIZE = 2048

_REPLICATE_DOMAIN = 0
_BLOCK_DOMAIN = 1


def _key(master_seed: int, domain: int, ident: int) -> np.ndarray:
    if master_seed < 0 or ident < 0:
        raise ValueError("seeds and stream ids must be non-negative")
    ss = np.random.SeedSequence(entropy=int(master_seed), spawn_key=(domain, int(ident)))
    return ss.generate_state(2, dtype=np.uint64)


@dataclass(frozen=True)
class RandomStream:
    """Stream for one replicate, positioned at Philox block ``counter``."""

    master_seed: int
    replicate_id: int = 0
    counter: int = 0

    def generator(self) -> np.random.Generator:
        key = _key(self.master_seed, _REPLICATE_DOMAIN, self.replicate_id)
        return np.random.Generator(np.random.Philox(key=key, counter=self.counter))


def block_generator(master_seed: int, block_id: int) -> np.random.Generator:
    key = _key(master_seed, _BLOCK_DOMAIN, block_id)
    return np.random.Generator(np.random.Philox(key=key))


def block_ranges(reps: int, block_size: int = BLOCK_SIZE) -> list[tuple[int, int, int]]:
    """``(block_id, start, stop)`` triples covering ``range(reps)``."""
    if reps < 1:
        raise ValueError("need at least one replicate")
    return [(b, s, min(s + block_size, reps))
            for b, s in enumerate(range(0, reps, block_size))]


def as_generator(rng) -> np.random.Generator:
    """Accept a RandomStream, a Generator, or an integer seed."""
    if isinstance(rng, np.random.Generator):
        return rng
    if isinstance(rng, RandomStream):
        return rng.generator()
    if isinstance(rng, (int, np.integer)):
        return RandomStream(int(rng)).generator()
    raise TypeError(f"cannot build a random generator from {type(rng).__name__}")
