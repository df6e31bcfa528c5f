"""Block-parallel Monte Carlo execution and order-stable aggregation.

Replicates are split into fixed blocks (see :mod:`patchdiff.rng`); a block
task is a picklable callable ``task(block_id, n, gen)``.  Blocks may run in a
process pool, but results are always consumed in block order, so every pooled
number is independent of the worker count.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Any, Callable, Sequence

import numpy as np

from .errors import ConfigurationError, InvariantError
from .rng import BLOCK_SIZE, block_generator, block_ranges

WORKERS_ENV = "PATCHDIFF_WORKERS"


@dataclass(frozen=True)
class McEstimate:
    """Pooled Monte Carlo mean with ``stderr = sample std / sqrt(reps)``."""

    mean: float
    stderr: float
    reps: int
    master_seed: int
    censored_fraction: float = 0.0

    def as_dict(self) -> dict:
        return {"mean": self.mean, "stderr": self.stderr, "reps": self.reps,
                "master_seed": self.master_seed, "censored_fraction": self.censored_fraction}


@dataclass(frozen=True)
class Partial:
    """Count, mean and centred sum of squares of one block of replicates."""

    count: int
    mean: float
    m2: float
    master_seed: int
    config_hash: str
    censored: int = 0

    @classmethod
    def from_values(cls, values, master_seed: int, config_hash: str, censored: int = 0) -> Partial:
        v = np.asarray(values, dtype=float).ravel()
        if v.size == 0:
            return cls(0, 0.0, 0.0, master_seed, config_hash, censored)
        mean = math.fsum(v) / v.size
        m2 = math.fsum((v - mean) ** 2)
        return cls(int(v.size), mean, m2, master_seed, config_hash, censored)


def _merge(a: Partial, b: Partial) -> Partial:
    # Chan et al. pairwise update
    n = a.count + b.count
    if n == 0:
        return a
    delta = b.mean - a.mean
    mean = a.mean + delta * b.count / n
    m2 = math.fsum([a.m2, b.m2, delta * delta * a.count * b.count / n])
    return Partial(n, mean, m2, a.master_seed, a.config_hash, a.censored + b.censored)


def mc_aggregate(partials: Sequence[Partial]) -> McEstimate:
    """Pool block partials (in the given order) into one estimate."""
    if not partials:
        raise ConfigurationError("nothing to aggregate")
    seeds = {p.master_seed for p in partials}
    hashes = {p.config_hash for p in partials}
    if len(seeds) > 1 or len(hashes) > 1:
        raise InvariantError("partials come from different seeds or configurations")
    total = partials[0]
    for p in partials[1:]:
        total = _merge(total, p)
    if total.count == 0:
        raise ConfigurationError("0 replicates")
    var = total.m2 / (total.count - 1) if total.count > 1 else 0.0
    return McEstimate(float(total.mean), math.sqrt(var / total.count), total.count,
                      total.master_seed, total.censored / total.count)


def config_hash(params: Any) -> str:
    """Stable short hash of a JSON-serializable parameter description."""
    blob = json.dumps(params, sort_keys=True, default=_jsonable).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.integer, np.floating)):
        return obj.item()
    if hasattr(obj, "__dict__"):
        return {k: v for k, v in vars(obj).items() if not k.startswith("_")}
    return repr(obj)


def default_workers() -> int:
    raw = os.environ.get(WORKERS_ENV, "").strip()
    if not raw:
        return 1
    try:
        n = int(raw)
    except ValueError:
        raise ConfigurationError(f"{WORKERS_ENV} must be an integer, got {raw!r}") from None
    if n < 1:
        raise ConfigurationError(f"{WORKERS_ENV} must be at least 1")
    return n


def _run_block(task, master_seed, block):
    block_id, start, stop = block
    return task(block_id, stop - start, block_generator(master_seed, block_id))


def run_blocks(task: Callable[[int, int, np.random.Generator], Any], reps: int, master_seed: int,
               workers: int | None = None, block_size: int = BLOCK_SIZE) -> list:
    """Run ``task`` on every block of ``reps`` replicates; return results in block order."""
    blocks = block_ranges(reps, block_size)
    workers = default_workers() if workers is None else int(workers)
    if workers < 1:
        raise ConfigurationError("workers must be at least 1")
    if workers == 1 or len(blocks) == 1:
        return [_run_block(task, master_seed, b) for b in blocks]
    with ProcessPoolExecutor(max_workers=min(workers, len(blocks))) as pool:
        return list(pool.map(_run_block, [task] * len(blocks), [master_seed] * len(blocks), blocks))


def estimate_from_blocks(values: Sequence[np.ndarray], master_seed: int, chash: str,
                         censored: Sequence[int] | None = None) -> McEstimate:
    censored = censored if censored is not None else [0] * len(values)
    return mc_aggregate([Partial.from_values(v, master_seed, chash, int(c))
                         for v, c in zip(values, censored)])
