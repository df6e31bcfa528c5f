"""Finite-population chain: binomial resampling in every patch, then exchange.

Patch ``i`` hosts ``N_i = d_i N`` individuals.  One generation draws
``k_i ~ Binomial(N_i, x_i)`` independently per patch and applies the exchange
map ``Phi_N(x) = x + b(x)/N`` to ``k / N_i``.  Two clocks are offered: the
embedded chain makes one step every ``1/N`` time units, the Poissonized one
jumps at the events of a rate-``N`` Poisson process.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Sequence

import numpy as np

from .diffusion import BatchOutcome
from .errors import ConfigurationError, InvariantError
from .model import ModelSpec, _require_validated, as_state, drift_columns, exchange_eval
from .rng import as_generator
from .trajectory import Target, Trajectory, first_hit_records

Clock = Literal["embedded", "poissonized"]
_OUTSIDE_TOL = 1e-12


@dataclass(frozen=True)
class ChainConfig:
    N: int
    clock: Clock = "embedded"

    def __post_init__(self):
        if self.clock not in ("embedded", "poissonized"):
            raise ConfigurationError(f"unknown clock {self.clock!r}")
        if int(self.N) != self.N or self.N < 1:
            raise ConfigurationError("N must be a positive integer")

    def check(self, spec: ModelSpec) -> np.ndarray:
        """Validate against ``spec``; return the integer patch sizes."""
        spec.check_N(self.N)
        return spec.patch_sizes(self.N)


def conserved_mass(x, spec: ModelSpec, N: int) -> float | np.ndarray:
    """``sum_i d_i N x_i`` (vectorized over leading axes)."""
    return np.asarray(x, dtype=float) @ (spec.d_array * N)


def wf_reproduce(x, spec: ModelSpec, N: int, rng) -> np.ndarray:
    """Binomial resampling of every patch; ``x`` may be a state or an (n, m) batch."""
    spec.check_N(N)
    sizes = spec.patch_sizes(N)
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.m:
        raise ConfigurationError(f"state has {x.shape[-1]} coordinates, model has {spec.m}")
    x = np.clip(x, 0.0, 1.0)
    gen = as_generator(rng)
    return gen.binomial(np.broadcast_to(sizes, x.shape), x) / sizes


def chain_step(x, spec: ModelSpec, N: int, rng) -> np.ndarray:
    """One generation from a single state: reproduce, then exchange."""
    _require_validated(spec)
    x = as_state(x)
    return exchange_eval(spec, N, wf_reproduce(x, spec, N, rng))


def _exchange_columns(yT: np.ndarray, spec: ModelSpec, N: int) -> np.ndarray:
    out = yT + drift_columns(spec, yT) / N
    lo, hi = out.min(initial=0.0), out.max(initial=1.0)
    if lo < -_OUTSIDE_TOL or hi > 1.0 + _OUTSIDE_TOL:
        raise InvariantError(f"exchange left K (range [{lo}, {hi}])")
    return np.clip(out, 0.0, 1.0, out=out)


def _step_columns(xT: np.ndarray, spec: ModelSpec, N: int, sizes_col: np.ndarray,
                  gen: np.random.Generator) -> np.ndarray:
    k = gen.binomial(np.broadcast_to(sizes_col, xT.shape), xT)
    return _exchange_columns(k / sizes_col, spec, N)


def simulate_chain(x0, cfg: ChainConfig, spec: ModelSpec, t_max: float,
                   targets: Sequence[Target] = (), rng=0) -> Trajectory:
    """One chain path until ``t_max`` or absorption at a corner.

    Embedded clock: states at times ``k/N``.  Poissonized clock: states at the
    jump times of a rate-``N`` Poisson process (the last recorded jump is the
    last one not after ``t_max``).
    """
    _require_validated(spec)
    if not t_max > 0:
        raise ConfigurationError("t_max must be positive")
    cfg.check(spec)
    N = cfg.N
    gen = as_generator(rng)
    x = as_state(x0)
    targets = list(targets)
    first: dict[str, float] = {}

    def check_hits(state, t):
        for tg in targets:
            if tg.name not in first and tg.contains(state, spec)[0]:
                first[tg.name] = t

    times, states = [0.0], [x.copy()]
    check_hits(x, 0.0)
    absorbed = bool(np.all(x == 0.0) or np.all(x == 1.0))
    n_embedded = int(np.floor(t_max * N + 1e-9))
    k, t = 0, 0.0
    while not absorbed:
        if cfg.clock == "embedded":
            if k >= n_embedded:
                break
            k += 1
            t = k / N
        else:
            t += gen.exponential(1.0 / N)
            if t > t_max:
                break
        x = chain_step(x, spec, N, gen)
        times.append(t)
        states.append(x)
        check_hits(x, t)
        absorbed = bool(np.all(x == 0.0) or np.all(x == 1.0))
    t_end = times[-1] if absorbed else float(t_max)
    return Trajectory(np.array(times), np.array(states), first_hit_records(targets, first, t_end))


def run_chain_batch(x0, spec: ModelSpec, cfg: ChainConfig, t_max: float, n_paths: int,
                    gen: np.random.Generator, *,
                    snapshot_times: Sequence[float] = ()) -> BatchOutcome:
    """Advance ``n_paths`` chain paths from ``x0`` and record states at given times.

    For the embedded clock the state at time t is the one after ``floor(tN)``
    steps and ``stop_time`` holds the absorption time.  For the Poissonized
    clock only the number of jumps in each interval is drawn, so ``stop_time``
    is ``nan`` for absorbed paths (the jump times themselves are never
    sampled) and ``inf`` otherwise.
    """
    _require_validated(spec)
    sizes_col = cfg.check(spec).astype(np.int64)[:, None]
    x0 = as_state(x0)
    times = [float(t) for t in snapshot_times]
    if any(t < 0 or t > t_max for t in times):
        raise ConfigurationError("snapshot times must lie in [0, t_max]")
    marks = sorted(set(times) | {float(t_max)})
    N, m = cfg.N, spec.m

    xT = np.repeat(x0[:, None], n_paths, axis=1)
    stop_time = np.full(n_paths, np.inf)
    at_marks = {}
    if cfg.clock == "embedded":
        done_steps = 0
        alive = np.arange(n_paths)
        if np.all(x0 == 0.0) or np.all(x0 == 1.0):
            alive = alive[:0]
            stop_time[:] = 0.0
        for t in marks:
            target_steps = int(np.floor(t * N + 1e-9))
            while done_steps < target_steps and alive.size:
                done_steps += 1
                y = _step_columns(xT[:, alive], spec, N, sizes_col, gen)
                xT[:, alive] = y
                gone = np.all(y == 0.0, axis=0) | np.all(y == 1.0, axis=0)
                if gone.any():
                    stop_time[alive[gone]] = done_steps / N
                    alive = alive[~gone]
            at_marks[t] = xT.T.copy()
    else:
        prev = 0.0
        for t in marks:
            jumps = gen.poisson(N * (t - prev), size=n_paths)
            prev = t
            # sort paths by jump count so the ones still jumping form a prefix
            order = np.argsort(-jumps, kind="stable")
            neg = -jumps[order]
            work = xT[:, order]
            for s in range(int(jumps.max(initial=0))):
                n_live = int(np.searchsorted(neg, -s, side="left"))
                work[:, :n_live] = _step_columns(work[:, :n_live], spec, N, sizes_col, gen)
            xT[:, order] = work
            at_marks[t] = xT.T.copy()

    final = at_marks[float(t_max)]
    corner = np.full(n_paths, -1, dtype=np.int8)
    corner[np.all(final == 0.0, axis=1)] = 0
    corner[np.all(final == 1.0, axis=1)] = 1
    if cfg.clock == "poissonized":
        stop_time[corner >= 0] = np.nan
    snapshots = np.stack([at_marks[t] for t in times]) if times else np.empty((0, n_paths, m))
    return BatchOutcome(np.ascontiguousarray(final), corner, stop_time,
                        np.zeros(n_paths, dtype=bool), tuple(times), snapshots, {})
