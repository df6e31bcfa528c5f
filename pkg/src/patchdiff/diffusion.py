"""Simulation of the limiting degenerate SDE

    dX^i = b_i(X) dt + sqrt(X^i (1 - X^i) / d_i) dW^i

with a full-truncation Euler scheme, plus the composite statistic
``Dbar(x) = <d, x> / dprod`` and the sets it defines near the corners.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Literal, Sequence

import numpy as np
from numba import njit
from scipy.special import entr

from .errors import ConfigurationError, DomainError
from .model import (LinearExchange, ModelSpec, _require_validated, as_state, dbar, dbar_one,
                    drift_columns, drift_values)
from .rng import as_generator
from .trajectory import (HittingRecord, Target, Trajectory, corner_targets,  # noqa: F401
                         delta_targets, first_hit_records)

CHUNK_STEPS = 1024


@dataclass(frozen=True)
class SdeConfig:
    """Step size, horizon and corner-snapping radius for SDE runs."""

    dt: float = 1e-3
    t_max: float = 1.0
    corner_tol: float = 1e-6
    scheme: Literal["full_truncation_euler"] = "full_truncation_euler"

    def __post_init__(self):
        if not self.dt > 0:
            raise ConfigurationError("dt must be positive")
        if not self.t_max > 0:
            raise ConfigurationError("t_max must be positive")
        if not 0 < self.corner_tol < 1e-3:
            raise ConfigurationError("corner_tol must lie in (0, 1e-3)")
        if self.scheme != "full_truncation_euler":
            raise ConfigurationError(f"unknown scheme {self.scheme!r}")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_max / self.dt))


# --------------------------------------------------------------------------
# Composite statistic and corner sets
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CompositeState:
    Dbar: float
    Dbar_mirror: float


def composite_D(x, spec: ModelSpec) -> CompositeState:
    x = as_state(x)
    return CompositeState(float(dbar(x, spec)), float(dbar(1.0 - x, spec)))


def entropy_u(r) -> float | np.ndarray:
    """``-2 (r ln r + (1-r) ln(1-r))`` extended by 0 at the endpoints."""
    r_arr = np.asarray(r, dtype=float)
    if np.any(~np.isfinite(r_arr)) or np.any(r_arr < 0) or np.any(r_arr > 1):
        raise DomainError("entropy_u is defined on [0, 1]")
    out = 2.0 * (entr(r_arr) + entr(1.0 - r_arr))
    return float(out) if out.ndim == 0 else out


def check_alpha(alpha: float, spec: ModelSpec) -> float:
    top = min(1.0, dbar_one(spec))
    if not 0 < alpha <= top:
        raise ConfigurationError(f"alpha must lie in (0, {top}], got {alpha}")
    return float(alpha)


def delta_membership(x, spec: ModelSpec, alpha: float) -> Literal["delta0", "delta1", "neither"]:
    """Which corner neighbourhood ``{Dbar < alpha}`` / ``{Dbar(1 - .) < alpha}`` holds ``x``."""
    check_alpha(alpha, spec)
    c = composite_D(x, spec)
    if c.Dbar < alpha:
        return "delta0"
    if c.Dbar_mirror < alpha:
        return "delta1"
    return "neither"


# --------------------------------------------------------------------------
# Scheme
# --------------------------------------------------------------------------

def _euler(x: np.ndarray, spec: ModelSpec, dt: float, z: np.ndarray) -> np.ndarray:
    var = np.maximum(x * (1.0 - x), 0.0) / spec.d_array
    y = x + drift_values(spec, x) * dt + np.sqrt(var * dt) * z
    return np.clip(y, 0.0, 1.0)


def _snap(x: np.ndarray, eps: float) -> np.ndarray:
    low = np.all(x <= eps, axis=-1)
    high = np.all(x >= 1.0 - eps, axis=-1)
    if np.any(low) or np.any(high):
        x = x.copy()
        x[low] = 0.0
        x[high] = 1.0
    return x


def sde_step(x, spec: ModelSpec, dt: float, rng) -> np.ndarray:
    """One full-truncation Euler step from ``x`` (a state or an (n, m) batch)."""
    _require_validated(spec)
    if dt <= 0:
        raise DomainError("dt must be positive")
    x = np.asarray(x, dtype=float)
    gen = as_generator(rng)
    return _euler(x, spec, dt, gen.standard_normal(x.shape))


def simulate_sde(x0, spec: ModelSpec, cfg: SdeConfig, targets: Sequence[Target] = (),
                 rng=0, record_every: int = 1) -> Trajectory:
    """One path of the SDE until ``cfg.t_max`` or absorption at a corner.

    A state within ``cfg.corner_tol`` (max norm) of a corner is snapped onto it
    and frozen.  Every ``record_every``-th state is stored, plus the last one.
    """
    _require_validated(spec)
    x = as_state(x0)
    gen = as_generator(rng)
    targets = list(targets)
    x = _snap(x[None, :], cfg.corner_tol)[0]
    first: dict[str, float] = {}

    def check_hits(state, t):
        for tg in targets:
            if tg.name not in first and tg.contains(state, spec)[0]:
                first[tg.name] = t

    times, states = [0.0], [x.copy()]
    check_hits(x, 0.0)
    n_steps = cfg.n_steps
    k = 0
    absorbed = bool(np.all(x == 0.0) or np.all(x == 1.0))
    while k < n_steps and not absorbed:
        z_chunk = gen.standard_normal((min(CHUNK_STEPS, n_steps - k), spec.m))
        for z in z_chunk:
            k += 1
            x = _snap(_euler(x, spec, cfg.dt, z)[None, :], cfg.corner_tol)[0]
            t = k * cfg.dt
            check_hits(x, t)
            absorbed = bool(np.all(x == 0.0) or np.all(x == 1.0))
            if k % record_every == 0 or absorbed or k == n_steps:
                times.append(t)
                states.append(x.copy())
            if absorbed:
                break
    return Trajectory(np.array(times), np.array(states), first_hit_records(targets, first, times[-1]))


# --------------------------------------------------------------------------
# Vectorized batches
# --------------------------------------------------------------------------

@dataclass
class BatchOutcome:
    """Per-path summaries of a batch of SDE or chain paths.

    ``corner`` is 0 or 1 for absorbed paths and -1 otherwise; ``stop_time`` is
    the absorption or stop-rule time, ``inf`` for paths still running at the
    horizon; ``snapshots[j]`` holds the states at ``snapshot_times[j]``.
    """

    final: np.ndarray
    corner: np.ndarray
    stop_time: np.ndarray
    stopped_by_rule: np.ndarray
    snapshot_times: tuple[float, ...]
    snapshots: np.ndarray
    hit_times: dict[str, np.ndarray]

    @classmethod
    def concat(cls, parts: Sequence[BatchOutcome]) -> BatchOutcome:
        first = parts[0]
        return cls(
            final=np.concatenate([p.final for p in parts]),
            corner=np.concatenate([p.corner for p in parts]),
            stop_time=np.concatenate([p.stop_time for p in parts]),
            stopped_by_rule=np.concatenate([p.stopped_by_rule for p in parts]),
            snapshot_times=first.snapshot_times,
            snapshots=np.concatenate([p.snapshots for p in parts], axis=1),
            hit_times={k: np.concatenate([p.hit_times[k] for p in parts]) for k in first.hit_times},
        )


def _corner_code(x: np.ndarray) -> np.ndarray:
    code = np.full(x.shape[0], -1, dtype=np.int8)
    code[np.all(x == 0.0, axis=-1)] = 0
    code[np.all(x == 1.0, axis=-1)] = 1
    return code


def _euler_columns(xT: np.ndarray, spec: ModelSpec, dt: float, z: np.ndarray,
                   inv_d: np.ndarray) -> np.ndarray:
    # states are clipped to K, so x(1 - x) >= 0 already
    var = xT * (1.0 - xT) * inv_d
    y = xT + drift_columns(spec, xT) * dt + np.sqrt(var * dt) * z
    return np.clip(y, 0.0, 1.0, out=y)


def _snap_columns(xT: np.ndarray, eps: float) -> np.ndarray:
    """Snap near-corner columns in place; return the corner code per column."""
    low = np.maximum.reduce(xT, axis=0) <= eps
    high = np.minimum.reduce(xT, axis=0) >= 1.0 - eps
    code = np.full(xT.shape[1], -1, dtype=np.int8)
    if low.any():
        xT[:, low] = 0.0
        code[low] = 0
    if high.any():
        xT[:, high] = 1.0
        code[high] = 1
    return code


@njit(cache=True)
def _linear_step_kernel(xT, z, rates, inv_d, dt, eps, code):  # pragma: no cover - compiled
    m, n = xT.shape
    sq = np.sqrt(dt)
    new = np.empty(m)
    for p in range(n):
        lo = 0.0
        hi = 1.0
        for i in range(m):
            xi = xT[i, p]
            b = 0.0
            for j in range(m):
                b += rates[i, j] * (xT[j, p] - xi)
            y = xi + b * dt + np.sqrt(xi * (1.0 - xi) * inv_d[i]) * sq * z[i, p]
            if y < 0.0:
                y = 0.0
            elif y > 1.0:
                y = 1.0
            new[i] = y
            if y > lo:
                lo = y
            if y < hi:
                hi = y
        c = -1
        if lo <= eps:
            c = 0
        elif hi >= 1.0 - eps:
            c = 1
        for i in range(m):
            xT[i, p] = new[i] if c < 0 else float(c)
        code[p] = c


def _step_columns(xT, spec, dt, z, inv_d, eps, rates):
    """Advance coordinate-major states one step (in place when possible); return corner codes."""
    if rates is not None:
        code = np.empty(xT.shape[1], dtype=np.int8)
        _linear_step_kernel(xT, z, rates, inv_d[:, 0], dt, eps, code)
        return xT, code
    xT = _euler_columns(xT, spec, dt, z, inv_d)
    return xT, _snap_columns(xT, eps)


def run_sde_batch(x0, spec: ModelSpec, cfg: SdeConfig, n_paths: int, gen: np.random.Generator,
                  *, snapshot_times: Sequence[float] = (), targets: Sequence[Target] = (),
                  stop: Callable[[np.ndarray], np.ndarray] | None = None) -> BatchOutcome:
    """Simulate ``n_paths`` independent paths from ``x0`` in lockstep.

    Paths leave the active set when absorbed at a corner or when ``stop``
    (a mask-valued function of an (n, m) array of states) fires; inactive
    paths consume no random numbers and keep their last state.
    """
    x0 = as_state(x0)
    m = spec.m
    n_steps = cfg.n_steps
    snap_steps = [int(round(t / cfg.dt)) for t in snapshot_times]
    if any(s > n_steps or s < 0 for s in snap_steps):
        raise ConfigurationError("snapshot times must lie in [0, t_max]")
    inv_d = (1.0 / spec.d_array)[:, None]
    rates = spec.drift.rates(spec.d) if isinstance(spec.drift, LinearExchange) else None

    finalT = np.repeat(x0[:, None], n_paths, axis=1)
    corner = _snap_columns(finalT, cfg.corner_tol)
    stop_time = np.full(n_paths, np.inf)
    by_rule = np.zeros(n_paths, dtype=bool)
    snapshots = np.empty((len(snap_steps), n_paths, m))
    hit_times = {tg.name: np.full(n_paths, np.nan) for tg in targets}

    def record(idx, xT, t):
        for tg in targets:
            h = hit_times[tg.name]
            new = tg.contains(xT.T, spec) & np.isnan(h[idx])
            h[idx[new]] = t

    everyone = np.arange(n_paths)
    record(everyone, finalT, 0.0)
    done = corner >= 0
    if stop is not None:
        ruled = stop(finalT.T) & ~done
        by_rule[ruled] = True
        done |= ruled
    stop_time[done] = 0.0
    for j, s in enumerate(snap_steps):
        if s == 0:
            snapshots[j] = finalT.T
    active = everyone[~done]
    xT = finalT[:, active]

    pending = sorted((s, j) for j, s in enumerate(snap_steps) if s > 0)
    k = 0
    while active.size and k < n_steps:
        k += 1
        t = k * cfg.dt
        z = gen.standard_normal((m, active.size))
        xT, code = _step_columns(xT, spec, cfg.dt, z, inv_d, cfg.corner_tol, rates)
        if targets:
            record(active, xT, t)
        while pending and pending[0][0] == k:
            snap = finalT.copy()
            snap[:, active] = xT
            snapshots[pending.pop(0)[1]] = snap.T
        leaving = code >= 0
        if stop is not None:
            ruled = stop(xT.T) & ~leaving
            by_rule[active[ruled]] = True
            leaving = leaving | ruled
        if leaving.any():
            gone = active[leaving]
            corner[gone] = code[leaving]
            stop_time[gone] = t
            finalT[:, gone] = xT[:, leaving]
            keep = ~leaving
            active = active[keep]
            xT = xT[:, keep]
    finalT[:, active] = xT
    for s, j in pending:
        snapshots[j] = finalT.T
    return BatchOutcome(np.ascontiguousarray(finalT.T), corner, stop_time, by_rule,
                        tuple(float(t) for t in snapshot_times), snapshots, hit_times)
