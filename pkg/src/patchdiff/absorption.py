"""Monte Carlo experiments on absorption at the corners of K.

Every experiment runs SDE paths in fixed blocks of replicates, so estimates
are bit-identical for a given seed whatever the worker count.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import partial
from typing import Literal, Sequence

import numpy as np

from .diffusion import SdeConfig, check_alpha, delta_membership, entropy_u, run_sde_batch
from .errors import ConfigurationError
from .model import ModelSpec, _require_validated, as_state, dbar
from .montecarlo import McEstimate, config_hash, estimate_from_blocks, run_blocks
from .wfchain import ChainConfig, run_chain_batch

__all__ = ["McEstimate", "BoundReport", "AbsorptionEstimate", "MartingaleRow", "MartingaleReport",
           "estimate_absorption", "check_delta_bound", "estimate_mean_hitting_time",
           "optional_stopping_check", "martingale_drift_check", "mirrored_start"]

MIN_REPS = 100
Kind = Literal["lower", "upper", "identity"]


@dataclass(frozen=True)
class BoundReport:
    """An estimate compared with a bound at three standard errors.

    ``lower``: the estimate must not lie below the bound, i.e.
    ``mean + 3 se >= bound - tolerance``.  ``upper``: ``mean - 3 se <= bound
    + tolerance``.  ``identity``: ``|scale * mean - bound| <= 3 scale se +
    tolerance``.
    """

    experiment: str
    kind: Kind
    bound_value: float
    estimate: McEstimate
    tolerance: float = 0.0
    scale: float = 1.0
    params: dict = field(default_factory=dict)
    extra_bounds: dict = field(default_factory=dict)

    @property
    def satisfied(self) -> bool:
        m, se = self.estimate.mean, self.estimate.stderr
        if self.kind == "lower":
            return m + 3.0 * se >= self.bound_value - self.tolerance
        if self.kind == "upper":
            return m - 3.0 * se <= self.bound_value + self.tolerance
        return abs(self.scale * m - self.bound_value) <= 3.0 * self.scale * se + self.tolerance

    def to_record(self) -> dict:
        return {"experiment": self.experiment, "params": self.params, "kind": self.kind,
                "bound_value": self.bound_value, "estimate": self.estimate.mean,
                "stderr": self.estimate.stderr, "reps": self.estimate.reps,
                "seed": self.estimate.master_seed,
                "censored_fraction": self.estimate.censored_fraction,
                "tolerance": self.tolerance, "extra_bounds": self.extra_bounds,
                "satisfied": self.satisfied}


@dataclass(frozen=True)
class AbsorptionEstimate:
    corner0: McEstimate
    corner1: McEstimate
    censored_fraction: float


def _check_reps(reps: int) -> None:
    if reps < MIN_REPS:
        raise ConfigurationError(f"need at least {MIN_REPS} replicates, got {reps}")


def _params(spec: ModelSpec, x0, cfg: SdeConfig, **more) -> dict:
    p = {"d": list(spec.d), "drift": repr(spec.drift), "x0": [float(v) for v in x0],
         "dt": cfg.dt, "t_max": cfg.t_max, "corner_tol": cfg.corner_tol}
    p.update(more)
    return p


def mirrored_start(x0) -> np.ndarray:
    """Start point of the mirrored model; for exchange drifts b(1-x) = -b(x), so the
    mirrored model is the original one run from ``1 - x0``."""
    return 1.0 - as_state(x0)


# --------------------------------------------------------------------------
# block tasks (top level so that process pools can pickle them)
# --------------------------------------------------------------------------

def _absorption_block(block_id, n, gen, *, x0, spec, cfg):
    out = run_sde_batch(x0, spec, cfg, n, gen)
    return out.corner


class _DbarExit:
    """Stop rule: Dbar(x) >= alpha."""

    def __init__(self, spec: ModelSpec, alpha: float):
        self.w = spec.d_array / spec.dprod
        self.alpha = alpha

    def __call__(self, x: np.ndarray) -> np.ndarray:
        return x @ self.w >= self.alpha


def _exit_block(block_id, n, gen, *, x0, spec, cfg, alpha):
    out = run_sde_batch(x0, spec, cfg, n, gen, stop=_DbarExit(spec, alpha))
    return out.stop_time, out.stopped_by_rule, out.corner


def _snapshot_block(block_id, n, gen, *, x0, spec, cfg, times):
    out = run_sde_batch(x0, spec, cfg, n, gen, snapshot_times=times)
    return dbar(out.snapshots, spec)


def _chain_snapshot_block(block_id, n, gen, *, x0, spec, ccfg, t_max, times):
    out = run_chain_batch(x0, spec, ccfg, t_max, n, gen, snapshot_times=times)
    return dbar(out.snapshots, spec)


# --------------------------------------------------------------------------
# experiments
# --------------------------------------------------------------------------

def estimate_absorption(x0, spec: ModelSpec, cfg: SdeConfig, reps: int, seed: int,
                        workers: int | None = None) -> AbsorptionEstimate:
    """Fractions of paths absorbed at corner 0 and at corner 1 by ``cfg.t_max``."""
    _require_validated(spec)
    _check_reps(reps)
    x0 = as_state(x0)
    corners = run_blocks(partial(_absorption_block, x0=x0, spec=spec, cfg=cfg), reps, seed, workers)
    chash = config_hash(_params(spec, x0, cfg, kind="absorption"))
    censored = [int(np.sum(c < 0)) for c in corners]
    e0 = estimate_from_blocks([(c == 0).astype(float) for c in corners], seed, chash, censored)
    e1 = estimate_from_blocks([(c == 1).astype(float) for c in corners], seed, chash, censored)
    return AbsorptionEstimate(e0, e1, e0.censored_fraction)


def check_delta_bound(x0, spec: ModelSpec, alpha: float, cfg: SdeConfig, reps: int, seed: int,
                      workers: int | None = None) -> BoundReport:
    """Absorption at the near corner against ``1 - Dbar(x0)/alpha``.

    Paths still running at the horizon count as not absorbed, which can only
    lower the estimate of a lower-bounded probability.
    """
    x0 = as_state(x0)
    where = delta_membership(x0, spec, alpha)
    if where == "neither":
        raise ConfigurationError(f"x0 = {x0.tolist()} lies in neither corner set for alpha = {alpha}")
    if where == "delta0":
        bound = 1.0 - float(dbar(x0, spec)) / alpha
        corner = 0
    else:
        bound = 1.0 - float(dbar(1.0 - x0, spec)) / alpha
        corner = 1
    ab = estimate_absorption(x0, spec, cfg, reps, seed, workers)
    est = ab.corner0 if corner == 0 else ab.corner1
    return BoundReport("bound-check", "lower", bound, est,
                       params=_params(spec, x0, cfg, alpha=alpha, corner=corner, set=where))


def entropy_bounds(x0, spec: ModelSpec) -> dict:
    """Upper bounds on the mean exit time of Dbar from (0, alpha) started at x0.

    ``stated`` is u(Dbar); ``sharper`` carries the extra factor dprod/2;
    ``ito`` is dprod * u(Dbar), what Ito's formula gives for u(Dbar) when
    the quadratic variation of Dbar is bounded below by Dbar(1 - Dbar)/dprod.
    """
    u = entropy_u(float(dbar(x0, spec)))
    return {"stated": u, "sharper": 0.5 * spec.dprod * u, "ito": spec.dprod * u}


def default_hitting_horizon(x0, spec: ModelSpec) -> float:
    """50 times the stated entropy bound (at least one time unit)."""
    return max(1.0, 50.0 * entropy_bounds(x0, spec)["stated"])


def _exit_times(x0, spec, alpha, cfg, reps, seed, workers):
    return run_blocks(partial(_exit_block, x0=x0, spec=spec, cfg=cfg, alpha=alpha), reps, seed, workers)


def _require_delta0(x0, spec, alpha):
    if delta_membership(x0, spec, alpha) != "delta0":
        raise ConfigurationError(f"x0 = {x0.tolist()} is not in the set Dbar < {alpha}")


def estimate_mean_hitting_time(x0, spec: ModelSpec, alpha: float, cfg: SdeConfig | None, reps: int,
                               seed: int, workers: int | None = None) -> BoundReport:
    """Mean of T = first time Dbar(X) leaves (0, alpha), against ``(dprod/2) u(Dbar(x0))``.

    Censored paths contribute the horizon, which biases the mean downward;
    the censored fraction is reported.  The stated and Ito bounds are carried
    in ``extra_bounds``.  ``cfg=None`` picks the default horizon.
    """
    _require_validated(spec)
    _check_reps(reps)
    x0 = as_state(x0)
    check_alpha(alpha, spec)
    _require_delta0(x0, spec, alpha)
    if cfg is None:
        cfg = SdeConfig(t_max=default_hitting_horizon(x0, spec))
    parts = _exit_times(x0, spec, alpha, cfg, reps, seed, workers)
    times = [np.where(np.isfinite(st), st, cfg.t_max) for st, _, _ in parts]
    censored = [int(np.sum(~np.isfinite(st))) for st, _, _ in parts]
    chash = config_hash(_params(spec, x0, cfg, kind="hitting-time", alpha=alpha))
    est = estimate_from_blocks(times, seed, chash, censored)
    bounds = entropy_bounds(x0, spec)
    return BoundReport("hitting-time", "upper", bounds["sharper"], est,
                       params=_params(spec, x0, cfg, alpha=alpha),
                       extra_bounds={"stated": bounds["stated"], "ito": bounds["ito"]})


def optional_stopping_check(x0, spec: ModelSpec, alpha: float, cfg: SdeConfig, reps: int, seed: int,
                            workers: int | None = None, tolerance: float = 0.01) -> BoundReport:
    """``p = P[Dbar reaches alpha before 0]`` against ``alpha p = Dbar(x0)``.

    The exit at alpha is detected on the time grid, so the overshoot makes the
    scheme error O(sqrt(dt)); ``tolerance`` absorbs it.
    """
    _require_validated(spec)
    _check_reps(reps)
    x0 = as_state(x0)
    check_alpha(alpha, spec)
    _require_delta0(x0, spec, alpha)
    parts = _exit_times(x0, spec, alpha, cfg, reps, seed, workers)
    hits = [rule.astype(float) for _, rule, _ in parts]
    censored = [int(np.sum(~np.isfinite(st))) for st, _, _ in parts]
    chash = config_hash(_params(spec, x0, cfg, kind="stopping", alpha=alpha))
    est = estimate_from_blocks(hits, seed, chash, censored)
    return BoundReport("stopping-check", "identity", float(dbar(x0, spec)), est,
                       tolerance=tolerance, scale=alpha, params=_params(spec, x0, cfg, alpha=alpha))


@dataclass(frozen=True)
class MartingaleRow:
    process: str
    t: float
    estimate: McEstimate
    target: float

    @property
    def passed(self) -> bool:
        return abs(self.estimate.mean - self.target) <= 3.0 * self.estimate.stderr


@dataclass(frozen=True)
class MartingaleReport:
    rows: tuple[MartingaleRow, ...]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def failed(self, process: str | None = None) -> list[MartingaleRow]:
        return [r for r in self.rows if not r.passed and (process is None or r.process == process)]


def martingale_drift_check(x0, spec: ModelSpec, times: Sequence[float], cfg: SdeConfig, reps: int,
                           seed: int, workers: int | None = None, chain_N: int | None = 100,
                           chain_reps: int | None = None) -> MartingaleReport:
    """Mean of Dbar(X_t) at each t against Dbar(x0), for the SDE and for the chain.

    The chain row uses the embedded clock at the smallest admissible N not
    below ``chain_N`` (skip it with ``chain_N=None``).
    """
    _require_validated(spec)
    _check_reps(reps)
    x0 = as_state(x0)
    times = tuple(float(t) for t in times)
    if not times or min(times) <= 0:
        raise ConfigurationError("times must be positive")
    horizon = max(times)
    run_cfg = SdeConfig(dt=cfg.dt, t_max=max(horizon, cfg.dt), corner_tol=cfg.corner_tol)
    target = float(dbar(x0, spec))
    rows = []
    parts = run_blocks(partial(_snapshot_block, x0=x0, spec=spec, cfg=run_cfg, times=times),
                       reps, seed, workers)
    for j, t in enumerate(times):
        chash = config_hash(_params(spec, x0, run_cfg, kind="martingale", t=t))
        rows.append(MartingaleRow("sde", t, estimate_from_blocks([p[j] for p in parts], seed, chash), target))
    if chain_N is not None:
        N = spec.first_admissible(max(int(chain_N), spec.N_min))
        ccfg = ChainConfig(N, "embedded")
        creps = chain_reps or reps
        cparts = run_blocks(partial(_chain_snapshot_block, x0=x0, spec=spec, ccfg=ccfg,
                                    t_max=horizon, times=times), creps, seed, workers)
        for j, t in enumerate(times):
            chash = config_hash(_params(spec, x0, run_cfg, kind="martingale-chain", t=t, N=N))
            rows.append(MartingaleRow(f"chain(N={N})", t,
                                      estimate_from_blocks([p[j] for p in cparts], seed, chash),
                                      target))
    return MartingaleReport(tuple(rows))
