"""Static model data: distortions, drift families, hypotheses and their checks.

A model lives on the hypercube K = [0,1]^m.  Coordinate i is the density of
species alpha in patch i, whose capacity is d_i * N individuals.  Dispersal is
the exchange map ``Phi_N(x) = x + b(x)/N`` built from a drift ``b``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from functools import lru_cache
from typing import Sequence, Union

import numpy as np
from scipy.sparse.csgraph import connected_components

from .errors import AdmissibilityError, ConfigurationError, DomainError, InvariantError

STATE_TOL = 1e-12
CONSERVATION_TOL = 1e-10
SIGN_TOL = 1e-12


# --------------------------------------------------------------------------
# States and boundary geometry
# --------------------------------------------------------------------------

def as_state(x, tol: float = STATE_TOL) -> np.ndarray:
    """Return ``x`` as a float vector in K, clamping excursions of at most ``tol``.

    Raises DomainError when a coordinate is further than ``tol`` from [0, 1].
    """
    arr = np.array(x, dtype=float)
    if arr.ndim != 1 or arr.size == 0:
        raise DomainError(f"a state must be a non-empty vector, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)) or np.any(arr < -tol) or np.any(arr > 1 + tol):
        raise DomainError(f"state {arr.tolist()} is outside [0,1]^m")
    return np.clip(arr, 0.0, 1.0)


def as_states(x, tol: float = STATE_TOL) -> np.ndarray:
    """Like :func:`as_state` for a single state or an (n, m) batch."""
    arr = np.array(x, dtype=float)
    if arr.ndim == 1:
        return as_state(arr, tol)
    if arr.ndim != 2 or arr.shape[1] == 0:
        raise DomainError(f"a batch of states must have shape (n, m), got {arr.shape}")
    if not np.all(np.isfinite(arr)) or np.any(arr < -tol) or np.any(arr > 1 + tol):
        raise DomainError("batch contains states outside [0,1]^m")
    return np.clip(arr, 0.0, 1.0)


@dataclass(frozen=True)
class BoundaryInfo:
    I0: frozenset[int]
    I1: frozenset[int]
    normal: tuple[int, ...]

    @property
    def on_boundary(self) -> bool:
        return bool(self.I0 or self.I1)


def boundary_info(x, tol: float = 0.0) -> BoundaryInfo:
    """Indices at 0, indices at 1 and the inward normal of K at ``x`` (0-based)."""
    if tol < 0:
        raise DomainError("tol must be non-negative")
    x = np.asarray(x, dtype=float)
    I0 = frozenset(int(i) for i in np.flatnonzero(x <= tol))
    I1 = frozenset(int(i) for i in np.flatnonzero(x >= 1 - tol)) - I0
    normal = tuple(1 if i in I0 else -1 if i in I1 else 0 for i in range(x.size))
    return BoundaryInfo(I0, I1, normal)


# --------------------------------------------------------------------------
# Drift families
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class LinearExchange:
    """Pairwise exchange at rates ``s_ij``: ``b_i(x) = sum_j (s_ij/d_i)(x_j - x_i)``.

    ``S`` must be square, non-negative, with zero diagonal.  Symmetry is what
    makes ``sum_i d_i b_i`` vanish identically; it is checked by
    :func:`validate_model`, not here, so that non-conservative couplings can be
    built on purpose for negative controls.
    """

    S: tuple[tuple[float, ...], ...]

    def __post_init__(self):
        S = np.array(self.S, dtype=float)
        if S.ndim != 2 or S.shape[0] != S.shape[1]:
            raise ConfigurationError(f"S must be a square matrix, got shape {S.shape}")
        if not np.all(np.isfinite(S)) or np.any(S < 0):
            raise ConfigurationError("S entries must be finite and non-negative")
        if np.any(np.diag(S) != 0):
            raise ConfigurationError("S must have a zero diagonal")
        object.__setattr__(self, "S", tuple(tuple(float(v) for v in row) for row in S))

    @classmethod
    def two_patch(cls, s12: float) -> LinearExchange:
        return cls(((0.0, s12), (s12, 0.0)))

    @property
    def matrix(self) -> np.ndarray:
        return np.array(self.S, dtype=float)

    @property
    def symmetric(self) -> bool:
        S = self.matrix
        return bool(np.array_equal(S, S.T))

    @property
    def irreducible(self) -> bool:
        S = self.matrix
        n, _ = connected_components(S + S.T > 0, directed=False)
        return n == 1

    def rates(self, d) -> np.ndarray:
        """Per-patch migration rates ``m_ij = s_ij / d_i``."""
        return self.matrix / np.asarray(d, dtype=float)[:, None]

    def evaluate(self, x: np.ndarray, d) -> np.ndarray:
        M = self.rates(d)
        # differences x_j - x_i vanish exactly at the corners
        diff = x[..., None, :] - x[..., :, None]
        return np.einsum("ij,...ij->...i", M, diff)

    def affine(self, d) -> tuple[np.ndarray, np.ndarray]:
        """``(c, A)`` with ``b(x) = c + A x``."""
        M = self.rates(d)
        return np.zeros(M.shape[0]), M - np.diag(M.sum(axis=1))

    def row_sum_threshold(self, d) -> int:
        sums = self.rates(d).sum(axis=1)
        return max(1, max(math.ceil(s - 1e-12) for s in sums))


@lru_cache(maxsize=64)
def _compile_tabulated(exprs: tuple[str, ...]):
    import sympy as sp

    m = len(exprs)
    syms = sp.symbols(f"x1:{m + 1}")
    local = {f"x{i + 1}": s for i, s in enumerate(syms)}
    parsed = [sp.sympify(e, locals=local) for e in exprs]
    extra = set().union(*(p.free_symbols for p in parsed)) - set(syms)
    if extra:
        raise ConfigurationError(f"drift expressions use unknown symbols {sorted(map(str, extra))}")
    func = sp.lambdify(syms, parsed, modules="numpy")
    jac = sp.lambdify(syms, [[sp.diff(p, s) for s in syms] for p in parsed], modules="numpy")
    polys = []
    for p in parsed:
        try:
            poly = sp.Poly(sp.expand(p), *syms)
        except sp.PolynomialError:
            polys = None
            break
        if not all(c.is_number for c in poly.coeffs()):
            polys = None
            break
        polys.append({tuple(int(k) for k in mon): float(c) for mon, c in poly.terms()})
    return func, jac, polys


@dataclass(frozen=True)
class Tabulated:
    """Drift given by closed-form expressions in ``x1, ..., xm`` (sympy syntax)."""

    exprs: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "exprs", tuple(str(e) for e in self.exprs))
        if not self.exprs:
            raise ConfigurationError("a tabulated drift needs at least one expression")
        try:
            _compile_tabulated(self.exprs)
        except ConfigurationError:
            raise
        except Exception as exc:  # sympy parse errors come in many types
            raise ConfigurationError(f"cannot parse drift expressions: {exc}") from exc

    def evaluate(self, x: np.ndarray, d=None) -> np.ndarray:
        func, _, _ = _compile_tabulated(self.exprs)
        cols = [np.broadcast_to(np.asarray(v, dtype=float), x.shape[:-1])
                for v in func(*np.moveaxis(x, -1, 0))]
        return np.stack(cols, axis=-1)

    def jacobian(self, x: np.ndarray) -> np.ndarray:
        _, jac, _ = _compile_tabulated(self.exprs)
        rows = jac(*np.moveaxis(x, -1, 0))
        return np.stack([np.stack([np.broadcast_to(np.asarray(v, dtype=float), x.shape[:-1])
                                   for v in row], axis=-1) for row in rows], axis=-2)

    def polynomials(self) -> list[dict[tuple[int, ...], float]] | None:
        """Coefficient maps of each ``b_i`` if all are polynomials, else None."""
        return _compile_tabulated(self.exprs)[2]


DriftSpec = Union[LinearExchange, Tabulated]


# --------------------------------------------------------------------------
# Model specification
# --------------------------------------------------------------------------

def _common_denominator(d: Sequence[float]) -> int:
    den = 1
    for v in d:
        den = math.lcm(den, Fraction(v).limit_denominator(10**6).denominator)
    return den


def uniform_grid(m: int, resolution: int) -> np.ndarray:
    axis = np.linspace(0.0, 1.0, resolution + 1)
    mesh = np.meshgrid(*([axis] * m), indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=-1)


def _tabulated_n_min(drift: Tabulated, d, resolution: int = 40) -> int:
    pts = uniform_grid(len(d), resolution)
    b = drift.evaluate(pts)
    need = np.zeros_like(b)
    up = b > SIGN_TOL
    down = b < -SIGN_TOL
    room_up = 1.0 - pts
    room_down = pts.copy()
    with np.errstate(divide="ignore", invalid="ignore"):
        need[up] = np.where(room_up[up] > 0, b[up] / room_up[up], np.inf)
        need[down] = np.where(room_down[down] > 0, -b[down] / room_down[down], np.inf)
    worst = float(need.max()) if need.size else 0.0
    if not math.isfinite(worst):
        return 0  # signals an inadmissible drift; reported by validate_model
    return max(1, math.ceil(worst - 1e-12))


@dataclass(frozen=True)
class ModelSpec:
    """Patch distortions, drift and the smallest admissible population scale.

    Build with :func:`make_model`; operations refuse specs whose ``validated``
    flag is unset.
    """

    d: tuple[float, ...]
    drift: DriftSpec
    N_min: int
    validated: bool = field(default=False, compare=False)
    strict_inward: bool = field(default=False, compare=False)

    @property
    def m(self) -> int:
        return len(self.d)

    @property
    def d_array(self) -> np.ndarray:
        return np.array(self.d, dtype=float)

    @property
    def dprod(self) -> float:
        return float(np.prod(self.d_array))

    @property
    def n_step(self) -> int:
        """Population scales must be multiples of this so every ``d_i N`` is an integer."""
        return _common_denominator(self.d)

    def admissible(self, N: int) -> bool:
        return int(N) == N and N >= self.N_min and N % self.n_step == 0

    def check_N(self, N: int) -> int:
        if int(N) != N or N < 1:
            raise AdmissibilityError(f"N must be a positive integer, got {N!r}")
        if N < self.N_min:
            raise AdmissibilityError(
                f"N={N} is below N_min={self.N_min}; the exchange map could leave K")
        if N % self.n_step:
            raise AdmissibilityError(
                f"N={N} is not a multiple of {self.n_step}; patch sizes d_i*N must be integers")
        return int(N)

    def patch_sizes(self, N: int) -> np.ndarray:
        N = self.check_N(N)
        return np.array([int(Fraction(v).limit_denominator(10**6) * N) for v in self.d])

    def first_admissible(self, at_least: int = 1) -> int:
        N = max(self.N_min, at_least)
        return -(-N // self.n_step) * self.n_step


def make_model(d: Sequence[float], drift: DriftSpec, *, grid_resolution: int = 20,
               validate: bool = True) -> ModelSpec:
    """Assemble a :class:`ModelSpec`, validating it unless ``validate`` is false.

    Raises ConfigurationError when a required hypothesis check fails; the
    strict inward-drift condition is recorded on ``strict_inward`` instead.
    """
    d = tuple(float(v) for v in d)
    if len(d) < 2:
        raise ConfigurationError("a metacommunity needs at least two patches")
    if any(not (v > 0) for v in d):
        raise ConfigurationError("distortions must be positive")
    if isinstance(drift, LinearExchange):
        if len(drift.S) != len(d):
            raise ConfigurationError(f"S is {len(drift.S)}x{len(drift.S)} but there are {len(d)} patches")
        n_min = drift.row_sum_threshold(d)
    elif isinstance(drift, Tabulated):
        if len(drift.exprs) != len(d):
            raise ConfigurationError(f"{len(drift.exprs)} drift expressions for {len(d)} patches")
        n_min = _tabulated_n_min(drift, d)
    else:
        raise ConfigurationError(f"unknown drift type {type(drift).__name__}")
    spec = ModelSpec(d=d, drift=drift, N_min=n_min)
    if not validate:
        return spec
    report = validate_model(spec, grid_resolution)
    if not report.ok:
        failed = ", ".join(c.name for c in report.checks if not c.passed and c.required)
        raise ConfigurationError(f"model fails required checks: {failed}")
    return replace(spec, validated=True, strict_inward=report.check("strict_inward").passed)


def assume_valid(spec: ModelSpec) -> ModelSpec:
    """Mark ``spec`` usable without passing validation (negative controls only)."""
    return replace(spec, validated=True)


def _require_validated(spec: ModelSpec) -> None:
    if not spec.validated:
        raise ConfigurationError("model spec has not been validated; build it with make_model")


# --------------------------------------------------------------------------
# Evaluations
# --------------------------------------------------------------------------

def drift_values(spec: ModelSpec, x: np.ndarray) -> np.ndarray:
    """Unchecked vectorized drift; ``x`` has shape (..., m)."""
    return spec.drift.evaluate(np.asarray(x, dtype=float), spec.d)


def drift_columns(spec: ModelSpec, xT: np.ndarray) -> np.ndarray:
    """Drift for coordinate-major batches: ``xT`` and the result have shape (m, n)."""
    if isinstance(spec.drift, LinearExchange):
        M = spec.drift.rates(spec.d)
        out = np.zeros_like(xT)
        for j in range(spec.m):
            col = M[:, j]
            nz = col != 0
            if np.any(nz):
                out[nz] += col[nz, None] * (xT[j] - xT[nz])
        return out
    return np.moveaxis(spec.drift.evaluate(np.moveaxis(xT, 0, -1), spec.d), -1, 0)


def dbar(x, spec: ModelSpec) -> np.ndarray:
    """Vectorized ``<d, x> / dprod`` over the last axis."""
    return np.asarray(x, dtype=float) @ spec.d_array / spec.dprod


def dbar_one(spec: ModelSpec) -> float:
    return float(spec.d_array.sum() / spec.dprod)


def drift_eval(spec: ModelSpec, x) -> np.ndarray:
    """Drift vector ``b(x)`` at a point of K."""
    _require_validated(spec)
    x = as_state(x)
    if x.size != spec.m:
        raise DomainError(f"state has {x.size} coordinates, model has {spec.m} patches")
    return drift_values(spec, x)


def exchange_eval(spec: ModelSpec, N: int, x) -> np.ndarray:
    """Migration map ``Phi_N(x) = x + b(x)/N``; conserves ``sum_i N_i x_i``.

    ``x`` may be one state or an (n, m) batch.
    """
    _require_validated(spec)
    N = spec.check_N(N)
    x = as_states(x)
    if x.shape[-1] != spec.m:
        raise DomainError(f"state has {x.shape[-1]} coordinates, model has {spec.m}")
    y = x + drift_values(spec, x) / N
    if np.any(y < -STATE_TOL) or np.any(y > 1 + STATE_TOL):
        bad = y[np.any((y < -STATE_TOL) | (y > 1 + STATE_TOL), axis=-1)] if y.ndim == 2 else y
        raise InvariantError(f"exchange image {np.asarray(bad)[:3].tolist()} left K at N={N}")
    return np.clip(y, 0.0, 1.0)


def fichera_eval(spec: ModelSpec, x) -> float:
    """Fichera function ``sum_i (b_i(x) - (1-2x_i)/d_i) n_i(x)`` at a boundary point."""
    _require_validated(spec)
    x = as_state(x)
    info = boundary_info(x)
    if not info.on_boundary:
        raise DomainError(f"{x.tolist()} is an interior point")
    b = drift_values(spec, x)
    n = np.array(info.normal, dtype=float)
    return float(np.sum((b - (1 - 2 * x) / spec.d_array) * n))


# --------------------------------------------------------------------------
# Validation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str
    required: bool = True


@dataclass(frozen=True)
class ValidationReport:
    checks: tuple[CheckResult, ...]

    @property
    def ok(self) -> bool:
        """All checks the model needs to be well defined passed."""
        return all(c.passed for c in self.checks if c.required)

    @property
    def all_passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str) -> CheckResult:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_records(self) -> list[dict]:
        return [{"check": c.name, "passed": c.passed, "required": c.required, "detail": c.detail}
                for c in self.checks]


def _boundary_grid(m: int, resolution: int) -> np.ndarray:
    pts = uniform_grid(m, resolution)
    on_bd = np.any((pts == 0.0) | (pts == 1.0), axis=1)
    return pts[on_bd]


def validate_model(spec: ModelSpec, grid_resolution: int = 20) -> ValidationReport:
    """Check every structural hypothesis on the model; failures become report entries."""
    if grid_resolution < 2:
        raise DomainError("grid_resolution must be at least 2")
    d = spec.d_array
    m = spec.m
    checks = []

    problems = []
    if np.any(d <= 0) or np.any(d > 1):
        problems.append("entries outside (0,1]")
    if d[0] != 1.0:
        problems.append(f"d_1 = {d[0]} != 1")
    if np.any(np.diff(d) > 0):
        problems.append("not nonincreasing")
    checks.append(CheckResult(
        "distortions", not problems,
        "; ".join(problems) if problems else f"d={d.tolist()}, dprod={spec.dprod:.6g}"))

    pts = uniform_grid(m, grid_resolution)
    b = drift_values(spec, pts)
    resid = np.abs(b @ d)
    worst = float(resid.max())
    detail = f"max |sum d_i b_i| = {worst:.3e} on {len(pts)} grid points"
    if isinstance(spec.drift, LinearExchange):
        detail += f"; S symmetric: {spec.drift.symmetric}"
    checks.append(CheckResult("conservation", worst <= CONSERVATION_TOL, detail))

    bpts = _boundary_grid(m, grid_resolution)
    bb = drift_values(spec, bpts)
    bad_low = (bpts == 0.0) & (bb < -SIGN_TOL)
    bad_high = (bpts == 1.0) & (bb > SIGN_TOL)
    n_bad = int(np.count_nonzero(np.any(bad_low | bad_high, axis=1)))
    checks.append(CheckResult(
        "boundary_sign", n_bad == 0,
        f"{n_bad} of {len(bpts)} boundary grid points violate <b,n> >= 0 coordinatewise"))

    normal = np.where(bpts == 0.0, 1.0, np.where(bpts == 1.0, -1.0, 0.0))
    corner = np.all(bpts == 0.0, axis=1) | np.all(bpts == 1.0, axis=1)
    inner = np.sum(bb * normal, axis=1)[~corner]
    min_inner = float(inner.min()) if inner.size else math.inf
    strict = min_inner > 0
    detail = f"min <b,n> over {inner.size} non-corner boundary points = {min_inner:.3e}"
    if isinstance(spec.drift, LinearExchange):
        irreducible = spec.drift.irreducible
        strict = strict and irreducible
        detail += f"; S irreducible: {irreducible}"
    checks.append(CheckResult("strict_inward", strict, detail, required=False))

    b0 = drift_values(spec, np.zeros(m))
    b1 = drift_values(spec, np.ones(m))
    fixed = bool(np.all(b0 == 0.0) and np.all(b1 == 0.0))
    checks.append(CheckResult("fixed_corners", fixed,
                              f"b(0)={b0.tolist()}, b(1)={b1.tolist()}"))

    checks.append(_check_n_min(spec, pts))
    return ValidationReport(tuple(checks))


def _check_n_min(spec: ModelSpec, pts: np.ndarray) -> CheckResult:
    if spec.N_min < 1:
        return CheckResult("n_min", False, "no finite N keeps the exchange map inside K")
    if isinstance(spec.drift, LinearExchange):
        expected = spec.drift.row_sum_threshold(spec.d)
        if spec.N_min < expected:
            return CheckResult("n_min", False,
                               f"N_min={spec.N_min} below row-sum threshold {expected}")
    N = spec.first_admissible()
    img = pts + drift_values(spec, pts) / N
    inside = bool(np.all(img >= -STATE_TOL) and np.all(img <= 1 + STATE_TOL))
    return CheckResult("n_min", inside,
                       f"N_min={spec.N_min}, N step={spec.n_step}; Phi_N(grid) in K at N={N}: {inside}")

