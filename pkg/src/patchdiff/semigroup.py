"""Exact operator algebra on polynomials.

The limit generator ``L = A + B`` with

    A f = 1/2 sum_i x_i (1 - x_i) / d_i  d^2 f / dx_i^2
    B f = sum_i b_i(x) df/dx_i

maps polynomials of degree <= n into themselves when ``b`` is affine, and so
does the discrete generator ``G_N f = N (B_N (f o Phi_N) - f)``.  On that finite
dimensional space every semigroup in sight is a matrix exponential.
"""

from __future__ import annotations

import itertools
import math
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Literal

import numpy as np
from scipy.linalg import expm

from .errors import DomainError, UnsupportedDriftError
from .model import LinearExchange, ModelSpec, Tabulated, _require_validated, drift_values, uniform_grid
from .polynomial import Polynomial, affine_polynomial, monomial_basis

Which = Literal["A", "B", "L"]


# --------------------------------------------------------------------------
# Drift as polynomials
# --------------------------------------------------------------------------

def drift_polynomials(spec: ModelSpec) -> list[Polynomial]:
    """The drift components ``b_i`` as exact polynomials."""
    m = spec.m
    if isinstance(spec.drift, LinearExchange):
        c, A = spec.drift.affine(spec.d)
        return [affine_polynomial(A[i], c[i]) for i in range(m)]
    if isinstance(spec.drift, Tabulated):
        polys = spec.drift.polynomials()
        if polys is None:
            raise UnsupportedDriftError("tabulated drift has no polynomial form")
        return [Polynomial(m, p) for p in polys]
    raise UnsupportedDriftError(f"unknown drift type {type(spec.drift).__name__}")


def affine_drift(spec: ModelSpec) -> tuple[np.ndarray, np.ndarray]:
    """``(c, A)`` with ``b(x) = c + A x``; raises unless the drift is affine."""
    if isinstance(spec.drift, LinearExchange):
        return spec.drift.affine(spec.d)
    polys = drift_polynomials(spec)
    m = spec.m
    if any(p.degree > 1 for p in polys):
        raise UnsupportedDriftError("drift is not affine, so L does not preserve P_n")
    c = np.array([p.coeffs.get((0,) * m, 0.0) for p in polys])
    A = np.array([[p.coeffs.get(tuple(int(j == k) for j in range(m)), 0.0) for k in range(m)]
                  for p in polys])
    return c, A


# --------------------------------------------------------------------------
# Generators
# --------------------------------------------------------------------------

def _diffusion_part(f: Polynomial, d: np.ndarray) -> Polynomial:
    out: dict = {}
    for mon, c in f.coeffs.items():
        for i, k in enumerate(mon):
            if k >= 2:
                w = c * k * (k - 1) / (2.0 * d[i])
                lower = list(mon)
                lower[i] -= 1
                lower = tuple(lower)
                out[lower] = out.get(lower, 0.0) + w
                out[mon] = out.get(mon, 0.0) - w
    return Polynomial(f.m, out)


def _drift_part(f: Polynomial, drift: list[Polynomial]) -> Polynomial:
    out = Polynomial(f.m)
    for i, b in enumerate(drift):
        df = f.derivative(i)
        if not df.is_zero():
            out = out + b * df
    return out


def apply_generator(f: Polynomial, spec: ModelSpec, which: Which = "L") -> Polynomial:
    """``A f``, ``B f`` or ``L f = A f + B f`` as an exact polynomial."""
    _require_validated(spec)
    _check_vars(f, spec)
    if which == "A":
        return _diffusion_part(f, spec.d_array)
    drift = drift_polynomials(spec)
    if which == "B":
        return _drift_part(f, drift)
    if which == "L":
        return _diffusion_part(f, spec.d_array) + _drift_part(f, drift)
    raise ValueError(f"which must be 'A', 'B' or 'L', got {which!r}")


def _check_vars(f: Polynomial, spec: ModelSpec) -> None:
    if f.m != spec.m:
        raise ValueError(f"polynomial has {f.m} variables, model has {spec.m} patches")


# --------------------------------------------------------------------------
# Bernstein operator
# --------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _stirling2(k: int, j: int) -> int:
    if k == j:
        return 1
    if j == 0 or j > k:
        return 0
    return j * _stirling2(k - 1, j) + _stirling2(k - 1, j - 1)


@lru_cache(maxsize=None)
def binomial_moments(n_i: int, k: int) -> tuple[float, ...]:
    """Coefficients ``c_j`` with ``E[(K/n_i)^k] = sum_j c_j x^j`` for ``K ~ Bin(n_i, x)``.

    Uses the factorial-moment expansion ``K^k = sum_j S(k, j) (K)_j`` and
    ``E[(K)_j] = (n_i)_j x^j``, in exact rational arithmetic.
    """
    coeffs = []
    for j in range(k + 1):
        falling = math.prod(range(n_i - j + 1, n_i + 1))
        coeffs.append(float(Fraction(_stirling2(k, j) * falling, n_i ** k)))
    return tuple(coeffs)


def _bernstein(f: Polynomial, sizes) -> Polynomial:
    out: dict = {}
    for mon, c in f.coeffs.items():
        factors = [[(j, cj) for j, cj in enumerate(binomial_moments(int(n_i), k)) if cj]
                   for n_i, k in zip(sizes, mon)]
        for combo in itertools.product(*factors):
            key = tuple(j for j, _ in combo)
            out[key] = out.get(key, 0.0) + c * math.prod(cj for _, cj in combo)
    return Polynomial(f.m, out)


def bernstein_apply(f: Polynomial, spec: ModelSpec, N: int) -> Polynomial:
    """Exact ``B_N f``: expectation of ``f`` under independent Binomial(N_i, x_i)/N_i."""
    _require_validated(spec)
    _check_vars(f, spec)
    return _bernstein(f, spec.patch_sizes(N))


def compose_exchange(f: Polynomial, spec: ModelSpec, N: int) -> Polynomial:
    """``f o Phi_N`` with ``Phi_N(x) = x + b(x)/N``."""
    drift = drift_polynomials(spec)
    subs = [Polynomial.variable(i, spec.m) + b * (1.0 / N) for i, b in enumerate(drift)]
    return f.substitute(subs)


def discrete_generator_apply(f: Polynomial, spec: ModelSpec, N: int) -> Polynomial:
    """``G_N f = N (B_N (f o Phi_N) - f)``, the generator of the rate-N jump process."""
    _require_validated(spec)
    _check_vars(f, spec)
    N = spec.check_N(N)
    g = compose_exchange(f, spec, N)
    return (_bernstein(g, spec.patch_sizes(N)) - f) * float(N)


# --------------------------------------------------------------------------
# Matrix representations and semigroups
# --------------------------------------------------------------------------

def operator_matrix(op: Callable[[Polynomial], Polynomial], m: int, n: int):
    """Matrix of a linear map on P_n in the graded-lex monomial basis (columns = images)."""
    basis = monomial_basis(m, n)
    M = np.zeros((len(basis), len(basis)))
    for j, mon in enumerate(basis):
        image = op(Polynomial.monomial(mon))
        try:
            M[:, j] = image.to_vector(basis)
        except ValueError as exc:
            raise UnsupportedDriftError(f"operator does not preserve P_{n}: {exc}") from exc
    return basis, M


def generator_matrix(spec: ModelSpec, n: int, which: str = "L", N: int | None = None):
    """``(basis, M)`` for A, L or (with ``which='G'``) the discrete generator G_N on P_n."""
    _require_validated(spec)
    if which == "G":
        if N is None:
            raise ValueError("the discrete generator needs N")
        return operator_matrix(lambda f: discrete_generator_apply(f, spec, N), spec.m, n)
    if which in ("A", "L"):
        affine_drift(spec)
        return operator_matrix(lambda f: apply_generator(f, spec, which), spec.m, n)
    raise ValueError(f"which must be 'A', 'L' or 'G', got {which!r}")


def _expm_apply(spec: ModelSpec, f: Polynomial, t: float, which: str, N: int | None = None):
    _check_vars(f, spec)
    if t < 0:
        raise DomainError("t must be non-negative")
    basis, M = generator_matrix(spec, f.degree, which, N)
    v = f.to_vector(basis)
    return Polynomial.from_vector(basis, expm(t * M) @ v)


def semigroup_matexp(f: Polynomial, spec: ModelSpec, t: float, which: Literal["A", "L"] = "L") -> Polynomial:
    """``exp(t A) f`` or ``exp(t L) f`` on the polynomial space containing ``f``."""
    if which not in ("A", "L"):
        raise ValueError(f"which must be 'A' or 'L', got {which!r}")
    return _expm_apply(spec, f, t, which)


def chain_semigroup(f: Polynomial, spec: ModelSpec, N: int, t: float) -> Polynomial:
    """``exp(t G_N) f``: the exact expectation ``E_x f(X^N_t)`` of the Poissonized chain."""
    spec.check_N(N)
    return _expm_apply(spec, f, t, "G", N)


# --------------------------------------------------------------------------
# Drift flow
# --------------------------------------------------------------------------

def affine_flow(spec: ModelSpec, s: float) -> tuple[np.ndarray, np.ndarray]:
    """``(E, e)`` with ``y(s, x) = E x + e`` solving ``y' = b(y)``, ``y(0) = x``."""
    c, A = affine_drift(spec)
    m = spec.m
    aug = np.zeros((m + 1, m + 1))
    aug[:m, :m] = A
    aug[:m, m] = c
    F = expm(s * aug)
    return F[:m, :m], F[:m, m]


def drift_flow_apply(f: Polynomial, spec: ModelSpec, s: float) -> Polynomial:
    """``V(s) f = f o y(s, .)`` for the affine drift flow."""
    E, e = affine_flow(spec, s)
    return f.compose_affine(E, e)


def _rk4(x: np.ndarray, spec: ModelSpec, t: float, h: float) -> tuple[np.ndarray, float]:
    def field(y):
        return drift_values(spec, np.clip(y, 0.0, 1.0))

    y = np.array(x, dtype=float)
    excursion = 0.0
    n_full = int(math.floor(t / h + 1e-12))
    steps = [h] * n_full
    rest = t - n_full * h
    if rest > 1e-15:
        steps.append(rest)
    for dt in steps:
        k1 = field(y)
        k2 = field(y + 0.5 * dt * k1)
        k3 = field(y + 0.5 * dt * k2)
        k4 = field(y + dt * k3)
        y = y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        excursion = max(excursion, float(np.max(np.maximum(-y, y - 1.0), initial=0.0)))
        # the projection is part of the scheme: the field is only defined on K
        y = np.clip(y, 0.0, 1.0)
    return y, excursion


def ode_flow(x, spec: ModelSpec, t: float, h: float = 1e-3) -> np.ndarray:
    """Classical RK4 for ``y' = b(rho(y))`` from ``x`` over ``[0, t]``, rho = projection onto K.

    ``x`` may be a single state or a batch of shape (n, m).
    """
    _require_validated(spec)
    if t < 0:
        raise DomainError("t must be non-negative")
    if h <= 0:
        raise DomainError("step h must be positive")
    y, _ = _rk4(np.asarray(x, dtype=float), spec, t, h)
    return y


def ode_flow_excursion(x, spec: ModelSpec, t: float, h: float = 1e-3) -> float:
    """Largest distance outside K reached by any RK4 step before projection."""
    _require_validated(spec)
    _, exc = _rk4(np.asarray(x, dtype=float), spec, t, h)
    return exc


# --------------------------------------------------------------------------
# Trotter-Kato splitting
# --------------------------------------------------------------------------

def trotter_product(f: Polynomial, spec: ModelSpec, t: float, n_steps: int) -> Polynomial:
    """``(U(t/n) V(t/n))^n f`` with ``U = exp(s A)`` and ``V(s) f = f o flow(s)``."""
    _require_validated(spec)
    _check_vars(f, spec)
    if n_steps < 1:
        raise DomainError("n_steps must be at least 1")
    if t < 0:
        raise DomainError("t must be non-negative")
    s = t / n_steps
    n = f.degree
    basis, A = generator_matrix(spec, n, "A")
    U = expm(s * A)
    E, e = affine_flow(spec, s)
    _, V = operator_matrix(lambda g: g.compose_affine(E, e), spec.m, n)
    step = U @ V
    v = f.to_vector(basis)
    for _ in range(n_steps):
        v = step @ v
    return Polynomial.from_vector(basis, v)


# --------------------------------------------------------------------------
# Grid norms
# --------------------------------------------------------------------------

def sup_error_on_grid(f, g, resolution: int, m: int | None = None) -> float:
    """``max |f - g|`` over the uniform grid with ``resolution + 1`` points per axis.

    ``f`` and ``g`` are Polynomials or callables taking an (n, m) array.
    """
    if resolution < 1:
        raise DomainError("resolution must be at least 1")
    if m is None:
        for h in (f, g):
            if isinstance(h, Polynomial):
                m = h.m
                break
        else:
            raise ValueError("pass m when neither argument is a Polynomial")
    pts = uniform_grid(m, resolution)
    return float(np.max(np.abs(np.asarray(f(pts)) - np.asarray(g(pts)))))
