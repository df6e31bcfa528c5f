"""Sparse multivariate polynomials on K = [0,1]^m.

A :class:`Polynomial` maps exponent tuples to real coefficients.  It supports
the handful of operations the semigroup engine needs: arithmetic, vectorized
evaluation, affine substitution and a graded-lexicographic basis of P_n.
"""

from __future__ import annotations

import itertools
from functools import lru_cache
from typing import Iterable, Mapping

import numpy as np

Monomial = tuple[int, ...]


class Polynomial:
    """Polynomial in ``m`` variables with no zero coefficients stored."""

    __slots__ = ("m", "coeffs")

    def __init__(self, m: int, coeffs: Mapping[Monomial, float] | None = None):
        if m < 1:
            raise ValueError("a polynomial needs at least one variable")
        self.m = m
        clean: dict[Monomial, float] = {}
        for mon, c in (coeffs or {}).items():
            mon = tuple(int(k) for k in mon)
            if len(mon) != m or any(k < 0 for k in mon):
                raise ValueError(f"bad exponent {mon} for {m} variables")
            c = float(c)
            if c != 0.0:
                clean[mon] = clean.get(mon, 0.0) + c
        self.coeffs = {k: v for k, v in clean.items() if v != 0.0}

    # construction -------------------------------------------------------
    @classmethod
    def constant(cls, m: int, c: float = 1.0) -> Polynomial:
        return cls(m, {(0,) * m: c})

    @classmethod
    def monomial(cls, exponents: Iterable[int], c: float = 1.0) -> Polynomial:
        exponents = tuple(exponents)
        return cls(len(exponents), {exponents: c})

    @classmethod
    def variable(cls, i: int, m: int) -> Polynomial:
        """The coordinate function ``x_i`` (0-based)."""
        e = [0] * m
        e[i] = 1
        return cls(m, {tuple(e): 1.0})

    # structure ----------------------------------------------------------
    @property
    def degree(self) -> int:
        return max((sum(k) for k in self.coeffs), default=0)

    def is_zero(self) -> bool:
        return not self.coeffs

    def __eq__(self, other) -> bool:
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.m == other.m and self.coeffs == other.coeffs

    def __repr__(self) -> str:
        if not self.coeffs:
            return "Polynomial(0)"
        terms = []
        for mon in sorted(self.coeffs, key=grlex_key):
            c = self.coeffs[mon]
            var = "*".join(f"x{i + 1}" + (f"^{k}" if k > 1 else "")
                           for i, k in enumerate(mon) if k)
            terms.append(f"{c:+.6g}" + (f"*{var}" if var else ""))
        return "Polynomial(" + " ".join(terms) + ")"

    def max_coeff_diff(self, other: Polynomial) -> float:
        keys = set(self.coeffs) | set(other.coeffs)
        return max((abs(self.coeffs.get(k, 0.0) - other.coeffs.get(k, 0.0)) for k in keys),
                   default=0.0)

    # arithmetic ---------------------------------------------------------
    def _check(self, other: Polynomial) -> None:
        if other.m != self.m:
            raise ValueError(f"variable count mismatch: {self.m} vs {other.m}")

    def __add__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(self.m, other)
        self._check(other)
        out = dict(self.coeffs)
        for k, v in other.coeffs.items():
            out[k] = out.get(k, 0.0) + v
        return Polynomial(self.m, out)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial(self.m, {k: -v for k, v in self.coeffs.items()})

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating)):
            return Polynomial(self.m, {k: v * other for k, v in self.coeffs.items()})
        self._check(other)
        out: dict[Monomial, float] = {}
        for k1, v1 in self.coeffs.items():
            for k2, v2 in other.coeffs.items():
                k = tuple(a + b for a, b in zip(k1, k2))
                out[k] = out.get(k, 0.0) + v1 * v2
        return Polynomial(self.m, out)

    __rmul__ = __mul__

    def __pow__(self, k: int):
        out = Polynomial.constant(self.m)
        for _ in range(k):
            out = out * self
        return out

    def derivative(self, i: int) -> Polynomial:
        out = {}
        for mon, c in self.coeffs.items():
            if mon[i]:
                e = list(mon)
                e[i] -= 1
                out[tuple(e)] = c * mon[i]
        return Polynomial(self.m, out)

    # evaluation ---------------------------------------------------------
    def __call__(self, x) -> np.ndarray | float:
        """Evaluate at a point (shape (m,)) or a batch of points (shape (..., m))."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.m:
            raise ValueError(f"points have {x.shape[-1]} coordinates, polynomial has {self.m}")
        deg = max((max(k) for k in self.coeffs), default=0)
        powers = np.ones((deg + 1,) + x.shape)
        for p in range(1, deg + 1):
            powers[p] = powers[p - 1] * x
        out = np.zeros(x.shape[:-1])
        for mon, c in self.coeffs.items():
            term = np.full(x.shape[:-1], c)
            for i, k in enumerate(mon):
                if k:
                    term = term * powers[k][..., i]
            out = out + term
        return float(out) if out.ndim == 0 else out

    # substitution -------------------------------------------------------
    def substitute(self, polys: list[Polynomial]) -> Polynomial:
        """``f(p_1(x), ..., p_m(x))`` for polynomials ``p_i`` in the same variables."""
        if len(polys) != self.m:
            raise ValueError(f"need {self.m} substitutions, got {len(polys)}")
        m = polys[0].m
        cache: dict[tuple[int, int], Polynomial] = {}

        def power(i: int, k: int) -> Polynomial:
            if (i, k) not in cache:
                cache[(i, k)] = Polynomial.constant(m) if k == 0 else power(i, k - 1) * polys[i]
            return cache[(i, k)]

        out = Polynomial(m)
        for mon, coef in self.coeffs.items():
            term = Polynomial.constant(m, coef)
            for i, k in enumerate(mon):
                if k:
                    term = term * power(i, k)
            out = out + term
        return out

    def compose_affine(self, A, c) -> Polynomial:
        """``f(A x + c)`` for an m x m matrix ``A`` and shift ``c``."""
        A = np.asarray(A, dtype=float)
        c = np.asarray(c, dtype=float)
        return self.substitute([affine_polynomial(A[i], c[i]) for i in range(self.m)])

    # coefficient vectors ------------------------------------------------
    def to_vector(self, basis: list[Monomial]) -> np.ndarray:
        index = {mon: j for j, mon in enumerate(basis)}
        v = np.zeros(len(basis))
        for mon, c in self.coeffs.items():
            if mon not in index:
                raise ValueError(f"monomial {mon} is outside the basis")
            v[index[mon]] = c
        return v

    @classmethod
    def from_vector(cls, basis: list[Monomial], v) -> Polynomial:
        return cls(len(basis[0]), {mon: c for mon, c in zip(basis, np.asarray(v, dtype=float))})

    # serialization ------------------------------------------------------
    def to_records(self) -> list[dict]:
        return [{"exponents": list(mon), "coeff": self.coeffs[mon]}
                for mon in sorted(self.coeffs, key=grlex_key)]

    @classmethod
    def from_records(cls, records: list[dict], m: int | None = None) -> Polynomial:
        if m is None:
            if not records:
                raise ValueError("cannot infer the variable count of an empty record list")
            m = len(records[0]["exponents"])
        return cls(m, {tuple(r["exponents"]): r["coeff"] for r in records})


def affine_polynomial(row, shift: float = 0.0) -> Polynomial:
    """``shift + sum_j row[j] x_j``."""
    m = len(row)
    coeffs = {tuple(int(j == k) for j in range(m)): float(row[k]) for k in range(m)}
    coeffs[(0,) * m] = float(shift)
    return Polynomial(m, coeffs)


def grlex_key(mon: Monomial) -> tuple:
    return (sum(mon), tuple(-k for k in mon))


@lru_cache(maxsize=None)
def _basis(m: int, n: int) -> tuple[Monomial, ...]:
    mons = [mon for mon in itertools.product(range(n + 1), repeat=m) if sum(mon) <= n]
    return tuple(sorted(mons, key=grlex_key))


def monomial_basis(m: int, n: int) -> list[Monomial]:
    """Graded-lexicographic basis of polynomials of degree at most ``n``."""
    return list(_basis(m, n))


def parse_polynomial(text: str, m: int) -> Polynomial:
    """Parse an expression such as ``"x1**2*x2"`` into a Polynomial in ``m`` variables."""
    import sympy as sp

    syms = sp.symbols(f"x1:{m + 1}")
    expr = sp.sympify(text, locals={f"x{i + 1}": s for i, s in enumerate(syms)})
    poly = sp.Poly(sp.expand(expr), *syms)
    return Polynomial(m, {tuple(int(k) for k in mon): float(c) for mon, c in poly.terms()})
