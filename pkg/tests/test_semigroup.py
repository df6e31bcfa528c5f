import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from patchdiff.diffusion import SdeConfig, run_sde_batch
from patchdiff.errors import DomainError, UnsupportedDriftError
from patchdiff.model import LinearExchange, Tabulated, make_model
from patchdiff.polynomial import Polynomial, parse_polynomial
from patchdiff.semigroup import (apply_generator, bernstein_apply, binomial_moments, chain_semigroup,
                                 discrete_generator_apply, generator_matrix, ode_flow,
                                 ode_flow_excursion, semigroup_matexp, sup_error_on_grid,
                                 trotter_product)

F = parse_polynomial("x1**2*x2", 2)


def P(text, m=2):
    return parse_polynomial(text, m)


def test_diffusion_part_on_square(equal_pair):
    assert apply_generator(P("x1**2"), equal_pair, "A").max_coeff_diff(P("x1 - x1**2")) < 1e-15


def test_generator_kills_constants(half_pair):
    assert apply_generator(Polynomial.constant(2, 3.0), half_pair, "L").is_zero()


def test_drift_part_on_coordinate(equal_pair):
    assert apply_generator(P("x1"), equal_pair, "B").max_coeff_diff(P("x2 - x1")) < 1e-15


def test_nonpolynomial_drift_unsupported():
    spec = make_model((1.0, 1.0), Tabulated(("sin(x2 - x1)", "sin(x1 - x2)")), grid_resolution=6)
    with pytest.raises(UnsupportedDriftError):
        apply_generator(P("x1"), spec, "L")


def test_polynomial_table_matches_exchange(half_pair):
    tab = make_model((1.0, 0.5), Tabulated(("x2 - x1", "2*(x1 - x2)")))
    f = P("x1**2*x2 + x2**3")
    assert apply_generator(f, tab, "L").max_coeff_diff(apply_generator(f, half_pair, "L")) < 1e-12


def test_binomial_moments():
    # E[(K/n)^2] = x^2 (n-1)/n + x/n
    assert binomial_moments(10, 2) == pytest.approx((0.0, 0.1, 0.9))


def test_bernstein_examples(half_pair):
    N = 40
    f = P("0.3 + 2*x1 - x2")
    assert bernstein_apply(f, half_pair, N).max_coeff_diff(f) < 1e-15
    q = bernstein_apply(P("x2**2"), half_pair, N)
    assert q.max_coeff_diff(P("x2**2") + P("x2 - x2**2") * (1 / 20)) < 1e-15
    assert bernstein_apply(P("x1*x2"), half_pair, N).max_coeff_diff(P("x1*x2")) < 1e-15


@pytest.mark.parametrize("N", [40, 80, 160, 2, 1000])
@pytest.mark.parametrize("i", [0, 1])
def test_quadratic_identity(half_pair, N, i):
    x2 = Polynomial.variable(i, 2) ** 2
    lhs = (bernstein_apply(x2, half_pair, N) - x2) * float(N)
    xi = Polynomial.variable(i, 2)
    rhs = (xi - x2) * (1.0 / half_pair.d[i])
    assert lhs.max_coeff_diff(rhs) <= 1e-12


def test_discrete_generator_on_affine_is_drift(half_pair):
    f = P("1 + x1 - 2*x2")
    Bf = apply_generator(f, half_pair, "B")
    for N in (2, 10, 40):
        assert discrete_generator_apply(f, half_pair, N).max_coeff_diff(Bf) < 1e-12


def test_discrete_generator_without_drift(uncoupled):
    f = P("x1**2")
    Af = apply_generator(f, uncoupled, "A")
    assert Af.max_coeff_diff(P("x1 - x1**2")) < 1e-15
    for N in (1, 7, 50):
        assert discrete_generator_apply(f, uncoupled, N).max_coeff_diff(Af) < 1e-12


def test_generator_error_halves(half_pair):
    Lf = apply_generator(F, half_pair, "L")
    e40, e80 = (sup_error_on_grid(discrete_generator_apply(F, half_pair, N), Lf, 50) for N in (40, 80))
    assert e80 / e40 == pytest.approx(0.5, rel=0.1)


def test_matexp_basics(half_pair):
    assert semigroup_matexp(F, half_pair, 0.0, "L").max_coeff_diff(F) < 1e-15
    one = Polynomial.constant(2)
    assert semigroup_matexp(one, half_pair, 3.0, "L").max_coeff_diff(one) < 1e-13
    with pytest.raises(DomainError):
        semigroup_matexp(F, half_pair, -1.0)


def test_generator_matrix_dimension(half_pair):
    basis, M = generator_matrix(half_pair, 4, "L")
    assert len(basis) == 15 and M.shape == (15, 15)


@settings(max_examples=20, deadline=None)
@given(st.floats(0, 1), st.floats(0, 1))
def test_semigroup_law(s, t):
    spec = make_model((1.0, 0.5), LinearExchange.two_patch(1.0))
    f = P("x1**2*x2 + x2**3 - x1")
    a = semigroup_matexp(f, spec, s + t)
    b = semigroup_matexp(semigroup_matexp(f, spec, s), spec, t)
    assert a.max_coeff_diff(b) <= 1e-10


def test_positivity_spot_check(half_pair):
    # (x1 - x2)^2 x1 (1 - x2) >= 0 on K
    f = P("(x1 - x2)**2 * x1 * (1 - x2)")
    for t in (0.1, 0.5, 2.0):
        g = semigroup_matexp(f, half_pair, t)
        xs = np.linspace(0, 1, 41)
        grid = np.stack(np.meshgrid(xs, xs, indexing="ij"), axis=-1)
        assert g(grid).min() >= -1e-8


def test_short_time_consistency(half_pair):
    Lf = apply_generator(F, half_pair, "L")

    def err(t):
        g = semigroup_matexp(F, half_pair, t)
        return sup_error_on_grid(g, F + Lf * t, 20)

    e1, e2 = err(0.02), err(0.01)
    assert e2 / e1 == pytest.approx(0.25, rel=0.1)


def test_matexp_A_against_monte_carlo(uncoupled):
    """exp(tA) x^2 against 10^5 one-patch paths (coordinate 1 of an uncoupled pair)."""
    t = 0.5
    exact = semigroup_matexp(P("x1**2"), uncoupled, t, "A")([0.5, 0.5])
    out = run_sde_batch([0.5, 0.5], uncoupled, SdeConfig(dt=1e-3, t_max=t), 100_000,
                        np.random.Generator(np.random.Philox(99)))
    x1 = out.final[:, 0]
    assert abs(x1.mean() - 0.5) <= 3 * x1.std() / np.sqrt(x1.size)
    v = x1 ** 2
    assert abs(v.mean() - exact) <= 3 * v.std() / np.sqrt(v.size) + 0.005


def test_chain_semigroup_approaches_limit(half_pair):
    x0 = [0.3, 0.6]
    limit = semigroup_matexp(F, half_pair, 0.5)(x0)
    gaps = [abs(chain_semigroup(F, half_pair, N, 0.5)(x0) - limit) for N in (50, 100, 200)]
    assert gaps[0] > gaps[1] > gaps[2]


def test_ode_flow_closed_form(equal_pair):
    y = ode_flow([1.0, 0.0], equal_pair, 0.5)
    e = 0.5 * np.exp(-1.0)
    np.testing.assert_allclose(y, [0.5 + e, 0.5 - e], atol=1e-8)
    np.testing.assert_allclose(y, [0.683940, 0.316060], atol=1e-6)


def test_ode_flow_trivial_cases(half_pair):
    np.testing.assert_array_equal(ode_flow([0.2, 0.7], half_pair, 0.0), [0.2, 0.7])
    np.testing.assert_array_equal(ode_flow([0.0, 0.0], half_pair, 2.0), [0.0, 0.0])


def test_ode_flow_stays_in_K(half_pair):
    x = np.random.default_rng(5).random((500, 2))
    x[:50, 0] = 0.0
    x[50:100, 1] = 1.0
    assert ode_flow_excursion(x, half_pair, 1.0, 1e-2) <= 1e-9


def test_trotter_without_drift_is_exact(uncoupled):
    f = P("x1**2*x2 + x2**4")
    ref = semigroup_matexp(f, uncoupled, 0.5, "A")
    for n in (1, 3, 8):
        assert trotter_product(f, uncoupled, 0.5, n).max_coeff_diff(ref) < 1e-12
    assert trotter_product(f, uncoupled, 0.0, 4).max_coeff_diff(f) < 1e-15


def test_trotter_first_order(half_pair):
    exact = semigroup_matexp(F, half_pair, 0.5)
    errs = [sup_error_on_grid(trotter_product(F, half_pair, 0.5, n), exact, 50) for n in (4, 8, 16)]
    for a, b in zip(errs, errs[1:]):
        assert 1.4 <= a / b <= 2.6


def test_sup_error_examples():
    x1 = P("x1")
    assert sup_error_on_grid(x1, x1, 10) == 0.0
    assert sup_error_on_grid(x1, x1 + 0.01, 10) == pytest.approx(0.01)
