import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from patchdiff.errors import AdmissibilityError, ConfigurationError, DomainError, InvariantError
from patchdiff.model import (LinearExchange, Tabulated, as_state, assume_valid, boundary_info,
                             drift_eval, drift_values, exchange_eval, fichera_eval, make_model,
                             validate_model)


def test_drift_substitution(equal_pair):
    np.testing.assert_allclose(drift_eval(equal_pair, [0.2, 0.8]), [0.6, -0.6], atol=1e-15)


@pytest.mark.parametrize("corner", [0.0, 1.0])
def test_drift_vanishes_at_corners(half_pair, corner):
    b = drift_eval(half_pair, [corner, corner])
    assert np.all(b == 0.0)


def test_unvalidated_spec_rejected():
    spec = make_model((1.0, 1.0), LinearExchange.two_patch(1.0), validate=False)
    with pytest.raises(ConfigurationError):
        drift_eval(spec, [0.5, 0.5])


def test_state_clamping_and_rejection():
    np.testing.assert_array_equal(as_state([-1e-13, 1 + 1e-13]), [0.0, 1.0])
    with pytest.raises(DomainError):
        as_state([-1e-9, 0.5])


def test_validation_passes_for_half_pair():
    spec = make_model((1.0, 0.5), LinearExchange.two_patch(1.0), validate=False)
    rep = validate_model(spec, 20)
    assert [c.name for c in rep.checks] == ["distortions", "conservation", "boundary_sign",
                                           "strict_inward", "fixed_corners", "n_min"]
    assert rep.all_passed


def test_bad_distortion_order_is_reported():
    spec = make_model((0.5, 1.0), LinearExchange.two_patch(1.0), validate=False)
    rep = validate_model(spec, 10)
    assert not rep.check("distortions").passed
    assert not rep.ok
    with pytest.raises(ConfigurationError):
        make_model((0.5, 1.0), LinearExchange.two_patch(1.0))


def test_nonconservative_table_is_reported():
    spec = make_model((1.0, 1.0), Tabulated(("x2 - x1", "2*(x1 - x2)")), validate=False)
    rep = validate_model(spec, 10)
    assert not rep.check("conservation").passed
    # at x = (1, 0): d1 b1 + d2 b2 = -1 + 2 = 1
    b = drift_values(spec, np.array([1.0, 0.0]))
    assert b @ spec.d_array == pytest.approx(1.0)


def test_grid_resolution_must_be_two_or_more(half_pair):
    with pytest.raises(DomainError):
        validate_model(half_pair, 1)


def test_single_patch_rejected():
    with pytest.raises(ConfigurationError):
        make_model((1.0,), LinearExchange([[0.0]]))


def test_zero_coupling_is_valid_but_not_strictly_inward(uncoupled):
    assert uncoupled.validated
    assert not uncoupled.strict_inward


def test_exchange_example(equal_pair):
    np.testing.assert_allclose(exchange_eval(equal_pair, 10, [0.2, 0.8]), [0.26, 0.74], atol=1e-15)


def test_exchange_rejects_small_N():
    spec = make_model((1.0, 1.0), LinearExchange.two_patch(3.0))
    assert spec.N_min == 3
    with pytest.raises(AdmissibilityError):
        exchange_eval(spec, 2, [1.0, 0.0])


def test_exchange_leaving_K_is_an_internal_fault():
    # skip validation so the row-sum threshold does not protect us
    spec = assume_valid(make_model((1.0, 1.0), LinearExchange.two_patch(3.0), validate=False))
    spec = type(spec)(d=spec.d, drift=spec.drift, N_min=1, validated=True)
    with pytest.raises(InvariantError):
        exchange_eval(spec, 2, [1.0, 0.0])


def test_N_must_respect_patch_sizes(half_pair):
    assert half_pair.n_step == 2
    assert not half_pair.admissible(41)
    with pytest.raises(AdmissibilityError):
        half_pair.check_N(41)
    np.testing.assert_array_equal(half_pair.patch_sizes(40), [40, 20])


def test_fichera_examples(equal_pair):
    assert fichera_eval(equal_pair, [0.0, 0.5]) == pytest.approx(-0.5)
    assert fichera_eval(equal_pair, [0.0, 0.0]) == pytest.approx(-2.0)
    with pytest.raises(DomainError):
        fichera_eval(equal_pair, [0.3, 0.7])


def test_boundary_info_examples():
    info = boundary_info([0.0, 1.0, 0.5])
    assert info.I0 == {0} and info.I1 == {1} and info.normal == (1, -1, 0)
    inner = boundary_info([0.3, 0.6])
    assert not inner.I0 and not inner.I1 and inner.normal == (0, 0)
    assert boundary_info([1e-13, 0.5], tol=1e-12).I0 == {0}


# --------------------------------------------------------------------------
# properties
# --------------------------------------------------------------------------

@st.composite
def models(draw):
    m = draw(st.integers(2, 4))
    d = sorted([1.0] + [draw(st.sampled_from([1.0, 0.5, 0.25, 0.75, 0.2])) for _ in range(m - 1)],
               reverse=True)
    S = np.zeros((m, m))
    for i in range(m):
        for j in range(i + 1, m):
            S[i, j] = S[j, i] = draw(st.floats(0.0, 5.0))
    return make_model(d, LinearExchange(S), grid_resolution=4)


@settings(max_examples=40, deadline=None)
@given(models(), st.integers(0, 2**32 - 1))
def test_conservation_and_boundary_signs(spec, seed):
    rng = np.random.default_rng(seed)
    x = rng.random((2000, spec.m))
    assert np.max(np.abs(drift_values(spec, x) @ spec.d_array)) <= 1e-10
    # push random coordinates onto the faces
    face = rng.integers(0, 3, size=x.shape)
    x = np.where(face == 0, 0.0, np.where(face == 1, 1.0, x))
    b = drift_values(spec, x)
    assert np.all(b[x == 0.0] >= -1e-12)
    assert np.all(b[x == 1.0] <= 1e-12)


@settings(max_examples=40, deadline=None)
@given(models(), st.integers(0, 2**32 - 1), st.integers(0, 5))
def test_exchange_conserves_mass(spec, seed, extra):
    N = spec.first_admissible(spec.N_min) + extra * spec.n_step
    rng = np.random.default_rng(seed)
    sizes = spec.patch_sizes(N)
    for x in rng.random((20, spec.m)):
        y = exchange_eval(spec, N, x)
        assert np.all((y >= 0) & (y <= 1))
        assert abs(sizes @ y - sizes @ x) <= 1e-12 * max(1.0, sizes @ x)
    np.testing.assert_array_equal(exchange_eval(spec, N, np.zeros(spec.m)), 0.0)
    np.testing.assert_array_equal(exchange_eval(spec, N, np.ones(spec.m)), 1.0)


def test_conservation_on_a_million_points(half_pair):
    x = np.random.default_rng(0).random((1_000_000, 2))
    assert np.max(np.abs(drift_values(half_pair, x) @ half_pair.d_array)) <= 1e-10


def test_asymmetric_exchange_breaks_conservation():
    spec = make_model((1.0, 0.5), LinearExchange([[0.0, 1.0], [3.0, 0.0]]), validate=False)
    rep = validate_model(spec, 10)
    assert not rep.check("conservation").passed
