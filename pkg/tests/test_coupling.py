import pytest

from patchdiff.coupling import coupled_expectation
from patchdiff.diffusion import SdeConfig
from patchdiff.errors import ConfigurationError
from patchdiff.polynomial import parse_polynomial
from patchdiff.semigroup import semigroup_matexp

F = parse_polynomial("x1**2*x2", 2)


@pytest.fixture(scope="module")
def small_run(half_pair):
    return coupled_expectation(F, half_pair, (0.3, 0.6), SdeConfig(dt=1e-2, t_max=0.5), 4000, 3)


def test_oracle_value(small_run, half_pair):
    assert small_run.exact == pytest.approx(semigroup_matexp(F, half_pair, 0.5)((0.3, 0.6)), abs=1e-14)


def test_control_variate_keeps_the_mean(small_run):
    # same paths, so plain and corrected means differ by a zero-mean term
    for plain, cv in ((small_run.coarse_plain, small_run.coarse_cv),
                      (small_run.fine_plain, small_run.fine_cv)):
        assert abs(plain.mean - cv.mean) <= 3 * plain.stderr
        assert cv.stderr < plain.stderr / 5


def test_difference_is_consistent(small_run):
    assert small_run.difference.mean == pytest.approx(small_run.coarse_cv.mean - small_run.fine_cv.mean,
                                                      abs=1e-12)


def test_corner_start_is_exact(half_pair):
    est = coupled_expectation(F, half_pair, (1.0, 1.0), SdeConfig(dt=1e-2, t_max=0.2), 200, 1)
    assert est.coarse_cv.mean == 1.0 and est.coarse_cv.stderr == 0.0
    assert est.exact == pytest.approx(1.0)


def test_horizon_must_be_whole_steps(half_pair):
    with pytest.raises(ConfigurationError):
        coupled_expectation(F, half_pair, (0.3, 0.6), SdeConfig(dt=0.3, t_max=0.5), 200, 1)
