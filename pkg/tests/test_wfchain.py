import numpy as np
import pytest

from patchdiff.model import exchange_eval
from patchdiff.rng import RandomStream
from patchdiff.trajectory import corner_targets
from patchdiff.wfchain import (ChainConfig, chain_step, conserved_mass, run_chain_batch,
                               simulate_chain, wf_reproduce)


def test_reproduction_keeps_corners(half_pair, gen):
    for x in ([0.0, 1.0], [1.0, 0.0], [0.0, 0.0]):
        np.testing.assert_array_equal(wf_reproduce(x, half_pair, 200, gen), x)


def test_reproduction_mean_and_variance(uncoupled, gen):
    # N_1 = 100
    x = np.full((1_000_000, 2), 0.3)
    y = wf_reproduce(x, uncoupled, 100, gen)[:, 0]
    sigma = np.sqrt(0.3 * 0.7 / 100)
    assert abs(y[:100_000].mean() - 0.3) <= 3 * sigma / np.sqrt(100_000)
    assert y.var(ddof=1) == pytest.approx(0.3 * 0.7 / 100, rel=0.05)


def test_reproduction_lands_on_lattice(half_pair, gen):
    y = wf_reproduce(np.random.default_rng(2).random((1000, 2)), half_pair, 40, gen)
    k = y * half_pair.patch_sizes(40)
    np.testing.assert_array_equal(k, np.round(k))


def test_step_keeps_corners(half_pair):
    np.testing.assert_array_equal(chain_step([0.0, 0.0], half_pair, 40, 1), [0.0, 0.0])
    np.testing.assert_array_equal(chain_step([1.0, 1.0], half_pair, 40, 1), [1.0, 1.0])


def test_migration_conserves_reproduced_mass(half_pair):
    N = 40
    for rid in range(50):
        g = RandomStream(3, rid).generator()
        y = wf_reproduce([0.3, 0.6], half_pair, N, g)
        z = exchange_eval(half_pair, N, y)
        assert abs(conserved_mass(z, half_pair, N) - conserved_mass(y, half_pair, N)) <= 1e-12


def test_mass_is_a_martingale(half_pair, gen):
    N, x0 = 40, np.array([0.3, 0.6])
    out = run_chain_batch(x0, half_pair, ChainConfig(N), 1.0 / N, 100_000, gen)
    mass = conserved_mass(out.final, half_pair, N)
    se = mass.std(ddof=1) / np.sqrt(mass.size)
    assert abs(mass.mean() - conserved_mass(x0, half_pair, N)) <= 3 * se


def test_conserved_mass_examples(half_pair):
    assert conserved_mass([0.5, 0.5], half_pair, 100) == pytest.approx(75.0)
    assert conserved_mass([0.0, 0.0], half_pair, 100) == 0.0


def test_absorbed_start_is_constant(half_pair):
    tr = simulate_chain([0.0, 0.0], ChainConfig(40), half_pair, 1.0, corner_targets(), rng=0)
    assert len(tr.times) == 1
    h = tr.hit("corner-0")
    assert h.time == 0.0 and not h.censored
    assert tr.hit("corner-1").censored


def test_embedded_state_count(half_pair):
    tr = simulate_chain([0.5, 0.5], ChainConfig(100), half_pair, 0.5, rng=4)
    assert len(tr.times) == int(np.floor(0.5 * 100)) + 1
    np.testing.assert_allclose(np.diff(tr.times), 0.01)


def test_poisson_clock_rate(half_pair):
    # large patches and a short horizon, so no path is absorbed early
    N, t = 200, 0.25
    counts = []
    for rid in range(400):
        tr = simulate_chain([0.5, 0.5], ChainConfig(N, "poissonized"), half_pair, t,
                            rng=RandomStream(8, rid))
        counts.append(len(tr.times) - 1)
    counts = np.array(counts)
    assert abs(counts.mean() - N * t) <= 3 * counts.std(ddof=1) / np.sqrt(counts.size)


def test_paths_are_deterministic_and_absorbing(half_pair):
    cfg = ChainConfig(10, "poissonized")
    a = simulate_chain([0.2, 0.1], cfg, half_pair, 50.0, corner_targets(), rng=RandomStream(1, 5))
    b = simulate_chain([0.2, 0.1], cfg, half_pair, 50.0, corner_targets(), rng=RandomStream(1, 5))
    np.testing.assert_array_equal(a.times, b.times)
    np.testing.assert_array_equal(a.states, b.states)
    assert np.all(np.diff(a.times) >= 0)
    assert np.all((a.states >= 0) & (a.states <= 1))
    last = a.states[-1]
    if np.all(last == 0) or np.all(last == 1):
        first = np.flatnonzero(np.all(a.states == last, axis=1))[0]
        assert np.all(a.states[first:] == last)
        hit = a.hit("corner-0" if last[0] == 0 else "corner-1")
        assert hit.time == a.times[first]


def test_batch_snapshots_match_final(half_pair, gen):
    out = run_chain_batch([0.3, 0.6], half_pair, ChainConfig(40, "poissonized"), 1.0, 500, gen,
                          snapshot_times=(0.0, 0.5, 1.0))
    np.testing.assert_array_equal(out.snapshots[0], np.tile([0.3, 0.6], (500, 1)))
    np.testing.assert_array_equal(out.snapshots[2], out.final)


def test_trajectory_csv(tmp_path, half_pair):
    tr = simulate_chain([0.3, 0.6], ChainConfig(40), half_pair, 0.1, corner_targets(), rng=1)
    p = tmp_path / "t.csv"
    tr.to_csv(p)
    lines = p.read_text().splitlines()
    assert lines[0] == "t,x_1,x_2"
    assert "target,time,censored" in lines
    assert lines[-1].startswith("corner-1,")
