import math
from functools import partial

import numpy as np
import pytest

from patchdiff.errors import ConfigurationError, InvariantError
from patchdiff.montecarlo import (Partial, config_hash, default_workers, estimate_from_blocks,
                                  mc_aggregate, run_blocks)


def _normals(block_id, n, gen, shift=0.0):
    return gen.standard_normal(n) + shift


def test_partition_by_blocks_not_workers():
    task = partial(_normals, shift=1.0)
    one = run_blocks(task, 5000, 42, workers=1, block_size=512)
    many = run_blocks(task, 5000, 42, workers=3, block_size=512)
    for a, b in zip(one, many):
        np.testing.assert_array_equal(a, b)
    e1 = estimate_from_blocks(one, 42, "h")
    e2 = estimate_from_blocks(many, 42, "h")
    assert e1 == e2


def test_pooled_halves_match_full_run():
    v = np.random.default_rng(1).random(10_000)
    whole = mc_aggregate([Partial.from_values(v, 0, "h")])
    halves = mc_aggregate([Partial.from_values(v[:5000], 0, "h"), Partial.from_values(v[5000:], 0, "h")])
    assert abs(whole.mean - halves.mean) <= 1e-12 * abs(whole.mean)
    assert abs(whole.stderr - halves.stderr) <= 1e-12 * whole.stderr
    assert whole.stderr == pytest.approx(v.std(ddof=1) / math.sqrt(v.size), rel=1e-12)


def test_constant_values_have_zero_stderr():
    est = mc_aggregate([Partial.from_values(np.full(300, 0.7), 3, "h") for _ in range(3)])
    assert est.stderr == 0.0 and est.mean == 0.7 and est.reps == 900


def test_errors():
    with pytest.raises(ConfigurationError):
        mc_aggregate([])
    with pytest.raises(ConfigurationError):
        mc_aggregate([Partial.from_values([], 0, "h")])
    with pytest.raises(InvariantError):
        mc_aggregate([Partial.from_values([1.0], 0, "a"), Partial.from_values([2.0], 0, "b")])
    with pytest.raises(InvariantError):
        mc_aggregate([Partial.from_values([1.0], 0, "a"), Partial.from_values([2.0], 1, "a")])


def test_censored_fraction_pooled():
    est = mc_aggregate([Partial.from_values(np.ones(100), 0, "h", censored=10),
                        Partial.from_values(np.ones(100), 0, "h", censored=30)])
    assert est.censored_fraction == pytest.approx(0.2)


def test_config_hash_is_stable():
    a = config_hash({"x0": np.array([0.3, 0.6]), "dt": 1e-3})
    assert a == config_hash({"dt": 1e-3, "x0": [0.3, 0.6]})
    assert a != config_hash({"dt": 2e-3, "x0": [0.3, 0.6]})


def test_worker_env(monkeypatch):
    monkeypatch.delenv("PATCHDIFF_WORKERS", raising=False)
    assert default_workers() == 1
    monkeypatch.setenv("PATCHDIFF_WORKERS", "4")
    assert default_workers() == 4
    monkeypatch.setenv("PATCHDIFF_WORKERS", "zero")
    with pytest.raises(ConfigurationError):
        default_workers()
