import numpy as np
import pytest

from patchdiff.rng import BLOCK_SIZE, RandomStream, as_generator, block_generator, block_ranges


def test_stream_is_pure_function_of_seed_and_id():
    a = RandomStream(7, 3).generator().random(10)
    b = RandomStream(7, 3).generator().random(10)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, RandomStream(7, 4).generator().random(10))
    assert not np.array_equal(a, RandomStream(8, 3).generator().random(10))


def test_counter_skips_ahead():
    g = RandomStream(1).generator()
    g.random(4)  # one Philox block = four 64-bit outputs
    np.testing.assert_array_equal(g.random(4), RandomStream(1, counter=1).generator().random(4))


def test_block_streams_differ_from_replicate_streams():
    assert not np.array_equal(block_generator(5, 0).random(5), RandomStream(5, 0).generator().random(5))


def test_streams_look_independent():
    x = RandomStream(11, 0).generator().standard_normal(200_000)
    y = RandomStream(11, 1).generator().standard_normal(200_000)
    assert abs(np.corrcoef(x, y)[0, 1]) < 4 / np.sqrt(200_000)


def test_block_ranges():
    assert block_ranges(5, 2) == [(0, 0, 2), (1, 2, 4), (2, 4, 5)]
    assert block_ranges(BLOCK_SIZE)[-1] == (0, 0, BLOCK_SIZE)
    with pytest.raises(ValueError):
        block_ranges(0)


def test_as_generator():
    g = np.random.default_rng(0)
    assert as_generator(g) is g
    np.testing.assert_array_equal(as_generator(3).random(3), RandomStream(3).generator().random(3))
    with pytest.raises(TypeError):
        as_generator("seed")
