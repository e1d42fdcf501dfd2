import numpy as np
import pytest
from scipy import stats

from nesschain.noise import NoiseStream


@pytest.mark.parametrize("width", [1, 2, 3, 4, 5, 65])
def test_chunking_does_not_change_numbers(width):
    ns = NoiseStream(7, 3, width)
    whole = ns.increments(0, 1000)
    parts = np.concatenate([ns.increments(0, 137), ns.increments(137, 500), ns.increments(637, 363)])
    np.testing.assert_array_equal(whole, parts)
    np.testing.assert_array_equal(ns.increments(999, 1)[0], whole[999])
    assert whole.shape == (1000, width)


def test_streams_are_distinct_and_reproducible():
    a = NoiseStream(1, 0, 4).increments(0, 100)
    b = NoiseStream(1, 1, 4).increments(0, 100)
    c = NoiseStream(2, 0, 4).increments(0, 100)
    assert not np.array_equal(a, b) and not np.array_equal(a, c)
    np.testing.assert_array_equal(a, NoiseStream(1, 0, 4).increments(0, 100))


def test_standard_normal():
    z = NoiseStream(11, 0, 4).increments(0, 50_000).ravel()
    assert abs(z.mean()) < 4 / np.sqrt(z.size)
    assert abs(z.var() - 1) < 0.02
    assert stats.kstest(z, "norm").pvalue > 1e-3
    # columns uncorrelated
    zz = NoiseStream(11, 0, 4).increments(0, 50_000)
    c = np.corrcoef(zz.T)
    assert np.abs(c - np.eye(4)).max() < 0.03


def test_zero_steps():
    assert NoiseStream(0, 0, 3).increments(10, 0).shape == (0, 3)
