import numpy as np
from hypothesis import given
from hypothesis import strategies as st

from diffrender.sampler import Sampler, uniform


class TestCounterRng:
    @given(st.integers(0, 2**31), st.integers(0, 10**6), st.integers(0, 4096), st.integers(0, 64))
    def test_pure_function_of_key(self, seed, pixel, sample, dim):
        a = uniform(seed, pixel, sample, dim)
        b = uniform(seed, pixel, sample, dim)
        assert a == b
        assert 0.0 <= a < 1.0

    def test_order_independent(self):
        keys = np.arange(1000)
        forward = uniform(5, keys, 3, 2)
        backward = uniform(5, keys[::-1], 3, 2)[::-1]
        np.testing.assert_array_equal(forward, backward)

    def test_uniformity(self):
        u = uniform(1, np.arange(200_000), 0, 0)
        counts = np.bincount((u * 20).astype(int), minlength=20)
        expected = len(u) / 20
        chi2 = ((counts - expected) ** 2 / expected).sum()
        # 19 degrees of freedom; 43.8 is the 0.999 quantile
        assert chi2 < 43.8

    def test_dimensions_decorrelated(self):
        u = uniform(2, np.arange(100_000), 7, 0)
        v = uniform(2, np.arange(100_000), 7, 1)
        assert abs(np.corrcoef(u, v)[0, 1]) < 0.02

    def test_seeds_differ(self):
        a = uniform(0, np.arange(64), 0, 0)
        b = uniform(1, np.arange(64), 0, 0)
        assert not np.array_equal(a, b)


class TestSamplerView:
    def test_advances_dimension(self):
        s = Sampler(9, pixel=4, sample=2)
        x, y = s.next_2d()
        assert s.dimension == 2
        assert x == uniform(9, 4, 2, 0) and y == uniform(9, 4, 2, 1)

    def test_replay(self):
        a = Sampler(3, 1, 1)
        b = Sampler(3, 1, 1)
        assert [a.next() for _ in range(5)] == [b.next() for _ in range(5)]
