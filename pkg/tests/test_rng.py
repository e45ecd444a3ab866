"""Counter-based stream layer: determinism, independence, and variate laws."""

from __future__ import annotations

import numpy as np
import pytest
from scipy import stats

from lsalab.rng import (
    categorical,
    normal_inverse_cdf,
    rademacher,
    stream,
    uniform_open01,
)


class TestStream:
    def test_same_key_reproduces_bits(self):
        a = stream(42, 7).integers(0, 2**63, size=64)
        b = stream(42, 7).integers(0, 2**63, size=64)
        assert np.array_equal(a, b)

    def test_distinct_keys_give_distinct_sequences(self):
        base = stream(42, 7).integers(0, 2**63, size=64)
        assert not np.array_equal(base, stream(42, 8).integers(0, 2**63, size=64))
        assert not np.array_equal(base, stream(43, 7).integers(0, 2**63, size=64))

    def test_stream_state_is_not_shared(self):
        # Consuming one stream must not advance another.
        g1 = stream(5, 1)
        g2 = stream(5, 2)
        g1.integers(0, 2**63, size=1000)
        fresh = stream(5, 2).integers(0, 2**63, size=8)
        assert np.array_equal(g2.integers(0, 2**63, size=8), fresh)

    def test_key_range_validated(self):
        with pytest.raises(ValueError):
            stream(-1, 0)
        with pytest.raises(ValueError):
            stream(0, 2**64)
        # Boundary keys are fine.
        stream(2**64 - 1, 0)
        stream(0, 2**64 - 1)


class TestUniformOpen01:
    def test_strictly_inside_unit_interval(self):
        u = uniform_open01(stream(1, 0), 200_000)
        assert u.min() > 0.0
        assert u.max() < 1.0

    def test_shape_and_mean(self):
        u = uniform_open01(stream(2, 0), (100, 50))
        assert u.shape == (100, 50)
        # mean 1/2, sd of the mean = 1/sqrt(12 N)
        assert abs(u.mean() - 0.5) < 5.0 / np.sqrt(12 * u.size)

    def test_uniform_law(self):
        u = uniform_open01(stream(3, 0), 50_000)
        d = stats.kstest(u, "uniform").statistic
        assert d < 1.63 / np.sqrt(u.size)  # 99% Kolmogorov quantile


class TestNormalInverseCdf:
    def test_gaussian_law(self):
        z = normal_inverse_cdf(stream(4, 0), 50_000)
        d = stats.kstest(z, "norm").statistic
        assert d < 1.63 / np.sqrt(z.size)

    def test_moments(self):
        z = normal_inverse_cdf(stream(5, 0), 200_000)
        n = z.size
        assert abs(z.mean()) < 5.0 / np.sqrt(n)
        assert abs(z.var() - 1.0) < 5.0 * np.sqrt(2.0 / n)


class TestRademacher:
    def test_values_and_bias(self):
        s = rademacher(stream(6, 0), 100_000, p_plus=0.75)
        assert set(np.unique(s)) == {-1.0, 1.0}
        p_hat = (s > 0).mean()
        assert abs(p_hat - 0.75) < 5.0 * np.sqrt(0.75 * 0.25 / s.size)

    def test_degenerate_probabilities(self):
        assert np.all(rademacher(stream(7, 0), 100, p_plus=1.0) == 1.0)
        assert np.all(rademacher(stream(7, 1), 100, p_plus=0.0) == -1.0)

    def test_rejects_bad_probability(self):
        with pytest.raises(ValueError):
            rademacher(stream(7, 2), 10, p_plus=1.5)


class TestCategorical:
    def test_law_matches_weights(self):
        probs = np.array([0.2, 0.5, 0.3])
        idx = categorical(stream(8, 0), np.cumsum(probs), 100_000)
        counts = np.bincount(idx, minlength=3) / idx.size
        for k in range(3):
            assert abs(counts[k] - probs[k]) < 5.0 * np.sqrt(probs[k] / idx.size)

    def test_indices_in_range(self):
        idx = categorical(stream(9, 0), np.array([0.1, 0.1, 1.0]), 10_000)
        assert idx.min() >= 0
        assert idx.max() <= 2
