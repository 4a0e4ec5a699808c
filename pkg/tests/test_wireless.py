"""Channel sampling, ZF directions and rate formulas."""

import numpy as np
import pytest

from edgecache.cache_model import CacheSizes, LibraryConfig
from edgecache.wireless import (
    ChannelMatrix,
    IllConditionedChannelError,
    multicast_rate,
    qos_targets,
    sample_channels,
    unicast_rates,
    zf_directions,
)


class TestSampling:
    def test_deterministic_in_seed(self):
        a = sample_channels(4, 6, 1.0, seed=42)
        b = sample_channels(4, 6, 1.0, seed=42)
        np.testing.assert_array_equal(a.matrix, b.matrix)

    def test_mean_square_matches_variance(self):
        ch = sample_channels(2, 50_000, [0.5, 2.0], seed=0)
        emp = np.mean(np.abs(ch.matrix) ** 2, axis=1)
        assert emp[0] == pytest.approx(0.5, rel=0.02)
        assert emp[1] == pytest.approx(2.0, rel=0.02)

    def test_rejects_bad_inputs(self):
        with pytest.raises(ValueError):
            sample_channels(4, 6, 0.0, seed=0)
        with pytest.raises(ValueError):
            sample_channels(7, 6, 1.0, seed=0)


class TestZeroForcing:
    def test_identity_channel(self):
        ch = ChannelMatrix(np.eye(4, dtype=complex), np.ones(4))
        d = zf_directions(ch)
        np.testing.assert_allclose(d, np.eye(4), atol=1e-12)

    def test_residual_small(self):
        ch = sample_channels(4, 10, 1.0, seed=3)
        d = zf_directions(ch)
        np.testing.assert_allclose(ch.matrix @ d, np.eye(4), atol=1e-10)

    def test_rank_deficient_rejected(self):
        h = sample_channels(3, 6, 1.0, seed=5).matrix
        h[2] = h[1]
        with pytest.raises(IllConditionedChannelError):
            zf_directions(ChannelMatrix(h, np.ones(3)))


class TestRates:
    def test_single_user_unit_snr(self):
        ch = ChannelMatrix(np.array([[1.0 + 0j, 0.0]]), np.ones(1))
        w = np.array([[1.0], [0.0]], dtype=complex)  # |h^H w|^2 = sigma2 = 1
        rates = unicast_rates(ch, w, sigma2=1.0, bandwidth_hz=1.0)
        assert rates[0] == pytest.approx(1.0)

    def test_zf_hits_effective_rate_exactly(self):
        ch = sample_channels(3, 8, 1.0, seed=9)
        lib = LibraryConfig(10, 100)
        cache = CacheSizes(0, 4)
        qos = qos_targets("uncoded", 2e6, 3, 1e6, cache=cache, lib=lib)
        d = zf_directions(ch)
        beams = d * np.sqrt(qos.sinr_floor * 2.5)  # sigma2 = 2.5
        rates = unicast_rates(ch, beams, sigma2=2.5, bandwidth_hz=1e6)
        np.testing.assert_allclose(rates, qos.effective_rate, rtol=1e-12)

    def test_zero_beams(self):
        ch = sample_channels(3, 4, 1.0, seed=1)
        rates = unicast_rates(ch, np.zeros((4, 3), dtype=complex), 1.0, 1e6)
        np.testing.assert_array_equal(rates, np.zeros(3))

    def test_multicast_min_of_members(self):
        h = np.array([[np.sqrt(3), 0.0], [0.0, 1.0]], dtype=complex)
        ch = ChannelMatrix(h, np.ones(2))
        w = np.array([1.0, 1.0], dtype=complex)  # received SNRs 3 and 1
        assert multicast_rate(ch, [0, 1], w, 1.0, 1.0) == pytest.approx(1.0)

    def test_multicast_singleton_equals_unicast(self):
        ch = sample_channels(2, 5, 1.0, seed=4)
        w = np.linalg.qr(np.random.default_rng(0).standard_normal((5, 1)))[0][:, 0].astype(complex)
        solo = multicast_rate(ch, [0], w, 1.0, 1e6)
        beams = np.column_stack([w, np.zeros(5, dtype=complex)])
        assert solo == pytest.approx(unicast_rates(ch, beams, 1.0, 1e6)[0])

    def test_multicast_orthogonal_beam(self):
        h = np.array([[1.0 + 0j, 0.0]])
        ch = ChannelMatrix(h, np.ones(1))
        w = np.array([0.0, 1.0], dtype=complex)
        assert multicast_rate(ch, [0], w, 1.0, 1e6) == 0.0

    def test_rates_monotone_in_powers(self):
        ch = sample_channels(3, 6, 1.0, seed=12)
        w = zf_directions(ch) + 0.1  # imperfect beams so interference is live
        base = unicast_rates(ch, w, 1.0, 1e6)
        boosted = w.copy()
        boosted[:, 0] *= 1.5
        after = unicast_rates(ch, boosted, 1.0, 1e6)
        assert after[0] > base[0]
        assert all(after[i] <= base[i] for i in (1, 2))


class TestQosTargets:
    def test_uncoded_no_cache(self):
        q = qos_targets("uncoded", 2e6, 2, 1e6, cache=CacheSizes(0, 0), lib=LibraryConfig(10, 1))
        np.testing.assert_allclose(q.effective_rate, [2e6, 2e6])

    def test_coded_scaling(self):
        q = qos_targets("coded", 2e6, 8, 1e6, m=3)
        np.testing.assert_allclose(q.effective_rate, np.full(8, 2.5e6))

    def test_full_cache_floors_vanish(self):
        q = qos_targets(
            "uncoded", 2e6, 2, 1e6, cache=CacheSizes(0, 10), lib=LibraryConfig(10, 1)
        )
        np.testing.assert_allclose(q.effective_rate, 0.0)
        np.testing.assert_allclose(q.sinr_floor, 0.0)

    def test_floor_formula(self):
        q = qos_targets("coded", 3e6, 4, 1e6, m=1)
        np.testing.assert_allclose(q.sinr_floor, 2.0 ** (4.5) - 1)
