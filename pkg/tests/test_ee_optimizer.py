"""Energy-efficiency formulas, the ZF closed form and the SDR designs."""

import math

import numpy as np
import pytest

from edgecache.cache_model import CacheSizes, LibraryConfig, coded_params
from edgecache.ee_optimizer import (
    analytic_comparison,
    coded_sessions,
    ee_coded,
    ee_uncoded,
    sdr_ee_max_coded,
    sdr_ee_max_uncoded,
    theorem1_ee,
    zf_ee_max,
)
from edgecache.wireless import ChannelMatrix, qos_targets, sample_channels, zf_directions

LIB = LibraryConfig(n_files=10, file_size_bits=1000)
B = 1e6


def make_qos(cache, gamma=2e6, k=3, lib=LIB):
    return qos_targets("uncoded", gamma, k, B, cache=cache, lib=lib)


class TestEeUncoded:
    def test_all_cached_is_free(self):
        cache = CacheSizes(0, 10)
        out = ee_uncoded([1.0, 1.0], [1e6, 1e6], cache, LIB, eta=1e-6)
        assert out.total_joules == 0.0
        assert math.isinf(out.ee_bits_per_joule)

    def test_free_backhaul_ignores_bs_cache(self):
        for mb in (0.0, 3.0, 10.0):
            out = ee_uncoded([1.0, 2.0], [1e6, 2e6], CacheSizes(mb, 2), LIB, eta=0.0)
            assert out.backhaul_joules == 0.0
        base = ee_uncoded([1.0, 2.0], [1e6, 2e6], CacheSizes(0, 2), LIB, eta=0.0)
        other = ee_uncoded([1.0, 2.0], [1e6, 2e6], CacheSizes(7, 2), LIB, eta=0.0)
        assert base.ee_bits_per_joule == other.ee_bits_per_joule

    def test_zero_rate_rejected(self):
        with pytest.raises(ValueError):
            ee_uncoded([1.0], [0.0], CacheSizes(0, 0), LIB, eta=0.0)

    def test_scale_invariant_in_file_size(self):
        cache = CacheSizes(2, 3)
        a = ee_uncoded([1.0, 2.0], [1e6, 3e6], cache, LibraryConfig(10, 500), eta=1e-6)
        b = ee_uncoded([1.0, 2.0], [1e6, 3e6], cache, LibraryConfig(10, 5000), eta=1e-6)
        assert a.ee_bits_per_joule == pytest.approx(b.ee_bits_per_joule, rel=1e-12)


class TestTheorem1:
    def test_pipeline_matches_closed_form(self):
        cache = CacheSizes(3, 4)
        for seed in range(20):
            ch = sample_channels(3, 6, 1.0, seed=seed)
            qos = make_qos(cache)
            design = zf_ee_max(ch, qos, cache, LIB, eta=1e-6, sigma2=1.7)
            norms_sq = np.linalg.norm(zf_directions(ch), axis=0) ** 2
            closed = theorem1_ee(norms_sq, qos, cache, LIB, eta=1e-6, sigma2=1.7)
            assert design.breakdown.ee_bits_per_joule == pytest.approx(closed, rel=1e-10)

    def test_unit_case_powers(self):
        ch = ChannelMatrix(np.eye(2, dtype=complex), np.ones(2))
        qos = qos_targets("uncoded", 1.0, 2, 1.0, cache=CacheSizes(0, 0), lib=LIB)
        design = zf_ee_max(ch, qos, CacheSizes(0, 0), LIB, eta=0.0, sigma2=1.0)
        np.testing.assert_allclose(design.received_powers, [1.0, 1.0])

    def test_identity_channel_closed_form(self):
        k = 3
        ch = ChannelMatrix(np.eye(k, dtype=complex), np.ones(k))
        cache = CacheSizes(2, 4)
        qos = make_qos(cache, k=k)
        design = zf_ee_max(ch, qos, cache, LIB, eta=1e-6, sigma2=1.0)
        zeta = qos.sinr_floor
        denom = 1e-6 * k * (1 - 0.2) + float(np.sum(zeta / qos.effective_rate))
        expected = k / ((1 - 0.4) * denom)
        assert design.breakdown.ee_bits_per_joule == pytest.approx(expected, rel=1e-12)

    def test_power_objective_increasing(self):
        # the per-user cost p/log2(1+p/sigma2) grows in p, so floors are optimal
        sigma2 = 1.3
        grid = np.linspace(0.5, 50, 200)
        vals = grid / np.log2(1 + grid / sigma2)
        assert np.all(np.diff(vals) > 0)


class TestSdrUncoded:
    def test_single_user_matched_filter(self):
        ch = sample_channels(1, 5, 1.0, seed=2)
        qos = make_qos(CacheSizes(0, 0), k=1)
        sol = sdr_ee_max_uncoded(ch, qos, sigma2=2.0)
        h = ch.user_channel(0)
        expected = qos.sinr_floor[0] * 2.0 / float(np.vdot(h, h).real)
        assert sol.total_power == pytest.approx(expected, rel=1e-6)
        w = sol.vectors[0]
        alignment = abs(np.vdot(w, h)) / (np.linalg.norm(w) * np.linalg.norm(h))
        assert alignment == pytest.approx(1.0, abs=1e-5)

    def test_orthogonal_channels_decouple(self):
        h = np.zeros((3, 6), dtype=complex)
        h[0, 0] = 1.5
        h[1, 1] = 0.8
        h[2, 2] = 2.0
        ch = ChannelMatrix(h, np.ones(3))
        qos = make_qos(CacheSizes(0, 5))
        sol = sdr_ee_max_uncoded(ch, qos, sigma2=1.0)
        expected = sum(
            qos.sinr_floor[i] / np.abs(h[i, i]) ** 2 for i in range(3)
        )
        assert sol.total_power == pytest.approx(float(expected), rel=1e-6)

    def test_dominated_by_zf_and_meets_floors(self):
        cache = CacheSizes(0, 2)
        for seed in range(10):
            ch = sample_channels(4, 6, 1.0, seed=seed)
            qos = make_qos(cache, k=4)
            sol = sdr_ee_max_uncoded(ch, qos, sigma2=1.0, seed=seed)
            norms_sq = np.linalg.norm(zf_directions(ch), axis=0) ** 2
            zf_power = float(np.sum(qos.sinr_floor * norms_sq))
            assert sol.sdp_bound <= zf_power * (1 + 1e-7)
            assert sol.total_power >= sol.sdp_bound * (1 - 1e-7)
            for u, rate in sol.rates.items():
                assert rate >= qos.effective_rate[u] * (1 - 1e-6)

    def test_zero_floors_no_power(self):
        ch = sample_channels(2, 4, 1.0, seed=0)
        qos = make_qos(CacheSizes(0, 10), k=2)
        sol = sdr_ee_max_uncoded(ch, qos, sigma2=1.0)
        assert sol.total_power == 0.0


class TestSdrCoded:
    def test_singleton_closed_form(self):
        ch = sample_channels(3, 6, 1.0, seed=8)
        gamma_bar = 3e6
        out = sdr_ee_max_coded(ch, [1], gamma_bar, sigma2=1.5, bandwidth_hz=B)
        h = ch.user_channel(1)
        floor = 2 ** (gamma_bar / B) - 1
        assert out.power == pytest.approx(floor * 1.5 / np.vdot(h, h).real, rel=1e-6)
        assert out.rate_bps == pytest.approx(gamma_bar, rel=1e-6)

    def test_duplicate_members_match_singleton(self):
        h = sample_channels(1, 5, 1.0, seed=3).matrix
        ch = ChannelMatrix(np.vstack([h, h]), np.ones(2))
        solo = sdr_ee_max_coded(ch, [0], 2e6, 1.0, B)
        both = sdr_ee_max_coded(ch, [0, 1], 2e6, 1.0, B)
        assert both.power == pytest.approx(solo.power, rel=1e-6)

    def test_channel_scaling_inverts_power(self):
        base = sample_channels(2, 6, 1.0, seed=5)
        scaled = ChannelMatrix(3.0 * base.matrix, base.per_user_variance)
        a = sdr_ee_max_coded(base, [0, 1], 2e6, 1.0, B, seed=1)
        b = sdr_ee_max_coded(scaled, [0, 1], 2e6, 1.0, B, seed=1)
        assert b.power == pytest.approx(a.power / 9.0, rel=1e-5)


class TestEeCoded:
    def test_single_subset_when_m_is_k_minus_1(self):
        k, q, eta = 4, 1000, 1e-6
        lib = LibraryConfig(8, q)
        cache = CacheSizes(2, 6)  # K*M_u/N = 3 -> m = 3 = K-1
        sessions = coded_sessions(k, cache, lib)
        assert len(sessions) == 1 and sessions[0].subset_size == k
        rate, power = 2e6, 5.0
        out = ee_coded([(sessions[0], {frozenset(range(k)): (power, rate)})], k, lib, eta)
        s = sessions[0]
        expected = k * q / (eta * s.backhaul_bits + s.access_bits * power / rate)
        assert out.ee_bits_per_joule == pytest.approx(expected, rel=1e-12)

    def test_uniform_subsets_match_closed_form(self):
        # equal P/R for every subset at delta == 0 collapses to the closed form
        k = 4
        lib = LibraryConfig(8, 1200)
        cache = CacheSizes(3, 2)  # K*M_u/N = 1 -> m=1, delta=0
        params = coded_params(k, cache, lib)
        assert params.delta == 0.0
        sessions = coded_sessions(k, cache, lib)
        power, rate = 3.0, 1.5e6
        sols = [(s, {frozenset(sub): (power, rate) for sub in s.subsets(k)}) for s in sessions]
        out = ee_coded(sols, k, lib, eta=1e-6)
        x = cache.user_cache_files / lib.n_files
        pb = cache.bs_cache_files / lib.n_files
        m = params.m
        closed = (1 + k * x) / (
            (1 - x) * (1e-6 * (1 - pb ** (m + 1)) + power / rate)
        )
        assert out.ee_bits_per_joule == pytest.approx(closed, rel=1e-12)

    def test_missing_subset_rejected(self):
        lib = LibraryConfig(8, 1200)
        sessions = coded_sessions(4, CacheSizes(0, 2), lib)
        with pytest.raises(ValueError):
            ee_coded([(sessions[0], {})], 4, lib, eta=0.0)

    def test_fractional_uses_both_sessions(self):
        lib = LibraryConfig(8, 1200)
        cache = CacheSizes(0, 3)  # K*M_u/N = 1.5
        sessions = coded_sessions(4, cache, lib)
        assert [s.subset_size for s in sessions] == [2, 3]
        total_access = sum(s.access_bits for s in sessions)
        from edgecache.cache_model import coded_throughput

        assert total_access == pytest.approx(coded_throughput(4, cache, lib).access_bits)


class TestAnalyticComparison:
    def test_free_backhaul_small_cache_uncoded_wins(self):
        out = analytic_comparison("free_backhaul", 4, 100, 1000, 2.0, 2.0, 1e6, 0.0)
        assert out.winner == "uncoded"

    def test_threshold_is_a_tie(self):
        k, n, p_unc, p_cod = 4, 1000, 2.0, 2.2
        threshold = (p_cod / p_unc - 1 / k) * n
        out = analytic_comparison("free_backhaul", k, threshold, n, p_unc, p_cod, 1e6, 0.0)
        assert out.winner == "tie"
        assert abs(out.ee_uncoded - out.ee_coded) <= 1e-12 * max(out.ee_uncoded, out.ee_coded)
        assert out.threshold_user_cache_files == pytest.approx(threshold)

    def test_no_bs_cache_coded_wins_with_pricey_backhaul(self):
        # premise P_unc/K < P_cod; backhaul pricing makes coded the winner
        out = analytic_comparison("no_bs_cache", 8, 500, 1000, 8.0, 8.0, 1e6, eta=1.0)
        assert out.winner == "coded"

    def test_sign_change_around_threshold(self):
        k, n, p_unc, p_cod = 4, 1000, 2.0, 2.2
        threshold = (p_cod / p_unc - 1 / k) * n
        below = analytic_comparison("free_backhaul", k, threshold - 1, n, p_unc, p_cod, 1e6, 0.0)
        above = analytic_comparison("free_backhaul", k, threshold + 1, n, p_unc, p_cod, 1e6, 0.0)
        assert below.winner == "uncoded"
        assert above.winner == "coded"
