"""Non-uniform content popularity: placement, loads, and active-set designs.

Under non-uniform popularity each cache stores whole files, most popular
first (per-user profiles for the user caches, the K-user average profile
for the BS cache).  Loads follow from cache-hit indicators; transmission
designs are reused from the uncoded EE/delay machinery restricted to the
users whose request missed their own cache.  File indices are 0-based.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .cache_model import LibraryConfig, Throughputs
from .delay_optimizer import BisectionConfig, DelayResult, maxmin_sinr_bisection
from .ee_optimizer import EnergyBreakdown, _assemble, sdr_ee_max_uncoded
from .wireless import ChannelMatrix, QosTargets

__all__ = [
    "PopularityProfile",
    "PlacementMap",
    "zipf_profile",
    "build_placement",
    "nonuniform_throughput",
    "sample_demands",
    "active_subset",
    "nonuniform_ee",
    "nonuniform_delay",
]

_PROB_TOL = 1e-12


@dataclass(frozen=True)
class PopularityProfile:
    """Per-user request distributions and their across-user average."""

    per_user: np.ndarray  # (K, N)
    global_profile: np.ndarray  # (N,)

    def __post_init__(self):
        q = np.asarray(self.per_user, dtype=float)
        g = np.asarray(self.global_profile, dtype=float)
        if q.ndim != 2 or g.shape != (q.shape[1],):
            raise ValueError("profile shapes are inconsistent")
        if np.any(q < 0) or np.any(g < 0):
            raise ValueError("probabilities must be nonnegative")
        if np.max(np.abs(q.sum(axis=1) - 1.0)) > _PROB_TOL:
            raise ValueError("per-user probabilities must sum to 1")
        if abs(g.sum() - 1.0) > _PROB_TOL:
            raise ValueError("global probabilities must sum to 1")
        object.__setattr__(self, "per_user", q)
        object.__setattr__(self, "global_profile", g)

    @property
    def n_users(self) -> int:
        return self.per_user.shape[0]

    @property
    def n_files(self) -> int:
        return self.per_user.shape[1]


@dataclass(frozen=True)
class PlacementMap:
    """Most-popular-first whole-file placement.

    ``user_rank[k, f]`` is the 1-based position of file f in user k's
    popularity order (ties broken by ascending file index); files with rank
    <= ``user_cache_counts[k]`` are cached.  Same convention for the BS.
    """

    user_rank: np.ndarray  # (K, N) int
    bs_rank: np.ndarray  # (N,) int
    user_cache_counts: np.ndarray  # (K,) int
    bs_cache_count: int

    def user_hit(self, k: int, f: int) -> bool:
        return bool(self.user_rank[k, f] <= self.user_cache_counts[k])

    def bs_hit(self, f: int) -> bool:
        return bool(self.bs_rank[f] <= self.bs_cache_count)


def zipf_profile(n_files: int, alpha: float, k: int) -> PopularityProfile:
    """Identical Zipf(alpha) popularity for every user; alpha=0 is uniform."""
    if alpha < 0:
        raise ValueError("zipf exponent must be nonnegative")
    if n_files < 1 or k < 1:
        raise ValueError("need at least one file and one user")
    ranks = np.arange(1, n_files + 1, dtype=float)
    weights = ranks**-alpha
    probs = weights / weights.sum()
    per_user = np.tile(probs, (k, 1))
    return PopularityProfile(per_user, probs.copy())


def _rank_desc(probs: np.ndarray) -> np.ndarray:
    """1-based rank under descending probability, ascending index on ties."""
    order = np.lexsort((np.arange(probs.size), -probs))
    rank = np.empty(probs.size, dtype=np.int64)
    rank[order] = np.arange(1, probs.size + 1)
    return rank


def build_placement(profile: PopularityProfile, user_cache_files, bs_cache_files: int) -> PlacementMap:
    """Fill each cache with its most popular whole files until full."""
    counts = np.broadcast_to(
        np.asarray(user_cache_files, dtype=np.int64), (profile.n_users,)
    ).copy()
    if np.any(counts < 0) or np.any(counts > profile.n_files):
        raise ValueError("user cache sizes out of range")
    if not 0 <= bs_cache_files <= profile.n_files:
        raise ValueError("BS cache size out of range")
    user_rank = np.vstack([_rank_desc(profile.per_user[k]) for k in range(profile.n_users)])
    bs_rank = _rank_desc(profile.global_profile)
    return PlacementMap(user_rank, bs_rank, counts, int(bs_cache_files))


def nonuniform_throughput(demands, placement: PlacementMap, lib: LibraryConfig) -> Throughputs:
    """Whole-file loads for one demand vector: a miss costs Q bits per link."""
    d = np.asarray(demands, dtype=np.int64)
    k = placement.user_rank.shape[0]
    if d.shape != (k,):
        raise ValueError(f"demands must list one file per user (expected {k})")
    if np.any(d < 0) or np.any(d >= lib.n_files):
        raise ValueError("demand indices out of range")
    q = lib.file_size_bits
    users = np.arange(k)
    access_misses = placement.user_rank[users, d] > placement.user_cache_counts
    bs_misses = placement.bs_rank[d] > placement.bs_cache_count
    return Throughputs(float(q * bs_misses.sum()), float(q * access_misses.sum()))


def sample_demands(profile: PopularityProfile, seed) -> np.ndarray:
    """One independent categorical request per user, deterministic in seed."""
    rng = np.random.default_rng(seed)
    cdf = np.cumsum(profile.per_user, axis=1)
    u = rng.random(profile.n_users)
    picks = np.array(
        [np.searchsorted(cdf[k], u[k], side="left") for k in range(profile.n_users)]
    )
    return np.minimum(picks, profile.n_files - 1).astype(np.int64)


def active_subset(demands, placement: PlacementMap) -> list[int]:
    """Users whose requested file is not in their own cache."""
    d = np.asarray(demands, dtype=np.int64)
    users = np.arange(placement.user_rank.shape[0])
    miss = placement.user_rank[users, d] > placement.user_cache_counts
    return [int(u) for u in users[miss]]


def nonuniform_ee(
    channel: ChannelMatrix,
    demands,
    placement: PlacementMap,
    gamma,
    sigma2: float,
    bandwidth_hz: float,
    eta: float,
    lib: LibraryConfig,
    n_candidates: int = 100,
    seed: int = 0,
) -> tuple[EnergyBreakdown, Throughputs]:
    """EE of whole-file delivery to the cache-missing users.

    Backhaul bits are the BS-cache misses of the demand vector; access energy
    follows the minimum-power SDR design restricted to the active users, each
    served a whole file at rate floor gamma.
    """
    k = channel.n_users
    loads = nonuniform_throughput(demands, placement, lib)
    active = active_subset(demands, placement)
    backhaul = eta * loads.backhaul_bits
    if not active:
        return _assemble(backhaul, 0.0, k * lib.file_size_bits), loads

    g = np.broadcast_to(np.asarray(gamma, dtype=float), (k,))
    floors = np.power(2.0, g / bandwidth_hz) - 1.0
    qos = QosTargets(g, g, floors, bandwidth_hz)
    solution = sdr_ee_max_uncoded(
        channel, qos, sigma2, active=active, n_candidates=n_candidates, seed=seed
    )
    q = lib.file_size_bits
    access = q * sum(
        float(np.vdot(w, w).real) / solution.rates[u] for u, w in solution.vectors.items()
    )
    return _assemble(backhaul, access, k * q), loads


def nonuniform_delay(
    channel: ChannelMatrix,
    demands,
    placement: PlacementMap,
    gamma,
    sigma2: float,
    bandwidth_hz: float,
    p_total: float,
    lib: LibraryConfig,
    cfg: BisectionConfig = BisectionConfig(),
    seed: int = 0,
    n_candidates: int = 100,
) -> DelayResult:
    """Total whole-file delivery time to the cache-missing users.

    Rates come from the max-min SINR design on the active subset under the
    power budget, with the rate floor gamma as the bisection start.
    """
    active = active_subset(demands, placement)
    if not active:
        return DelayResult({}, 0.0, "nonuniform")
    k = channel.n_users
    g = np.broadcast_to(np.asarray(gamma, dtype=float), (k,))
    floors = np.power(2.0, g / bandwidth_hz) - 1.0
    result = maxmin_sinr_bisection(
        channel,
        floors,
        p_total,
        sigma2,
        cfg=cfg,
        users=active,
        seed=seed,
        n_candidates=n_candidates,
    )
    q = lib.file_size_bits
    rates = bandwidth_hz * np.log2(1.0 + result.achieved_sinr)
    times = {u: float(q / rates[i]) for i, u in enumerate(sorted(active))}
    return DelayResult(
        per_target_time=times,
        aggregate_seconds=float(sum(times.values())),
        kind="nonuniform",
    )
