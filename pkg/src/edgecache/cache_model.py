"""Bit-count models for two-layer caching (BS cache plus user caches).

Closed-form backhaul/access loads for the uncoded and coded (XOR
multicast) delivery strategies, the exact finite-library expectation of
the uncoded access load, and bit-level Monte-Carlo oracles that execute
both placement/delivery schemes and report empirical means with
standard errors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import combinations

import numpy as np

__all__ = [
    "LibraryConfig",
    "CacheSizes",
    "CodedParams",
    "Throughputs",
    "OracleEstimate",
    "coded_params",
    "uncoded_throughput",
    "coded_throughput",
    "exact_uncoded_access_throughput",
    "distinct_partition_counts",
    "oracle_uncoded",
    "oracle_coded",
    "oracle_coded_fractional",
]

# Exact big-integer evaluation is used up to these sizes; beyond them the
# expectation is evaluated in the log domain (floating point).
_EXACT_MAX_USERS = 12
_EXACT_MAX_FILES = 10_000

# Snap tolerance for the fractional part of K*M_u/N (float noise only).
_DELTA_SNAP = 1e-9

# Refuse Monte-Carlo runs whose bit masks would not fit comfortably in RAM.
_MAX_ORACLE_CELLS = 500_000_000


@dataclass(frozen=True)
class LibraryConfig:
    """Content library: ``n_files`` files of ``file_size_bits`` bits each."""

    n_files: int
    file_size_bits: int

    def __post_init__(self):
        if self.n_files < 1:
            raise ValueError(f"n_files must be >= 1, got {self.n_files}")
        if self.file_size_bits < 1:
            raise ValueError(f"file_size_bits must be >= 1, got {self.file_size_bits}")


@dataclass(frozen=True)
class CacheSizes:
    """Cache capacities in units of files; fractional sizes are allowed."""

    bs_cache_files: float
    user_cache_files: float

    def validate(self, lib: LibraryConfig) -> None:
        n = lib.n_files
        if not 0 <= self.bs_cache_files <= n:
            raise ValueError(f"bs_cache_files must lie in [0, {n}], got {self.bs_cache_files}")
        if not 0 <= self.user_cache_files <= n:
            raise ValueError(f"user_cache_files must lie in [0, {n}], got {self.user_cache_files}")


@dataclass(frozen=True)
class CodedParams:
    """Integer cache level ``m`` and fractional remainder ``delta`` of K*M_u/N."""

    m: int
    delta: float


@dataclass(frozen=True)
class Throughputs:
    """Total bits crossing the backhaul and access links for one request round."""

    backhaul_bits: float
    access_bits: float


@dataclass(frozen=True)
class OracleEstimate:
    """Monte-Carlo mean loads with standard errors of the mean."""

    access_mean: float
    backhaul_mean: float
    access_se: float
    backhaul_se: float
    trials: int

    def as_throughputs(self) -> Throughputs:
        return Throughputs(self.backhaul_mean, self.access_mean)


def _check_users(k: int) -> None:
    if k < 1:
        raise ValueError(f"user count must be >= 1, got {k}")


def coded_params(k: int, cache: CacheSizes, lib: LibraryConfig) -> CodedParams:
    """Split K*M_u/N into its integer part m and fractional remainder delta."""
    _check_users(k)
    cache.validate(lib)
    t = k * cache.user_cache_files / lib.n_files
    m = int(math.floor(t))
    delta = t - m
    # Snap float noise so exact multiples of N/K land on delta == 0.
    if delta > 1.0 - _DELTA_SNAP:
        m += 1
        delta = 0.0
    elif delta < _DELTA_SNAP:
        delta = 0.0
    return CodedParams(m, delta)


def uncoded_throughput(k: int, cache: CacheSizes, lib: LibraryConfig) -> Throughputs:
    """Expected loads when every user's missing subfile is unicast independently."""
    _check_users(k)
    cache.validate(lib)
    n, q = lib.n_files, lib.file_size_bits
    access = k * q * (1.0 - cache.user_cache_files / n)
    backhaul = access * (1.0 - cache.bs_cache_files / n)
    return Throughputs(backhaul, access)


def coded_throughput(k: int, cache: CacheSizes, lib: LibraryConfig) -> Throughputs:
    """Expected loads of the XOR-multicast scheme, fractional cache sizes included.

    A non-integer K*M_u/N is served by time-splitting the library into two
    sub-libraries handled at cache levels m and m+1; the two terms below are
    the corresponding shares.
    """
    params = coded_params(k, cache, lib)
    n, q = lib.n_files, lib.file_size_bits
    m, d = params.m, params.delta
    p_bs = cache.bs_cache_files / n

    def per_level(level: int) -> float:
        # bits multicast per file-size unit at integer cache level `level`
        if level >= k:
            return 0.0
        return (k - level) / (level + 1.0)

    access = (1.0 - d) * q * per_level(m) + d * q * per_level(m + 1)
    backhaul = (1.0 - d) * q * per_level(m) * (1.0 - p_bs ** (m + 1)) + d * q * per_level(
        m + 1
    ) * (1.0 - p_bs ** (m + 2))
    return Throughputs(backhaul, access)


def distinct_partition_counts(m: int) -> list[int]:
    """Exact coefficients a[l] such that sum_l a[l] * N!/(N-l)! = N**m.

    a[l] counts the ways to partition m labelled draws into l unlabelled
    non-empty groups (Stirling numbers of the second kind); index 0 is unused.
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    row = [0, 1]  # m == 1
    for mm in range(2, m + 1):
        new = [0] * (mm + 1)
        for l in range(1, mm + 1):
            upper = row[l] if l < len(row) else 0
            lower = row[l - 1] if l - 1 < len(row) else 0
            new[l] = l * upper + lower
        row = new
    return row


def _falling_factorial(n: int, l: int) -> int:
    out = 1
    for i in range(l):
        out *= n - i
    return out


def exact_uncoded_access_throughput(k: int, cache: CacheSizes, lib: LibraryConfig) -> float:
    """Exact expected access load counting each distinct requested file once.

    The closed-form uncoded access load is the large-library limit of this
    expectation; the two agree as N grows with K fixed.
    """
    _check_users(k)
    cache.validate(lib)
    n, q = lib.n_files, lib.file_size_bits
    counts = distinct_partition_counts(k)
    l_max = min(k, n)
    if k <= _EXACT_MAX_USERS and n <= _EXACT_MAX_FILES:
        numerator = sum(l * counts[l] * _falling_factorial(n, l) for l in range(1, l_max + 1))
        expected_distinct = float(Fraction(numerator, n**k))
    else:
        # log-domain evaluation; all terms are positive so the sum is stable,
        # at the cost of ~1e-12 relative precision
        log_nk = k * math.log(n)
        terms = [
            math.exp(
                math.log(l)
                + math.log(counts[l])
                + math.lgamma(n + 1)
                - math.lgamma(n - l + 1)
                - log_nk
            )
            for l in range(1, l_max + 1)
        ]
        expected_distinct = math.fsum(terms)
    return expected_distinct * q * (1.0 - cache.user_cache_files / n)


def _se(values: np.ndarray) -> float:
    if values.size <= 1:
        return 0.0
    return float(values.std(ddof=1) / math.sqrt(values.size))


def oracle_uncoded(
    k: int, cache: CacheSizes, lib: LibraryConfig, trials: int, seed: int
) -> OracleEstimate:
    """Bit-level simulation of the uncoded scheme.

    Every file's BS copy is sampled per-bit with probability M_b/N; each user
    caches a random ceil(M_u*Q/N)-bit subset of its requested file; requests
    are uniform and independent.  Missing bits are unicast per user, and a
    missing bit crosses the backhaul when the BS did not prefetch it.
    BS masks are shared between users that request the same file.
    """
    _check_users(k)
    cache.validate(lib)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    n, q = lib.n_files, lib.file_size_bits
    if trials * n * q > _MAX_ORACLE_CELLS:
        raise ValueError("simulation too large; reduce trials or the library size")

    cached_per_file = min(q, math.ceil(cache.user_cache_files * q / n - 1e-12))
    missing = q - cached_per_file
    p_bs = cache.bs_cache_files / n

    rng = np.random.default_rng(seed)
    access = np.full(trials, float(k * missing))
    if missing == 0:
        backhaul = np.zeros(trials)
    else:
        demands = rng.integers(0, n, size=(trials, k))
        bs_mask = rng.random((trials, n, q)) < p_bs
        # random missing-bit positions per (trial, user)
        order = np.argsort(rng.random((trials, k, q)), axis=-1)
        positions = order[..., :missing]
        t_idx = np.arange(trials)[:, None, None]
        at_bs = bs_mask[t_idx, demands[..., None], positions]
        backhaul = (~at_bs).sum(axis=(1, 2)).astype(float)

    return OracleEstimate(
        access_mean=float(access.mean()),
        backhaul_mean=float(backhaul.mean()),
        access_se=_se(access),
        backhaul_se=_se(backhaul),
        trials=trials,
    )


def _coded_session(
    k: int, m: int, q_bits: int, bs_cache_prob: float, trials: int, rng: np.random.Generator
) -> tuple[int, np.ndarray]:
    """Execute placement and delivery of the XOR scheme at integer level m.

    Returns the deterministic per-trial access bit count and the per-trial
    backhaul counts.  Worst-case distinct demands are assumed (user i
    requests file i).
    """
    if m >= k:
        raise ValueError(f"cache level m={m} must be < K={k}")
    n_sub = math.comb(k, m)
    sub_bits = math.ceil(q_bits / n_sub)  # zero-padding when not divisible
    messages = list(combinations(range(k), m + 1))
    access = len(messages) * sub_bits

    if trials * k * n_sub * sub_bits > _MAX_ORACLE_CELLS:
        raise ValueError("simulation too large; reduce trials or the file size")

    sub_index = {s: i for i, s in enumerate(combinations(range(k), m))}
    # BS holds each raw file bit independently with probability M_b/N
    bs_mask = rng.random((trials, k, n_sub, sub_bits)) < bs_cache_prob
    backhaul = np.zeros(trials)
    for msg in messages:
        available = np.ones((trials, sub_bits), dtype=bool)
        for user in msg:
            rest = tuple(u for u in msg if u != user)
            available &= bs_mask[:, user, sub_index[rest], :]
        backhaul += (~available).sum(axis=1)
    return access, backhaul


def oracle_coded(
    k: int, lib: LibraryConfig, m: int, bs_cache_prob: float, trials: int, seed: int
) -> OracleEstimate:
    """Bit-level execution of the XOR-multicast delivery at integer level m.

    The access count is exact by construction; the backhaul count is the
    number of multicast bits whose m+1 constituent file bits were not all
    prefetched at the BS.
    """
    _check_users(k)
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if not 0.0 <= bs_cache_prob <= 1.0:
        raise ValueError("bs_cache_prob must lie in [0, 1]")
    if lib.n_files < k:
        raise ValueError("library must hold at least K files for distinct demands")
    rng = np.random.default_rng(seed)
    access, backhaul = _coded_session(k, m, lib.file_size_bits, bs_cache_prob, trials, rng)
    return OracleEstimate(
        access_mean=float(access),
        backhaul_mean=float(backhaul.mean()),
        access_se=0.0,
        backhaul_se=_se(backhaul),
        trials=trials,
    )


def oracle_coded_fractional(
    k: int, cache: CacheSizes, lib: LibraryConfig, trials: int, seed: int
) -> OracleEstimate:
    """Time-splitting oracle for non-integer K*M_u/N.

    The library is split into a (1-delta) share served at level m and a
    delta share served at level m+1; the two sessions run back to back on
    the same BS cache realization process.
    """
    params = coded_params(k, cache, lib)
    if lib.n_files < k:
        raise ValueError("library must hold at least K files for distinct demands")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    q = lib.file_size_bits
    q_first = int(round((1.0 - params.delta) * q))
    q_second = q - q_first
    p_bs = cache.bs_cache_files / lib.n_files

    rng = np.random.default_rng(seed)
    access_total = 0
    backhaul_total = np.zeros(trials)
    for level, q_bits in ((params.m, q_first), (params.m + 1, q_second)):
        if q_bits == 0 or level >= k:
            continue
        access, backhaul = _coded_session(k, level, q_bits, p_bs, trials, rng)
        access_total += access
        backhaul_total += backhaul
    return OracleEstimate(
        access_mean=float(access_total),
        backhaul_mean=float(backhaul_total.mean()),
        access_se=0.0,
        backhaul_se=_se(backhaul_total),
        trials=trials,
    )
