"""Channel generation, zero-forcing directions and rate evaluation.

Channels are block-Rayleigh: each user's vector is circularly-symmetric
complex Gaussian with a per-user variance.  Rates follow the Shannon
formula over a bandwidth ``B``; multicast rates are min-user rates with
no inter-stream interference.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

__all__ = [
    "ChannelMatrix",
    "PrecodingSolution",
    "QosTargets",
    "IllConditionedChannelError",
    "sample_channels",
    "zf_directions",
    "unicast_rates",
    "multicast_rate",
    "qos_targets",
]

ZF_CONDITION_LIMIT = 1e6


class IllConditionedChannelError(ValueError):
    """Channel matrix is singular or too badly conditioned for ZF."""


@dataclass(frozen=True)
class ChannelMatrix:
    """K x L channel with rows h_k^H and per-user variances sigma^2_{h_k}."""

    matrix: np.ndarray
    per_user_variance: np.ndarray

    def __post_init__(self):
        h = np.asarray(self.matrix, dtype=complex)
        v = np.asarray(self.per_user_variance, dtype=float)
        if h.ndim != 2:
            raise ValueError("channel matrix must be 2-D")
        k, l = h.shape
        if k > l:
            raise ValueError(f"need at least as many antennas as users (K={k}, L={l})")
        if v.shape != (k,):
            raise ValueError("per_user_variance must have one entry per user")
        if not np.all(np.isfinite(h)):
            raise ValueError("channel entries must be finite")
        object.__setattr__(self, "matrix", h)
        object.__setattr__(self, "per_user_variance", v)

    @property
    def n_users(self) -> int:
        return self.matrix.shape[0]

    @property
    def n_antennas(self) -> int:
        return self.matrix.shape[1]

    def user_channel(self, k: int) -> np.ndarray:
        """Column vector h_k (length L)."""
        return self.matrix[k].conj()

    def restrict(self, users: Iterable[int]) -> "ChannelMatrix":
        idx = list(users)
        return ChannelMatrix(self.matrix[idx], self.per_user_variance[idx])


@dataclass
class PrecodingSolution:
    """Beamforming vectors per target (user index or frozenset of users)."""

    vectors: dict
    rates: dict
    total_power: float
    sdp_bound: float | None = None

    def __post_init__(self):
        check = sum(float(np.vdot(w, w).real) for w in self.vectors.values())
        if not np.isclose(check, self.total_power, rtol=1e-6, atol=1e-12):
            raise ValueError("total_power does not match the squared norms of the vectors")
        if any(r < 0 for r in self.rates.values()):
            raise ValueError("rates must be nonnegative")


@dataclass(frozen=True)
class QosTargets:
    """Rate requirement, its cache-adjusted version, and the SINR floor."""

    per_user_rate: np.ndarray
    effective_rate: np.ndarray
    sinr_floor: np.ndarray
    bandwidth_hz: float


def sample_channels(k: int, l: int, variances, seed) -> ChannelMatrix:
    """Draw a K x L Rayleigh channel, deterministic in ``seed``.

    ``variances`` is a scalar or a length-K sequence of per-user variances;
    real and imaginary parts each carry half the variance.
    """
    if k < 1:
        raise ValueError("need at least one user")
    if k > l:
        raise ValueError(f"need at least as many antennas as users (K={k}, L={l})")
    v = np.broadcast_to(np.asarray(variances, dtype=float), (k,)).copy()
    if np.any(v <= 0):
        raise ValueError("channel variances must be positive")
    rng = np.random.default_rng(seed)
    scale = np.sqrt(v / 2.0)[:, None]
    h = scale * (rng.standard_normal((k, l)) + 1j * rng.standard_normal((k, l)))
    # rows are h_k^H by convention
    return ChannelMatrix(h.conj(), v)


def zf_directions(channel: ChannelMatrix, cond_limit: float = ZF_CONDITION_LIMIT) -> np.ndarray:
    """Return the L x K matrix whose k-th column satisfies h_l^H htilde_k = delta_lk."""
    h = channel.matrix
    s = np.linalg.svd(h, compute_uv=False)
    if s[-1] <= 0 or s[0] / s[-1] > cond_limit:
        raise IllConditionedChannelError(
            f"channel condition number {s[0] / max(s[-1], 1e-300):.3e} exceeds {cond_limit:.1e}"
        )
    gram = h @ h.conj().T
    return h.conj().T @ np.linalg.inv(gram)


def unicast_rates(channel: ChannelMatrix, beams: np.ndarray, sigma2: float, bandwidth_hz: float) -> np.ndarray:
    """Per-user achievable rates in bit/s for simultaneous unicast beams.

    ``beams`` is L x K, column k serving user k.  Interference from all
    other beams enters each user's SINR.
    """
    if sigma2 <= 0:
        raise ValueError("noise power must be positive")
    h = channel.matrix
    gains = np.abs(h @ beams) ** 2  # gains[k, l] = |h_k^H w_l|^2
    signal = np.diag(gains)
    interference = gains.sum(axis=1) - signal
    sinr = signal / (interference + sigma2)
    return bandwidth_hz * np.log2(1.0 + sinr)


def multicast_rate(
    channel: ChannelMatrix, members, beam: np.ndarray, sigma2: float, bandwidth_hz: float
) -> float:
    """Common rate of a single multicast beam: the worst member's rate."""
    members = list(members)
    if not members:
        raise ValueError("multicast group must be non-empty")
    if sigma2 <= 0:
        raise ValueError("noise power must be positive")
    h = channel.matrix[members]
    snr = np.abs(h @ beam) ** 2 / sigma2
    return float(bandwidth_hz * np.min(np.log2(1.0 + snr)))


def qos_targets(
    strategy: str,
    gamma,
    k: int,
    bandwidth_hz: float,
    cache=None,
    lib=None,
    m: int | None = None,
) -> QosTargets:
    """Cache-adjusted rate requirements and equivalent SINR floors.

    Under uncoded caching each user only needs the uncached share of its
    file, so gamma shrinks by (1 - M_u/N).  Under coded caching a user is
    active only during its own multicast slots, so the per-slot rate grows
    to gamma*(K-m)/(m+1).
    """
    g = np.broadcast_to(np.asarray(gamma, dtype=float), (k,)).astype(float)
    if np.any(g <= 0):
        raise ValueError("rate requirements must be positive")
    if strategy == "uncoded":
        if cache is None or lib is None:
            raise ValueError("uncoded targets need cache sizes and the library")
        effective = (1.0 - cache.user_cache_files / lib.n_files) * g
    elif strategy == "coded":
        if m is None:
            raise ValueError("coded targets need the cache level m")
        if not 0 <= m <= k:
            raise ValueError(f"cache level m={m} out of range for K={k}")
        effective = g * (k - m) / (m + 1.0)
    else:
        raise ValueError(f"unknown strategy {strategy!r}")
    floor = np.power(2.0, effective / bandwidth_hz) - 1.0
    return QosTargets(g, effective, floor, bandwidth_hz)
