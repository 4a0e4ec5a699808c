"""Energy efficiency: closed forms, ZF optimum and SDR beamforming designs.

Energy bookkeeping: backhaul bits are priced at ``eta`` joules per bit,
access energy is transmit power times transmission time per served
target.  EE is delivered bits (K*Q) per joule.  A round that consumes no
energy (everything cached) reports ``math.inf``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np

from . import sdp_solver as sdp
from .cache_model import CacheSizes, LibraryConfig, coded_params
from .wireless import ChannelMatrix, PrecodingSolution, QosTargets, unicast_rates, zf_directions

__all__ = [
    "EnergyBreakdown",
    "CodedSession",
    "MulticastDesign",
    "ZfDesign",
    "StrategyComparison",
    "ee_uncoded",
    "ee_coded",
    "theorem1_ee",
    "zf_ee_max",
    "sdr_ee_max_uncoded",
    "sdr_ee_max_coded",
    "coded_sessions",
    "analytic_comparison",
]


@dataclass(frozen=True)
class EnergyBreakdown:
    backhaul_joules: float
    access_joules: float
    total_joules: float
    ee_bits_per_joule: float


@dataclass(frozen=True)
class CodedSession:
    """One time-split delivery session of the coded scheme."""

    level: int  # cache level m of this session
    subset_size: int  # m + 1 users per multicast message
    access_bits: float  # total access bits carried by the session
    backhaul_bits: float
    message_bits: float  # bits per multicast message

    def subsets(self, k: int):
        return combinations(range(k), self.subset_size)


@dataclass(frozen=True)
class MulticastDesign:
    """Beam for one multicast group with its achieved rate and power."""

    subset: frozenset
    beam: np.ndarray
    rate_bps: float
    power: float
    sdp_bound: float


@dataclass(frozen=True)
class ZfDesign:
    received_powers: np.ndarray  # p*_k at the users
    beams: np.ndarray  # L x K transmit vectors
    transmit_power: float
    rates: np.ndarray
    breakdown: EnergyBreakdown


@dataclass(frozen=True)
class StrategyComparison:
    regime: str
    winner: str  # "uncoded" | "coded" | "tie"
    threshold_user_cache_files: float
    ee_uncoded: float
    ee_coded: float


def _assemble(backhaul_joules: float, access_joules: float, delivered_bits: float) -> EnergyBreakdown:
    total = backhaul_joules + access_joules
    ee = math.inf if total == 0 else delivered_bits / total
    return EnergyBreakdown(backhaul_joules, access_joules, total, ee)


def ee_uncoded(
    powers,
    rates,
    cache: CacheSizes,
    lib: LibraryConfig,
    eta: float,
) -> EnergyBreakdown:
    """EE of uncoded delivery from per-user transmit powers and rates (bit/s)."""
    powers = np.asarray(powers, dtype=float)
    rates = np.asarray(rates, dtype=float)
    if powers.shape != rates.shape:
        raise ValueError("powers and rates must align")
    k = powers.size
    n, q = lib.n_files, lib.file_size_bits
    residual = 1.0 - cache.user_cache_files / n
    if residual > 0 and np.any(rates <= 0):
        raise ValueError("zero rate with residual demand")
    backhaul = eta * k * q * residual * (1.0 - cache.bs_cache_files / n)
    access = q * residual * float(np.sum(powers / rates)) if residual > 0 else 0.0
    return _assemble(backhaul, access, k * q)


def coded_sessions(k: int, cache: CacheSizes, lib: LibraryConfig) -> list[CodedSession]:
    """Delivery sessions of the coded scheme; one for integer K*M_u/N, two otherwise."""
    params = coded_params(k, cache, lib)
    n, q = lib.n_files, lib.file_size_bits
    p_bs = cache.bs_cache_files / n
    sessions = []
    for level, share in ((params.m, 1.0 - params.delta), (params.m + 1, params.delta)):
        if share == 0.0 or level >= k:
            continue
        access = share * q * (k - level) / (level + 1.0)
        if access == 0.0:
            continue
        backhaul = access * (1.0 - p_bs ** (level + 1))
        sessions.append(
            CodedSession(
                level=level,
                subset_size=level + 1,
                access_bits=access,
                backhaul_bits=backhaul,
                message_bits=access / math.comb(k, level + 1),
            )
        )
    return sessions


def ee_coded(
    session_solutions,
    k: int,
    lib: LibraryConfig,
    eta: float,
) -> EnergyBreakdown:
    """EE of coded delivery.

    ``session_solutions`` is a list of (CodedSession, mapping) pairs, the
    mapping giving each subset's (power, rate) tuple.  Per session, the
    access energy is message_bits * sum_S P_S / R_S; a missing subset is an
    error because every multicast message must have a solved beam.
    """
    backhaul = access = 0.0
    for session, solutions in session_solutions:
        for subset in session.subsets(k):
            key = frozenset(subset)
            if key not in solutions:
                raise ValueError(f"missing beamforming solution for subset {sorted(subset)}")
            power, rate = solutions[key]
            if rate <= 0:
                raise ValueError(f"zero rate for subset {sorted(subset)}")
            access += session.message_bits * power / rate
        backhaul += eta * session.backhaul_bits
    return _assemble(backhaul, access, k * lib.file_size_bits)


def theorem1_ee(
    zf_norms_sq,
    qos: QosTargets,
    cache: CacheSizes,
    lib: LibraryConfig,
    eta: float,
    sigma2: float,
) -> float:
    """Closed-form maximal EE of the uncoded strategy under ZF precoding."""
    a = np.asarray(zf_norms_sq, dtype=float)
    k = a.size
    residual = 1.0 - cache.user_cache_files / lib.n_files
    if residual == 0.0:
        return math.inf
    denom = eta * k * (1.0 - cache.bs_cache_files / lib.n_files) + sigma2 * float(
        np.sum(qos.sinr_floor * a / qos.effective_rate)
    )
    return k / (residual * denom)


def zf_ee_max(
    channel: ChannelMatrix,
    qos: QosTargets,
    cache: CacheSizes,
    lib: LibraryConfig,
    eta: float,
    sigma2: float,
) -> ZfDesign:
    """EE-optimal ZF design: received powers sit exactly on the SINR floors."""
    directions = zf_directions(channel)
    norms_sq = np.linalg.norm(directions, axis=0) ** 2
    p_star = qos.sinr_floor * sigma2
    beams = directions * np.sqrt(p_star)
    rates = unicast_rates(channel, beams, sigma2, qos.bandwidth_hz)
    breakdown = ee_uncoded(p_star * norms_sq, rates, cache, lib, eta)
    return ZfDesign(
        received_powers=p_star,
        beams=beams,
        transmit_power=float(np.sum(p_star * norms_sq)),
        rates=rates,
        breakdown=breakdown,
    )


def _rank1_beams(blocks, channel, users, floors, sigma2, n_candidates, seed):
    """Per-user beams from the block SDP solution.

    If every block is rank one the eigenvector branch is exact; otherwise
    Gaussian candidates are drawn jointly and powers restored by solving the
    SINR equations, keeping the cheapest feasible set.
    """
    h = channel.matrix[users]
    k = len(users)
    decomps = [np.linalg.eigh(x) for x in blocks]
    rng = np.random.default_rng(seed)

    def directions_from(draw: bool):
        dirs = []
        for vals, vecs in decomps:
            if not draw:
                w = vecs[:, -1]
            else:
                g = (rng.standard_normal(vecs.shape[0]) + 1j * rng.standard_normal(vecs.shape[0])) / math.sqrt(2)
                w = vecs @ (np.sqrt(np.clip(vals, 0, None)) * g)
                norm = np.linalg.norm(w)
                if norm == 0:
                    return None
                w = w / norm
            dirs.append(w)
        return np.column_stack(dirs)

    all_rank1 = all(vals[-2] <= 1e-6 * max(vals[-1], 1e-300) for vals, _ in decomps if vals.size > 1)
    trials = 1 if all_rank1 else max(1, n_candidates)

    best = None
    best_power = np.inf
    for t in range(trials):
        dirs = directions_from(draw=t > 0)
        if dirs is None:
            continue
        gains = np.abs(h @ dirs) ** 2  # gains[i, j] = |h_i^H w_j|^2
        diag = np.diag(gains).copy()
        if np.any(diag <= 0):
            continue
        coupling = np.eye(k) - (floors / diag)[:, None] * gains * (1 - np.eye(k))
        # per-beam power restoration: beta solves the tight SINR equations
        try:
            beta = np.linalg.solve(coupling, floors * sigma2 / diag)
        except np.linalg.LinAlgError:
            continue
        if np.any(beta <= 0) or not np.all(np.isfinite(beta)):
            continue
        power = float(np.sum(beta))
        if power < best_power:
            best_power = power
            best = dirs * np.sqrt(beta)
    if best is None:
        raise sdp.ExtractionError("no feasible rank-one beam set; increase n_candidates")
    return best, best_power


def sdr_ee_max_uncoded(
    channel: ChannelMatrix,
    qos: QosTargets,
    sigma2: float,
    active=None,
    n_candidates: int = 100,
    seed: int = 0,
    tol: float = 1e-8,
) -> PrecodingSolution:
    """Minimum-power beams meeting per-user SINR floors via SDR.

    Solves the block-diagonal relaxation (one PSD matrix per active user,
    rank constraint dropped), then recovers rank-one beams.  The SDP optimum
    is kept on the result as ``sdp_bound``; it lower-bounds the extracted
    power and never exceeds the ZF power.
    """
    users = list(range(channel.n_users)) if active is None else sorted(active)
    if not users:
        raise ValueError("active user set must be non-empty")
    l = channel.n_antennas
    floors = np.asarray(qos.sinr_floor, dtype=float)
    if floors.size == channel.n_users:
        floors = floors[users]
    elif floors.size != len(users):
        raise ValueError("floors must cover the active users")

    if np.all(floors == 0):
        vectors = {u: np.zeros(l, dtype=complex) for u in users}
        rates = {u: 0.0 for u in users}
        return PrecodingSolution(vectors, rates, 0.0, sdp_bound=0.0)

    constraints = []
    for i, u in enumerate(users):
        h = channel.user_channel(u)
        a = np.outer(h, h.conj())
        mats = {i: a}
        for j in range(len(users)):
            if j != i:
                mats[j] = -floors[i] * a
        constraints.append(sdp.LinearConstraint(mats, ">=", floors[i] * sigma2))
    problem = sdp.HermitianSDP(
        [l] * len(users),
        {j: np.eye(l, dtype=complex) for j in range(len(users))},
        constraints,
    )
    solution = sdp.solve(problem, tol=tol)
    if solution.status == "infeasible":
        raise sdp.SDPError("QoS SINR floors are infeasible for this channel")
    if solution.status != "optimal":
        raise sdp.SDPError(f"SDP solve failed with status {solution.status}")

    beams, power = _rank1_beams(
        solution.blocks, channel, users, floors, sigma2, n_candidates, seed
    )
    sub = channel.restrict(users)
    rates = unicast_rates(sub, beams, sigma2, qos.bandwidth_hz)
    vectors = {u: beams[:, i] for i, u in enumerate(users)}
    return PrecodingSolution(
        vectors=vectors,
        rates={u: float(rates[i]) for i, u in enumerate(users)},
        total_power=power,
        sdp_bound=solution.objective,
    )


def sdr_ee_max_coded(
    channel: ChannelMatrix,
    subset,
    gamma_bar_min: float,
    sigma2: float,
    bandwidth_hz: float,
    n_candidates: int = 100,
    seed: int = 0,
    tol: float = 1e-8,
) -> MulticastDesign:
    """Minimum-power multicast beam for one subset at its common rate floor."""
    members = sorted(subset)
    if not members:
        raise ValueError("subset must be non-empty")
    floor = 2.0 ** (gamma_bar_min / bandwidth_hz) - 1.0
    l = channel.n_antennas
    cons = []
    for u in members:
        h = channel.user_channel(u)
        cons.append(sdp.LinearConstraint({0: np.outer(h, h.conj())}, ">=", floor * sigma2))
    problem = sdp.HermitianSDP([l], {0: np.eye(l, dtype=complex)}, cons)
    solution = sdp.solve(problem, tol=tol)
    if solution.status != "optimal":
        raise sdp.SDPError(f"multicast SDP failed with status {solution.status}")
    quad_constraints = [
        (np.outer(channel.user_channel(u), channel.user_channel(u).conj()), floor * sigma2)
        for u in members
    ]
    beam, _ = sdp.extract_rank1(
        solution.blocks[0], quad_constraints, n_candidates=n_candidates, seed=seed
    )
    snr = min(
        float(np.abs(np.vdot(channel.user_channel(u), beam)) ** 2) / sigma2 for u in members
    )
    rate = bandwidth_hz * math.log2(1.0 + snr)
    return MulticastDesign(
        subset=frozenset(members),
        beam=beam,
        rate_bps=rate,
        power=float(np.vdot(beam, beam).real),
        sdp_bound=solution.objective,
    )


def analytic_comparison(
    regime: str,
    k: int,
    user_cache_files: float,
    n_files: int,
    p_unc: float,
    p_cod: float,
    gamma: float,
    eta: float,
    tie_tol: float = 1e-12,
) -> StrategyComparison:
    """Closed-form EE comparison when all users share one rate gamma.

    ``free_backhaul`` assumes the backhaul is cost-free (BS caches the whole
    library or eta = 0); ``no_bs_cache`` assumes M_b = 0.  Returns both EE
    values, the winner, and the user-cache threshold where the ordering
    flips.
    """
    if not 0 <= user_cache_files <= n_files:
        raise ValueError("user cache size out of range")
    x = user_cache_files / n_files
    residual = 1.0 - x
    if regime == "free_backhaul":
        ee_unc = math.inf if residual == 0 else k * gamma / (residual * p_unc)
        ee_cod = math.inf if residual == 0 else (1.0 + k * x) * gamma / (residual * p_cod)
        threshold = (p_cod / p_unc - 1.0 / k) * n_files
    elif regime == "no_bs_cache":
        ee_unc = math.inf if residual == 0 else 1.0 / (residual * (eta + p_unc / (gamma * k)))
        ee_cod = (
            math.inf
            if residual == 0
            else (1.0 + k * x) / (residual * (eta + p_cod / gamma))
        )
        threshold = ((eta + p_cod / gamma) / (eta + p_unc / (gamma * k)) - 1.0) * n_files / k
    else:
        raise ValueError(f"unknown regime {regime!r}")

    if math.isinf(ee_unc) and math.isinf(ee_cod):
        winner = "tie"
    else:
        scale = max(abs(ee_unc), abs(ee_cod), 1.0)
        if abs(ee_unc - ee_cod) <= tie_tol * scale:
            winner = "tie"
        else:
            winner = "uncoded" if ee_unc > ee_cod else "coded"
    return StrategyComparison(regime, winner, threshold, ee_unc, ee_cod)
