"""Content delivery-time evaluation and minimization.

Uncoded delivery time is the K-user average of per-user unicast times;
the ZF path reduces to a convex power allocation solved by a KKT
waterfilling-style root find, the general path maximizes the minimum
SINR by bisection over semidefinite feasibility subproblems.  Coded
delivery time sums the per-subset multicast times, each subset's beam
found by the same bisection with a single matrix variable.  Backhaul
and BS processing delays are taken as negligible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq

from . import sdp_solver as sdp
from .cache_model import CacheSizes, LibraryConfig
from .wireless import ChannelMatrix, QosTargets, unicast_rates, zf_directions

__all__ = [
    "BisectionConfig",
    "DelayResult",
    "MaxMinResult",
    "CodedDelayResult",
    "InfeasiblePowerBudgetError",
    "zf_delay_alloc",
    "tau_uncoded",
    "tau_coded",
    "maxmin_sinr_bisection",
    "coded_delay_bisection",
    "upper_bound_check",
]

KKT_TOL = 1e-8
# headroom multiplier when deciding elastic feasibility; violations below
# FEAS_TOL * (constraint scale) count as feasible
FEAS_TOL = 1e-7


class InfeasiblePowerBudgetError(ValueError):
    """Power budget below the minimum required by the QoS floors."""


@dataclass(frozen=True)
class BisectionConfig:
    """Bracket and termination control for the SINR bisections.

    ``a_low``/``a_high`` override the automatic bracket; ``epsilon`` is
    relative to the initial bracket width.
    """

    a_low: float | None = None
    a_high: float | None = None
    epsilon: float = 1e-3
    max_iter: int = 60

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.a_low is not None and self.a_high is not None and self.a_low > self.a_high:
            raise ValueError("a_low must not exceed a_high")


@dataclass
class DelayResult:
    """Per-target delivery times plus their aggregate.

    The aggregate is a per-user average for unicast delivery and a sum over
    multicast subsets for coded delivery.
    """

    per_target_time: dict
    aggregate_seconds: float
    kind: str  # "uncoded" | "coded" | "nonuniform"
    powers: dict | None = None


@dataclass
class MaxMinResult:
    beams: np.ndarray  # L x n_users, column per user
    min_sinr: float
    achieved_sinr: np.ndarray
    iterations: int
    bracket: tuple


@dataclass
class CodedDelayResult:
    subset: frozenset
    beam: np.ndarray
    rate_bps: float
    min_sinr: float
    iterations: int
    time_share_seconds: float | None


def _inv_rate(p: float, sigma2: float) -> float:
    return 1.0 / math.log2(1.0 + p / sigma2)


def _neg_inv_rate_grad(p: float, sigma2: float) -> float:
    # -d/dp 1/log2(1 + p/sigma2), strictly decreasing in p
    u = 1.0 + p / sigma2
    return math.log(2.0) / (sigma2 * u * math.log(u) ** 2)


def zf_delay_alloc(
    channel: ChannelMatrix,
    qos: QosTargets,
    p_total: float,
    sigma2: float,
    cache: CacheSizes,
    lib: LibraryConfig,
) -> tuple[np.ndarray, DelayResult]:
    """Delivery-time-optimal ZF power allocation under a total power budget.

    The objective sum_k 1/log2(1 + p_k/sigma2) is convex and strictly
    decreasing, so the budget binds; the optimum is found by bisecting the
    budget multiplier and inverting the per-user stationarity conditions.
    """
    directions = zf_directions(channel)
    a = np.linalg.norm(directions, axis=0) ** 2
    floors = np.asarray(qos.sinr_floor, dtype=float) * sigma2
    k = a.size
    p_min = float(np.sum(floors * a))
    if p_total < p_min * (1.0 - 1e-12):
        raise InfeasiblePowerBudgetError(
            f"power budget {p_total:.6g} below required minimum {p_min:.6g}"
        )

    residual_bits = lib.file_size_bits * (1.0 - cache.user_cache_files / lib.n_files)
    if residual_bits == 0.0:
        powers = floors.copy()
        times = {u: 0.0 for u in range(k)}
        return powers, DelayResult(times, 0.0, "uncoded", {u: float(powers[u] * a[u]) for u in range(k)})

    lo = np.maximum(floors, sigma2 * 1e-9)

    def p_of_lambda(lam: float) -> np.ndarray:
        out = np.empty(k)
        for i in range(k):
            # stationarity: -f'(p) = lam * a_i, with -f' strictly decreasing
            target = lam * a[i]
            if _neg_inv_rate_grad(lo[i], sigma2) <= target:
                out[i] = lo[i]
                continue
            hi = max(lo[i], sigma2)
            while _neg_inv_rate_grad(hi, sigma2) > target:
                hi *= 4.0
            out[i] = brentq(
                lambda p: _neg_inv_rate_grad(p, sigma2) - target, lo[i], hi, xtol=1e-14, rtol=1e-14
            )
        return out

    def budget_gap(lam: float) -> float:
        return float(np.sum(p_of_lambda(lam) * a) - p_total)

    lam_hi = max(_neg_inv_rate_grad(lo[i], sigma2) / a[i] for i in range(k))
    lam_lo = lam_hi
    while budget_gap(lam_lo) < 0:
        lam_lo *= 0.5
        if lam_lo < 1e-300:
            break
    if budget_gap(lam_lo) < 0:
        powers = p_of_lambda(lam_lo)
    else:
        lam = brentq(budget_gap, lam_lo, lam_hi * 2.0, xtol=1e-300, rtol=1e-13)
        powers = p_of_lambda(lam)

    rates = qos.bandwidth_hz * np.log2(1.0 + powers / sigma2)
    times = residual_bits / rates
    result = DelayResult(
        per_target_time={u: float(times[u]) for u in range(k)},
        aggregate_seconds=float(times.mean()),
        kind="uncoded",
        powers={u: float(powers[u] * a[u]) for u in range(k)},
    )
    return powers, result


def tau_uncoded(rates, cache: CacheSizes, lib: LibraryConfig) -> DelayResult:
    """Average unicast delivery time from achieved per-user rates."""
    rates = np.asarray(rates, dtype=float)
    residual_bits = lib.file_size_bits * (1.0 - cache.user_cache_files / lib.n_files)
    if residual_bits == 0.0:
        return DelayResult({u: 0.0 for u in range(rates.size)}, 0.0, "uncoded")
    if np.any(rates <= 0):
        raise ValueError("zero rate with residual demand")
    times = residual_bits / rates
    return DelayResult(
        per_target_time={u: float(times[u]) for u in range(rates.size)},
        aggregate_seconds=float(times.mean()),
        kind="uncoded",
    )


def tau_coded(session_rates, k: int) -> DelayResult:
    """Total coded delivery time: message bits over rate, summed over subsets."""
    times = {}
    total = 0.0
    for session, rates in session_rates:
        for subset in session.subsets(k):
            key = frozenset(subset)
            if key not in rates:
                raise ValueError(f"missing rate for subset {sorted(subset)}")
            if rates[key] <= 0:
                raise ValueError(f"zero rate for subset {sorted(subset)}")
            t = session.message_bits / rates[key]
            times[(session.level, key)] = t
            total += t
    return DelayResult(per_target_time=times, aggregate_seconds=total, kind="coded")


def upper_bound_check(rates, cache: CacheSizes, lib: LibraryConfig) -> tuple[float, float]:
    """Average delivery time and its min-rate upper bound (always >= the average)."""
    rates = np.asarray(rates, dtype=float)
    if np.any(rates <= 0):
        raise ValueError("rates must be positive")
    residual_bits = lib.file_size_bits * (1.0 - cache.user_cache_files / lib.n_files)
    tau = residual_bits * float(np.mean(1.0 / rates))
    bound = residual_bits / float(rates.min())
    return tau, bound


# ---------------------------------------------------------------------------
# bisection machinery
# ---------------------------------------------------------------------------


def _elastic_feasibility_unicast(channel, users, level, p_total, sigma2, tol):
    """Minimum total violation of the per-user SINR-level constraints.

    Returns (violation, blocks); the level is feasible within the power
    budget iff the violation is (numerically) zero.
    """
    l = channel.n_antennas
    k = len(users)
    cons = []
    for i, u in enumerate(users):
        h = channel.user_channel(u)
        a = np.outer(h, h.conj())
        mats = {i: a}
        for j in range(k):
            if j != i:
                mats[j] = -level * a
        cons.append(sdp.LinearConstraint(mats, ">=", level * sigma2, nonneg_coeffs={i: 1.0}))
    cons.append(sdp.LinearConstraint({j: np.eye(l, dtype=complex) for j in range(k)}, "<=", p_total))
    threshold = FEAS_TOL * max(1.0, level * sigma2) * k
    problem = sdp.HermitianSDP([l] * k, {}, cons, n_nonneg=k, nonneg_cost=np.ones(k))
    sol = sdp.solve(problem, tol=tol, stop_below=0.2 * threshold, stop_above=5.0 * threshold)
    if sol.status == "objective_below":
        return 0.0, sol.blocks
    if sol.status == "objective_above":
        return math.inf, None
    if sol.status not in ("optimal",):
        raise sdp.SDPError(f"feasibility subproblem failed with status {sol.status}")
    violation = max(0.0, sol.objective)
    return (0.0, sol.blocks) if violation <= threshold else (math.inf, None)


def _elastic_feasibility_multicast(channel, members, level, p_total, sigma2, tol):
    l = channel.n_antennas
    cons = []
    for i, u in enumerate(members):
        h = channel.user_channel(u)
        cons.append(
            sdp.LinearConstraint(
                {0: np.outer(h, h.conj())}, ">=", level * sigma2, nonneg_coeffs={i: 1.0}
            )
        )
    cons.append(sdp.LinearConstraint({0: np.eye(l, dtype=complex)}, "<=", p_total))
    threshold = FEAS_TOL * max(1.0, level * sigma2) * len(members)
    problem = sdp.HermitianSDP([l], {}, cons, n_nonneg=len(members), nonneg_cost=np.ones(len(members)))
    sol = sdp.solve(problem, tol=tol, stop_below=0.2 * threshold, stop_above=5.0 * threshold)
    if sol.status == "objective_below":
        return 0.0, sol.blocks[0]
    if sol.status == "objective_above":
        return math.inf, None
    if sol.status != "optimal":
        raise sdp.SDPError(f"feasibility subproblem failed with status {sol.status}")
    violation = max(0.0, sol.objective)
    return (0.0, sol.blocks[0]) if violation <= threshold else (math.inf, None)


def _bisect(check, a_low, a_high, cfg: BisectionConfig):
    """Standard interval bisection; ``check`` returns (feasible, payload)."""
    feasible_low, payload = check(a_low)
    if not feasible_low:
        raise InfeasiblePowerBudgetError(
            f"QoS floor {a_low:.6g} is infeasible within the power budget"
        )
    # ensure the upper end is truly infeasible so the bracket property holds
    expansions = 0
    while expansions < 60:
        ok_high, payload_high = check(a_high)
        if not ok_high:
            break
        a_low, payload = a_high, payload_high
        a_high *= 2.0
        expansions += 1
    eps_abs = cfg.epsilon * (a_high - a_low)
    iterations = 0
    while a_high - a_low > eps_abs and iterations < cfg.max_iter:
        mid = 0.5 * (a_low + a_high)
        ok, mid_payload = check(mid)
        if ok:
            a_low, payload = mid, mid_payload
        else:
            a_high = mid
        iterations += 1
    return a_low, a_high, payload, iterations


def maxmin_sinr_bisection(
    channel: ChannelMatrix,
    floors,
    p_total: float,
    sigma2: float,
    cfg: BisectionConfig = BisectionConfig(),
    users=None,
    seed: int = 0,
    n_candidates: int = 100,
    sdp_tol: float = 1e-8,
) -> MaxMinResult:
    """Maximize the minimum per-user SINR under QoS floors and a power cap.

    Bisects the common SINR level; each level is checked by a semidefinite
    feasibility subproblem over per-user matrix variables.  Beams are
    extracted at the last feasible level.
    """
    users = list(range(channel.n_users)) if users is None else sorted(users)
    floors = np.broadcast_to(np.asarray(floors, dtype=float), (channel.n_users,))
    floors = floors[users]
    if p_total <= 0:
        raise ValueError("power budget must be positive")

    a_low = cfg.a_low if cfg.a_low is not None else float(np.max(floors))
    gains = np.linalg.norm(channel.matrix[users], axis=1) ** 2
    a_high = cfg.a_high if cfg.a_high is not None else p_total * float(gains.max()) / sigma2
    a_high = max(a_high, a_low * 1.0000001 + 1e-12)
    if a_low <= 0:
        a_low = min(1e-9, a_high * 1e-9)

    def check(level):
        violation, blocks = _elastic_feasibility_unicast(
            channel, users, level, p_total, sigma2, sdp_tol
        )
        return violation == 0.0, blocks

    level, _, blocks, iterations = _bisect(check, a_low, a_high, cfg)
    beams = _extract_unicast_at_level(
        channel, users, blocks, level, p_total, sigma2, seed, n_candidates
    )
    h = channel.matrix[users]
    gains_mat = np.abs(h @ beams) ** 2
    signal = np.diag(gains_mat)
    interference = gains_mat.sum(axis=1) - signal
    achieved = signal / (interference + sigma2)
    return MaxMinResult(
        beams=beams,
        min_sinr=level,
        achieved_sinr=achieved,
        iterations=iterations,
        bracket=(a_low, a_high),
    )


def _extract_unicast_at_level(channel, users, blocks, level, p_total, sigma2, seed, n_candidates):
    """Rank-one beams achieving a common SINR close to ``level`` within the cap."""
    h = channel.matrix[users]
    k = len(users)
    decomps = [np.linalg.eigh(x) for x in blocks]
    rng = np.random.default_rng(seed)
    best = None
    best_sinr = -np.inf
    for trial in range(max(1, n_candidates)):
        dirs = []
        for vals, vecs in decomps:
            if trial == 0:
                w = vecs[:, -1]
            else:
                g = (rng.standard_normal(vecs.shape[0]) + 1j * rng.standard_normal(vecs.shape[0])) / math.sqrt(2)
                w = vecs @ (np.sqrt(np.clip(vals, 0, None)) * g)
                nrm = np.linalg.norm(w)
                if nrm == 0:
                    continue
                w /= nrm
            dirs.append(w)
        if len(dirs) != k:
            continue
        dirs = np.column_stack(dirs)
        gains = np.abs(h @ dirs) ** 2
        diag = np.diag(gains).copy()
        if np.any(diag <= 0):
            continue
        # restore powers for the target level, backing off until the cap fits
        for back in (1.0, 1.0 - 1e-9, 1.0 - 1e-6, 1.0 - 1e-3, 0.99, 0.9):
            target = level * back
            coupling = np.eye(k) - (target / diag)[:, None] * gains * (1 - np.eye(k))
            try:
                beta = np.linalg.solve(coupling, np.full(k, target * sigma2) / diag)
            except np.linalg.LinAlgError:
                continue
            if np.any(beta <= 0) or not np.all(np.isfinite(beta)):
                continue
            if float(beta.sum()) <= p_total * (1.0 + 1e-9):
                if target > best_sinr:
                    best_sinr = target
                    best = dirs * np.sqrt(beta)
                break
    if best is None:
        raise sdp.ExtractionError("rank-one restoration failed at the bisection level")
    return best


def coded_delay_bisection(
    channel: ChannelMatrix,
    subset,
    gamma_bar_min: float,
    p_total: float,
    sigma2: float,
    bandwidth_hz: float,
    cfg: BisectionConfig = BisectionConfig(),
    message_bits: float | None = None,
    seed: int = 0,
    n_candidates: int = 100,
    sdp_tol: float = 1e-8,
) -> CodedDelayResult:
    """Fastest multicast transmission to one subset under a power cap.

    Bisects the common SINR with per-member feasibility constraints, starting
    from the QoS floor 2^(gamma_bar/B) - 1, and extracts the multicast beam at
    the last feasible level.
    """
    members = sorted(subset)
    if not members:
        raise ValueError("subset must be non-empty")
    if p_total <= 0:
        raise ValueError("power budget must be positive")
    floor = 2.0 ** (gamma_bar_min / bandwidth_hz) - 1.0
    gains = np.linalg.norm(channel.matrix[members], axis=1) ** 2
    a_low = cfg.a_low if cfg.a_low is not None else max(floor, 1e-12)
    a_high = cfg.a_high if cfg.a_high is not None else p_total * float(gains.max()) / sigma2
    a_high = max(a_high, a_low * 1.0000001 + 1e-12)

    def check(level):
        violation, block = _elastic_feasibility_multicast(
            channel, members, level, p_total, sigma2, sdp_tol
        )
        return violation == 0.0, block

    level, _, block, iterations = _bisect(check, a_low, a_high, cfg)

    quad = [
        (np.outer(channel.user_channel(u), channel.user_channel(u).conj()), 1.0) for u in members
    ]
    beam = _extract_multicast_maxmin(block, quad, p_total, seed, n_candidates)
    min_snr = min(float(np.real(np.vdot(beam, a @ beam))) for a, _ in quad) / sigma2
    rate = bandwidth_hz * math.log2(1.0 + min_snr)
    return CodedDelayResult(
        subset=frozenset(members),
        beam=beam,
        rate_bps=rate,
        min_sinr=min_snr,
        iterations=iterations,
        time_share_seconds=None if message_bits is None else message_bits / rate,
    )


def _extract_multicast_maxmin(block, quad_constraints, p_total, seed, n_candidates):
    """Multicast beam at full power maximizing the minimum member gain."""
    vals, vecs = np.linalg.eigh(block)
    vals = np.clip(vals, 0.0, None)
    if vals[-1] <= 0:
        raise sdp.ExtractionError("matrix solution is numerically zero")
    rng = np.random.default_rng(seed)
    candidates = [vecs[:, -1]]
    if block.shape[0] > 1 and vals[-2] > 1e-6 * vals[-1]:
        root = vecs * np.sqrt(vals)
        for _ in range(n_candidates):
            g = (rng.standard_normal(block.shape[0]) + 1j * rng.standard_normal(block.shape[0])) / math.sqrt(2)
            candidates.append(root @ g)
    best = None
    best_min = -np.inf
    for c in candidates:
        nrm = np.linalg.norm(c)
        if nrm == 0:
            continue
        w = c * (math.sqrt(p_total) / nrm)
        worst = min(float(np.real(np.vdot(w, a @ w))) for a, _ in quad_constraints)
        if worst > best_min:
            best_min = worst
            best = w
    if best is None:
        raise sdp.ExtractionError("no usable multicast candidate")
    return best
