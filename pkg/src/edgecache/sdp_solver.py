"""Small dense Hermitian semidefinite programs and rank-one extraction.

Problems are stated over complex Hermitian matrix blocks with linear
trace constraints plus optional auxiliary nonnegative scalar variables.
They are solved on the real symmetric embedding by an infeasible-start
primal-dual path-following method (HKM direction, Mehrotra
predictor-corrector).  Sizes here are tiny (blocks of a few dozen rows,
a handful of constraints), so the implementation favours robustness
over asymptotics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh as scipy_eigh

__all__ = [
    "LinearConstraint",
    "HermitianSDP",
    "SDPSolution",
    "SDPError",
    "ExtractionError",
    "real_embedding",
    "complex_from_embedding",
    "solve",
    "extract_rank1",
]

_HERMITIAN_TOL = 1e-10


class SDPError(RuntimeError):
    """Solver failure (bad input or no convergence)."""


class ExtractionError(SDPError):
    """No feasible rank-one candidate was found."""


@dataclass
class LinearConstraint:
    """One linear constraint  sum_j Tr(A_j X_j) + sum_v c_v * v  (sense)  rhs.

    ``matrices`` maps block index to a Hermitian coefficient matrix;
    ``nonneg_coeffs`` maps auxiliary-variable index to a real coefficient.
    """

    matrices: dict
    sense: str
    rhs: float
    nonneg_coeffs: dict | None = None

    def __post_init__(self):
        if self.sense not in (">=", "<=", "=="):
            raise ValueError(f"unknown constraint sense {self.sense!r}")


@dataclass
class HermitianSDP:
    """Minimize sum_j Tr(C_j X_j) + c.v over PSD blocks X_j and v >= 0."""

    block_dims: list
    objective: dict
    constraints: list
    n_nonneg: int = 0
    nonneg_cost: np.ndarray | None = None


@dataclass
class SDPSolution:
    blocks: list
    nonneg: np.ndarray
    objective: float
    status: str
    gap: float
    iterations: int
    dual_objective: float
    y: np.ndarray
    certificate: np.ndarray | None = None


def real_embedding(m: np.ndarray) -> np.ndarray:
    """Map a Hermitian L x L matrix to its symmetric 2L x 2L real embedding."""
    m = np.asarray(m, dtype=complex)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("input must be square")
    if np.max(np.abs(m - m.conj().T)) > _HERMITIAN_TOL * max(1.0, np.abs(m).max()):
        raise ValueError("input must be Hermitian")
    re, im = m.real, m.imag
    return np.block([[re, -im], [im, re]])


def complex_from_embedding(y: np.ndarray) -> np.ndarray:
    """Inverse of :func:`real_embedding`, projecting onto embedded matrices.

    For outputs of the real solver this projection preserves positive
    semidefiniteness, all trace values and the objective.
    """
    y = np.asarray(y, dtype=float)
    n = y.shape[0] // 2
    re = 0.5 * (y[:n, :n] + y[n:, n:])
    im = 0.5 * (y[n:, :n] - y[:n, n:])
    x = re + 1j * im
    return 0.5 * (x + x.conj().T)


# ---------------------------------------------------------------------------
# real standard-form interior point core
# ---------------------------------------------------------------------------


@dataclass
class _RealProblem:
    """min sum <C_j, X_j> + c.x  s.t.  A(X, x) = b,  X_j PSD,  x >= 0."""

    a_sdp: list  # per block: (m, n_j, n_j)
    c_sdp: list  # per block: (n_j, n_j)
    a_diag: np.ndarray | None  # (m, nd)
    c_diag: np.ndarray | None  # (nd,)
    b: np.ndarray


def _max_step_psd(x: np.ndarray, d: np.ndarray) -> float:
    """Largest alpha with x + alpha*d still PSD (x symmetric PD)."""
    try:
        lam = scipy_eigh(d, x, eigvals_only=True, check_finite=False)[0]
    except Exception:
        chol = np.linalg.cholesky(x)
        w = np.linalg.solve(chol, np.linalg.solve(chol, d).T)
        lam = np.linalg.eigvalsh(0.5 * (w + w.T))[0]
    if lam >= 0:
        return np.inf
    return 1.0 / (-lam)


def _max_step_diag(x: np.ndarray, d: np.ndarray) -> float:
    neg = d < 0
    if not np.any(neg):
        return np.inf
    return float(np.min(-x[neg] / d[neg]))


class _Interior:
    """One interior-point solve on a real standard-form problem."""

    def __init__(self, prob: _RealProblem, tol: float, max_iter: int):
        self.prob = prob
        self.tol = tol
        self.feastol = max(10.0 * tol, 1e-9)
        self.max_iter = max_iter
        self.m = prob.b.size
        self.n_total = sum(c.shape[0] for c in prob.c_sdp)
        if prob.c_diag is not None:
            self.n_total += prob.c_diag.size
        self.norm_b = np.linalg.norm(prob.b)
        self.norm_c = math.sqrt(
            sum(float(np.sum(c * c)) for c in prob.c_sdp)
            + (float(prob.c_diag @ prob.c_diag) if prob.c_diag is not None else 0.0)
        )

    def _initial_point(self):
        p = self.prob
        xs, zs = [], []
        for a, c in zip(p.a_sdp, p.c_sdp):
            n = c.shape[0]
            a_norms = np.sqrt(np.einsum("iab,iab->i", a, a))
            xi = max(10.0, math.sqrt(n), n * np.max((1.0 + np.abs(p.b)) / (1.0 + a_norms)))
            eta = max(10.0, math.sqrt(n), np.linalg.norm(c), float(a_norms.max(initial=0.0)))
            xs.append(xi * np.eye(n))
            zs.append(eta * np.eye(n))
        if p.a_diag is not None:
            ad = p.a_diag
            a_norms = np.linalg.norm(ad, axis=1)
            xi = max(10.0, math.sqrt(ad.shape[1]), np.max((1.0 + np.abs(p.b)) / (1.0 + a_norms)))
            eta = max(10.0, np.linalg.norm(p.c_diag), float(np.abs(ad).max(initial=0.0)))
            xd = np.full(ad.shape[1], xi)
            zd = np.full(ad.shape[1], eta)
        else:
            xd = zd = None
        return xs, xd, np.zeros(self.m), zs, zd

    def _apply_a(self, xs, xd):
        out = np.zeros(self.m)
        for a, x in zip(self.prob.a_sdp, xs):
            out += np.einsum("iab,ba->i", a, x)
        if xd is not None:
            out += self.prob.a_diag @ xd
        return out

    def _apply_at(self, y):
        mats = [np.einsum("i,iab->ab", y, a) for a in self.prob.a_sdp]
        vec = self.prob.a_diag.T @ y if self.prob.a_diag is not None else None
        return mats, vec

    def _objective(self, xs, xd):
        val = sum(float(np.sum(c * x)) for c, x in zip(self.prob.c_sdp, xs))
        if xd is not None:
            val += float(self.prob.c_diag @ xd)
        return val

    def _certificate_quality(self, y):
        """Return (b'y, largest eigenvalue of A^T y) for the Farkas test."""
        bty = float(self.prob.b @ y)
        if bty <= 0:
            return bty, np.inf
        yn = y / bty
        mats, vec = self._apply_at(yn)
        lam = max((np.linalg.eigvalsh(m)[-1] for m in mats), default=-np.inf)
        if vec is not None:
            lam = max(lam, float(vec.max(initial=-np.inf)))
        scale = max(1.0, float(np.abs(yn).sum()))
        return bty, lam / scale

    def run(self, stop_below=None, stop_above=None, detect_infeasibility=True):
        p = self.prob
        xs, xd, y, zs, zd = self._initial_point()
        status = "max_iter"
        certificate = None
        it = 0
        for it in range(1, self.max_iter + 1):
            mu = sum(float(np.sum(x * z)) for x, z in zip(xs, zs))
            if xd is not None:
                mu += float(xd @ zd)
            mu /= self.n_total

            rp = p.b - self._apply_a(xs, xd)
            at_mats, at_vec = self._apply_at(y)
            rd_mats = [c - at - z for c, at, z in zip(p.c_sdp, at_mats, zs)]
            rd_vec = (p.c_diag - at_vec - zd) if xd is not None else None

            pobj = self._objective(xs, xd)
            dobj = float(p.b @ y)
            relgap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
            pinf = np.linalg.norm(rp) / (1.0 + self.norm_b)
            dinf = math.sqrt(
                sum(float(np.sum(r * r)) for r in rd_mats)
                + (float(rd_vec @ rd_vec) if rd_vec is not None else 0.0)
            ) / (1.0 + self.norm_c)

            if relgap <= self.tol and pinf <= self.feastol and dinf <= self.feastol:
                status = "optimal"
                break

            # early certified bounds (used by feasibility oracles)
            if stop_below is not None and pinf <= 1e-9 and pobj <= stop_below:
                status = "objective_below"
                break
            if stop_above is not None and dinf <= 1e-9 and dobj >= stop_above:
                status = "objective_above"
                break

            # Farkas certificate of primal infeasibility
            if detect_infeasibility and pinf > self.feastol:
                bty, quality = self._certificate_quality(y)
                if bty > 0 and quality <= 1e-9:
                    status = "infeasible"
                    certificate = y / bty
                    break

            zinvs = [np.linalg.inv(z) for z in zs]
            # Schur complement M[i,l] = sum_j Tr(A_i X A_l Z^{-1})
            m_mat = np.zeros((self.m, self.m))
            for a, x, zi in zip(p.a_sdp, xs, zinvs):
                m_mat += np.einsum("iab,jba->ij", a @ x, a @ zi)
            if xd is not None:
                m_mat += (p.a_diag * (xd / zd)) @ p.a_diag.T

            def schur_solve(rhs):
                try:
                    return np.linalg.solve(m_mat, rhs)
                except np.linalg.LinAlgError:
                    reg = m_mat + (1e-13 * np.trace(m_mat) / max(1, self.m)) * np.eye(self.m)
                    return np.linalg.solve(reg, rhs)

            # rhs_i = b_i - A(G Z^{-1})_i + A(X Rd Z^{-1})_i;  predictor has G = 0
            base = p.b.copy()
            for a, x, rd, zi in zip(p.a_sdp, xs, rd_mats, zinvs):
                base += np.einsum("iab,ba->i", a, x @ rd @ zi)
            if xd is not None:
                base += p.a_diag @ (xd * rd_vec / zd)

            dy_a = schur_solve(base)
            dz_a_mats = [rd - np.einsum("i,iab->ab", dy_a, a) for rd, a in zip(rd_mats, p.a_sdp)]
            dx_a_mats = []
            for x, z, zi, dz in zip(xs, zs, zinvs, dz_a_mats):
                dx = -x - x @ dz @ zi
                dx_a_mats.append(0.5 * (dx + dx.T))
            if xd is not None:
                dz_a_vec = rd_vec - p.a_diag.T @ dy_a
                dx_a_vec = -xd - xd * dz_a_vec / zd
            else:
                dz_a_vec = dx_a_vec = None

            ap = min(
                [_max_step_psd(x, dx) for x, dx in zip(xs, dx_a_mats)]
                + ([_max_step_diag(xd, dx_a_vec)] if xd is not None else [])
            )
            ad = min(
                [_max_step_psd(z, dz) for z, dz in zip(zs, dz_a_mats)]
                + ([_max_step_diag(zd, dz_a_vec)] if xd is not None else [])
            )
            ap = min(1.0, 0.98 * ap)
            ad = min(1.0, 0.98 * ad)

            mu_aff = sum(
                float(np.sum((x + ap * dx) * (z + ad * dz)))
                for x, dx, z, dz in zip(xs, dx_a_mats, zs, dz_a_mats)
            )
            if xd is not None:
                mu_aff += float((xd + ap * dx_a_vec) @ (zd + ad * dz_a_vec))
            mu_aff /= self.n_total
            sigma = min(1.0, max(1e-10, (max(mu_aff, 0.0) / mu) ** 3))

            # corrector: G_j = sigma*mu*I - dXa dZa
            rhs = p.b.copy()
            for a, x, rd, zi, dxa, dza in zip(p.a_sdp, xs, rd_mats, zinvs, dx_a_mats, dz_a_mats):
                g_term = sigma * mu * zi - dxa @ dza @ zi
                rhs += np.einsum("iab,ba->i", a, x @ rd @ zi - g_term)
            if xd is not None:
                g_vec = sigma * mu / zd - dx_a_vec * dz_a_vec / zd
                rhs += p.a_diag @ (xd * rd_vec / zd - g_vec)

            dy = schur_solve(rhs)
            dz_mats = [rd - np.einsum("i,iab->ab", dy, a) for rd, a in zip(rd_mats, p.a_sdp)]
            dx_mats = []
            for x, zi, dz, dxa, dza in zip(xs, zinvs, dz_mats, dx_a_mats, dz_a_mats):
                g = sigma * mu * np.eye(x.shape[0]) - dxa @ dza
                dx = g @ zi - x - x @ dz @ zi
                dx_mats.append(0.5 * (dx + dx.T))
            if xd is not None:
                dz_vec = rd_vec - p.a_diag.T @ dy
                g = sigma * mu - dx_a_vec * dz_a_vec
                dx_vec = g / zd - xd - xd * dz_vec / zd
            else:
                dz_vec = dx_vec = None

            ap = min(
                [_max_step_psd(x, dx) for x, dx in zip(xs, dx_mats)]
                + ([_max_step_diag(xd, dx_vec)] if xd is not None else [])
            )
            ad = min(
                [_max_step_psd(z, dz) for z, dz in zip(zs, dz_mats)]
                + ([_max_step_diag(zd, dz_vec)] if xd is not None else [])
            )
            ap = min(1.0, 0.98 * ap)
            ad = min(1.0, 0.98 * ad)

            for j in range(len(xs)):
                xs[j] = xs[j] + ap * dx_mats[j]
                zs[j] = zs[j] + ad * dz_mats[j]
            y = y + ad * dy
            if xd is not None:
                xd = xd + ap * dx_vec
                zd = zd + ad * dz_vec

        pobj = self._objective(xs, xd)
        dobj = float(p.b @ y)
        return {
            "xs": xs,
            "xd": xd,
            "y": y,
            "pobj": pobj,
            "dobj": dobj,
            "gap": abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj)),
            "status": status,
            "iterations": it,
            "certificate": certificate,
        }


def _build_real(problem: HermitianSDP) -> tuple[_RealProblem, int, float, np.ndarray]:
    """Assemble the scaled real standard form; returns (prob, n_nonneg, cscale, row_scales)."""
    if not problem.constraints:
        raise ValueError("problem needs at least one constraint")
    dims = list(problem.block_dims)
    n_blocks = len(dims)
    m = len(problem.constraints)
    nv = problem.n_nonneg

    n_slack = sum(1 for c in problem.constraints if c.sense != "==")
    nd = nv + n_slack

    c_sdp = []
    for j, d in enumerate(dims):
        cj = problem.objective.get(j)
        c_sdp.append(real_embedding(cj) if cj is not None else np.zeros((2 * d, 2 * d)))
    c_diag = np.zeros(nd) if nd else None
    if nv:
        cost = problem.nonneg_cost if problem.nonneg_cost is not None else np.zeros(nv)
        c_diag[:nv] = 2.0 * np.asarray(cost, dtype=float)

    a_sdp = [np.zeros((m, 2 * d, 2 * d)) for d in dims]
    a_diag = np.zeros((m, nd)) if nd else None
    b = np.zeros(m)
    slack_pos = nv
    for i, con in enumerate(problem.constraints):
        for j, mat in con.matrices.items():
            if not 0 <= j < n_blocks:
                raise ValueError(f"constraint {i} references unknown block {j}")
            a_sdp[j][i] = real_embedding(mat)
        if con.nonneg_coeffs:
            for v, coeff in con.nonneg_coeffs.items():
                if not 0 <= v < nv:
                    raise ValueError(f"constraint {i} references unknown auxiliary variable {v}")
                a_diag[i, v] = 2.0 * coeff
        b[i] = 2.0 * con.rhs
        if con.sense == ">=":
            a_diag[i, slack_pos] = -1.0
            slack_pos += 1
        elif con.sense == "<=":
            a_diag[i, slack_pos] = 1.0
            slack_pos += 1

    # per-row scaling keeps the Schur complement well conditioned
    row_scales = np.empty(m)
    for i in range(m):
        s = sum(float(np.sum(a[i] * a[i])) for a in a_sdp)
        if a_diag is not None:
            s += float(a_diag[i] @ a_diag[i])
        row_scales[i] = max(math.sqrt(s), 1e-8)
    for a in a_sdp:
        a /= row_scales[:, None, None]
    if a_diag is not None:
        a_diag /= row_scales[:, None]
    b /= row_scales

    cscale = max(
        1.0,
        math.sqrt(
            sum(float(np.sum(c * c)) for c in c_sdp)
            + (float(c_diag @ c_diag) if c_diag is not None else 0.0)
        ),
    )
    c_sdp = [c / cscale for c in c_sdp]
    if c_diag is not None:
        c_diag = c_diag / cscale

    return _RealProblem(a_sdp, c_sdp, a_diag, c_diag, b), nv, cscale, row_scales


def solve(
    problem: HermitianSDP,
    tol: float = 1e-8,
    max_iter: int = 200,
    stop_below: float | None = None,
    stop_above: float | None = None,
    detect_infeasibility: bool = True,
) -> SDPSolution:
    """Solve a Hermitian SDP to relative duality gap ``tol``.

    Statuses: ``optimal``, ``infeasible`` (with a Farkas certificate on the
    constraints), ``max_iter``, or — when the early-stop bounds are supplied —
    ``objective_below`` / ``objective_above`` once the optimum is certified to
    lie on the corresponding side.  Objective values are reported in complex
    trace units; the early-stop bounds are interpreted in the same units.
    Callers that know their problem is feasible by construction can disable
    the Farkas test with ``detect_infeasibility=False``.
    """
    real_prob, nv, cscale, row_scales = _build_real(problem)
    core = _Interior(real_prob, tol, max_iter)
    # the real embedding doubles objectives, the cscale normalization shrinks them
    factor = 2.0 / cscale
    res = core.run(
        stop_below=None if stop_below is None else stop_below * factor,
        stop_above=None if stop_above is None else stop_above * factor,
        detect_infeasibility=detect_infeasibility,
    )

    blocks = [complex_from_embedding(x) for x in res["xs"]]
    nonneg = res["xd"][:nv].copy() if (res["xd"] is not None and nv) else np.zeros(nv)
    y = res["y"] * cscale / row_scales
    certificate = None
    if res["certificate"] is not None:
        certificate = res["certificate"] / row_scales
    return SDPSolution(
        blocks=blocks,
        nonneg=nonneg,
        objective=res["pobj"] / factor,
        status=res["status"],
        gap=res["gap"],
        iterations=res["iterations"],
        dual_objective=res["dobj"] / factor,
        y=y,
        certificate=certificate,
    )


def extract_rank1(
    x_psd: np.ndarray,
    constraints,
    n_candidates: int = 100,
    seed: int = 0,
    power_cap: float | None = None,
    rank1_tol: float = 1e-6,
) -> tuple[np.ndarray, float]:
    """Recover a beamforming vector from a PSD matrix solution.

    ``constraints`` is a sequence of (Hermitian matrix, rhs) pairs read as
    w^H A w >= rhs.  Candidates are Gaussian vectors with covariance
    ``x_psd`` (plus the principal-eigenvector branch, used exactly when the
    matrix is rank-one to ``rank1_tol``); each candidate is rescaled
    minimally to satisfy every constraint and the cheapest feasible one is
    returned together with its squared scaling factor.
    """
    x = np.asarray(x_psd, dtype=complex)
    vals, vecs = np.linalg.eigh(x)
    vals = np.clip(vals, 0.0, None)
    lead = vals[-1]
    if lead <= 0:
        raise ExtractionError("matrix solution is numerically zero")

    candidates = [vecs[:, -1] * math.sqrt(lead)]
    if x.shape[0] > 1 and vals[-2] > rank1_tol * lead:
        rng = np.random.default_rng(seed)
        root = vecs * np.sqrt(vals)
        g = rng.standard_normal((n_candidates, x.shape[0])) + 1j * rng.standard_normal(
            (n_candidates, x.shape[0])
        )
        candidates.extend(root @ (gi / math.sqrt(2.0)) for gi in g)

    best = None
    best_power = np.inf
    best_scale = 1.0
    for w in candidates:
        scale_sq = 0.0
        ok = True
        for a, rhs in constraints:
            quad = float(np.real(np.vdot(w, np.asarray(a) @ w)))
            if quad <= 0:
                if rhs > 0:
                    ok = False
                    break
                continue
            scale_sq = max(scale_sq, rhs / quad)
        if not ok:
            continue
        power = scale_sq * float(np.vdot(w, w).real)
        if power_cap is not None and power > power_cap * (1.0 + 1e-9):
            continue
        if power < best_power:
            best_power = power
            best = w * math.sqrt(scale_sq) if scale_sq > 0 else w * 0.0
            best_scale = scale_sq
    if best is None:
        raise ExtractionError("no feasible rank-one candidate; increase n_candidates")
    return best, best_scale
