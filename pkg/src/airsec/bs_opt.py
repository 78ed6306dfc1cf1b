"""Base-station subproblem: minimize precoder plus AN power for a fixed IRS
design, with the rank relaxation of the precoder covariances and rank-one
recovery.

The subproblem optimizes Hermitian covariances W_k (one per user) and the AN
covariance Z_B under (i) per-user SINR floors, expanded linearly once the IRS
terms are constants, and (ii) per-user leakage caps written as the linear
matrix inequality

    tol_k * (F Z F^H + Q_const) - F W_k F^H  >=  0,
    tol_k = 2^(cap_k) - 1,

which is equivalent to the log-det leakage cap because the signal term is
rank one.  Complex LMIs are handed to the real conic solver through the
Hermitian embedding.  Channel blocks are rescaled so the mean user noise
power is unity; this gauge leaves SINR and leakage invariant and keeps
constraint rows well-conditioned at physical power scales.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import conic
from .conic import ConicProblem, ConicSolution, ProblemBuilder
from .sysmodel import (
    BsDesign,
    ChannelSet,
    FeasibilityReport,
    IrsDesign,
    SystemParams,
    check_feasibility,
)

# regularizer added to the constant part of the Eve covariance inside the
# leakage LMI (gauged units) so the LMI stays well posed when AN and jamming
# are all off
LMI_REGULARIZER = 1e-12

EXTRACT_TOL = 1e-6
RANDOMIZATION_DRAWS = 200


class ExtractionFailure(RuntimeError):
    """Neither the principal eigenvector nor randomization gave a feasible
    rank-one precoder; the relaxation was loose on this instance."""


def leakage_tolerance(c_max: float) -> float:
    """Linear leakage cap: 2^c_max - 1."""
    return 2.0 ** c_max - 1.0


@dataclass
class GaugedInstance:
    """Channel quantities rescaled so the reference user noise is 1."""

    sigma_ref: float
    h_eq: np.ndarray        # (K, N_T) effective user channels
    f_eq: np.ndarray        # (N_E, N_T) effective Eve channel
    q_const: np.ndarray     # (N_E, N_E) AN-independent Eve covariance + reg
    user_extra: np.ndarray  # (K,) jam + dynamic-noise power at each user
    noise: np.ndarray       # (K,) gauged thermal noise (about 1)


def gauge_instance(ch: ChannelSet, irs: IrsDesign, params: SystemParams,
                   reg: float = LMI_REGULARIZER) -> GaugedInstance:
    # Terminal links scale by s so every received amplitude scales once;
    # the BS->IRS matrix stays unscaled inside cascades.
    sigma_ref = float(np.mean(params.noise_user))
    s = 1.0 / np.sqrt(sigma_ref)
    h_iu, h_ie = s * ch.h_iu, s * ch.h_ie
    h_bu, h_be = s * ch.h_bu, s * ch.h_be

    refl = irs.alpha * irs.phi
    h_eq = h_bu + (h_iu * np.conj(refl)[None, :]) @ np.conj(ch.g)
    f_eq = h_be + (h_ie * refl[None, :]) @ ch.g

    jam_cols = h_ie * ((1.0 - irs.alpha) * irs.phi)[None, :]
    dyn_cols = h_ie * irs.phi[None, :]
    q_const = jam_cols @ jam_cols.conj().T + params.noise_irs * (dyn_cols @ dyn_cols.conj().T)
    q_const = (q_const + q_const.conj().T) / 2.0 + reg * np.eye(params.n_eve)

    user_extra = np.array([
        np.sum(np.abs(h_iu[k].conj() * (1.0 - irs.alpha) * irs.phi) ** 2)
        + params.noise_irs * np.sum(np.abs(h_iu[k].conj() * irs.phi) ** 2)
        for k in range(params.n_users)
    ])
    noise = np.asarray(params.noise_user) / sigma_ref
    return GaugedInstance(
        sigma_ref=sigma_ref,
        h_eq=h_eq,
        f_eq=f_eq,
        q_const=q_const,
        user_extra=user_extra,
        noise=noise,
    )


def build_bs_problem(ch: ChannelSet, irs: IrsDesign, params: SystemParams,
                     include_bs_an: bool = True) -> ConicProblem:
    """Assemble the fixed-IRS power-minimization SDP.

    Variables: Hermitian coordinates of W_1..W_K and Z_B; cones: one PSD
    block per covariance plus one per leakage LMI; nonneg slacks carry the
    SINR floors.  ``include_bs_an=False`` pins Z_B = 0 (baseline study).
    """
    if irs.irs_power() > params.p_irs_max + 1e-8:
        raise ValueError("IRS design violates its power budget")
    k_users, nt, ne = params.n_users, params.n_tx, params.n_eve
    inst = gauge_instance(ch, irs, params)

    b = ProblemBuilder()
    nc = conic.herm_len(nt)
    w_offs = [b.add_free_block(f"w_mat_{k}", nc) for k in range(k_users)]
    z_off = b.add_free_block("z_b", nc)

    # objective: sum Tr(W_k) + Tr(Z_B) (diagonal coordinates)
    diag_cols = np.arange(nt)
    for off in w_offs:
        b.add_objective(off + diag_cols, np.ones(nt))
    b.add_objective(z_off + diag_cols, np.ones(nt))

    # PSD cones for the covariance variables
    ties = conic.hermitian_var_psd_ties(nt).tocoo()
    for name, off in [(f"w_psd_{k}", w_offs[k]) for k in range(k_users)] + [("z_psd", z_off)]:
        s_off = b.add_psd_block(2 * nt, name)
        rows = np.concatenate([ties.row, np.arange(ties.shape[0])])
        cols = np.concatenate([off + ties.col, s_off + np.arange(ties.shape[0])])
        vals = np.concatenate([ties.data, -np.ones(ties.shape[0])])
        b.add_eq_rows(rows, cols, vals, np.zeros(ties.shape[0]))

    if not include_bs_an:
        for c in range(nc):
            b.add_eq_row([z_off + c], [1.0], 0.0)

    # SINR floors: Tr(C_k W_k) - gamma_k (sum_j Tr(C_k W_j) + Tr(C_k Z)) >= rhs
    for k in range(k_users):
        c_k = np.outer(inst.h_eq[k], inst.h_eq[k].conj())
        row = conic.herm_trace_row(c_k)
        gamma = params.gamma_min[k]
        cols, vals = [], []
        for j in range(k_users):
            coeff = row if j == k else -gamma * row
            cols.append(w_offs[j] + np.arange(nc))
            vals.append(coeff)
        cols.append(z_off + np.arange(nc))
        vals.append(-gamma * row)
        s_off = b.add_nonneg_block(1, f"sinr_slack_{k}")
        cols.append(np.array([s_off]))
        vals.append(np.array([-1.0]))
        rhs = gamma * (inst.user_extra[k] + inst.noise[k])
        b.add_eq_row(np.concatenate(cols), np.concatenate(vals), rhs)

    # leakage LMIs: tol_k (F Z F^H + Q_const) - F W_k F^H >= 0
    fzf = conic.congruence_tensor(inst.f_eq)
    emb = conic.hermitian_embed_svec_map(ne)
    n_svec = conic.svec_len(2 * ne)
    for k in range(k_users):
        tol_k = leakage_tolerance(params.c_max[k])
        d_z = emb @ conic.stack_complex(tol_k * fzf)
        d_w = emb @ conic.stack_complex(-fzf)
        const = conic.svec(conic.embed_hermitian(tol_k * inst.q_const))
        s_off = b.add_psd_block(2 * ne, f"leak_lmi_{k}")
        dense = np.hstack([np.asarray(d_w), np.asarray(d_z)])
        col_ids = np.concatenate([w_offs[k] + np.arange(nc), z_off + np.arange(nc)])
        rr, cc = np.nonzero(dense)
        rows = np.concatenate([rr, np.arange(n_svec)])
        cols = np.concatenate([col_ids[cc], s_off + np.arange(n_svec)])
        vals = np.concatenate([dense[rr, cc], -np.ones(n_svec)])
        b.add_eq_rows(rows, cols, vals, -const)

    return b.finalize()


# ---------------------------------------------------------------------------
# rank-one recovery
# ---------------------------------------------------------------------------

def extract_rank_one(w_mat: np.ndarray) -> tuple[np.ndarray, float]:
    """Principal-eigenpair extraction: returns (sqrt(l1) v1, l2/l1).

    The gap ratio is 0 for exactly rank-one input and for the zero matrix.
    """
    w = (w_mat + w_mat.conj().T) / 2.0
    lam, vec = np.linalg.eigh(w)
    l1 = float(lam[-1])
    if l1 <= 0.0:
        return np.zeros(w.shape[0], dtype=complex), 0.0
    l2 = float(lam[-2]) if lam.size > 1 else 0.0
    gap = max(l2, 0.0) / l1
    return np.sqrt(l1) * vec[:, -1], gap


def _violation(ch, bs: BsDesign, irs: IrsDesign, params: SystemParams) -> float:
    """Worst constraint violation of a candidate design, dimensionless.

    SINR floors are measured in linear units; leakage caps through the
    relative minimum eigenvalue of the cap LMI, which stays meaningful even
    when the Eve covariance is poorly conditioned."""
    from .sysmodel import effective_channels, user_sinr

    worst = 0.0
    for k in range(params.n_users):
        worst = max(worst, params.gamma_min[k] - user_sinr(ch, bs, irs, params, k))
    eff = effective_channels(ch, bs, irs, params)
    for k in range(params.n_users):
        fw = eff.f_eq @ bs.w[k]
        lmi = leakage_tolerance(params.c_max[k]) * eff.q_mat - np.outer(fw, fw.conj())
        lmi = (lmi + lmi.conj().T) / 2.0
        scale = max(np.linalg.norm(lmi), 1e-300)
        worst = max(worst, -float(np.linalg.eigvalsh(lmi)[0]) / scale)
    return worst


def _randomized_recovery(ch, irs, params, w_mats, z_b, rng) -> BsDesign | None:
    """Joint Gaussian randomization with minimal-power rescaling.

    Directions are drawn per user from CN(0, W_k); per-user powers then solve
    the SINR floors with equality through the standard power-control fixed
    point, and candidates are kept only when the leakage caps still hold.
    """
    k_users = params.n_users
    inst = gauge_instance(ch, irs, params)
    factors = []
    for w in w_mats:
        lam, vec = np.linalg.eigh((w + w.conj().T) / 2.0)
        factors.append(vec * np.sqrt(np.clip(lam, 0.0, None)))
    best: BsDesign | None = None
    best_power = np.inf
    q_full = inst.f_eq @ z_b @ inst.f_eq.conj().T + inst.q_const
    q_full = (q_full + q_full.conj().T) / 2.0
    for _ in range(RANDOMIZATION_DRAWS):
        dirs = []
        for k in range(k_users):
            g = (rng.standard_normal(params.n_tx) + 1j * rng.standard_normal(params.n_tx)) / np.sqrt(2)
            v = factors[k] @ g
            norm = np.linalg.norm(v)
            if norm < 1e-12:
                break
            dirs.append(v / norm)
        if len(dirs) < k_users:
            continue
        # minimal powers meeting the SINR floors: p = Phi p + b fixed point
        a = np.array([[np.abs(inst.h_eq[k].conj() @ dirs[j]) ** 2 for j in range(k_users)]
                      for k in range(k_users)])
        gam = np.asarray(params.gamma_min)
        phi = np.zeros((k_users, k_users))
        bvec = np.empty(k_users)
        for k in range(k_users):
            phi[k] = gam[k] * a[k] / a[k, k]
            phi[k, k] = 0.0
            bvec[k] = gam[k] * (inst.user_extra[k] + inst.noise[k]
                                + (inst.h_eq[k].conj() @ z_b @ inst.h_eq[k]).real) / a[k, k]
        try:
            p = np.linalg.solve(np.eye(k_users) - phi, bvec)
        except np.linalg.LinAlgError:
            continue
        if np.any(p <= 0) or not np.all(np.isfinite(p)):
            continue
        # leakage caps for the scaled directions
        ok = True
        for k in range(k_users):
            fw = inst.f_eq @ dirs[k]
            lhs = p[k] * float((fw.conj() @ np.linalg.solve(q_full, fw)).real)
            if lhs > leakage_tolerance(params.c_max[k]) * (1.0 + 1e-9):
                ok = False
                break
        if not ok:
            continue
        power = float(np.sum(p)) + float(np.trace(z_b).real)
        if power < best_power:
            w = np.vstack([np.sqrt(p[k]) * dirs[k] for k in range(k_users)])
            cand = BsDesign(w=w, z_b=z_b)
            if _violation(ch, cand, irs, params) <= EXTRACT_TOL:
                best, best_power = cand, power
    return best


@dataclass
class BsSubproblemResult:
    status: str
    w_mats: list[np.ndarray]
    z_b: np.ndarray | None
    extracted: BsDesign | None
    tightness: np.ndarray | None
    objective: float | None
    recovery: str
    feasibility: FeasibilityReport | None
    solution: ConicSolution


def solve_bs_problem(ch: ChannelSet, irs: IrsDesign, params: SystemParams,
                     tol: float = 1e-7, max_iter: int = 100,
                     include_bs_an: bool = True, seed: int = 0) -> BsSubproblemResult:
    """Solve the fixed-IRS SDP and recover rank-one precoders.

    The eigen path is attempted first; when the extracted vectors violate a
    constraint by more than ``EXTRACT_TOL`` (SINR floors in linear units,
    leakage caps through the relative LMI eigenvalue), Gaussian
    randomization with minimal-power rescaling takes over.
    ExtractionFailure signals a loose relaxation.
    """
    prob = build_bs_problem(ch, irs, params, include_bs_an=include_bs_an)
    sol = conic.solve(prob, tol=tol, max_iter=max_iter)
    if sol.status != conic.OPTIMAL:
        return BsSubproblemResult(
            status=sol.status, w_mats=[], z_b=None, extracted=None,
            tightness=None, objective=None, recovery="none",
            feasibility=None, solution=sol,
        )
    nt, k_users = params.n_tx, params.n_users
    w_mats = []
    for k in range(k_users):
        off, length = prob.variable_map[f"w_mat_{k}"]
        w_mats.append(conic.herm_unpack(sol.x[off : off + length], nt))
    off, length = prob.variable_map["z_b"]
    z_b = conic.herm_unpack(sol.x[off : off + length], nt)
    # clip negligible negative eigenvalues from solver tolerance
    lam, vec = np.linalg.eigh((z_b + z_b.conj().T) / 2.0)
    z_b = (vec * np.clip(lam, 0.0, None)) @ vec.conj().T

    tightness = np.empty(k_users)
    w_vecs = np.empty((k_users, nt), dtype=complex)
    for k in range(k_users):
        w_vecs[k], tightness[k] = extract_rank_one(w_mats[k])
    cand = BsDesign(w=w_vecs, z_b=z_b)
    recovery = "eigen"
    if _violation(ch, cand, irs, params) > EXTRACT_TOL:
        rng = np.random.default_rng(seed)
        cand = _randomized_recovery(ch, irs, params, w_mats, z_b, rng)
        recovery = "randomized"
        if cand is None:
            raise ExtractionFailure(
                "rank-one recovery failed beyond tolerance on a feasible relaxation"
            )
    rep = check_feasibility(ch, cand, irs, params, tol=EXTRACT_TOL)
    return BsSubproblemResult(
        status=sol.status,
        w_mats=w_mats,
        z_b=z_b,
        extracted=cand,
        tightness=tightness,
        objective=float(sol.objective_value),
        recovery=recovery,
        feasibility=rep,
        solution=sol,
    )
