"""IRS subproblem: per-element amplitudes, phases, and reflect-vs-jam modes
for a fixed base-station design, solved by successive convex approximation.

Formulation
-----------
With the BS covariances fixed, the design variables are the element responses
phi, the relaxed mode selectors alpha in [0, 1], the coupled coefficients
u (u_m = alpha_m conj(phi_m) at binary points), and Hermitian lifts
Phi ~ Theta Theta^H and U ~ u u^H.  The lifts enter through Schur blocks

    [[Phi, Theta], [Theta^H, I]] >= 0,     [[U, u], [u^H, 1]] >= 0,

paired with linearized trace caps Tr(Phi) <= taylor(||Theta||_F^2) and
Tr(U) <= taylor(||u||^2), which pinch the lifts onto the rank-one surface at
convergence.  The mode coupling uses Big-M interval bounds on the real and
imaginary parts of u with constant B = sqrt(p_irs_max), a valid per-element
amplitude bound under the IRS power budget (a per-element constant of
p_irs_max / M would wrongly cut off designs that concentrate amplification
on few elements).

Lift pinching: pairing the Schur blocks with hard linearized trace caps
Tr(Phi) <= taylor(||Theta||_F^2) would force ||phi - anchor||^2 <= 0, i.e.
freeze the iterate (and the unsquared-norm variant is infeasible outright),
so those anchored caps enter the objective as exact-penalty terms
rho * (Tr(Phi) - taylor_theta) + rho * (Tr(U) - taylor_u) instead.  Both
terms are nonnegative on the Schur-feasible set and vanish exactly at
lift-consistent points, the feasible set becomes anchor-independent (which
makes every previous iterate feasible for the next round), and for rho
above the phantom-power benefit the recorded power trace is non-increasing;
a monotone safeguard guards the remaining corner cases.

Mode binariness: the hard linearization of alpha - alpha^2 <= 0 admits no
fractional anchor at all (its feasible set collapses to the anchor when the
anchor is binary and is empty otherwise), so it cannot drive exploration.
The loop therefore runs box-relaxed rounds and, once the power objective has
converged, one pressure pass that minimizes the same linearized binariness
residual with total IRS power pinned at the converged value; rounding plus
an optional frozen-mode repair pass finishes the job.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import conic
from .conic import ConicProblem, ProblemBuilder
from .sysmodel import BsDesign, ChannelSet, IrsDesign, SystemParams, check_feasibility

SCA_STATUS_CONVERGED = "Converged"
SCA_STATUS_NOT_CONVERGED = "NotConverged"
SCA_STATUS_INFEASIBLE = "Infeasible"
SCA_STATUS_FAILED = "NumericalFailure"

ROUND_REPAIR_TOL = 1e-6
PIN_SLACK = 1e-7
LIFT_PENALTY = 100.0
REPAIR_MARGIN = 0.0


def _margin_params(params: SystemParams, delta: float) -> SystemParams:
    """Tighten SINR floors and leakage caps by a relative margin so solver
    tolerance cannot push the repaired design below the physical bar."""
    gamma = tuple(g * (1.0 + delta) for g in params.gamma_min)
    caps = tuple(
        math.log2(1.0 + (2.0 ** c - 1.0) * (1.0 - delta)) for c in params.c_max
    )
    return params.with_updates(gamma_min=gamma, c_max=caps)


def leakage_tolerance(c_max: float) -> float:
    return 2.0 ** c_max - 1.0


# ---------------------------------------------------------------------------
# SVD splitting and Taylor minorants
# ---------------------------------------------------------------------------

def svd_split(g: np.ndarray, b_k: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Factor G B G^H into sum_m p_m q_m^H via the singular value
    decomposition; B may be indefinite."""
    prod = g @ b_k @ g.conj().T
    u_mat, s_vals, vh = np.linalg.svd((prod + prod.conj().T) / 2.0)
    return [(s_vals[m] * u_mat[:, m], vh[m].conj()) for m in range(prod.shape[0])]


@dataclass
class TaylorBounds:
    """Affine global minorants of alpha_m^2, ||Theta||_F^2, and ||u||^2,
    anchored at an iterate (exact at the anchor)."""

    alpha_anchor: np.ndarray
    phi_anchor: np.ndarray
    u_anchor: np.ndarray

    def alpha_bound(self, alpha: np.ndarray) -> np.ndarray:
        a0 = self.alpha_anchor
        return -a0**2 + 2.0 * a0 * alpha

    def theta_bound(self, phi: np.ndarray) -> float:
        p0 = self.phi_anchor
        return float(-np.sum(np.abs(p0) ** 2) + 2.0 * np.sum(
            p0.real * phi.real + p0.imag * phi.imag))

    def u_bound(self, u: np.ndarray) -> float:
        u0 = self.u_anchor
        return float(-np.sum(np.abs(u0) ** 2) + 2.0 * np.sum(
            u0.real * u.real + u0.imag * u.imag))


@dataclass
class ScaIterate:
    """SCA anchor/solution snapshot; objective is the lifted IRS power."""

    phi: np.ndarray
    u: np.ndarray
    alpha: np.ndarray
    objective: float = math.nan


def taylor_bounds(iterate: ScaIterate) -> TaylorBounds:
    return TaylorBounds(
        alpha_anchor=np.asarray(iterate.alpha, dtype=float),
        phi_anchor=np.asarray(iterate.phi, dtype=complex),
        u_anchor=np.asarray(iterate.u, dtype=complex),
    )


def default_irs_init(ch: ChannelSet, params: SystemParams) -> ScaIterate:
    """All-reflect start at half the power budget, element phases aligned so
    the cascaded path adds constructively to user 1's direct path."""
    m = params.n_irs
    cascade = ch.h_iu[0].conj() * (ch.g @ ch.h_bu[0])
    theta = -np.angle(cascade)
    phi = math.sqrt(params.p_irs_max / (2 * m)) * np.exp(1j * theta)
    alpha = np.ones(m)
    return ScaIterate(phi=phi, u=alpha * np.conj(phi), alpha=alpha)


# ---------------------------------------------------------------------------
# problem assembly
# ---------------------------------------------------------------------------

def _u_coord_tensor(a1: np.ndarray, hie: np.ndarray) -> np.ndarray:
    """Coefficients of the Eve-side cross term over (Re u, Im u) coordinates.

    a1 = H_BE B G^H; the term is sum_m u_m outer(a1[:, m], conj(hie[:, m]))
    plus its Hermitian transpose."""
    ne, m = hie.shape
    base = np.einsum("rm,cm->rcm", a1, hie.conj())
    baseh = np.conj(np.transpose(base, (1, 0, 2)))
    out = np.empty((ne, ne, 2 * m), dtype=complex)
    out[:, :, :m] = base + baseh
    out[:, :, m:] = 1j * base - 1j * baseh
    return out


def _hadamard_u_tensor(k_mat: np.ndarray, hie: np.ndarray) -> np.ndarray:
    """Coefficients over herm_pack(U) of H (K o U^T) H^H, with o elementwise."""
    ne, m = hie.shape
    p4 = np.einsum("ri,ij,cj->rcij", hie, k_mat, hie.conj())
    out = np.empty((ne, ne, m * m), dtype=complex)
    out[:, :, :m] = p4[:, :, np.arange(m), np.arange(m)]
    k = m
    for i in range(m):
        for j in range(i + 1, m):
            out[:, :, k] = p4[:, :, i, j] + p4[:, :, j, i]
            out[:, :, k + 1] = -1j * p4[:, :, i, j] + 1j * p4[:, :, j, i]
            k += 2
    return out


@dataclass
class _Gauged:
    sigma_ref: float
    h_bu: np.ndarray
    h_be: np.ndarray
    h_iu: np.ndarray
    h_ie: np.ndarray
    noise: np.ndarray


def _gauge(ch: ChannelSet, params: SystemParams) -> _Gauged:
    s = 1.0 / math.sqrt(float(np.mean(params.noise_user)))
    return _Gauged(
        sigma_ref=float(np.mean(params.noise_user)),
        h_bu=s * ch.h_bu,
        h_be=s * ch.h_be,
        h_iu=s * ch.h_iu,
        h_ie=s * ch.h_ie,
        noise=np.asarray(params.noise_user) * s * s,
    )


def build_irs_problem(
    ch: ChannelSet,
    bs: BsDesign,
    params: SystemParams,
    iterate: ScaIterate,
    fixed_alpha: np.ndarray | None = None,
    power_pin: float | None = None,
    binary_pressure: bool = False,
    rho: float = LIFT_PENALTY,
) -> ConicProblem:
    """Assemble one convex SCA round as a conic program.

    Encodes the linearized SINR floors and leakage LMIs over (Phi, U, u),
    the box relaxation of the modes, the IRS power cap Tr(Phi) <= budget,
    the Big-M coupling rows (split into real and imaginary parts), and both
    Schur lift blocks.  The anchored lift-consistency terms
    rho * (Tr(Phi) - taylor_theta(phi)) and rho * (Tr(U) - taylor_u(u))
    are added to the objective (see the module docstring for why they must
    not be hard constraints).  ``fixed_alpha`` freezes the modes with
    equality rows (the Big-M intervals then collapse onto
    u = alpha conj(phi)); ``power_pin`` adds Tr(Phi) <= pin; with
    ``binary_pressure`` the objective additionally carries the linearized
    binariness residual sum_m [alpha_m (1 - 2 anchor_m) + anchor_m^2].
    """
    m, nt, ne, k_users = params.n_irs, params.n_tx, params.n_eve, params.n_users
    gz = _gauge(ch, params)
    sig_i = params.noise_irs
    w_mats = [np.outer(bs.w[k], bs.w[k].conj()) for k in range(k_users)]
    z_b = bs.z_b
    # internal variable scale: element responses in units of B = sqrt(budget),
    # lifts in units of B^2, so all lift coordinates live in [-1, 1]-ish
    big = math.sqrt(params.p_irs_max)
    b2 = big * big
    bounds = taylor_bounds(ScaIterate(
        phi=np.asarray(iterate.phi) / big,
        u=np.asarray(iterate.u) / big,
        alpha=np.asarray(iterate.alpha, dtype=float),
    ))

    b = ProblemBuilder()
    phi_re = b.add_free_block("phi_re", m)
    phi_im = b.add_free_block("phi_im", m)
    u_re = b.add_free_block("u_re", m)
    u_im = b.add_free_block("u_im", m)
    al_off = b.add_free_block("alpha", m)
    nphi = conic.herm_len(m)
    cap_off = b.add_free_block("phi_lift", nphi)   # Phi
    ulift_off = b.add_free_block("u_lift", nphi)   # U

    idx = np.arange(m)
    diag_cols = cap_off + idx  # Tr(Phi) coordinates

    # objective (watts): lifted IRS power plus anchored lift-consistency
    # penalties; coordinates are in B/B^2 units
    b.add_objective(diag_cols, b2 * np.ones(m))
    if rho > 0.0:
        b.add_objective(diag_cols, rho * b2 * np.ones(m))
        b.add_objective(phi_re + idx, -2.0 * rho * b2 * bounds.phi_anchor.real)
        b.add_objective(phi_im + idx, -2.0 * rho * b2 * bounds.phi_anchor.imag)
        b.add_objective(ulift_off + idx, rho * b2 * np.ones(m))
        b.add_objective(u_re + idx, -2.0 * rho * b2 * bounds.u_anchor.real)
        b.add_objective(u_im + idx, -2.0 * rho * b2 * bounds.u_anchor.imag)
    if binary_pressure:
        b.add_objective(al_off + idx, 1.0 - 2.0 * bounds.alpha_anchor)

    # mode box 0 <= alpha <= 1
    lo = b.add_nonneg_block(m, "mode_lo")
    hi = b.add_nonneg_block(m, "mode_hi")
    rows = np.concatenate([np.arange(m)] * 2)
    b.add_eq_rows(rows, np.concatenate([al_off + idx, lo + idx]),
                  np.concatenate([np.ones(m), -np.ones(m)]), np.zeros(m))
    rows2 = np.concatenate([np.arange(m)] * 2)
    b.add_eq_rows(rows2, np.concatenate([al_off + idx, hi + idx]),
                  np.concatenate([np.ones(m), np.ones(m)]), np.ones(m))

    if fixed_alpha is not None:
        for i in range(m):
            b.add_eq_row([al_off + i], [1.0], float(fixed_alpha[i]))

    # IRS power cap and optional pin
    s_cap = b.add_nonneg_block(1, "power_cap")
    b.add_eq_row(np.concatenate([diag_cols, [s_cap]]),
                 np.concatenate([np.ones(m), [1.0]]), params.p_irs_max / b2)
    if power_pin is not None:
        s_pin = b.add_nonneg_block(1, "power_pin")
        b.add_eq_row(np.concatenate([diag_cols, [s_pin]]),
                     np.concatenate([np.ones(m), [1.0]]), float(power_pin) / b2)

    # per-element lift ordering U_mm <= Phi_mm: the coupled coefficient never
    # carries more power than the element emits, which prices any lift
    # inflation into the objective
    s_ord = b.add_nonneg_block(m, "lift_order")
    rows_o = np.concatenate([np.arange(m)] * 3)
    b.add_eq_rows(
        rows_o,
        np.concatenate([cap_off + idx, ulift_off + idx, s_ord + idx]),
        np.concatenate([np.ones(m), -np.ones(m), -np.ones(m)]),
        np.zeros(m),
    )

    # Big-M coupling, real/imag split; in B-units the bound constant is 1
    bm = b.add_nonneg_block(8 * m, "bigm")
    rows, cols, vals, rhs = [], [], [], []

    def brow(r, entries, rh):
        for c_, v_ in entries:
            rows.append(r)
            cols.append(c_)
            vals.append(v_)
        rhs.append(rh)

    for i in range(m):
        base = 8 * i
        # s = Re u - Re phi - alpha + 1   (all in B-units)
        brow(base + 0, [(u_re + i, 1.0), (phi_re + i, -1.0), (al_off + i, -1.0), (bm + base + 0, -1.0)], -1.0)
        brow(base + 1, [(phi_re + i, 1.0), (u_re + i, -1.0), (al_off + i, -1.0), (bm + base + 1, -1.0)], -1.0)
        brow(base + 2, [(u_re + i, 1.0), (al_off + i, 1.0), (bm + base + 2, -1.0)], 0.0)
        brow(base + 3, [(u_re + i, -1.0), (al_off + i, 1.0), (bm + base + 3, -1.0)], 0.0)
        # imaginary parts: conj(phi) has -Im phi
        brow(base + 4, [(u_im + i, 1.0), (phi_im + i, 1.0), (al_off + i, -1.0), (bm + base + 4, -1.0)], -1.0)
        brow(base + 5, [(phi_im + i, -1.0), (u_im + i, -1.0), (al_off + i, -1.0), (bm + base + 5, -1.0)], -1.0)
        brow(base + 6, [(u_im + i, 1.0), (al_off + i, 1.0), (bm + base + 6, -1.0)], 0.0)
        brow(base + 7, [(u_im + i, -1.0), (al_off + i, 1.0), (bm + base + 7, -1.0)], 0.0)
    b.add_eq_rows(np.array(rows), np.array(cols), np.array(vals), np.array(rhs))

    # SINR floors, linear in (u, U, Phi)
    for k in range(k_users):
        gamma = params.gamma_min[k]
        d_k = w_mats[k] - gamma * (sum(w_mats[j] for j in range(k_users) if j != k) + z_b)
        h = gz.h_iu[k]
        c_vec = big * (gz.h_bu[k].conj() @ d_k @ ch.g.conj().T) * h
        gdg = ch.g @ d_k @ ch.g.conj().T
        m_k = b2 * gdg * np.outer(h.conj(), h)
        const = float((gz.h_bu[k].conj() @ d_k @ gz.h_bu[k]).real)
        row_u = conic.herm_trace_row(m_k)
        row_phi = -gamma * (1.0 + sig_i) * b2 * conic.herm_trace_row(np.outer(h, h.conj()))
        slack = b.add_nonneg_block(1, f"sinr_slack_{k}")
        # the thermal-noise gauge puts the slack at O(gamma); the large lift
        # coefficients are physical (active-IRS power swings the denominator)
        cols_k = np.concatenate([
            u_re + idx, u_im + idx,
            ulift_off + np.arange(nphi),
            cap_off + np.arange(nphi),
            ulift_off + idx,           # +gamma |h_m|^2 U_mm from the AN leak
            [slack],
        ])
        vals_k = np.concatenate([
            2.0 * c_vec.real, -2.0 * c_vec.imag,
            row_u,
            row_phi,
            gamma * b2 * np.abs(h) ** 2,
            [-1.0],
        ])
        b.add_eq_row(cols_k, vals_k, gamma * gz.noise[k] - const)

    # leakage LMIs over (Phi, U, u)
    emb = conic.hermitian_embed_svec_map(ne)
    n_svec = conic.svec_len(2 * ne)
    hie_cong = conic.congruence_tensor(gz.h_ie)
    diag_t = np.einsum("ri,ci->rci", gz.h_ie, gz.h_ie.conj())
    for k in range(k_users):
        ctol = leakage_tolerance(params.c_max[k])
        b_mat = ctol * z_b - w_mats[k]
        pairs = svd_split(ch.g, b_mat)
        k_mat = sum(np.outer(p_, q_.conj()) for p_, q_ in pairs)
        phi_tensor = b2 * ctol * (1.0 + sig_i) * hie_cong
        u_tensor = big * _u_coord_tensor(gz.h_be @ b_mat @ ch.g.conj().T, gz.h_ie)
        lift_tensor = b2 * _hadamard_u_tensor(k_mat, gz.h_ie)
        lift_tensor[:, :, :m] -= b2 * ctol * diag_t
        const_mat = gz.h_be @ b_mat @ gz.h_be.conj().T

        d_phi = emb @ conic.stack_complex(phi_tensor)
        d_u = emb @ conic.stack_complex(u_tensor)
        d_lift = emb @ conic.stack_complex(lift_tensor)
        const = conic.svec(conic.embed_hermitian(const_mat))
        s_off = b.add_psd_block(2 * ne, f"leak_lmi_{k}")
        dense = np.hstack([np.asarray(d_phi), np.asarray(d_lift), np.asarray(d_u)])
        blk_scale = max(float(np.max(np.abs(dense))), float(np.max(np.abs(const))), 1e-300)
        dense = dense / blk_scale
        const = const / blk_scale
        col_ids = np.concatenate([
            cap_off + np.arange(nphi),
            ulift_off + np.arange(nphi),
            u_re + idx, u_im + idx,
        ])
        rr, cc = np.nonzero(dense)
        rows_l = np.concatenate([rr, np.arange(n_svec)])
        cols_l = np.concatenate([col_ids[cc], s_off + np.arange(n_svec)])
        vals_l = np.concatenate([dense[rr, cc], -np.ones(n_svec)])
        b.add_eq_rows(rows_l, cols_l, vals_l, -const)

    # Schur lift blocks
    _emit_power_lift(b, m, cap_off, phi_re, phi_im, "power_lift")
    _emit_vector_lift(b, m, ulift_off, u_re, u_im, "coupling_lift")

    return b.finalize()


def _emit_power_lift(b: ProblemBuilder, m: int, cap_off: int,
                     phi_re: int, phi_im: int, name: str) -> None:
    """[[Phi, Theta], [Theta^H, I]] >= 0 with Theta = diag(phi)."""
    side = 2 * m
    emb = conic.hermitian_embed_svec_map(side)
    rows, cols, vals = [], [], []
    basis = conic.herm_coord_basis(m).tocoo()
    # Phi block occupies the top-left m x m corner of the complex matrix
    for r, c, v in zip(basis.row, basis.col, basis.data):
        part, flat = divmod(int(r), m * m)
        i, j = divmod(flat, m)
        rows.append(part * side * side + i * side + j)
        cols.append(cap_off + int(c))
        vals.append(float(v))
    # Theta diagonal at (i, m+i) and its conjugate at (m+i, i)
    for i in range(m):
        rows.extend([i * side + (m + i), (m + i) * side + i])
        cols.extend([phi_re + i, phi_re + i])
        vals.extend([1.0, 1.0])
        rows.extend([side * side + i * side + (m + i), side * side + (m + i) * side + i])
        cols.extend([phi_im + i, phi_im + i])
        vals.extend([1.0, -1.0])
    v_map = sp.coo_matrix((vals, (rows, cols)), shape=(2 * side * side, b._n)).tocsr()
    const_vec = np.zeros(2 * side * side)
    for i in range(m):
        const_vec[(m + i) * side + (m + i)] = 1.0  # identity block, real part
    ties = (emb @ v_map).tocoo()
    const = emb @ const_vec
    s_off = b.add_psd_block(2 * side, name)  # real embedding doubles the side
    n_svec = conic.svec_len(2 * side)
    rows_t = np.concatenate([ties.row, np.arange(n_svec)])
    cols_t = np.concatenate([ties.col, s_off + np.arange(n_svec)])
    vals_t = np.concatenate([ties.data, -np.ones(n_svec)])
    b.add_eq_rows(rows_t, cols_t, vals_t, -const)


def _emit_vector_lift(b: ProblemBuilder, m: int, ulift_off: int,
                      u_re: int, u_im: int, name: str) -> None:
    """[[U, u], [u^H, 1]] >= 0."""
    side = m + 1
    emb = conic.hermitian_embed_svec_map(side)
    rows, cols, vals = [], [], []
    basis = conic.herm_coord_basis(m).tocoo()
    for r, c, v in zip(basis.row, basis.col, basis.data):
        part, flat = divmod(int(r), m * m)
        i, j = divmod(flat, m)
        rows.append(part * side * side + i * side + j)
        cols.append(ulift_off + int(c))
        vals.append(float(v))
    for i in range(m):
        rows.extend([i * side + m, m * side + i])
        cols.extend([u_re + i, u_re + i])
        vals.extend([1.0, 1.0])
        rows.extend([side * side + i * side + m, side * side + m * side + i])
        cols.extend([u_im + i, u_im + i])
        vals.extend([1.0, -1.0])
    v_map = sp.coo_matrix((vals, (rows, cols)), shape=(2 * side * side, b._n)).tocsr()
    const_vec = np.zeros(2 * side * side)
    const_vec[m * side + m] = 1.0
    ties = (emb @ v_map).tocoo()
    const = emb @ const_vec
    s_off = b.add_psd_block(2 * side, name)  # real embedding doubles the side
    n_svec = conic.svec_len(2 * side)
    rows_t = np.concatenate([ties.row, np.arange(n_svec)])
    cols_t = np.concatenate([ties.col, s_off + np.arange(n_svec)])
    vals_t = np.concatenate([ties.data, -np.ones(n_svec)])
    b.add_eq_rows(rows_t, cols_t, vals_t, -const)


def _u_lift_gap(prob: ConicProblem, x: np.ndarray, params: SystemParams) -> float:
    """Tr(U) - ||u||^2 of a solution, in watts."""
    m = params.n_irs
    b2 = params.p_irs_max
    off, _ = prob.variable_map["u_lift"]
    tr_u = b2 * float(np.sum(x[off : off + m]))
    off_r, _ = prob.variable_map["u_re"]
    off_i, _ = prob.variable_map["u_im"]
    nrm = b2 * float(np.sum(x[off_r : off_r + m] ** 2 + x[off_i : off_i + m] ** 2))
    return tr_u - nrm


def anchored_objective(prob: ConicProblem, params: SystemParams,
                       anchor: ScaIterate, rho: float = LIFT_PENALTY,
                       binary_pressure: bool = False) -> np.ndarray:
    """Objective vector of a built round problem for a new anchor; the
    constraint set is anchor-independent, so re-anchoring only reweights
    the lift-consistency penalty terms."""
    m = params.n_irs
    big = math.sqrt(params.p_irs_max)
    b2 = big * big
    bounds = taylor_bounds(ScaIterate(
        phi=np.asarray(anchor.phi) / big,
        u=np.asarray(anchor.u) / big,
        alpha=np.asarray(anchor.alpha, dtype=float),
    ))
    c = np.zeros(prob.n_var)
    idx = np.arange(m)

    def off(name):
        return prob.variable_map[name][0]

    c[off("phi_lift") + idx] += b2 * (1.0 + rho)
    c[off("phi_re") + idx] += -2.0 * rho * b2 * bounds.phi_anchor.real
    c[off("phi_im") + idx] += -2.0 * rho * b2 * bounds.phi_anchor.imag
    c[off("u_lift") + idx] += rho * b2
    c[off("u_re") + idx] += -2.0 * rho * b2 * bounds.u_anchor.real
    c[off("u_im") + idx] += -2.0 * rho * b2 * bounds.u_anchor.imag
    if binary_pressure:
        c[off("alpha") + idx] += 1.0 - 2.0 * bounds.alpha_anchor
    return c


def _unpack(prob: ConicProblem, x: np.ndarray, m: int,
            p_budget: float) -> ScaIterate:
    """Recover physical-unit quantities from the scaled coordinates."""
    big = math.sqrt(p_budget)

    def blk(name):
        off, length = prob.variable_map[name]
        return x[off : off + length]

    phi = big * (blk("phi_re") + 1j * blk("phi_im"))
    u = big * (blk("u_re") + 1j * blk("u_im"))
    alpha = blk("alpha").copy()
    off, length = prob.variable_map["phi_lift"]
    tr_phi = big * big * float(np.sum(x[off : off + m]))
    return ScaIterate(phi=phi, u=u, alpha=alpha, objective=tr_phi)


# ---------------------------------------------------------------------------
# SCA loop, binarization, rounding
# ---------------------------------------------------------------------------

@dataclass
class ScaResult:
    status: str
    design: IrsDesign | None
    trace: list[ScaIterate] = field(default_factory=list)
    iterations: int = 0
    repair_used: bool = False


def round_modes(
    alpha: np.ndarray,
    phi: np.ndarray,
    u: np.ndarray,
    ch: ChannelSet,
    bs: BsDesign,
    params: SystemParams,
    anchor: ScaIterate | None = None,
    solver_tol: float = 1e-7,
    rho: float = LIFT_PENALTY,
) -> tuple[IrsDesign | None, bool]:
    """Threshold the relaxed modes at 0.5 (ties round up to reflection),
    re-impose u = alpha conj(phi), and re-validate.  When the rounded design
    violates an SINR floor or leakage cap by more than 1e-6, one frozen-mode
    re-solve repairs it; returns (design, repair_used), design None when the
    frozen problem is infeasible."""
    rounded = (np.asarray(alpha) >= 0.5).astype(float)
    cand = IrsDesign(phi=np.asarray(phi, dtype=complex).copy(), alpha=rounded)
    rep = check_feasibility(ch, bs, cand, params, tol=ROUND_REPAIR_TOL)
    leak_bad = rep.leakage_indeterminate or np.any(np.nan_to_num(rep.leakage, nan=-1.0) < -ROUND_REPAIR_TOL)
    sinr_bad = np.any(rep.sinr < -ROUND_REPAIR_TOL)
    budget_bad = rep.irs_budget < -1e-7
    if not (leak_bad or sinr_bad or budget_bad):
        return _budget_clip(cand, params), False
    base = anchor if anchor is not None else ScaIterate(phi=phi, u=u, alpha=rounded)
    cand = None
    for rho_try in (rho, 10.0 * rho):
        prob = build_irs_problem(ch, bs, params, base, fixed_alpha=rounded, rho=rho_try)
        sol = conic.solve(prob, tol=solver_tol)
        if sol.status != conic.OPTIMAL:
            return (None, True) if cand is None else (cand, True)
        it = _unpack(prob, sol.x, params.n_irs, params.p_irs_max)
        cand = _budget_clip(IrsDesign(phi=it.phi, alpha=rounded), params)
        rep = check_feasibility(ch, bs, cand, params, tol=ROUND_REPAIR_TOL)
        ok = (not rep.leakage_indeterminate
              and np.all(np.nan_to_num(rep.leakage, nan=-1.0) >= -ROUND_REPAIR_TOL)
              and np.all(rep.sinr >= -ROUND_REPAIR_TOL))
        if ok:
            return cand, True
        base = it
    return cand, True


def _budget_clip(design: IrsDesign, params: SystemParams) -> IrsDesign:
    """Clip solver-tolerance budget overshoot (relative excess <= 1e-5)."""
    power = design.irs_power()
    if power > params.p_irs_max:
        excess = power / params.p_irs_max - 1.0
        if excess > 1e-5:
            raise ValueError(f"IRS budget violated beyond tolerance ({excess:.2e})")
        design = IrsDesign(
            phi=design.phi * math.sqrt(params.p_irs_max / power) * (1.0 - 1e-12),
            alpha=design.alpha,
        )
    return design


def sca_optimize(
    ch: ChannelSet,
    bs: BsDesign,
    params: SystemParams,
    init: ScaIterate | None = None,
    t_max: int = 20,
    tol: float = 1e-4,
    fixed_alpha: np.ndarray | None = None,
    solver_tol: float = 1e-7,
    rho: float = LIFT_PENALTY,
) -> ScaResult:
    """Iterate convex rounds updating the anchor, then binarize and round.

    The recorded objective trace (lifted IRS power per round) is
    non-increasing: each anchor update keeps the previous solution feasible,
    a monotone safeguard rejects non-improving rounds, and the binariness
    pressure pass runs with the converged power pinned.
    """
    anchor = init if init is not None else default_irs_init(ch, params)
    if fixed_alpha is not None:
        frozen = np.asarray(fixed_alpha, dtype=float)
        anchor = ScaIterate(
            phi=anchor.phi, u=frozen * np.conj(anchor.phi), alpha=frozen.copy()
        )
    trace: list[ScaIterate] = []
    best: ScaIterate | None = None
    status = SCA_STATUS_NOT_CONVERGED
    prob = build_irs_problem(ch, bs, params, anchor, fixed_alpha=fixed_alpha, rho=rho)
    compiled = conic.compile_problem(prob)
    # adaptive lift-penalty schedule: small rho moves fast, but any lift gap
    # or objective increase signals phantom power, so escalate and retry
    rho_cur = rho
    clean_streak = 0
    retries = 0
    t = 0
    while t < max(1, t_max):
        c_t = anchored_objective(prob, params, anchor, rho=rho_cur)
        sol = conic.solve_compiled(compiled, tol=solver_tol, objective=c_t)
        if sol.status != conic.OPTIMAL:
            if best is None:
                fail = SCA_STATUS_INFEASIBLE if sol.status == conic.PRIMAL_INFEASIBLE \
                    else SCA_STATUS_FAILED
                return ScaResult(status=fail, design=None, trace=trace, iterations=t)
            status = SCA_STATUS_NOT_CONVERGED
            break
        it = _unpack(prob, sol.x, params.n_irs, params.p_irs_max)
        gap = max(
            it.objective - float(np.sum(np.abs(it.phi) ** 2)),
            _u_lift_gap(prob, sol.x, params),
        )
        gap_tol = 1e-8 + 1e-6 * max(it.objective, 0.0)
        suspicious = gap > gap_tol or (
            best is not None and it.objective > best.objective + 1e-9
        )
        if suspicious:
            retries += 1
            rho_cur *= 4.0
            clean_streak = 0
            if retries > 4:
                status = SCA_STATUS_NOT_CONVERGED if best is None else SCA_STATUS_CONVERGED
                break
            continue  # re-solve the same anchor with a stiffer penalty
        # stop once steps drop below tol relative or one nano-watt absolute
        improved = best is None or best.objective - it.objective > max(tol * best.objective, 1e-9)
        best = it
        trace.append(it)
        anchor = it
        t += 1
        clean_streak += 1
        if clean_streak >= 2 and rho_cur > 0.1:
            rho_cur = max(rho_cur / 4.0, 0.1)
        if not improved:
            status = SCA_STATUS_CONVERGED
            break
    if best is None:
        return ScaResult(status=SCA_STATUS_FAILED, design=None, trace=trace, iterations=0)

    # binariness pressure pass with the converged power pinned
    if fixed_alpha is None:
        dist = np.max(np.minimum(np.abs(best.alpha), np.abs(best.alpha - 1.0)))
        if dist > 1e-8:
            prob = build_irs_problem(
                ch, bs, params, best,
                power_pin=best.objective + PIN_SLACK,
                binary_pressure=True,
                rho=rho,
            )
            sol = conic.solve(prob, tol=solver_tol)
            if sol.status == conic.OPTIMAL:
                it = _unpack(prob, sol.x, params.n_irs, params.p_irs_max)
                if it.objective <= best.objective + PIN_SLACK:
                    best = it
                    trace.append(it)

    target_alpha = fixed_alpha if fixed_alpha is not None else best.alpha
    design, repaired = round_modes(
        target_alpha, best.phi, best.u, ch, bs, params,
        anchor=best, solver_tol=solver_tol, rho=rho,
    )
    if design is None:
        return ScaResult(
            status=SCA_STATUS_INFEASIBLE, design=None, trace=trace,
            iterations=len(trace), repair_used=True,
        )
    return ScaResult(
        status=status, design=design, trace=trace,
        iterations=len(trace), repair_used=repaired,
    )
