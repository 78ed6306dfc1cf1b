"""System model: scenario parameters, Rician channel generation, and the
closed-form rate/leakage/power expressions for a secure multiuser MISO
downlink assisted by a dual-mode active IRS.

Conventions
-----------
All internal math is in watts and linear SINR units; configuration layers
convert from dBm/dB at load time.  Channel vectors ``h_iu[k]`` and
``h_bu[k]`` are stored un-conjugated; metrics apply the conjugate transpose.
The IRS element response is ``phi_m = p_m * exp(j theta_m)`` with binary mode
selector ``alpha_m`` (1 = reflect, 0 = emit artificial noise).  The coupled
reflection coefficient is ``u_m = alpha_m * conj(phi_m)`` so that
``diag(u)`` equals the Hermitian transpose of the applied reflection matrix.
All functions are pure; randomness is owned per call through explicit seeds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

SPEED_OF_LIGHT = 299_792_458.0

LINKS = ("bu", "be", "bi", "iu", "ie")


class SingularLeakageCovariance(ValueError):
    """Worst-case eavesdropper covariance is singular; leakage is undefined."""


def dbm_to_watts(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def watts_to_dbm(watts: float) -> float:
    return 10.0 * math.log10(watts * 1000.0)


def db_to_linear(db: float) -> float:
    return 10.0 ** (db / 10.0)


# ---------------------------------------------------------------------------
# parameters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SystemParams:
    """Scenario constants: array sizes, geometry, propagation, QoS targets.

    Powers are stored in watts, SINR targets linear, leakage caps in
    bit/s/Hz.  ``pathloss_exp`` and ``rician`` map link tags
    (bu, be, bi, iu, ie) to the path-loss exponent and Rician factor.
    """

    n_tx: int
    n_eve: int
    n_irs: int
    n_users: int
    pos_bs: tuple[float, float]
    pos_irs: tuple[float, float]
    pos_users: tuple[tuple[float, float], ...]
    pos_eve: tuple[float, float]
    pathloss_exp: dict[str, float]
    rician: dict[str, float]
    carrier_freq: float
    ref_distance: float
    noise_user: tuple[float, ...]
    noise_irs: float
    gamma_min: tuple[float, ...]
    c_max: tuple[float, ...]
    p_irs_max: float
    rng_seed: int = 0

    def __post_init__(self):
        if self.n_irs + self.n_tx < self.n_eve:
            raise ValueError("need n_irs + n_tx >= n_eve")
        if len(self.pos_users) != self.n_users:
            raise ValueError("one position per user required")
        for name in LINKS:
            if name not in self.pathloss_exp or name not in self.rician:
                raise ValueError(f"missing propagation parameters for link {name}")
            if self.rician[name] < 0:
                raise ValueError("Rician factors must be nonnegative")
        if len(self.noise_user) != self.n_users or len(self.gamma_min) != self.n_users \
                or len(self.c_max) != self.n_users:
            raise ValueError("per-user parameter length mismatch")
        if min(self.noise_user) <= 0 or self.noise_irs < 0:
            raise ValueError("noise powers must be positive (user) / nonnegative (IRS)")
        if min(self.gamma_min) <= 0:
            raise ValueError("SINR targets must be positive")
        if min(self.c_max) <= 0:
            raise ValueError("leakage caps must be positive")
        if self.p_irs_max < 0 or self.ref_distance <= 0 or self.carrier_freq <= 0:
            raise ValueError("powers, distances and frequency must be nonnegative")

    # ---- geometry ---------------------------------------------------------
    def distance(self, a: tuple[float, float], b: tuple[float, float]) -> float:
        return math.hypot(a[0] - b[0], a[1] - b[1])

    def link_distances(self) -> dict:
        """Euclidean distances per link; user links are arrays of length K."""
        return {
            "bi": self.distance(self.pos_bs, self.pos_irs),
            "be": self.distance(self.pos_bs, self.pos_eve),
            "ie": self.distance(self.pos_irs, self.pos_eve),
            "bu": np.array([self.distance(self.pos_bs, p) for p in self.pos_users]),
            "iu": np.array([self.distance(self.pos_irs, p) for p in self.pos_users]),
        }

    def ref_pathloss(self) -> float:
        """Free-space gain at the reference distance: (c / (4 pi f d0))^2."""
        lam = SPEED_OF_LIGHT / self.carrier_freq
        return (lam / (4.0 * math.pi * self.ref_distance)) ** 2

    def pathloss(self, link: str, dist: float) -> float:
        if dist <= 0:
            raise ValueError(f"zero distance on link {link}")
        return self.ref_pathloss() * (dist / self.ref_distance) ** (-self.pathloss_exp[link])

    def with_updates(self, **kwargs) -> "SystemParams":
        return replace(self, **kwargs)


def desk_params(
    n_tx: int = 4,
    n_eve: int = 2,
    n_irs: int = 12,
    n_users: int = 2,
    gamma_min_db: float = 4.0,
    c_max: float = 1.6,
    p_irs_max_dbm: float = 10.0,
    noise_user_dbm: float = -100.0,
    noise_irs_dbm: float = -100.0,
    rng_seed: int = 0,
) -> SystemParams:
    """Reduced-size default scenario: standard geometry, desk-scale arrays."""
    return SystemParams(
        n_tx=n_tx,
        n_eve=n_eve,
        n_irs=n_irs,
        n_users=n_users,
        pos_bs=(0.0, 0.0),
        pos_irs=(60.0, 20.0),
        pos_users=tuple((100.0, 10.0 if k % 2 == 0 else -10.0) for k in range(n_users)),
        pos_eve=(80.0, 20.0),
        pathloss_exp={"bu": 3.5, "be": 3.5, "bi": 2.6, "iu": 2.6, "ie": 2.6},
        rician={"bu": 0.0, "be": 0.0, "bi": 3.0, "iu": 3.0, "ie": 3.0},
        carrier_freq=2.4e9,
        ref_distance=1.0,
        noise_user=tuple(dbm_to_watts(noise_user_dbm) for _ in range(n_users)),
        noise_irs=dbm_to_watts(noise_irs_dbm),
        gamma_min=tuple(db_to_linear(gamma_min_db) for _ in range(n_users)),
        c_max=tuple(c_max for _ in range(n_users)),
        p_irs_max=dbm_to_watts(p_irs_max_dbm),
        rng_seed=rng_seed,
    )


# ---------------------------------------------------------------------------
# designs and channels
# ---------------------------------------------------------------------------

@dataclass
class ChannelSet:
    """One realization of the five links.

    g: (M, N_T) BS->IRS; h_iu: (K, M) IRS->user; h_ie: (N_E, M) IRS->Eve;
    h_bu: (K, N_T) BS->user; h_be: (N_E, N_T) BS->Eve.
    """

    g: np.ndarray
    h_iu: np.ndarray
    h_ie: np.ndarray
    h_bu: np.ndarray
    h_be: np.ndarray

    def validate(self, params: SystemParams) -> None:
        m, nt, ne, k = params.n_irs, params.n_tx, params.n_eve, params.n_users
        shapes = {
            "g": (self.g, (m, nt)),
            "h_iu": (self.h_iu, (k, m)),
            "h_ie": (self.h_ie, (ne, m)),
            "h_bu": (self.h_bu, (k, nt)),
            "h_be": (self.h_be, (ne, nt)),
        }
        for name, (arr, shape) in shapes.items():
            if arr.shape != shape:
                raise ValueError(f"channel {name} has shape {arr.shape}, expected {shape}")
            if not np.all(np.isfinite(arr.view(float))):
                raise ValueError(f"channel {name} contains non-finite entries")


@dataclass
class BsDesign:
    """Precoders w (K, N_T) and the artificial-noise covariance z_b."""

    w: np.ndarray
    z_b: np.ndarray

    def validate(self, herm_tol: float = 1e-10, eig_tol: float = 1e-8) -> None:
        scale = max(1.0, float(np.max(np.abs(self.z_b))) if self.z_b.size else 1.0)
        if np.max(np.abs(self.z_b - self.z_b.conj().T)) > herm_tol * scale:
            raise ValueError("z_b must be Hermitian")
        if np.linalg.eigvalsh((self.z_b + self.z_b.conj().T) / 2).min() < -eig_tol * scale:
            raise ValueError("z_b must be positive semidefinite")

    def bs_power(self) -> float:
        return float(np.sum(np.abs(self.w) ** 2) + np.trace(self.z_b).real)


@dataclass
class IrsDesign:
    """Per-element response phi (M,) and binary mode selector alpha (M,)."""

    phi: np.ndarray
    alpha: np.ndarray

    @property
    def theta_mat(self) -> np.ndarray:
        return np.diag(self.phi)

    @property
    def a_mat(self) -> np.ndarray:
        return np.diag(self.alpha.astype(float))

    @property
    def u(self) -> np.ndarray:
        """Coupled coefficient u_m = alpha_m * conj(phi_m)."""
        return self.alpha * np.conj(self.phi)

    def irs_power(self) -> float:
        return float(np.sum(np.abs(self.phi) ** 2))

    def validate(self, params: SystemParams | None = None, tol: float = 1e-8) -> None:
        if np.max(np.abs(self.alpha - np.round(self.alpha))) > tol or \
                np.any((np.round(self.alpha) != 0) & (np.round(self.alpha) != 1)):
            raise ValueError("alpha must be binary")
        if params is not None and self.irs_power() > params.p_irs_max + tol:
            raise ValueError("IRS power budget exceeded")

    @classmethod
    def zero(cls, m: int) -> "IrsDesign":
        return cls(phi=np.zeros(m, dtype=complex), alpha=np.ones(m))


@dataclass
class EffectiveChannels:
    """Composite quantities induced by fixed BS and IRS designs.

    h_eq[k] is the effective BS->user_k vector (un-conjugated), f_eq the
    effective BS->Eve matrix, q_mat the worst-case eavesdropper noise
    covariance, and mu[k] the user-side interference-plus-thermal power.
    """

    h_eq: np.ndarray
    f_eq: np.ndarray
    q_mat: np.ndarray
    mu: np.ndarray


# ---------------------------------------------------------------------------
# channel generation
# ---------------------------------------------------------------------------

def _steering(n: int, angle: float) -> np.ndarray:
    """Half-wavelength ULA steering vector along the x axis."""
    return np.exp(1j * np.pi * np.arange(n) * math.cos(angle))


def _angle(src, dst) -> float:
    return math.atan2(dst[1] - src[1], dst[0] - src[0])


def _rician(rng, params: SystemParams, link: str, dist: float,
            n_rx: int, n_tx: int, los: np.ndarray) -> np.ndarray:
    gain = params.pathloss(link, dist)
    beta = params.rician[link]
    nlos = (rng.standard_normal((n_rx, n_tx)) + 1j * rng.standard_normal((n_rx, n_tx))) / np.sqrt(2.0)
    mix = np.sqrt(beta / (1.0 + beta)) * los + np.sqrt(1.0 / (1.0 + beta)) * nlos
    return np.sqrt(gain) * mix


def generate_channels(params: SystemParams, seed: int) -> ChannelSet:
    """Draw one channel realization: distance path loss times a Rician mix of
    a deterministic ULA line-of-sight term and an i.i.d. CSCG scattered term.

    Deterministic for a fixed seed.  Raises on zero distance between nodes.
    """
    rng = np.random.default_rng(seed)
    d = params.link_distances()
    for key in ("bi", "be", "ie"):
        if d[key] <= 0:
            raise ValueError(f"zero distance on link {key}")
    if np.any(d["bu"] <= 0) or np.any(d["iu"] <= 0):
        raise ValueError("zero distance on a user link")

    m, nt, ne, k = params.n_irs, params.n_tx, params.n_eve, params.n_users
    bs, irs, eve = params.pos_bs, params.pos_irs, params.pos_eve

    los_bi = np.outer(_steering(m, _angle(irs, bs)), _steering(nt, _angle(bs, irs)).conj())
    g = _rician(rng, params, "bi", d["bi"], m, nt, los_bi)

    h_bu = np.empty((k, nt), dtype=complex)
    for i, pu in enumerate(params.pos_users):
        los = _steering(nt, _angle(bs, pu)).conj()[None, :]
        h_bu[i] = _rician(rng, params, "bu", d["bu"][i], 1, nt, los)[0]

    los_be = np.outer(_steering(ne, _angle(eve, bs)), _steering(nt, _angle(bs, eve)).conj())
    h_be = _rician(rng, params, "be", d["be"], ne, nt, los_be)

    h_iu = np.empty((k, m), dtype=complex)
    for i, pu in enumerate(params.pos_users):
        los = _steering(m, _angle(irs, pu)).conj()[None, :]
        h_iu[i] = _rician(rng, params, "iu", d["iu"][i], 1, m, los)[0]

    los_ie = np.outer(_steering(ne, _angle(eve, irs)), _steering(m, _angle(irs, eve)).conj())
    h_ie = _rician(rng, params, "ie", d["ie"], ne, m, los_ie)

    ch = ChannelSet(g=g, h_iu=h_iu, h_ie=h_ie, h_bu=h_bu, h_be=h_be)
    ch.validate(params)
    return ch


# ---------------------------------------------------------------------------
# closed-form metrics
# ---------------------------------------------------------------------------

def effective_channels(ch: ChannelSet, bs: BsDesign, irs: IrsDesign,
                       params: SystemParams) -> EffectiveChannels:
    """Effective user/Eve channels plus the worst-case Eve noise covariance.

    q_mat collects the BS AN forwarded through the effective channel, the
    IRS jamming (symmetrized since (I - A) is a binary diagonal), and the
    amplified IRS dynamic noise.
    """
    k, ne = params.n_users, params.n_eve
    refl = irs.alpha * irs.phi                     # diagonal of A Theta
    h_eq = ch.h_bu + (ch.h_iu * np.conj(refl)[None, :]) @ np.conj(ch.g)
    f_eq = ch.h_be + (ch.h_ie * refl[None, :]) @ ch.g

    jam_cols = ch.h_ie * ((1.0 - irs.alpha) * irs.phi)[None, :]
    dyn_cols = ch.h_ie * irs.phi[None, :]
    q = f_eq @ bs.z_b @ f_eq.conj().T \
        + jam_cols @ jam_cols.conj().T \
        + params.noise_irs * (dyn_cols @ dyn_cols.conj().T)
    q = (q + q.conj().T) / 2.0

    mu = np.empty(k)
    for i in range(k):
        others = sum(
            np.abs(h_eq[i].conj() @ bs.w[j]) ** 2 for j in range(k) if j != i
        )
        mu[i] = others + (h_eq[i].conj() @ bs.z_b @ h_eq[i]).real + params.noise_user[i]
    return EffectiveChannels(h_eq=h_eq, f_eq=f_eq, q_mat=q, mu=mu)


def user_sinr(ch: ChannelSet, bs: BsDesign, irs: IrsDesign,
              params: SystemParams, k: int) -> float:
    """Receive SINR of user k under the worst-case-free user model."""
    eff = effective_channels(ch, bs, irs, params)
    num = np.abs(eff.h_eq[k].conj() @ bs.w[k]) ** 2
    jam = np.sum(np.abs(ch.h_iu[k].conj() * (1.0 - irs.alpha) * irs.phi) ** 2)
    dyn = params.noise_irs * np.sum(np.abs(ch.h_iu[k].conj() * irs.phi) ** 2)
    return float(num / (eff.mu[k] + jam + dyn))


def user_rate(ch, bs, irs, params, k: int) -> float:
    return math.log2(1.0 + user_sinr(ch, bs, irs, params, k))


def eve_capacity(ch: ChannelSet, bs: BsDesign, irs: IrsDesign,
                 params: SystemParams, k: int) -> float:
    """Worst-case leakage capacity toward user k's stream, in bit/s/Hz.

    For a well-conditioned covariance this computes both the log-det form
    and the rank-one scalar form and cross-checks them (the permitted gap
    widens with conditioning so the check stays meaningful at physical
    power scales).  A rank-deficient covariance is handled through its
    pseudo-inverse: leakage escaping the covariance range has unbounded
    worst-case capacity (+inf); an identically zero covariance with a
    nonzero precoder raises SingularLeakageCovariance.
    """
    eff = effective_channels(ch, bs, irs, params)
    q = eff.q_mat
    fw = eff.f_eq @ bs.w[k]
    if np.linalg.norm(bs.w[k]) == 0.0 or np.linalg.norm(fw) == 0.0:
        return 0.0
    eig, vec = np.linalg.eigh(q)
    lam_max = float(eig[-1])
    if lam_max <= 0.0:
        raise SingularLeakageCovariance(
            "eavesdropper covariance vanishes while the precoder leaks"
        )
    rank_mask = eig > 1e-14 * lam_max
    if not np.all(rank_mask):
        # rank-deficient: unbounded capacity unless the leak stays in range
        coeff = vec.conj().T @ fw
        out_of_range = float(np.sum(np.abs(coeff[~rank_mask]) ** 2))
        if out_of_range > 1e-10 * float(np.sum(np.abs(coeff) ** 2)):
            return math.inf
        scalar = float(np.sum(np.abs(coeff[rank_mask]) ** 2 / eig[rank_mask]))
        return math.log2(1.0 + max(scalar, 0.0))
    scalar = float((fw.conj() @ np.linalg.solve(q, fw)).real)
    scalar_form = math.log2(1.0 + max(scalar, 0.0))
    _, logdet_qm = np.linalg.slogdet(q + np.outer(fw, fw.conj()))
    _, logdet_q = np.linalg.slogdet(q)
    det_form = (logdet_qm - logdet_q) / math.log(2.0)
    cond = lam_max / float(eig[0])
    tol = max(1e-10, 1e3 * np.finfo(float).eps * cond)
    if abs(det_form - scalar_form) > tol * max(1.0, abs(det_form)):
        raise FloatingPointError(
            f"leakage forms disagree: {det_form} vs {scalar_form} (cond {cond:.2e})"
        )
    return det_form


def secrecy_rate(ch, bs, irs, params, k: int) -> float:
    """Positive part of user rate minus worst-case leakage capacity."""
    return max(0.0, user_rate(ch, bs, irs, params, k) - eve_capacity(ch, bs, irs, params, k))


def total_power(bs: BsDesign, irs: IrsDesign) -> float:
    """Combined transmit power: precoders + BS AN + IRS amplifiers."""
    return bs.bs_power() + irs.irs_power()


# ---------------------------------------------------------------------------
# feasibility report
# ---------------------------------------------------------------------------

@dataclass
class FeasibilityReport:
    """Signed slack per constraint family; feasible iff all >= -tol."""

    sinr: np.ndarray            # gamma_k - gamma_min_k
    leakage: np.ndarray         # c_max_k - C_E_k (nan when indeterminate)
    leakage_indeterminate: bool
    an_psd: float               # min eigenvalue of z_b
    mode_binary: float          # -max_m distance of alpha_m from {0, 1}
    irs_budget: float           # p_irs_max - ||Theta||_F^2
    tol: float
    feasible: bool = field(init=False)

    def __post_init__(self):
        worst = min(
            float(np.min(self.sinr)),
            float(np.min(self.leakage)) if not self.leakage_indeterminate else -np.inf,
            self.an_psd,
            self.mode_binary,
            self.irs_budget,
        )
        self.feasible = bool(worst >= -self.tol)


def check_feasibility(ch: ChannelSet, bs: BsDesign, irs: IrsDesign,
                      params: SystemParams, tol: float = 1e-6) -> FeasibilityReport:
    """Evaluate all design constraints and report signed slacks."""
    k = params.n_users
    sinr = np.array([
        user_sinr(ch, bs, irs, params, i) - params.gamma_min[i] for i in range(k)
    ])
    leak = np.full(k, np.nan)
    indeterminate = False
    try:
        for i in range(k):
            leak[i] = params.c_max[i] - eve_capacity(ch, bs, irs, params, i)
    except SingularLeakageCovariance:
        indeterminate = True
    z = (bs.z_b + bs.z_b.conj().T) / 2.0
    an_psd = float(np.linalg.eigvalsh(z).min())
    mode = -float(np.max(np.minimum(np.abs(irs.alpha), np.abs(irs.alpha - 1.0)))) \
        if irs.alpha.size else 0.0
    budget = params.p_irs_max - irs.irs_power()
    return FeasibilityReport(
        sinr=sinr,
        leakage=leak,
        leakage_indeterminate=indeterminate,
        an_psd=an_psd,
        mode_binary=mode,
        irs_budget=float(budget),
        tol=tol,
    )


# ---------------------------------------------------------------------------
# sample-level oracle
# ---------------------------------------------------------------------------

def _sample_cn(rng, cov_chol: np.ndarray, n: int) -> np.ndarray:
    """Rows are CN(0, cov_chol @ cov_chol^H) samples."""
    dim = cov_chol.shape[0]
    z = (rng.standard_normal((n, dim)) + 1j * rng.standard_normal((n, dim))) / np.sqrt(2.0)
    return z @ cov_chol.T


def _psd_factor(cov: np.ndarray) -> np.ndarray:
    lam, vec = np.linalg.eigh((cov + cov.conj().T) / 2.0)
    lam = np.clip(lam, 0.0, None)
    return vec * np.sqrt(lam)[None, :]


def empirical_sinr(ch: ChannelSet, bs: BsDesign, irs: IrsDesign,
                   params: SystemParams, k: int, n_samples: int,
                   seed: int = 0, batch: int = 100_000) -> tuple[float, float]:
    """Monte Carlo SINR estimate for user k from the sample-level signal model.

    Draws unit data symbols, BS AN, IRS AN, IRS dynamic noise, and user
    thermal noise; returns the desired-power to other-power ratio and a
    delta-method standard error.  Requires n_samples >= 1e4.  Samples are
    drawn in batches to bound memory.
    """
    if n_samples < 10_000:
        raise ValueError("need at least 1e4 samples")
    rng = np.random.default_rng(seed)
    eff = effective_channels(ch, bs, irs, params)
    h_eq_k = eff.h_eq[k]
    z_chol = _psd_factor(bs.z_b)
    gains = np.array([h_eq_k.conj() @ bs.w[j] for j in range(params.n_users)])
    jam_row = ch.h_iu[k].conj() * (1.0 - irs.alpha) * irs.phi
    dyn_row = np.sqrt(params.noise_irs) * ch.h_iu[k].conj() * irs.phi
    sigma_u = math.sqrt(params.noise_user[k])

    sums = np.zeros(4)  # sum/sumsq of desired and other powers
    done = 0
    while done < n_samples:
        n = min(batch, n_samples - done)
        xs = (rng.standard_normal((n, params.n_users))
              + 1j * rng.standard_normal((n, params.n_users))) / np.sqrt(2.0)
        z_b = _sample_cn(rng, z_chol, n)
        z_i = (rng.standard_normal((n, params.n_irs))
               + 1j * rng.standard_normal((n, params.n_irs))) / np.sqrt(2.0)
        n_i = (rng.standard_normal((n, params.n_irs))
               + 1j * rng.standard_normal((n, params.n_irs))) / np.sqrt(2.0)
        n_u = sigma_u * (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2.0)

        desired = gains[k] * xs[:, k]
        other = xs @ gains - desired
        other += z_b @ h_eq_k.conj()
        other += z_i @ jam_row
        other += n_i @ dyn_row
        other += n_u

        p_des = np.abs(desired) ** 2
        p_oth = np.abs(other) ** 2
        sums += (p_des.sum(), (p_des**2).sum(), p_oth.sum(), (p_oth**2).sum())
        done += n

    md = sums[0] / n_samples
    mo = sums[2] / n_samples
    var_d = sums[1] / n_samples - md**2
    var_o = sums[3] / n_samples - mo**2
    est = md / mo
    rel_var = var_d / (n_samples * md**2) + var_o / (n_samples * mo**2)
    return float(est), float(est * math.sqrt(max(rel_var, 0.0)))
