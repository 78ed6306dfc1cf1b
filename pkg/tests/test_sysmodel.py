import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from airsec.sysmodel import (
    BsDesign,
    ChannelSet,
    IrsDesign,
    SingularLeakageCovariance,
    SystemParams,
    check_feasibility,
    db_to_linear,
    dbm_to_watts,
    desk_params,
    effective_channels,
    empirical_sinr,
    eve_capacity,
    generate_channels,
    secrecy_rate,
    total_power,
    user_rate,
    user_sinr,
    watts_to_dbm,
)


def random_design(params, rng, bs_scale=1.0, irs_scale=None, alpha=None):
    k, nt, m = params.n_users, params.n_tx, params.n_irs
    w = bs_scale * (rng.standard_normal((k, nt)) + 1j * rng.standard_normal((k, nt)))
    a = rng.standard_normal((nt, nt)) + 1j * rng.standard_normal((nt, nt))
    z = bs_scale**2 * (a @ a.conj().T) / nt
    if irs_scale is None:
        irs_scale = math.sqrt(params.p_irs_max / (2 * m))
    phi = irs_scale * np.exp(1j * rng.uniform(0, 2 * np.pi, m))
    if alpha is None:
        alpha = rng.integers(0, 2, m).astype(float)
    return BsDesign(w=w, z_b=z), IrsDesign(phi=phi, alpha=np.asarray(alpha, dtype=float))


def synthetic_channels(params, rng, scale=1.0):
    """Unit-variance channels for numerically friendly oracle checks."""
    m, nt, ne, k = params.n_irs, params.n_tx, params.n_eve, params.n_users

    def cn(*shape):
        return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)

    return ChannelSet(
        g=cn(m, nt), h_iu=cn(k, m), h_ie=cn(ne, m), h_bu=cn(k, nt), h_be=cn(ne, nt)
    )


# ---------------------------------------------------------------------------
# parameters and geometry
# ---------------------------------------------------------------------------

def test_bs_irs_distance_matches_layout():
    p = desk_params()
    assert abs(p.link_distances()["bi"] - math.sqrt(4000.0)) < 1e-9


def test_reference_pathloss_matches_free_space_value():
    # free-space gain at 1 m and 2.4 GHz is about -40.05 dB
    p = desk_params()
    assert abs(10 * math.log10(p.ref_pathloss()) + 40.05) < 0.01


def test_unit_conversions():
    assert abs(dbm_to_watts(10.0) - 0.01) < 1e-15
    assert abs(watts_to_dbm(0.01) - 10.0) < 1e-12
    assert abs(db_to_linear(4.0) - 10 ** 0.4) < 1e-12


def test_params_invariants_rejected():
    with pytest.raises(ValueError):
        desk_params(n_irs=1, n_tx=1, n_eve=5)  # M + N_T < N_E
    with pytest.raises(ValueError):
        desk_params(gamma_min_db=4.0).with_updates(gamma_min=(0.0, 1.0))
    with pytest.raises(ValueError):
        desk_params().with_updates(rician={k: -1.0 for k in ("bu", "be", "bi", "iu", "ie")})


# ---------------------------------------------------------------------------
# channel generation
# ---------------------------------------------------------------------------

def test_same_seed_bit_identical():
    p = desk_params()
    a = generate_channels(p, seed=123)
    b = generate_channels(p, seed=123)
    for name in ("g", "h_iu", "h_ie", "h_bu", "h_be"):
        assert np.array_equal(getattr(a, name), getattr(b, name))


def test_different_seed_differs():
    p = desk_params()
    a = generate_channels(p, seed=1)
    b = generate_channels(p, seed=2)
    assert not np.allclose(a.g, b.g)


def test_zero_distance_rejected():
    p = desk_params().with_updates(pos_eve=(60.0, 20.0))  # Eve on top of the IRS
    with pytest.raises(ValueError):
        generate_channels(p, seed=0)


@pytest.mark.slow
def test_rayleigh_entry_power_matches_pathloss():
    # beta = 0 links are pure scattered fading: E|h|^2 per entry equals the
    # distance gain, checked by pooling normalized entries across draws.
    p = desk_params()
    d = p.link_distances()
    samples = []
    for seed in range(4000):
        ch = generate_channels(p, seed=seed)
        for k in range(p.n_users):
            samples.append(np.abs(ch.h_bu[k]) ** 2 / p.pathloss("bu", d["bu"][k]))
        samples.append(np.abs(ch.h_be.ravel()) ** 2 / p.pathloss("be", d["be"]))
    pooled = np.concatenate(samples)
    assert pooled.size >= 1e5 / 2
    assert abs(pooled.mean() - 1.0) < 0.02


def test_rician_entry_power_matches_pathloss():
    # LoS steering entries have unit modulus, so the Rician mix preserves
    # E|h|^2 = L(d) for every beta.
    p = desk_params()
    d = p.link_distances()["bi"]
    acc = []
    for seed in range(800):
        acc.append(np.abs(generate_channels(p, seed).g) ** 2)
    mean_gain = np.mean(acc)
    assert abs(mean_gain / p.pathloss("bi", d) - 1.0) < 0.05


# ---------------------------------------------------------------------------
# effective channels and Q
# ---------------------------------------------------------------------------

def test_disabled_irs_reduces_to_direct_links():
    p = desk_params()
    rng = np.random.default_rng(0)
    ch = generate_channels(p, seed=5)
    bs, _ = random_design(p, rng)
    irs = IrsDesign.zero(p.n_irs)
    eff = effective_channels(ch, bs, irs, p)
    assert np.allclose(eff.h_eq, ch.h_bu)
    assert np.allclose(eff.f_eq, ch.h_be)
    assert np.allclose(eff.q_mat, ch.h_be @ bs.z_b @ ch.h_be.conj().T)


def test_all_reflect_kills_jamming_terms_exactly():
    p = desk_params()
    rng = np.random.default_rng(1)
    ch = generate_channels(p, seed=6)
    bs, irs = random_design(p, rng, alpha=np.ones(p.n_irs))
    eff = effective_channels(ch, bs, irs, p)
    # Q minus (AN + dynamic noise) leaves exactly zero
    dyn = p.noise_irs * (ch.h_ie * irs.phi) @ (ch.h_ie * irs.phi).conj().T
    zb_part = eff.f_eq @ bs.z_b @ eff.f_eq.conj().T
    assert np.allclose(eff.q_mat, (zb_part + dyn + zb_part.conj().T + dyn.conj().T) / 2, atol=1e-20)
    # and the user-side AN leak term vanishes
    leak = np.sum(np.abs(ch.h_iu[0].conj() * (1 - irs.alpha) * irs.phi) ** 2)
    assert leak == 0.0


@pytest.mark.slow
def test_q_matches_sampled_interference_covariance():
    p = desk_params(n_irs=8)
    rng = np.random.default_rng(3)
    ch = synthetic_channels(p, rng)
    bs, irs = random_design(p, rng, irs_scale=0.4)
    p_big_noise = p.with_updates(noise_irs=0.3)
    eff = effective_channels(ch, bs, irs, p_big_noise)

    z_lam, z_vec = np.linalg.eigh(bs.z_b)
    z_chol = z_vec * np.sqrt(np.clip(z_lam, 0, None))
    jam = ch.h_ie @ np.diag((1 - irs.alpha) * irs.phi)
    dyn = math.sqrt(p_big_noise.noise_irs) * ch.h_ie @ np.diag(irs.phi)
    acc = np.zeros((p.n_eve, p.n_eve), dtype=complex)
    n_total, chunk = 1_000_000, 100_000
    for i in range(n_total // chunk):
        r = np.random.default_rng(100 + i)

        def cn(dim):
            return (r.standard_normal((chunk, dim)) + 1j * r.standard_normal((chunk, dim))) / np.sqrt(2)

        y = cn(p.n_tx) @ (eff.f_eq @ z_chol).T + cn(p.n_irs) @ jam.T + cn(p.n_irs) @ dyn.T
        acc += y.T.conj() @ y  # note: rows are samples
    sample_cov = acc.conj() / n_total
    rel = np.linalg.norm(sample_cov - eff.q_mat) / np.linalg.norm(eff.q_mat)
    assert rel < 0.01


# ---------------------------------------------------------------------------
# SINR / leakage / secrecy
# ---------------------------------------------------------------------------

def _single_user_setup(power=2.0):
    p = desk_params(n_users=1, gamma_min_db=4.0)
    ch = generate_channels(p, seed=9)
    ch.h_bu = np.zeros_like(ch.h_bu)
    ch.h_bu[0, 0] = 1.0
    w = np.zeros((1, p.n_tx), dtype=complex)
    w[0, 0] = math.sqrt(power)
    bs = BsDesign(w=w, z_b=np.zeros((p.n_tx, p.n_tx), dtype=complex))
    irs = IrsDesign.zero(p.n_irs)
    return p, ch, bs, irs


def test_matched_single_link_sinr():
    power = 2.0
    p, ch, bs, irs = _single_user_setup(power)
    assert abs(user_sinr(ch, bs, irs, p, 0) - power / p.noise_user[0]) < 1e-6 * power / p.noise_user[0]


def test_zero_precoder_gives_zero_sinr_and_leakage():
    p = desk_params()
    rng = np.random.default_rng(4)
    ch = generate_channels(p, seed=11)
    bs, irs = random_design(p, rng)
    bs.w[0] = 0.0
    assert user_sinr(ch, bs, irs, p, 0) == 0.0
    assert eve_capacity(ch, bs, irs, p, 0) == 0.0


def test_denominator_floor_keeps_sinr_finite():
    p = desk_params()
    rng = np.random.default_rng(12)
    ch = generate_channels(p, seed=21)
    for _ in range(20):
        bs, irs = random_design(p, rng)
        g = user_sinr(ch, bs, irs, p, 0)
        assert np.isfinite(g) and g >= 0.0


def test_eve_capacity_scalar_reduction():
    p = desk_params(n_eve=1, n_users=1)
    ch = generate_channels(p, seed=2)
    ch.h_be = np.array([[1.0 + 0j, 0, 0, 0]])
    q_val, c_val = 0.3, 1.7
    z = np.zeros((4, 4), dtype=complex)
    z[0, 0] = q_val
    w = np.zeros((1, 4), dtype=complex)
    w[0, 0] = math.sqrt(c_val)
    bs = BsDesign(w=w, z_b=z)
    irs = IrsDesign.zero(p.n_irs)
    got = eve_capacity(ch, bs, irs, p, 0)
    assert abs(got - math.log2(1 + c_val / q_val)) < 1e-12


def test_singular_covariance_raises():
    p = desk_params().with_updates(noise_irs=0.0)
    ch = generate_channels(p, seed=3)
    bs = BsDesign(
        w=np.ones((p.n_users, p.n_tx), dtype=complex),
        z_b=np.zeros((p.n_tx, p.n_tx), dtype=complex),
    )
    irs = IrsDesign(phi=np.zeros(p.n_irs, dtype=complex), alpha=np.ones(p.n_irs))
    with pytest.raises(SingularLeakageCovariance):
        eve_capacity(ch, bs, irs, p, 0)


def test_leakage_forms_agree_on_random_instances():
    # determinant, scalar, trace, and max-eigenvalue forms agree pairwise
    p = desk_params(n_irs=6)
    rng = np.random.default_rng(8)
    for trial in range(1000):
        ch = synthetic_channels(p, rng)
        bs, irs = random_design(p, rng, irs_scale=0.5)
        p_loc = p.with_updates(noise_irs=0.2)
        eff = effective_channels(ch, bs, irs, p_loc)
        det_form = eve_capacity(ch, bs, irs, p_loc, 0)
        q, fw = eff.q_mat, eff.f_eq @ bs.w[0]
        m = np.outer(fw, fw.conj())
        trace_form = math.log2(1 + np.trace(np.linalg.solve(q, m)).real)
        lam, vec = np.linalg.eigh(q)
        q_isqrt = vec @ np.diag(lam**-0.5) @ vec.conj().T
        lmax_form = math.log2(1 + np.linalg.eigvalsh(q_isqrt @ m @ q_isqrt)[-1])
        assert abs(det_form - trace_form) < 1e-10
        assert abs(det_form - lmax_form) < 1e-10


def test_secrecy_rate_clamps_at_zero():
    p = desk_params()
    rng = np.random.default_rng(5)
    ch = generate_channels(p, seed=31)
    bs, irs = random_design(p, rng)
    for k in range(p.n_users):
        r = secrecy_rate(ch, bs, irs, p, k)
        assert r >= 0.0
        direct = user_rate(ch, bs, irs, p, k) - eve_capacity(ch, bs, irs, p, k)
        assert r == max(0.0, direct)


def test_secrecy_rate_target_construction():
    # tune a single-user instance to hit gamma = 4 dB and leakage 1.6 exactly;
    # the secrecy rate is then log2(1 + 10^0.4) - 1.6 ~= 0.2124
    p = desk_params(n_users=1, n_eve=2)
    ch = generate_channels(p, seed=17)
    irs = IrsDesign.zero(p.n_irs)
    gamma_t = 10 ** 0.4
    c_tol = 2 ** 1.6 - 1
    h = ch.h_bu[0]
    w0 = h / np.linalg.norm(h)
    a = np.abs(h.conj() @ w0) ** 2
    hbe = ch.h_be
    q0 = hbe @ hbe.conj().T  # Z = s*I gives Q = s*q0
    c0 = float((w0.conj() @ hbe.conj().T @ np.linalg.solve(q0, hbe @ w0)).real)
    b = float(np.linalg.norm(h) ** 2)
    s = gamma_t * p.noise_user[0] / (c_tol * a / c0 - gamma_t * b)
    assert s > 0
    t_sq = c_tol * s / c0
    bs = BsDesign(w=np.sqrt(t_sq) * w0[None, :], z_b=s * np.eye(p.n_tx, dtype=complex))
    assert abs(user_sinr(ch, bs, irs, p, 0) - gamma_t) < 1e-8 * gamma_t
    assert abs(eve_capacity(ch, bs, irs, p, 0) - 1.6) < 1e-8
    assert abs(secrecy_rate(ch, bs, irs, p, 0) - 0.2124) < 1e-3


# ---------------------------------------------------------------------------
# total power and feasibility
# ---------------------------------------------------------------------------

def test_total_power_examples():
    nt, m = 4, 6
    bs0 = BsDesign(w=np.zeros((1, nt), dtype=complex), z_b=np.zeros((nt, nt), dtype=complex))
    assert total_power(bs0, IrsDesign.zero(m)) == 0.0

    w = np.zeros((1, nt), dtype=complex)
    w[0, 0] = math.sqrt(0.5)
    z = np.zeros((nt, nt), dtype=complex)
    z[1, 1] = 0.1
    phi = np.full(m, math.sqrt(0.01 / m), dtype=complex)
    bs = BsDesign(w=w, z_b=z)
    irs = IrsDesign(phi=phi, alpha=np.ones(m))
    assert abs(total_power(bs, irs) - 0.61) < 1e-12

    # IRS at exactly the 10 dBm budget contributes 0.01 W
    p = desk_params(n_irs=m)
    phi_budget = np.full(m, math.sqrt(p.p_irs_max / m), dtype=complex)
    assert abs(IrsDesign(phi=phi_budget, alpha=np.ones(m)).irs_power() - 0.01) < 1e-15


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=0, max_value=2**31))
def test_total_power_phase_rotation_invariant(seed):
    rng = np.random.default_rng(seed)
    p = desk_params()
    bs, irs = random_design(p, rng)
    rotated = BsDesign(
        w=bs.w * np.exp(1j * rng.uniform(0, 2 * np.pi, (p.n_users, 1))),
        z_b=bs.z_b,
    )
    assert abs(total_power(bs, irs) - total_power(rotated, irs)) < 1e-12 * (1 + total_power(bs, irs))


def test_feasibility_zero_design_violates_sinr():
    p = desk_params()
    ch = generate_channels(p, seed=41)
    bs = BsDesign(w=np.zeros((p.n_users, p.n_tx), dtype=complex),
                  z_b=np.zeros((p.n_tx, p.n_tx), dtype=complex))
    rep = check_feasibility(ch, bs, IrsDesign.zero(p.n_irs), p)
    assert not rep.feasible
    assert np.all(rep.sinr < 0)
    # zero precoders leak nothing, so the caps hold trivially
    assert np.all(rep.leakage == p.c_max)


def test_feasibility_budget_slack():
    p = desk_params()
    ch = generate_channels(p, seed=42)
    rng = np.random.default_rng(0)
    bs, _ = random_design(p, rng)
    m = p.n_irs
    phi = np.full(m, math.sqrt(2 * p.p_irs_max / m), dtype=complex)  # 2x budget
    rep = check_feasibility(ch, bs, IrsDesign(phi=phi, alpha=np.ones(m)), p)
    assert abs(rep.irs_budget + p.p_irs_max) < 1e-12
    assert not rep.feasible


# ---------------------------------------------------------------------------
# sample-level oracle
# ---------------------------------------------------------------------------

def test_empirical_matches_closed_form_single_link():
    p, ch, bs, irs = _single_user_setup()
    est, se = empirical_sinr(ch, bs, irs, p, 0, n_samples=200_000, seed=7)
    gamma = user_sinr(ch, bs, irs, p, 0)
    assert abs(est - gamma) < 3 * se


def test_empirical_matches_closed_form_full_model():
    p = desk_params(n_irs=6)
    rng = np.random.default_rng(9)
    for trial in range(5):
        ch = synthetic_channels(p, rng)
        bs, irs = random_design(p, rng, irs_scale=0.3)
        p_loc = p.with_updates(noise_irs=0.1, noise_user=(0.5, 0.5))
        est, se = empirical_sinr(ch, bs, irs, p_loc, 0, n_samples=200_000, seed=50 + trial)
        gamma = user_sinr(ch, bs, irs, p_loc, 0)
        assert abs(est - gamma) < 3 * se


def test_empirical_se_shrinks_with_samples():
    p, ch, bs, irs = _single_user_setup()
    _, se1 = empirical_sinr(ch, bs, irs, p, 0, n_samples=100_000, seed=3)
    _, se2 = empirical_sinr(ch, bs, irs, p, 0, n_samples=200_000, seed=3)
    assert abs(se2 / se1 - 1 / math.sqrt(2)) < 0.1


def test_jamming_lowers_empirical_sinr():
    p = desk_params(n_irs=6)
    rng = np.random.default_rng(10)
    ch = synthetic_channels(p, rng)
    p_loc = p.with_updates(noise_user=(1.0, 1.0), p_irs_max=10.0)
    bs, _ = random_design(p_loc, rng)
    quiet = IrsDesign.zero(p.n_irs)
    jam = IrsDesign(phi=np.full(p.n_irs, 0.8, dtype=complex), alpha=np.zeros(p.n_irs))
    est_q, _ = empirical_sinr(ch, bs, quiet, p_loc, 0, n_samples=50_000, seed=1)
    est_j, _ = empirical_sinr(ch, bs, jam, p_loc, 0, n_samples=50_000, seed=1)
    assert est_j < est_q


def test_empirical_rejects_tiny_sample_counts():
    p, ch, bs, irs = _single_user_setup()
    with pytest.raises(ValueError):
        empirical_sinr(ch, bs, irs, p, 0, n_samples=100)
