import math

import numpy as np
import pytest

from airsec import conic
from airsec.bs_opt import (
    build_bs_problem,
    extract_rank_one,
    gauge_instance,
    leakage_tolerance,
    solve_bs_problem,
)
from airsec.sysmodel import (
    BsDesign,
    IrsDesign,
    check_feasibility,
    db_to_linear,
    desk_params,
    effective_channels,
    eve_capacity,
    generate_channels,
)


def half_budget_irs(params, seed=0, alpha=None):
    rng = np.random.default_rng(seed)
    m = params.n_irs
    phi = math.sqrt(params.p_irs_max / (2 * m)) * np.exp(1j * rng.uniform(0, 2 * np.pi, m))
    if alpha is None:
        alpha = np.ones(m)
    return IrsDesign(phi=phi, alpha=np.asarray(alpha, dtype=float))


def test_leakage_tolerance_value():
    # 2^1.6 - 1 = 2.031433...
    assert abs(leakage_tolerance(1.6) - 2.0314) < 1e-4
    assert abs(leakage_tolerance(1.6) - (2 ** 1.6 - 1)) < 1e-15


def test_problem_structure_counts():
    p = desk_params()
    ch = generate_channels(p, seed=0)
    prob = build_bs_problem(ch, half_budget_irs(p), p)
    kinds = [blk.kind for blk in prob.cones]
    # 3 covariance PSD blocks + 2 leakage LMI blocks + 2 SINR slacks
    assert kinds.count("psd") == 5
    assert sum(blk.length for blk in prob.cones if blk.kind == "nonneg") == 2
    for k in range(p.n_users):
        assert f"w_mat_{k}" in prob.variable_map
        assert f"leak_lmi_{k}" in prob.variable_map
    assert "z_b" in prob.variable_map
    # LMI blocks are the embedding of an N_E x N_E Hermitian matrix
    for blk in prob.cones:
        if blk.kind == "psd" and blk.side != 2 * p.n_tx:
            assert blk.side == 2 * p.n_eve


def test_desk_instance_solves_tight():
    p = desk_params()
    ch = generate_channels(p, seed=1)
    res = solve_bs_problem(ch, half_budget_irs(p, seed=1), p)
    assert res.status == conic.OPTIMAL
    assert res.recovery == "eigen"
    assert np.all(res.tightness <= 1e-6)
    assert res.feasibility.feasible
    # extracted power matches the relaxation objective up to the rank-one gap
    extracted_bs_power = res.extracted.bs_power()
    assert abs(extracted_bs_power - res.objective) <= 1e-4 * max(1.0, res.objective)


def test_certified_solution():
    p = desk_params()
    ch = generate_channels(p, seed=2)
    prob = build_bs_problem(ch, half_budget_irs(p, seed=2), p)
    sol = conic.solve(prob, tol=1e-8)
    assert sol.status == conic.OPTIMAL
    assert conic.certify_solution(prob, sol, tol=1e-7)["all_ok"]


def test_no_irs_reduction_consistency():
    # a disabled IRS turns the subproblem into the classic AN-aided SDP and
    # the solution must satisfy the closed-form constraints
    p = desk_params()
    ch = generate_channels(p, seed=3)
    irs = IrsDesign.zero(p.n_irs)
    res = solve_bs_problem(ch, irs, p)
    assert res.status == conic.OPTIMAL
    rep = check_feasibility(ch, res.extracted, irs, p, tol=1e-5)
    assert rep.feasible


def test_duplicate_users_split_power_symmetrically():
    # identical channels force gamma < 1 (0 dB): each user sees the other's
    # full signal as interference, so pick a -4 dB target
    p = desk_params(gamma_min_db=-4.0)
    ch = generate_channels(p, seed=4)
    ch.h_bu[1] = ch.h_bu[0]
    ch.h_iu[1] = ch.h_iu[0]
    res = solve_bs_problem(ch, half_budget_irs(p, seed=4), p)
    assert res.status == conic.OPTIMAL
    tr = [float(np.trace(w).real) for w in res.w_mats]
    assert abs(tr[0] - tr[1]) <= 1e-5 * max(1.0, max(tr))


def test_objective_monotone_in_sinr_target():
    p0 = desk_params()
    ch = generate_channels(p0, seed=5)
    irs = half_budget_irs(p0, seed=5)
    vals = []
    for db in (0.0, 4.0, 8.0):
        p = desk_params(gamma_min_db=db)
        res = solve_bs_problem(ch, irs, p)
        assert res.status == conic.OPTIMAL
        vals.append(res.objective)
    assert vals[0] <= vals[1] + 1e-9 and vals[1] <= vals[2] + 1e-9


def test_infeasible_when_target_exceeds_leakage_headroom():
    # with as many Eve antennas as BS antennas and no IRS, the leakage cap
    # forces tol*Z >= W, so SINR targets above the linear cap are impossible
    p = desk_params(n_eve=4, gamma_min_db=4.0)  # gamma = 2.51 > tol = 2.03
    ch = generate_channels(p, seed=6)
    res = solve_bs_problem(ch, IrsDesign.zero(p.n_irs), p)
    assert res.status == conic.PRIMAL_INFEASIBLE

    p_easy = desk_params(n_eve=4, gamma_min_db=0.0)  # gamma = 1 < tol
    res2 = solve_bs_problem(generate_channels(p_easy, seed=6), IrsDesign.zero(p_easy.n_irs), p_easy)
    assert res2.status == conic.OPTIMAL


def test_lmi_iff_logdet_cap():
    # the LMI holds exactly when the log-det leakage is below the cap
    p = desk_params(n_irs=6)
    rng = np.random.default_rng(7)
    agree = 0
    total = 0
    for trial in range(1000):
        m, nt, ne = p.n_irs, p.n_tx, p.n_eve

        def cn(*shape):
            return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)

        from airsec.sysmodel import ChannelSet

        ch = ChannelSet(g=cn(m, nt), h_iu=cn(2, m), h_ie=cn(ne, m), h_bu=cn(2, nt), h_be=cn(ne, nt))
        w = cn(2, nt) * rng.uniform(0.2, 2.0)
        a = cn(nt, nt)
        bs = BsDesign(w=w, z_b=(a @ a.conj().T) / nt)
        irs = IrsDesign(phi=0.5 * cn(m), alpha=(rng.random(m) < 0.5).astype(float))
        p_loc = p.with_updates(noise_irs=0.3)
        cap = p_loc.c_max[0]
        c_e = eve_capacity(ch, bs, irs, p_loc, 0)
        if abs(c_e - cap) < 1e-9:
            continue
        eff = effective_channels(ch, bs, irs, p_loc)
        lmi = leakage_tolerance(cap) * eff.q_mat - np.outer(eff.f_eq @ bs.w[0], (eff.f_eq @ bs.w[0]).conj())
        lmi_psd = np.linalg.eigvalsh((lmi + lmi.conj().T) / 2).min() >= -1e-9 * np.linalg.norm(lmi)
        agree += int((c_e <= cap) == lmi_psd)
        total += 1
    assert total > 900
    assert agree == total


def test_extract_rank_one_cases():
    rng = np.random.default_rng(8)
    v = rng.standard_normal(4) + 1j * rng.standard_normal(4)
    w, gap = extract_rank_one(np.outer(v, v.conj()))
    assert gap < 1e-12
    phase = w @ v.conj()
    phase /= abs(phase)
    assert np.allclose(w, phase * v, atol=1e-8)

    w, gap = extract_rank_one(np.diag([1.0, 1e-9]))
    assert abs(gap - 1e-9) < 1e-12
    assert np.allclose(np.abs(w), [1.0, 0.0], atol=1e-6)

    w, gap = extract_rank_one(np.zeros((3, 3)))
    assert gap == 0.0 and np.allclose(w, 0)


def test_gauge_preserves_metric_ratios():
    p = desk_params()
    ch = generate_channels(p, seed=9)
    irs = half_budget_irs(p, seed=9)
    inst = gauge_instance(ch, irs, p)
    rng = np.random.default_rng(0)
    w = rng.standard_normal((p.n_users, p.n_tx)) + 1j * rng.standard_normal((p.n_users, p.n_tx))
    bs = BsDesign(w=w, z_b=np.eye(p.n_tx, dtype=complex) * 0.1)
    eff = effective_channels(ch, bs, irs, p)
    s2 = 1.0 / inst.sigma_ref
    assert np.allclose(inst.h_eq, math.sqrt(s2) * eff.h_eq)
    assert np.allclose(inst.f_eq, math.sqrt(s2) * eff.f_eq)
    # gauged Q constant equals scaled jamming + dynamic part (up to the regularizer)
    q_noan = eff.q_mat - eff.f_eq @ bs.z_b @ eff.f_eq.conj().T
    assert np.allclose(inst.q_const - 1e-12 * np.eye(p.n_eve), s2 * q_noan, atol=1e-9)


def test_bs_an_disabled_pins_z():
    # use a half-jamming IRS so the Eve covariance keeps real rank without AN
    p = desk_params()
    ch = generate_channels(p, seed=10)
    alpha = np.array([1, 0] * (p.n_irs // 2), dtype=float)
    res = solve_bs_problem(ch, half_budget_irs(p, seed=10, alpha=alpha), p,
                           include_bs_an=False)
    assert res.status == conic.OPTIMAL
    assert np.max(np.abs(res.z_b)) < 1e-9
