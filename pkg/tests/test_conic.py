import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from airsec.conic import (
    DUAL_INFEASIBLE,
    OPTIMAL,
    PRIMAL_INFEASIBLE,
    ConicProblem,
    ProblemBuilder,
    certify_solution,
    embed_hermitian,
    herm_pack,
    herm_trace_row,
    herm_unpack,
    smat,
    solve,
    svec,
    svec_len,
)


# ---------------------------------------------------------------------------
# embedding
# ---------------------------------------------------------------------------

def test_embed_real_scalar():
    out = embed_hermitian(np.array([[2.0]]))
    assert np.allclose(out, np.array([[2.0, 0.0], [0.0, 2.0]]))


def test_embed_pauli_y_eigenvalues():
    h = np.array([[0.0, -1j], [1j, 0.0]])
    out = embed_hermitian(h)
    eig = np.sort(np.linalg.eigvalsh(out))
    assert np.allclose(eig, [-1.0, -1.0, 1.0, 1.0], atol=1e-12)


def test_embed_random_psd_stays_psd():
    rng = np.random.default_rng(7)
    b = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    h = b @ b.conj().T
    assert np.linalg.eigvalsh(embed_hermitian(h)).min() >= -1e-10


def test_embed_rejects_non_hermitian():
    with pytest.raises(ValueError):
        embed_hermitian(np.array([[0.0, 1.0], [2.0, 0.0]]))


def test_embed_psd_iff_psd_500_random():
    rng = np.random.default_rng(41)
    for _ in range(500):
        n = rng.integers(1, 5)
        b = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        h = (b + b.conj().T) / 2
        h += np.eye(n) * rng.normal(scale=1.0)
        direct = np.linalg.eigvalsh(h).min()
        embedded = np.linalg.eigvalsh(embed_hermitian(h)).min()
        assert (direct >= 0) == (embedded >= -1e-12 * max(1.0, abs(direct)))
        assert abs(direct - embedded) <= 1e-10 * max(1.0, abs(direct))


# ---------------------------------------------------------------------------
# svec / Hermitian coordinates
# ---------------------------------------------------------------------------

@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=1, max_value=6), st.integers(min_value=0, max_value=2**31))
def test_svec_roundtrip_and_isometry(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, n))
    m = (a + a.T) / 2
    v = svec(m)
    assert v.size == svec_len(n)
    assert np.allclose(smat(v, n), m)
    assert np.isclose(v @ v, np.sum(m * m))


@settings(max_examples=50, deadline=None)
@given(st.integers(min_value=1, max_value=6), st.integers(min_value=0, max_value=2**31))
def test_herm_pack_roundtrip_and_trace_row(n, seed):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    x = (a + a.conj().T) / 2
    coords = herm_pack(x)
    assert coords.size == n * n
    assert np.allclose(herm_unpack(coords, n), x)
    b = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    coeff = (b + b.conj().T) / 2
    assert np.isclose(herm_trace_row(coeff) @ coords, np.trace(coeff @ x).real)


# ---------------------------------------------------------------------------
# solve fixtures
# ---------------------------------------------------------------------------

def _fixture_sdp():
    # minimize t subject to [[t, 1], [1, t]] PSD; optimum t* = 1
    b = ProblemBuilder()
    t_off = b.add_free_block("t", 1)
    s_off = b.add_psd_block(2, "lmi")
    b.add_objective([t_off], [1.0])
    b.add_eq_row([s_off + 0, t_off], [1.0, -1.0], 0.0)  # s00 = t
    b.add_eq_row([s_off + 1], [1.0], np.sqrt(2.0))      # s01*sqrt2 scaling
    b.add_eq_row([s_off + 2, t_off], [1.0, -1.0], 0.0)  # s11 = t
    return b.finalize()


def _fixture_lp():
    # minimize x subject to x >= 3
    b = ProblemBuilder()
    x_off = b.add_free_block("x", 1)
    s_off = b.add_nonneg_block(1)
    b.add_objective([x_off], [1.0])
    b.add_eq_row([x_off, s_off], [1.0, -1.0], 3.0)  # x - s = 3
    return b.finalize()


def test_sdp_fixture_optimum():
    sol = solve(_fixture_sdp())
    assert sol.status == OPTIMAL
    assert abs(sol.objective_value - 1.0) < 1e-6


def test_lp_fixture_optimum():
    sol = solve(_fixture_lp())
    assert sol.status == OPTIMAL
    assert abs(sol.objective_value - 3.0) < 1e-6


def test_contradictory_bounds_primal_infeasible():
    # x >= 1 and -x >= 0
    b = ProblemBuilder()
    x_off = b.add_free_block("x", 1)
    s_off = b.add_nonneg_block(2)
    b.add_objective([x_off], [1.0])
    b.add_eq_row([x_off, s_off + 0], [1.0, -1.0], 1.0)
    b.add_eq_row([x_off, s_off + 1], [-1.0, -1.0], 0.0)
    sol = solve(b.finalize())
    assert sol.status == PRIMAL_INFEASIBLE


def test_unbounded_below_dual_infeasible():
    # minimize x subject to x <= 0 (s = -x >= 0): unbounded below
    b = ProblemBuilder()
    x_off = b.add_free_block("x", 1)
    s_off = b.add_nonneg_block(1)
    b.add_objective([x_off], [1.0])
    b.add_eq_row([x_off, s_off], [-1.0, -1.0], 0.0)
    sol = solve(b.finalize())
    assert sol.status == DUAL_INFEASIBLE


def test_kept_cone_block_without_definitions():
    # same LP but written with the slack participating in two rows, so the
    # elimination pass must keep it as an explicit cone variable:
    # x - s = 3 and x + s = 2x - 3  <=>  s = x - 3
    b = ProblemBuilder()
    x_off = b.add_free_block("x", 1)
    s_off = b.add_nonneg_block(1)
    b.add_objective([x_off], [1.0])
    b.add_eq_row([x_off, s_off], [1.0, -1.0], 3.0)
    b.add_eq_row([x_off, s_off], [-1.0, 1.0], -3.0)
    sol = solve(b.finalize())
    assert sol.status == OPTIMAL
    assert abs(sol.objective_value - 3.0) < 1e-6


# ---------------------------------------------------------------------------
# certification
# ---------------------------------------------------------------------------

def test_certify_solver_output_passes():
    p = _fixture_sdp()
    sol = solve(p, tol=1e-8)
    rep = certify_solution(p, sol, tol=1e-7)
    assert rep["all_ok"]


def test_certify_detects_perturbed_equalities():
    p = _fixture_sdp()
    sol = solve(p)
    sol.x = sol.x.copy()
    sol.x[1] += 1e-3
    rep = certify_solution(p, sol, tol=1e-7)
    assert not rep["equalities_ok"]


def test_certify_hand_built_point_without_solver():
    # feasible point for the LP fixture: x = 5, s = 2
    from airsec.conic import ConicSolution

    p = _fixture_lp()
    sol = ConicSolution(
        status=OPTIMAL,
        x=np.array([5.0, 2.0]),
        objective_value=5.0,
        residuals={},
    )
    rep = certify_solution(p, sol, tol=1e-9)
    assert rep["equalities_ok"] and rep["cones_ok"] and rep["objective_ok"]


def test_certify_at_10x_tolerance_across_random_problems():
    rng = np.random.default_rng(3)
    for k in range(20):
        # minimize c'y s.t. diag(y) + M0 PSD, y >= lower bound rows
        n = int(rng.integers(2, 5))
        b = ProblemBuilder()
        y_off = b.add_free_block("y", n)
        s_off = b.add_psd_block(n)
        lo_off = b.add_nonneg_block(n)
        a = rng.standard_normal((n, n))
        m0 = (a + a.T) / 2
        b.add_objective(np.arange(y_off, y_off + n), np.ones(n))
        k_idx = 0
        for i in range(n):
            for j in range(i, n):
                cols = [s_off + k_idx]
                vals = [1.0]
                rhs = m0[i, j] * (np.sqrt(2.0) if i != j else 1.0)
                if i == j:
                    cols.append(y_off + i)
                    vals.append(-1.0)
                b.add_eq_row(cols, vals, rhs)
                k_idx += 1
        for i in range(n):
            b.add_eq_row([y_off + i, lo_off + i], [1.0, -1.0], -10.0)
        p = b.finalize()
        sol = solve(p, tol=1e-8)
        assert sol.status == OPTIMAL
        assert certify_solution(p, sol, tol=1e-7)["all_ok"]


# ---------------------------------------------------------------------------
# duality and traces
# ---------------------------------------------------------------------------

def test_weak_duality_on_iteration_trace():
    for p in (_fixture_sdp(), _fixture_lp()):
        sol = solve(p, tol=1e-8)
        assert sol.status == OPTIMAL
        # trace lines carry 5 significant digits, so allow print rounding
        assert sol.trace or sol.iterations == 0
        for rec in sol.trace:
            assert rec["dcost"] <= rec["pcost"] + 1e-6 + 1e-4 * abs(rec["pcost"])
        assert (
            sol.residuals["dual_objective"]
            <= sol.residuals["primal_objective"] + 1e-6
        )


def test_residuals_below_tolerance_on_optimal():
    sol = solve(_fixture_sdp(), tol=1e-8)
    assert sol.status == OPTIMAL
    assert sol.residuals["primal"] <= 1e-8
    assert sol.residuals["dual"] <= 1e-8


# ---------------------------------------------------------------------------
# JSON debug dump
# ---------------------------------------------------------------------------

def test_json_roundtrip_preserves_solution():
    p = _fixture_sdp()
    q = ConicProblem.from_json(p.to_json())
    s1, s2 = solve(p), solve(q)
    assert s1.status == s2.status == OPTIMAL
    assert abs(s1.objective_value - s2.objective_value) < 1e-9
    assert q.variable_map == p.variable_map
