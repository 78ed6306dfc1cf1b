"""Alternating optimization between the BS and IRS subproblems, baseline
schemes, and the infeasibility/restart policy.

Each outer round solves the BS subproblem for the current IRS design and
then re-optimizes the IRS for the extracted precoders; a round is accepted
only when it does not increase total power, so recorded histories are
non-increasing.  Because the IRS subproblem is myopic (it minimizes IRS
power for fixed BS variables, so it never volunteers jamming that only pays
off through the next BS solve), the proposed scheme multi-starts from an
all-reflect and a half-jamming initialization, additionally evaluates the
frozen-all-reflect and IRS-off configurations, and returns the best feasible
outcome.  The fallback candidates also make the scheme ordering
(proposed <= all-reflect <= no-IRS) hold realization by realization
rather than only on average.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import conic
from .bs_opt import BsSubproblemResult, ExtractionFailure, solve_bs_problem
from .irs_opt import ScaIterate, default_irs_init, sca_optimize
from .sysmodel import (
    BsDesign,
    ChannelSet,
    IrsDesign,
    SystemParams,
    check_feasibility,
    total_power,
)

SCHEMES = ("proposed", "all_reflect", "no_irs")

STATUS_FEASIBLE = "Feasible"
STATUS_INFEASIBLE = "Infeasible"
STATUS_NOT_CONVERGED = "NotConverged"

FINAL_CHECK_TOL = 1e-5


@dataclass(frozen=True)
class AoConfig:
    """Alternating-optimization knobs; defaults follow the artifact ledger."""

    scheme: str = "proposed"
    tau_max: int = 30
    ao_tol: float = 1e-3
    sca_t_max: int = 20
    sca_tol: float = 1e-4
    solver_tol: float = 1e-7
    rho: float = 10.0
    restarts: int = 3
    all_reflect_keeps_bs_an: bool = True
    fixed_alpha: tuple | None = None  # frozen mode pattern (mode-search oracle)

    def __post_init__(self):
        if self.tau_max < 1:
            raise ValueError("tau_max must be >= 1")
        if min(self.ao_tol, self.sca_tol, self.solver_tol) <= 0:
            raise ValueError("tolerances must be positive")


@dataclass
class AoRound:
    tau: int
    total_power: float
    bs_power: float
    irs_power: float
    bs_status: str
    tightness: list
    sca_status: str | None = None
    sca_iterations: int = 0


@dataclass
class AoHistory:
    rounds: list[AoRound] = field(default_factory=list)
    status: str = STATUS_NOT_CONVERGED
    init_label: str = ""
    restarts_used: int = 0

    @property
    def total_powers(self) -> list[float]:
        return [r.total_power for r in self.rounds]


@dataclass
class AoResult:
    status: str
    bs: BsDesign | None
    irs: IrsDesign | None
    history: AoHistory

    @property
    def total_power(self) -> float:
        if self.bs is None or self.irs is None:
            return math.nan
        return total_power(self.bs, self.irs)


# ---------------------------------------------------------------------------
# initial IRS iterates
# ---------------------------------------------------------------------------

def _half_jam_init(ch: ChannelSet, params: SystemParams) -> ScaIterate:
    """Alternating reflect/jam modes with the full budget spread evenly."""
    m = params.n_irs
    base = default_irs_init(ch, params)
    alpha = np.array([1.0, 0.0] * (m // 2) + [1.0] * (m % 2))
    phi = math.sqrt(params.p_irs_max / m) * np.exp(1j * np.angle(base.phi))
    return ScaIterate(phi=phi, u=alpha * np.conj(phi), alpha=alpha)


def _random_init(ch: ChannelSet, params: SystemParams, seed: int) -> ScaIterate:
    rng = np.random.default_rng(seed)
    m = params.n_irs
    alpha = (rng.random(m) < 0.5).astype(float)
    phi = math.sqrt(params.p_irs_max / (2 * m)) * np.exp(1j * rng.uniform(0, 2 * np.pi, m))
    return ScaIterate(phi=phi, u=alpha * np.conj(phi), alpha=alpha)


def _design_from(iterate: ScaIterate) -> IrsDesign:
    alpha = np.round(np.asarray(iterate.alpha, dtype=float))
    return IrsDesign(phi=np.asarray(iterate.phi, dtype=complex).copy(), alpha=alpha)


# ---------------------------------------------------------------------------
# one AO run
# ---------------------------------------------------------------------------

def _run_ao(ch: ChannelSet, params: SystemParams, cfg: AoConfig,
            init: ScaIterate, fixed_alpha: np.ndarray | None,
            label: str) -> AoResult:
    """P3/SCA alternation from one initialization with monotone acceptance."""
    history = AoHistory(init_label=label)
    irs = _design_from(init)
    if fixed_alpha is not None:
        irs = IrsDesign(phi=irs.phi, alpha=np.asarray(fixed_alpha, dtype=float))
    include_an = cfg.all_reflect_keeps_bs_an or cfg.scheme != "all_reflect"
    best: tuple[BsDesign, IrsDesign, float] | None = None
    pending_irs = irs
    for tau in range(cfg.tau_max):
        try:
            r = solve_bs_problem(
                ch, pending_irs, params,
                tol=cfg.solver_tol, include_bs_an=include_an,
            )
        except ExtractionFailure:
            break
        if r.status != conic.OPTIMAL or r.extracted is None:
            break
        total = r.extracted.bs_power() + pending_irs.irs_power()
        if best is not None and total > best[2] + 1e-9:
            break  # monotone safeguard: the IRS update did not pay off
        prev_total = best[2] if best is not None else None
        best = (r.extracted, pending_irs, total)
        history.rounds.append(AoRound(
            tau=tau,
            total_power=total,
            bs_power=r.extracted.bs_power(),
            irs_power=pending_irs.irs_power(),
            bs_status=r.status,
            tightness=list(np.asarray(r.tightness)),
        ))
        if prev_total is not None and abs(prev_total - total) < cfg.ao_tol * max(prev_total, 1e-12):
            break
        if tau == cfg.tau_max - 1:
            break
        sca = sca_optimize(
            ch, r.extracted, params,
            init=ScaIterate(phi=best[1].phi, u=best[1].u, alpha=best[1].alpha),
            t_max=cfg.sca_t_max, tol=cfg.sca_tol,
            fixed_alpha=np.asarray(fixed_alpha, dtype=float) if fixed_alpha is not None else None,
            solver_tol=cfg.solver_tol, rho=cfg.rho,
        )
        history.rounds[-1].sca_status = sca.status
        history.rounds[-1].sca_iterations = sca.iterations
        if sca.design is None:
            break
        pending_irs = sca.design

    if best is None:
        history.status = STATUS_INFEASIBLE
        return AoResult(status=STATUS_INFEASIBLE, bs=None, irs=None, history=history)

    bs, irs, total = best
    # accept a trailing (never re-priced) IRS update only if it checks out
    # physically and lowers total power
    if pending_irs is not irs:
        trail_total = bs.bs_power() + pending_irs.irs_power()
        if trail_total <= total - 1e-12:
            rep = check_feasibility(ch, bs, pending_irs, params, tol=FINAL_CHECK_TOL)
            if rep.feasible:
                irs, total = pending_irs, trail_total
                history.rounds.append(AoRound(
                    tau=history.rounds[-1].tau + 1,
                    total_power=trail_total,
                    bs_power=bs.bs_power(),
                    irs_power=pending_irs.irs_power(),
                    bs_status="Reused",
                    tightness=[],
                ))
    rep = check_feasibility(ch, bs, irs, params, tol=FINAL_CHECK_TOL)
    history.status = STATUS_FEASIBLE if rep.feasible else STATUS_NOT_CONVERGED
    return AoResult(status=history.status, bs=bs, irs=irs, history=history)


def _zero_irs_result(ch: ChannelSet, params: SystemParams, cfg: AoConfig) -> AoResult:
    """Single BS solve with the IRS disabled."""
    history = AoHistory(init_label="irs_off")
    irs = IrsDesign.zero(params.n_irs)
    try:
        r = solve_bs_problem(ch, irs, params, tol=cfg.solver_tol)
    except ExtractionFailure:
        history.status = STATUS_INFEASIBLE
        return AoResult(status=STATUS_INFEASIBLE, bs=None, irs=None, history=history)
    if r.status != conic.OPTIMAL or r.extracted is None:
        history.status = STATUS_INFEASIBLE
        return AoResult(status=STATUS_INFEASIBLE, bs=None, irs=None, history=history)
    history.rounds.append(AoRound(
        tau=0,
        total_power=r.extracted.bs_power(),
        bs_power=r.extracted.bs_power(),
        irs_power=0.0,
        bs_status=r.status,
        tightness=list(np.asarray(r.tightness)),
    ))
    rep = check_feasibility(ch, r.extracted, irs, params, tol=FINAL_CHECK_TOL)
    history.status = STATUS_FEASIBLE if rep.feasible else STATUS_NOT_CONVERGED
    return AoResult(status=history.status, bs=r.extracted, irs=irs, history=history)


def _best_result(candidates: list[AoResult]) -> AoResult:
    feasible = [c for c in candidates if c.status == STATUS_FEASIBLE]
    if not feasible:
        # prefer a NotConverged run over plain infeasibility for diagnostics
        for c in candidates:
            if c.status == STATUS_NOT_CONVERGED:
                return c
        return candidates[0]
    return min(feasible, key=lambda c: c.total_power)


def _with_restarts(ch, params, cfg, init, fixed_alpha, label, seed_base):
    """Spec restart policy, extended to re-randomize modes as well as phases
    (with all modes reflecting, realizations with more Eve antennas than BS
    antennas are infeasible for any phases)."""
    result = _run_ao(ch, params, cfg, init, fixed_alpha, label)
    tries = 0
    while result.status == STATUS_INFEASIBLE and tries < cfg.restarts:
        tries += 1
        restart = _random_init(ch, params, seed=seed_base + tries)
        if fixed_alpha is not None:
            restart = ScaIterate(
                phi=restart.phi,
                u=np.asarray(fixed_alpha, dtype=float) * np.conj(restart.phi),
                alpha=np.asarray(fixed_alpha, dtype=float),
            )
        result = _run_ao(ch, params, cfg, restart, fixed_alpha, f"{label}_restart{tries}")
    result.history.restarts_used = tries
    return result


# ---------------------------------------------------------------------------
# public schemes
# ---------------------------------------------------------------------------

def alternating_optimize(ch: ChannelSet, params: SystemParams,
                         cfg: AoConfig | None = None) -> AoResult:
    """Run the configured scheme on one channel realization."""
    cfg = cfg or AoConfig()
    if cfg.scheme == "no_irs":
        return baseline_no_irs(ch, params, cfg)
    if cfg.scheme == "all_reflect":
        return baseline_all_reflect(ch, params, cfg)
    if cfg.scheme != "proposed":
        if cfg.fixed_alpha is None:
            raise ValueError(f"unknown scheme {cfg.scheme!r}")
    seed = params.rng_seed
    if cfg.fixed_alpha is not None:
        pattern = np.asarray(cfg.fixed_alpha, dtype=float)
        init = default_irs_init(ch, params)
        init = ScaIterate(phi=init.phi, u=pattern * np.conj(init.phi), alpha=pattern)
        return _with_restarts(ch, params, cfg, init, pattern, "fixed_modes", seed)

    candidates = [
        _with_restarts(ch, params, cfg, default_irs_init(ch, params), None,
                       "all_reflect_init", seed),
        _with_restarts(ch, params, cfg, _half_jam_init(ch, params), None,
                       "half_jam_init", seed + 1000),
        _run_ao(ch, params, cfg, default_irs_init(ch, params),
                np.ones(params.n_irs), "frozen_reflect"),
        _zero_irs_result(ch, params, cfg),
    ]
    return _best_result(candidates)


def baseline_all_reflect(ch: ChannelSet, params: SystemParams,
                         cfg: AoConfig | None = None) -> AoResult:
    """All elements reflect (no IRS artificial noise); amplitudes and phases
    are still optimized, and the BS keeps its AN unless configured off."""
    cfg = replace(cfg or AoConfig(), scheme="all_reflect")
    ones = np.ones(params.n_irs)
    candidates = [
        _with_restarts(ch, params, cfg, default_irs_init(ch, params), ones,
                       "all_reflect", params.rng_seed),
        _zero_irs_result(ch, params, cfg),
    ]
    return _best_result(candidates)


def baseline_no_irs(ch: ChannelSet, params: SystemParams,
                    cfg: AoConfig | None = None) -> AoResult:
    """No IRS deployed: a single BS solve against the direct channels."""
    cfg = replace(cfg or AoConfig(), scheme="no_irs")
    return _zero_irs_result(ch, params, cfg)


def run_scheme(scheme: str, ch: ChannelSet, params: SystemParams,
               cfg: AoConfig | None = None) -> AoResult:
    base = cfg or AoConfig()
    return alternating_optimize(ch, params, replace(base, scheme=scheme))
