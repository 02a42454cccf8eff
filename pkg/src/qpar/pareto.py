"""Minimize the loss rate at fixed real frequency and sweep the frontier.

Each iteration solves a box-constrained linear program over perturbations
of ``1/eps`` (one unknown per fiber of the feasible family): maximize the
predicted decrease of the loss rate with the real part of the shift pinned.
The program is solved exactly by sorting the breakpoints of its Lagrange
multiplier.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np

from .eigensolve import (DEFAULT_TOL, EigenPair, EigenSolveError, NotFirstOrderOptimal,
                         SearchWindow, find_eigs, track)
from .elverify import ELReport, el_report
from .maxwell import DiscreteOperator, assemble
from .medium import Direction, MaterialScene, apply_direction, bang_bang_round, fiber_labels
from .sensitivity import DegenerateError, SensitivityDensity, density

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptimizeSettings:
    tol_eigen: float = DEFAULT_TOL
    tol_alpha: float = 1e-6          # relative to alpha
    el_tol: float = 1e-6
    drift_budget: float = 1e-4       # relative to alpha
    armijo: float = 0.1
    trust: float = 1.0
    min_trust: float = 1e-7
    max_iter: int = 400
    max_backtracks: int = 14
    max_polish: int = 60
    max_steer: int = 200
    stat_tol: float = 1e-9
    window_radius: float = 1.0       # relative to alpha
    dead_band: float = 1e-10
    correction_steps: int = 2
    seed: int = 0
    variant: str | None = None


@dataclass(frozen=True)
class NotAchievable:
    alpha: float
    reason: str


class NotAchievableError(RuntimeError):
    def __init__(self, report: NotAchievable):
        super().__init__(f"alpha={report.alpha}: {report.reason}")
        self.report = report


@dataclass(frozen=True)
class AtStationaryPoint:
    value: float
    zero_density: bool = False


@dataclass(frozen=True)
class StepPlan:
    p: Direction
    predicted_shift: complex
    trust_step: float
    value: float
    multiplier: float
    re_target: float = 0.0
    feasible: bool = True


@dataclass(frozen=True)
class LPSolution:
    q: np.ndarray
    multiplier: float
    value: float
    re_sum: float
    feasible: bool
    fractional: int          # index of the cell set strictly inside its box, -1 if none


@dataclass(frozen=True)
class ParetoPoint:
    alpha: float
    gamma: float
    scene: MaterialScene
    pair: EigenPair
    el_report: ELReport | None
    iterations: int
    converged: bool
    gamma_trace: tuple[float, ...] = ()
    polish_steps: int = 0
    note: str = ""

    @property
    def q_factor(self) -> float:
        return self.alpha / (2 * self.gamma) if self.gamma > 0 else float("inf")


def solve_box_lp(G: np.ndarray, lo: np.ndarray, hi: np.ndarray, target: float = 0.0) -> LPSolution:
    """Maximize ``Im sum q G`` subject to ``Re sum q G = target`` and ``lo <= q <= hi``.

    Raising ``Im omega`` lowers the loss rate.  For multiplier ``lam`` the
    maximizer of ``sum q (Im G - lam Re G)`` sits at a box corner in every
    cell; the constraint sum is monotone in ``lam``, so walking the sorted
    breakpoints ``Im G / Re G`` finds the cell that must
    take a fractional value.  When ``target`` is out of reach the closest
    corner solution is returned with ``feasible=False``.
    """
    a, b = G.real, G.imag
    q = np.zeros(G.size)
    flat = a == 0
    q[flat & (b > 0)] = hi[flat & (b > 0)]
    q[flat & (b < 0)] = lo[flat & (b < 0)]
    act = np.flatnonzero(~flat)
    big = np.where(a[act] > 0, a[act] * hi[act], a[act] * lo[act])
    small = np.where(a[act] > 0, a[act] * lo[act], a[act] * hi[act])
    lam = b[act] / a[act]
    order = np.argsort(lam, kind="stable")
    drops = (big - small)[order]
    r_start = float(np.sum(a[flat] * q[flat]) + big.sum())
    after = r_start - np.cumsum(drops)           # constraint sum once breakpoint k is passed
    k = int(np.searchsorted(-after, -target, side="left"))  # first k with after[k] <= target
    feasible = True
    frac = -1
    if act.size == 0:
        feasible = abs(r_start - target) <= 1e-15 * max(1.0, abs(target))
        mult = 0.0
    elif target > r_start:
        feasible = False
        k = -1
        mult = -np.inf
    elif k >= act.size:
        feasible = abs(after[-1] - target) <= 1e-14 * max(1.0, abs(np.abs(a) @ (hi - lo)))
        k = act.size
        mult = np.inf
    else:
        mult = float(lam[order[k]])
    # cells before k at their reduced corner, after k at their big corner
    contrib = big.copy()
    if k > 0:
        passed = order[:min(k, act.size)]
        contrib[passed] = small[passed]
    if 0 <= k < act.size:
        j = order[k]
        r_prev = r_start - (drops[:k].sum() if k else 0.0)
        contrib[j] = big[j] - (r_prev - target)
        frac = int(act[j])
    q[act] = contrib / a[act]
    q = np.clip(q, lo, hi)
    return LPSolution(q, mult, float(np.dot(b, q)), float(np.dot(a, q)), feasible, frac)


@dataclass(frozen=True)
class _FiberData:
    labels: np.ndarray
    G: np.ndarray
    lo: np.ndarray
    hi: np.ndarray


def _fibers(dens: SensitivityDensity, scene: MaterialScene) -> _FiberData:
    opt = scene.opt
    lab = fiber_labels(scene.family, opt)
    li = lab[opt]
    nf = int(li.max()) + 1
    gv = dens.g[opt] * dens.cell_volume
    G = np.bincount(li, gv.real, nf) + 1j * np.bincount(li, gv.imag, nf)
    inv = np.zeros(nf)
    inv[li] = 1.0 / scene.eps_r[opt]
    lo = 1.0 / scene.family.eps_plus - inv
    hi = 1.0 / scene.family.eps_minus - inv
    return _FiberData(lab, G, np.minimum(lo, 0.0), np.maximum(hi, 0.0))


def _broadcast(fd: _FiberData, q: np.ndarray) -> np.ndarray:
    p = np.zeros(fd.labels.shape)
    inside = fd.labels >= 0
    p[inside] = q[fd.labels[inside]]
    return p


def plan_step(dens: SensitivityDensity, scene: MaterialScene, trust: float = 1.0,
              re_target: float = 0.0, stat_tol: float = 1e-9) -> StepPlan | AtStationaryPoint:
    """Best first-order direction for lowering the loss rate with Re pinned."""
    fd = _fibers(dens, scene)
    scale = float(np.sum(np.abs(fd.G) * (fd.hi - fd.lo)))
    if scale == 0.0:
        return AtStationaryPoint(0.0, zero_density=True)
    sol = solve_box_lp(fd.G, fd.lo, fd.hi, re_target)
    if re_target == 0.0 and sol.value <= stat_tol * scale:
        return AtStationaryPoint(sol.value)
    shift = complex(np.dot(sol.q, fd.G))
    if re_target == 0.0:
        shift = complex(0.0, shift.imag) if abs(shift.real) <= 1e-10 * abs(shift) else shift
    return StepPlan(Direction(_broadcast(fd, sol.q)), shift, trust, sol.value,
                    sol.multiplier, re_target, sol.feasible)


def plan_correction(dens: SensitivityDensity, scene: MaterialScene, delta: float) -> StepPlan | None:
    """Direction moving Re omega toward ``Re omega + delta`` with zero Im shift."""
    fd = _fibers(dens, scene)
    s = 1.0 if delta > 0 else -1.0
    # objective s Re(sum q G), constraint Im(sum q G) = 0
    sol = solve_box_lp(fd.G.imag + 1j * s * fd.G.real, fd.lo, fd.hi, 0.0)
    if sol.value <= 0:
        return None
    t = min(1.0, abs(delta) / sol.value)
    shift = complex(np.dot(sol.q, fd.G))
    return StepPlan(Direction(_broadcast(fd, sol.q)), shift, t, sol.value, sol.multiplier)


# ---------------------------------------------------------------------------
# stepping


@dataclass
class _State:
    scene: MaterialScene
    op: DiscreteOperator
    pair: EigenPair

    @property
    def gamma(self) -> float:
        return -self.pair.omega.imag


def _try(state: _State, p: np.ndarray, t: float, predicted: complex, tol: float) -> _State | None:
    scene, nclip = apply_direction(state.scene, p, t)
    if nclip:
        log.debug("step t=%.3g clipped %d cells", t, nclip)
    op = assemble(scene)
    radius = 10 * abs(t * predicted) + 1e3 * tol * max(1.0, abs(state.pair.omega))
    try:
        pair = track(op, state.pair.omega + t * predicted, state.pair.psi.vec, radius=radius, tol=tol)
    except EigenSolveError as exc:
        log.debug("step t=%.3g rejected: %s", t, exc)
        return None
    return _State(scene, op, pair)


@dataclass(frozen=True)
class StepResult:
    accepted: bool
    scene: MaterialScene
    pair: EigenPair
    op: DiscreteOperator
    t: float = 0.0
    reason: str = ""


def _correct(state: _State, alpha: float, cfg: OptimizeSettings, gamma_cap: float | None) -> _State:
    for _ in range(cfg.correction_steps):
        delta = alpha - state.pair.omega.real
        if abs(delta) <= cfg.tol_alpha * alpha:
            break
        plan = plan_correction(density(state.pair, state.op), state.scene, delta)
        if plan is None:
            break
        new = _try(state, plan.p.p, plan.trust_step, plan.predicted_shift, cfg.tol_eigen)
        if new is None or abs(alpha - new.pair.omega.real) >= abs(delta):
            break
        if gamma_cap is not None and new.gamma >= gamma_cap:
            break
        state = new
    return state


def apply_step(scene: MaterialScene, op: DiscreteOperator, pair: EigenPair,
               plan: StepPlan | AtStationaryPoint, alpha: float,
               cfg: OptimizeSettings = OptimizeSettings()) -> StepResult:
    """Backtracking step along ``plan``.

    Each trial ``t`` is followed by up to ``cfg.correction_steps`` Re-frequency
    corrections; the corrected iterate must satisfy the Armijo decrease and
    stay within the drift budget.
    """
    if isinstance(plan, AtStationaryPoint):
        return StepResult(False, scene, pair, op, 0.0, "stationary")
    state = _State(scene, op, pair)
    g0 = state.gamma
    budget = cfg.drift_budget * alpha
    for k in range(cfg.max_backtracks):
        t = plan.trust_step * 0.5**k
        new = _try(state, plan.p.p, t, plan.predicted_shift, cfg.tol_eigen)
        if new is None or not new.gamma < g0 - cfg.armijo * t * plan.value:
            continue
        new = _correct(new, alpha, cfg, g0 - cfg.armijo * t * plan.value)
        if abs(new.pair.omega.real - alpha) <= budget:
            return StepResult(True, new.scene, new.pair, new.op, t)
    return StepResult(False, scene, pair, op, 0.0, "line search exhausted")


# ---------------------------------------------------------------------------
# driver


def initial_pairs(op: DiscreteOperator, alpha: float, cfg: OptimizeSettings) -> list[EigenPair]:
    """Eigenpairs near ``alpha``, ordered by ``|Re omega - alpha|``."""
    window = SearchWindow(complex(alpha, 0.0), cfg.window_radius * alpha, 4)
    pairs = find_eigs(op, window, seed=cfg.seed, tol=cfg.tol_eigen)
    if not pairs:
        raise NotAchievableError(NotAchievable(alpha, f"no eigenvalue within {window.radius:.4g} of alpha"))
    return sorted(pairs, key=lambda p: (abs(p.omega.real - alpha), -p.omega.imag))


def _steer(state: _State, alpha: float, cfg: OptimizeSettings) -> _State:
    """Move Re omega to alpha with Im held to first order."""
    budget = cfg.drift_budget * alpha
    trust = cfg.trust
    for _ in range(cfg.max_steer):
        delta = alpha - state.pair.omega.real
        if abs(delta) <= 0.1 * budget:
            return state
        plan = plan_correction(density(state.pair, state.op), state.scene, delta)
        if plan is None:
            break
        t0 = min(plan.trust_step, trust)
        for k in range(cfg.max_backtracks):
            t = t0 * 0.5**k
            new = _try(state, plan.p.p, t, plan.predicted_shift, cfg.tol_eigen)
            if new is not None and abs(alpha - new.pair.omega.real) < abs(delta):
                state = new
                trust = min(1.0, 2 * t)
                break
        else:
            break
    if abs(alpha - state.pair.omega.real) > budget:
        raise NotAchievableError(NotAchievable(
            alpha, f"could not steer Re omega to alpha (stuck at {state.pair.omega.real:.6g})"))
    return state


def _pattern(scene: MaterialScene) -> np.ndarray:
    e = scene.eps_r[scene.opt]
    fam = scene.family
    return np.where(np.isclose(e, fam.eps_plus, rtol=1e-12), 1,
                    np.where(np.isclose(e, fam.eps_minus, rtol=1e-12), -1, 0))


def _polish(state: _State, alpha: float, cfg: OptimizeSettings) -> tuple[_State, int]:
    """Jump to the LP vertex with the Re target set to the remaining drift.

    Near a bang-bang optimum this is a Newton iteration on the one cell the
    program leaves fractional.
    """
    tol = cfg.tol_alpha * alpha
    steps = 0
    prev = _pattern(state.scene)
    for _ in range(cfg.max_polish):
        delta = alpha - state.pair.omega.real
        dens = density(state.pair, state.op)
        fd = _fibers(dens, state.scene)
        sol = solve_box_lp(fd.G, fd.lo, fd.hi, delta)
        if not sol.feasible:
            break
        p = _broadcast(fd, sol.q)
        if not np.any(p) or (abs(delta) <= tol and np.abs(sol.q).max() <= 1e-14):
            break
        new = _try(state, p, 1.0, complex(np.dot(sol.q, fd.G)), cfg.tol_eigen)
        if new is None or new.gamma > state.gamma + 1e-3 * state.gamma:
            break
        state = new
        steps += 1
        pat = _pattern(state.scene)
        done = abs(alpha - state.pair.omega.real) <= tol and np.array_equal(pat, prev)
        prev = pat
        if done:
            break
    return state, steps


def optimize(scene0: MaterialScene, alpha: float, cfg: OptimizeSettings = OptimizeSettings()) -> ParetoPoint:
    """Locally minimize the loss rate at ``Re omega = alpha``.

    Raises NotAchievableError when no eigenvalue can be brought to ``alpha``.
    """
    op = assemble(scene0)
    failure = None
    for cand in initial_pairs(op, alpha, cfg):
        try:
            state = _steer(_State(scene0, op, cand), alpha, cfg)
            break
        except NotAchievableError as exc:
            failure = exc
    else:
        raise failure
    trace = [state.gamma]
    trust = cfg.trust
    it = 0
    note = ""
    while it < cfg.max_iter:
        it += 1
        try:
            dens = density(state.pair, state.op)
        except DegenerateError as exc:
            note = str(exc)
            break
        plan = plan_step(dens, state.scene, trust, stat_tol=cfg.stat_tol)
        if isinstance(plan, AtStationaryPoint):
            break
        res = apply_step(state.scene, state.op, state.pair, plan, alpha, cfg)
        if not res.accepted:
            trust = 0.5**cfg.max_backtracks * trust
            if trust < cfg.min_trust:
                note = "step size underflow"
                break
            continue
        state = _State(res.scene, res.op, res.pair)
        if not state.gamma < trace[-1]:
            raise AssertionError("accepted iterate did not lower the loss rate")
        trace.append(state.gamma)
        trust = min(cfg.trust, 2 * res.t)
        log.info("iter %d  t=%.3g  omega=%.10f%+.10fi", it, res.t,
                 state.pair.omega.real, state.pair.omega.imag)
    state, polish = _polish(state, alpha, cfg)
    report = None
    try:
        report, fixed, field_ = el_report(state.pair, state.op, cfg.variant, cfg.dead_band)
        pmax = np.abs(field_.phi[state.scene.opt]).max()
        rounded = bang_bang_round(state.scene, field_.phi, cfg.dead_band * pmax)
        if not np.array_equal(rounded.eps_r, state.scene.eps_r):
            new_op = assemble(rounded)
            pair = track(new_op, state.pair.omega, state.pair.psi.vec, tol=cfg.tol_eigen)
            state = _State(rounded, new_op, pair)
            report, fixed, field_ = el_report(state.pair, state.op, cfg.variant, cfg.dead_band)
        state.pair = fixed
    except NotFirstOrderOptimal as exc:
        note = (note + "; " if note else "") + str(exc)
    drift_ok = abs(state.pair.omega.real - alpha) <= cfg.tol_alpha * alpha
    converged = bool(report is not None and drift_ok and report.residual <= cfg.el_tol)
    return ParetoPoint(alpha, state.gamma, state.scene, state.pair, report, it, converged,
                       tuple(trace), polish, note)


def sweep_frontier(scene0: MaterialScene, alphas, cfg: OptimizeSettings = OptimizeSettings(),
                   ) -> list[ParetoPoint | NotAchievable]:
    """Optimize at each alpha, warm-starting from the previous optimum."""
    alphas = [float(a) for a in alphas]
    if any(b <= a for a, b in zip(alphas, alphas[1:])):
        raise ValueError("alphas must be strictly increasing")
    out: list[ParetoPoint | NotAchievable] = []
    start = scene0
    for a in alphas:
        try:
            pt = optimize(start, a, cfg)
        except NotAchievableError as exc:
            log.warning("alpha=%g not achievable: %s", a, exc.report.reason)
            if start is not scene0:
                try:
                    pt = optimize(scene0, a, cfg)
                except NotAchievableError:
                    out.append(exc.report)
                    continue
            else:
                out.append(exc.report)
                continue
        out.append(pt)
        start = pt.scene
    return out


def frontier_record(pt: ParetoPoint | NotAchievable, scene_file: str | None = None) -> dict:
    if isinstance(pt, NotAchievable):
        return {"alpha": pt.alpha, "status": "NotAchievable", "reason": pt.reason,
                "gamma": None, "Q": None, "converged": False, "iterations": 0,
                "el_residual": None, "bang_bang_fraction": None, "scene_file": None}
    rep = pt.el_report
    return {
        "alpha": pt.alpha,
        "status": "ok",
        "gamma": pt.gamma,
        "Q": pt.q_factor,
        "omega": [pt.pair.omega.real, pt.pair.omega.imag],
        "converged": pt.converged,
        "iterations": pt.iterations,
        "polish_steps": pt.polish_steps,
        "el_residual": rep.residual if rep else None,
        "bang_bang_fraction": rep.bang_bang_fraction if rep else None,
        "singular_fraction": rep.singular_fraction if rep else None,
        "phase_theta": rep.phase_theta if rep else None,
        "local_optimality_only": True,
        "note": pt.note,
        "scene_file": scene_file,
    }


def frontier_json(points, scene_files=None) -> str:
    files = scene_files or [None] * len(points)
    return json.dumps([frontier_record(p, f) for p, f in zip(points, files)],
                      sort_keys=True, indent=1, allow_nan=False, default=float) + "\n"
