import json

import numpy as np
import pytest
from hypothesis import assume, given, settings, strategies as st
from scipy.optimize import linprog

from qpar import (AtStationaryPoint, NotAchievableError, OptimizeSettings, SearchWindow,
                  StepPlan, apply_step, assemble, density, find_eigs, optimize, plan_step,
                  sweep_frontier)
from qpar.eigensolve import cone_generators, fix_phase
from qpar.pareto import NotAchievable, frontier_json, plan_correction, solve_box_lp
from qpar.testbeds import build, slab_scene


def _lp_case(seed, n):
    rng = np.random.default_rng(seed)
    G = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    G[rng.random(n) < 0.1] = 1j * rng.standard_normal()  # some purely imaginary entries
    lo = -rng.random(n)
    hi = rng.random(n)
    return G, lo, hi, rng


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 40), st.floats(-0.9, 0.9))
def test_box_lp_matches_reference_solver(seed, n, frac):
    G, lo, hi, _ = _lp_case(seed, n)
    a = G.real
    rmin, rmax = np.sum(np.minimum(a * lo, a * hi)), np.sum(np.maximum(a * lo, a * hi))
    target = 0.5 * (rmin + rmax) + frac * 0.5 * (rmax - rmin)
    sol = solve_box_lp(G, lo, hi, target)
    ref = linprog(-G.imag, A_eq=a[None, :], b_eq=[target], bounds=list(zip(lo, hi)),
                  method="highs")
    assume(ref.status == 0)
    assert sol.feasible
    assert np.all(sol.q >= lo) and np.all(sol.q <= hi)
    assert sol.re_sum == pytest.approx(target, abs=1e-10)
    assert sol.value == pytest.approx(-ref.fun, abs=1e-9 * (1 + abs(ref.fun)))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 30))
def test_box_lp_has_at_most_one_fractional_cell(seed, n):
    G, lo, hi, _ = _lp_case(seed, n)
    sol = solve_box_lp(G, lo, hi, 0.0)
    inner = (sol.q > lo + 1e-12) & (sol.q < hi - 1e-12)
    assert inner.sum() <= 1


def test_box_lp_flags_unreachable_target():
    G = np.array([1 + 1j, 2 - 1j])
    sol = solve_box_lp(G, np.array([-1.0, -1.0]), np.array([1.0, 1.0]), 10.0)
    assert not sol.feasible


@pytest.fixture(scope="module")
def mid_start():
    """Uniform eps = 4 start: both signs of the direction are admissible."""
    scene = build("stack-air-si", n=64, eps=4.0)
    op = assemble(scene)
    pair = find_eigs(op, SearchWindow(np.pi / 2 - 0.4j, 0.3, 1))[0]
    return scene, op, pair


def test_mid_start_is_stationary_with_real_part_pinned():
    # at the lower bound every admissible move lowers Re omega
    scene = build("stack-air-si", n=64)
    op = assemble(scene)
    pair = find_eigs(op, SearchWindow(np.pi - 0.35j, 0.5, 1))[0]
    assert isinstance(plan_step(density(pair, op), scene), AtStationaryPoint)
    steer = plan_step(density(pair, op), scene, re_target=-0.05)
    assert isinstance(steer, StepPlan) and steer.predicted_shift.real == pytest.approx(-0.05)


def test_plan_step_pins_real_part_and_raises_imag(mid_start):
    scene, op, pair = mid_start
    plan = plan_step(density(pair, op), scene)
    assert isinstance(plan, StepPlan)
    assert plan.predicted_shift.imag > 0
    assert abs(plan.predicted_shift.real) <= 1e-10 * abs(plan.predicted_shift)
    p = plan.p.p
    assert np.all(p[~scene.opt] == 0)


def test_zero_density_is_stationary(mid_start):
    scene, op, pair = mid_start
    dens = density(pair, op)
    zero = type(dens)(np.zeros_like(dens.g), dens.denom, dens.omega0, dens.cell_volume, dens.opt)
    res = plan_step(zero, scene)
    assert isinstance(res, AtStationaryPoint) and res.zero_density


def test_correction_moves_real_part_without_imag_shift(mid_start):
    scene, op, pair = mid_start
    plan = plan_correction(density(pair, op), scene, -0.01)
    assert plan is not None
    assert plan.predicted_shift.real < 0
    assert abs(plan.predicted_shift.imag) <= 1e-10 * abs(plan.predicted_shift)


def test_accepted_step_lowers_loss(mid_start):
    scene, op, pair = mid_start
    alpha = pair.omega.real
    plan = plan_step(density(pair, op), scene, trust=1.0)
    res = apply_step(scene, op, pair, plan, alpha)
    assert res.accepted
    assert -res.pair.omega.imag < -pair.omega.imag
    assert abs(res.pair.omega.real - alpha) <= OptimizeSettings().drift_budget * alpha


def test_unreachable_alpha_reports_not_achievable():
    with pytest.raises(NotAchievableError) as info:
        optimize(build("stack-air-si", n=64), 0.3)
    assert isinstance(info.value.report, NotAchievable)


def test_sweep_requires_increasing_alphas():
    with pytest.raises(ValueError):
        sweep_frontier(slab_scene(16), [3.0, 2.0])


def test_frontier_json_keeps_not_achievable_entries():
    text = frontier_json([NotAchievable(0.3, "no eigenvalue")])
    rec = json.loads(text)[0]
    assert rec["status"] == "NotAchievable" and rec["gamma"] is None
    assert text.endswith("\n")


@pytest.mark.slow
def test_optimum_on_coarse_grid_is_bang_bang():
    pt = optimize(build("stack-air-si", n=64), 3.0)
    assert pt.converged
    assert pt.el_report.bang_bang_fraction == 1.0
    assert np.all(np.diff(pt.gamma_trace) < 0)
    vals = pt.scene.eps_r[pt.scene.opt]
    snapped = np.isclose(vals, 1.0) | np.isclose(vals, 11.9716)
    assert snapped.mean() >= 1 - 1 / 60


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 30))
def test_box_lp_kkt(seed, n):
    G, lo, hi, _ = _lp_case(seed, n)
    sol = solve_box_lp(G, lo, hi, 0.0)
    assume(sol.feasible and np.isfinite(sol.multiplier))
    red = G.imag - sol.multiplier * G.real
    at_hi = np.isclose(sol.q, hi, rtol=0, atol=1e-12)
    at_lo = np.isclose(sol.q, lo, rtol=0, atol=1e-12)
    strict = np.abs(red) > 1e-9 * np.abs(G).max()
    assert np.all(at_hi[strict & (red > 0)]) and np.all(at_lo[strict & (red < 0)])


def test_spectral_gap_is_not_achievable():
    # between the first two slab resonances with a narrow window
    cfg = OptimizeSettings(window_radius=0.1)
    with pytest.raises(NotAchievableError):
        optimize(slab_scene(32), 4.7, cfg)


def test_stationary_point_has_cone_in_upper_half_plane():
    pt = optimize(build("stack-air-si", n=64), 3.0)
    op = assemble(pt.scene)
    assert isinstance(plan_step(density(pt.pair, op), pt.scene), AtStationaryPoint)
    rays = cone_generators(fix_phase(pt.pair, op), op)
    assert np.all(rays.imag >= -1e-10 * np.abs(rays).max())
