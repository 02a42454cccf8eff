from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qpar.maxwell import LayeredProfile1D
from qpar.medium import (Boundary, Direction, FeasibleFamily, Grid, InfeasibleError,
                         admissible_direction, apply_direction, bang_bang_round, fiber_labels,
                         fiber_reduce, symmetry_project, uniform_scene, validate_scene)
from qpar.testbeds import TESTBEDS, build, profile_scene


def small_scene(kind="full3d", dims=(5, 4, 6), eps=2.0, lo=1.0, hi=12.0):
    grid = Grid(dims, (0.1, 0.1, 0.1))
    opt = np.zeros(dims, bool)
    opt[1:-1, 1:-1, 1:-1] = True
    return uniform_scene(grid, opt, lo, hi, eps, eps_out=1.5, kind=kind)


def test_grid_rejects_bad_shapes():
    with pytest.raises(ValueError):
        Grid((1, 4, 4))
    with pytest.raises(ValueError):
        Grid((4, 4, 4), (0.1, 0.0, 0.1))
    with pytest.raises(ValueError):
        Grid((40, 40, 40), max_cells=1000)


def test_boundary_and_family_validation():
    with pytest.raises(ValueError):
        Boundary("absorbing")
    with pytest.raises(ValueError):
        FeasibleFamily(3.0, 2.0, np.ones((2, 2, 2)))
    with pytest.raises(ValueError):
        FeasibleFamily(1.0, 2.0, np.ones((2, 2, 2)), kind="slab1d")


@pytest.mark.parametrize("name", sorted(TESTBEDS))
def test_every_testbed_is_feasible(name):
    obj = build(name)
    scene = profile_scene(obj, 32) if isinstance(obj, LayeredProfile1D) else obj
    assert validate_scene(scene) == []


def test_validate_reports_each_violation():
    sc = small_scene()
    eps = sc.eps_r.copy()
    eps[2, 2, 2] = 20.0
    eps[0, 0, 0] = 3.0
    sigma = sc.sigma.copy()
    sigma[2, 2, 3] = 0.5
    bad = sc.with_eps(eps)
    bad = replace(bad, sigma=sigma)
    kinds = {r.split(":")[0] for r in validate_scene(bad)}
    assert {"upper-bound", "eps_out", "sigma"} <= kinds


def test_region_touching_port_is_rejected():
    grid = Grid((4, 4, 4))
    opt = np.ones(grid.dims, bool)
    sc = uniform_scene(grid, opt, 1.0, 2.0, 1.0)
    assert any(r.startswith("region") for r in validate_scene(sc))


def test_slab_symmetry_violation_detected():
    sc = small_scene("slab1d")
    eps = sc.eps_r.copy()
    eps[1, 1, 2] = 5.0
    assert any(r.startswith("symmetry") for r in validate_scene(sc.with_eps(eps)))


def test_fiber_reduce_and_labels():
    sc = small_scene("cylinder2d")
    vals = np.arange(np.prod(sc.grid.dims), dtype=float).reshape(sc.grid.dims)
    red = fiber_reduce(vals, sc.family, sc.opt)
    col = red[2, 2, 1:-1]
    assert np.all(col == col[0]) and col[0] == pytest.approx(vals[2, 2, 1:-1].mean())
    assert np.array_equal(red[~sc.opt], vals[~sc.opt])
    lab = fiber_labels(sc.family, sc.opt)
    assert len(np.unique(lab[sc.opt])) == sc.family.cross_section.sum()


def test_admissible_direction_reaches_target():
    sc = small_scene()
    target = np.full(sc.opt.sum(), 7.0)
    p = admissible_direction(sc, target)
    moved, nclip = apply_direction(sc, p)
    assert nclip == 0
    assert np.allclose(moved.eps_r[sc.opt], 7.0)
    with pytest.raises(InfeasibleError):
        admissible_direction(sc, np.full(sc.opt.sum(), 13.0))


def test_admissible_direction_rejects_symmetry_breaking():
    sc = small_scene("slab1d")
    tgt = np.random.default_rng(0).uniform(1, 12, sc.opt.sum())
    with pytest.raises(InfeasibleError):
        admissible_direction(sc, tgt)


kinds = st.sampled_from(["full3d", "cylinder2d", "slab1d"])


@settings(max_examples=60, deadline=None)
@given(kinds, st.floats(-50, 50), st.integers(0, 2**32 - 1))
def test_apply_direction_stays_feasible(kind, t, seed):
    sc = small_scene(kind)
    rng = np.random.default_rng(seed)
    p = symmetry_project(Direction(rng.standard_normal(sc.grid.dims)), sc.family, sc.opt)
    out, _ = apply_direction(sc, p, t)
    assert validate_scene(out) == []


@settings(max_examples=60, deadline=None)
@given(kinds, st.integers(0, 2**32 - 1))
def test_bang_bang_round_is_feasible_and_idempotent(kind, seed):
    sc = small_scene(kind)
    phi = np.random.default_rng(seed).standard_normal(sc.grid.dims)
    once = bang_bang_round(sc, phi)
    twice = bang_bang_round(once, phi)
    assert validate_scene(once) == []
    assert np.array_equal(once.eps_r, twice.eps_r)
    vals = once.eps_r[sc.opt]
    assert np.all((vals == sc.family.eps_minus) | (vals == sc.family.eps_plus) | (vals == 2.0))


@settings(max_examples=40, deadline=None)
@given(kinds, st.integers(0, 2**32 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_symmetry_projection_linear_and_idempotent(kind, seed, a, b):
    sc = small_scene(kind)
    rng = np.random.default_rng(seed)
    u, v = rng.standard_normal((2, *sc.grid.dims))
    fam, opt = sc.family, sc.opt
    P = lambda x: symmetry_project(Direction(x), fam, opt).p
    assert np.allclose(P(a * u + b * v), a * P(u) + b * P(v), atol=1e-12)
    assert np.allclose(P(P(u)), P(u), atol=1e-14)


def test_dead_band_keeps_small_switching_cells():
    sc = small_scene()
    phi = np.zeros(sc.grid.dims)
    phi[2, 2, 2] = 1.0
    phi[2, 2, 3] = 1e-13
    out = bang_bang_round(sc, phi)
    assert out.eps_r[2, 2, 2] == 12.0
    assert out.eps_r[2, 2, 3] == 2.0
