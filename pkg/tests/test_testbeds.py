import numpy as np
import pytest

from qpar.maxwell import LayeredProfile1D
from qpar.medium import validate_scene
from qpar.testbeds import (EPS_SILICON, TESTBEDS, UnknownTestbed, box_modes, build,
                           layer_profile, profile_scene, slab_root, uniform_gamma)


def test_closed_form_slab_root():
    assert slab_root(1) == pytest.approx(np.pi - 0.5j * np.log(2), abs=1e-15)
    assert -slab_root(2).imag == pytest.approx(uniform_gamma(3.0, 1.0))


def test_uniform_gamma_is_mode_independent():
    for eps in (1.0, 4.0, EPS_SILICON):
        g = uniform_gamma(3.0, eps)
        assert all(-slab_root(k, eps=eps).imag == pytest.approx(g) for k in (1, 2, 5))


def test_oracles_regenerate_identically():
    again = {name: spec.oracles for name, spec in TESTBEDS.items()}
    assert again["slab-uniform"][0].value == tuple(slab_root(k) for k in (1, 2, 3))
    assert again["box-closed"][0].value == tuple(box_modes())


def test_unknown_testbed():
    with pytest.raises(UnknownTestbed):
        build("nope")


def test_profile_scene_samples_layers():
    prof = LayeredProfile1D(((0.25, 2.0), (0.75, 5.0)), 3.0, 1.0, EPS_SILICON)
    sc = profile_scene(prof, 16)
    assert validate_scene(sc) == []
    assert np.array_equal(sc.eps_r[0, 0, :], np.r_[np.full(4, 2.0), np.full(12, 5.0)])
    assert layer_profile(sc).layers == ((0.25, 2.0), (0.75, 5.0))


def test_overrides():
    assert build("stack-air-si", n=32).grid.dims == (2, 2, 32)
