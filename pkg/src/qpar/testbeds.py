"""Canonical scenes and layered profiles shared by tests, acceptance runs and the CLI."""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .maxwell import LayeredProfile1D
from .medium import Boundary, Grid, MaterialScene, uniform_scene

EPS_AIR = 1.0
EPS_SILICON = 11.9716
SLAB_GAMMA = 3.0
BOX_LENGTHS = (1.0, 0.9, 0.8)


class UnknownTestbed(KeyError):
    pass


@dataclass(frozen=True)
class Oracle:
    name: str
    value: object
    provenance: str      # "closed-form", "solver-run" or "literature"
    recipe: str


@dataclass(frozen=True)
class TestbedSpec:
    name: str
    summary: str
    params: dict
    builder: Callable[..., object]
    oracles: tuple[Oracle, ...] = field(default_factory=tuple)

    __test__ = False  # not a pytest class

    def build(self, **overrides):
        kw = dict(self.params)
        kw.update(overrides)
        return self.builder(**kw)


def slab_root(k: int, gamma: float = SLAB_GAMMA, eps: float = 1.0, length: float = 1.0) -> complex:
    """Closed-form TEM root of a uniform slab: ``exp(2 i n w L) = (n + g) / (g - n)``."""
    n = np.sqrt(eps)
    ratio = (n + gamma) / (gamma - n)
    return complex((np.pi * k + 0.5 * np.log(abs(ratio)) / 1j
                    + (0.5 * np.pi if ratio < 0 else 0.0)) / (n * length))


def uniform_gamma(gamma: float, eps: float) -> float:
    """Loss rate of every mode of a uniform slab of unit length."""
    n = np.sqrt(eps)
    return float(np.log(abs((n + gamma) / (gamma - n))) / (2 * n))


def slab_profile(eps: float = 1.0, length: float = 1.0, gamma: float = SLAB_GAMMA,
                 eps_minus: float = EPS_AIR, eps_plus: float = EPS_SILICON) -> LayeredProfile1D:
    return LayeredProfile1D(((length, eps),), gamma, eps_minus, eps_plus)


def slab_scene(n: int = 64, eps: float = 1.0, length: float = 1.0, gamma: float = SLAB_GAMMA,
               eps_minus: float = EPS_AIR, eps_plus: float = EPS_SILICON,
               width_cells: float = 2.0) -> MaterialScene:
    """Thin 3D scene carrying exactly the layered TEM problem along z.

    Two cells across; the x faces are magnetic walls and the y faces
    electric walls, so only the uniform E_y polarization survives.  z- is a
    mirror, z+ the impedance port ``1/gamma``.  The optimization region is
    every layer except the one touching the port.
    """
    h = length / n
    grid = Grid((2, 2, n), (width_cells * h / 2, width_cells * h / 2, h))
    opt = np.zeros(grid.dims, dtype=bool)
    opt[:, :, : n - 1] = True
    bnd = (Boundary("pmc"), Boundary("pmc"), Boundary("pec"), Boundary("pec"),
           Boundary("pec"), Boundary("impedance", 1.0 / gamma))
    return uniform_scene(grid, opt, eps_minus, eps_plus, eps, eps_out=eps,
                         boundary=bnd, kind="slab1d")


def profile_scene(profile: LayeredProfile1D, n: int = 128) -> MaterialScene:
    """Thin slab scene sampling a layered profile at ``n`` cell centers."""
    scene = slab_scene(n, 1.0, profile.length, profile.gamma,
                       profile.eps_minus or EPS_AIR, profile.eps_plus or EPS_SILICON)
    edges = np.cumsum([d for d, _ in profile.layers])
    centers = (np.arange(n) + 0.5) * profile.length / n
    eps = np.array([e for _, e in profile.layers])[np.searchsorted(edges, centers)]
    cells = np.broadcast_to(eps, scene.grid.dims).copy()
    fam = replace(scene.family, eps_out=cells)
    return replace(scene, family=fam, eps_r=cells)


def layer_profile(scene: MaterialScene, gamma: float = SLAB_GAMMA) -> LayeredProfile1D:
    """Layered profile of a thin slab scene."""
    eps = scene.eps_r[0, 0, :]
    return LayeredProfile1D.from_cells(eps, scene.grid.spacing[2], gamma,
                                       eps_minus=scene.family.eps_minus,
                                       eps_plus=scene.family.eps_plus)


def box_scene(n: int = 16, kind: str = "impedance", z: float = 2.0, lengths=BOX_LENGTHS,
              margin: int = 1, eps: float = 1.0, eps_minus: float = EPS_AIR,
              eps_plus: float = EPS_SILICON, shell: int = 0,
              shell_sigma: float = 0.0) -> MaterialScene:
    """Rectangular cavity with the same boundary on all faces.

    ``shell`` cells next to the walls carry conductivity ``shell_sigma``;
    the optimization region starts ``max(margin, shell)`` cells inside.
    """
    grid = Grid((n, n, n), tuple(length / n for length in lengths))
    m = max(margin, shell)
    opt = np.zeros(grid.dims, dtype=bool)
    opt[m:-m, m:-m, m:-m] = True
    sigma = np.zeros(grid.dims)
    if shell:
        inner = np.zeros(grid.dims, dtype=bool)
        inner[shell:-shell, shell:-shell, shell:-shell] = True
        sigma[~inner] = shell_sigma
    value = z if kind == "impedance" else 1.0
    return uniform_scene(grid, opt, eps_minus, eps_plus, eps, eps_out=eps, sigma=sigma,
                         boundary=[Boundary(kind, value)] * 6)


def box_modes(lengths=BOX_LENGTHS, count: int = 4) -> list[float]:
    """Lowest nonzero resonances of a perfectly conducting box (closed form)."""
    a, b, c = lengths
    vals = []
    for i in range(6):
        for j in range(6):
            for k in range(6):
                if (i > 0) + (j > 0) + (k > 0) >= 2:
                    vals.append(np.pi * np.sqrt((i / a) ** 2 + (j / b) ** 2 + (k / c) ** 2))
    return sorted(vals)[:count]


_SLAB_ROOTS = tuple(slab_root(k) for k in (1, 2, 3))

TESTBEDS: dict[str, TestbedSpec] = {
    spec.name: spec for spec in (
        TestbedSpec("slab-uniform", "uniform unit slab, eps 1, gamma 3, layered profile",
                    dict(eps=1.0), slab_profile,
                    (Oracle("roots", _SLAB_ROOTS, "closed-form", "pi k - (i/2) ln 2, k = 1..3"),)),
        TestbedSpec("slab-uniform-3d", "thin 3D scene equivalent to slab-uniform",
                    dict(n=64, eps=1.0), slab_scene,
                    (Oracle("root1", _SLAB_ROOTS[0], "closed-form", "pi - (i/2) ln 2"),)),
        TestbedSpec("slab-eps2", "uniform slab with eps 2, gamma 3, layered profile",
                    dict(eps=2.0), slab_profile,
                    (Oracle("root1", slab_root(1, eps=2.0), "closed-form",
                            "exp(2 i sqrt2 w) = (sqrt2 + 3) / (3 - sqrt2)"),)),
        TestbedSpec("slab-eps2-3d", "thin 3D scene equivalent to slab-eps2",
                    dict(n=96, eps=2.0), slab_scene),
        TestbedSpec("stack-air-si", "thin slab, air start, bounds air/silicon, gamma 3",
                    dict(n=128, eps=EPS_AIR), slab_scene,
                    (Oracle("eps_bounds", (EPS_AIR, EPS_SILICON), "literature",
                            "room-temperature permittivities of air and silicon"),
                     Oracle("gamma_air", uniform_gamma(SLAB_GAMMA, EPS_AIR), "closed-form",
                            "ln|(1 + 3) / (3 - 1)| / 2"),
                     Oracle("gamma_si", uniform_gamma(SLAB_GAMMA, EPS_SILICON), "closed-form",
                            "ln|(n + 3) / (3 - n)| / (2 n), n = sqrt(11.9716)"))),
        TestbedSpec("cube-impedance", "16^3 box 1 x 0.9 x 0.8, impedance 2 on every wall",
                    dict(n=16, kind="impedance", z=2.0), box_scene,
                    (Oracle("lowest", complex(4.718912496836584, -1.9183137663066447), "solver-run",
                            "find_eigs near 4.7 - 1.9i, radius 1"),)),
        TestbedSpec("cube-absorber", "12^3 impedance box with a conducting shell two cells thick",
                    dict(n=12, kind="impedance", z=2.0, shell=2, shell_sigma=1.0), box_scene),
        TestbedSpec("cube-degenerate", "8^3 perfectly conducting unit cube",
                    dict(n=8, kind="pec", lengths=(1.0, 1.0, 1.0)), box_scene,
                    (Oracle("lowest", np.pi * np.sqrt(2.0), "closed-form",
                            "threefold TE/TM 110 family of the unit cube"),)),
        TestbedSpec("box-closed", "perfectly conducting box 1 x 0.9 x 0.8",
                    dict(n=16, kind="pec"), box_scene,
                    (Oracle("modes", tuple(box_modes()), "closed-form",
                            "pi sqrt((l/a)^2 + (m/b)^2 + (n/c)^2)"),)),
    )
}


def build(name: str, **overrides):
    try:
        spec = TESTBEDS[name]
    except KeyError:
        raise UnknownTestbed(f"unknown testbed {name!r}; known: {', '.join(sorted(TESTBEDS))}") from None
    return spec.build(**overrides)
