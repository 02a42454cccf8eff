"""Computational domain, material fields and feasible permittivity families.

A scene lives on a regular grid of ``dims`` cells.  Material values
(``eps_r``, ``sigma``) are cell-wise.  The optimization region ``opt`` is a
boolean cell mask; everything else is the fixed outer medium.  Units are
nondimensional with ``eps0 = mu0 = 1``.

Optimization acts on the inverse permittivity ``1/eps_r``: a direction ``p``
moves it to ``1/eps_r + t p``.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

MAX_CELLS = 2**21

FACES = ("x-", "x+", "y-", "y+", "z-", "z+")
BOUNDARY_KINDS = ("impedance", "pec", "pmc", "periodic")
FAMILY_KINDS = ("full3d", "cylinder2d", "slab1d")

# relative slack for bound checks; 1/eps updates round at this level
_BOUND_RTOL = 1e-12


class InfeasibleError(ValueError):
    """A permittivity target violates the feasible family."""


def _frozen(a, dtype=float):
    a = np.array(a, dtype=dtype, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Grid:
    dims: tuple[int, int, int]
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    origin: tuple[float, float, float] = (0.0, 0.0, 0.0)
    max_cells: int = MAX_CELLS

    def __post_init__(self):
        dims = tuple(int(n) for n in self.dims)
        spacing = tuple(float(h) for h in self.spacing)
        if len(dims) != 3 or len(spacing) != 3:
            raise ValueError("grid needs three dims and three spacings")
        if min(dims) < 2:
            raise ValueError(f"need at least 2 cells per axis, got {dims}")
        if min(spacing) <= 0:
            raise ValueError(f"spacing must be positive, got {spacing}")
        if int(np.prod(dims)) > self.max_cells:
            raise ValueError(f"{np.prod(dims)} cells exceeds cap {self.max_cells}")
        object.__setattr__(self, "dims", dims)
        object.__setattr__(self, "spacing", spacing)
        object.__setattr__(self, "origin", tuple(float(o) for o in self.origin))

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.dims

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    @property
    def lengths(self) -> tuple[float, float, float]:
        return tuple(n * h for n, h in zip(self.dims, self.spacing))

    def cell_centers(self, axis: int) -> np.ndarray:
        h = self.spacing[axis]
        return self.origin[axis] + h * (np.arange(self.dims[axis]) + 0.5)


@dataclass(frozen=True)
class Boundary:
    """Condition on one outer face.

    ``value`` is the vacuum-normalized impedance for ``kind == "impedance"``:
    a scalar or an array over the face's cells.  Ignored for other kinds.
    """

    kind: str = "impedance"
    value: float | np.ndarray = 1.0

    def __post_init__(self):
        if self.kind not in BOUNDARY_KINDS:
            raise ValueError(f"unknown boundary kind {self.kind!r}")


@dataclass(frozen=True)
class FeasibleFamily:
    """Bounds ``eps_minus <= eps_r <= eps_plus`` on the optimization region.

    For ``cylinder2d`` the permittivity must not depend on x3 inside the
    region; for ``slab1d`` it must not depend on (x1, x2).  Both require the
    region to be ``cross_section x [z_range[0], z_range[1])``.
    """

    eps_minus: float
    eps_plus: float
    eps_out: np.ndarray
    kind: str = "full3d"
    cross_section: np.ndarray | None = None
    z_range: tuple[int, int] | None = None

    def __post_init__(self):
        if self.kind not in FAMILY_KINDS:
            raise ValueError(f"unknown family kind {self.kind!r}")
        if not 0 < self.eps_minus <= self.eps_plus:
            raise ValueError(
                f"need 0 < eps_minus <= eps_plus, got {self.eps_minus}, {self.eps_plus}"
            )
        object.__setattr__(self, "eps_out", _frozen(self.eps_out))
        if self.cross_section is not None:
            object.__setattr__(self, "cross_section", _frozen(self.cross_section, bool))
        if self.kind != "full3d" and (self.cross_section is None or self.z_range is None):
            raise ValueError(f"{self.kind} family needs cross_section and z_range")
        if self.z_range is not None:
            object.__setattr__(self, "z_range", (int(self.z_range[0]), int(self.z_range[1])))

    def cylinder_mask(self, dims) -> np.ndarray:
        mask = np.zeros(dims, dtype=bool)
        k0, k1 = self.z_range
        mask[:, :, k0:k1] = self.cross_section[:, :, None]
        return mask


@dataclass(frozen=True)
class MaterialScene:
    grid: Grid
    opt: np.ndarray
    family: FeasibleFamily
    eps_r: np.ndarray
    sigma: np.ndarray
    boundary: tuple[Boundary, ...] = field(default_factory=lambda: (Boundary(),) * 6)

    def __post_init__(self):
        object.__setattr__(self, "opt", _frozen(self.opt, bool))
        object.__setattr__(self, "eps_r", _frozen(self.eps_r))
        object.__setattr__(self, "sigma", _frozen(self.sigma))
        if len(self.boundary) != 6:
            raise ValueError("boundary needs one entry per face " + ",".join(FACES))
        object.__setattr__(self, "boundary", tuple(self.boundary))

    @property
    def out(self) -> np.ndarray:
        return ~self.opt

    def with_eps(self, eps_r: np.ndarray) -> "MaterialScene":
        return replace(self, eps_r=eps_r)

    def lower_inv(self) -> np.ndarray:
        """Per-cell lower bound of ``1/eps_r`` (``1/eps_out`` outside the region)."""
        return np.where(self.opt, 1.0 / self.family.eps_plus, 1.0 / self.family.eps_out)

    def upper_inv(self) -> np.ndarray:
        return np.where(self.opt, 1.0 / self.family.eps_minus, 1.0 / self.family.eps_out)

    def eps_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Constraint functions over the whole domain: eps_out outside the region."""
        lo = np.where(self.opt, self.family.eps_minus, self.family.eps_out)
        hi = np.where(self.opt, self.family.eps_plus, self.family.eps_out)
        return lo, hi


@dataclass(frozen=True)
class Direction:
    """Perturbation of ``1/eps_r``; zero outside the optimization region."""

    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", _frozen(self.p))


# ---------------------------------------------------------------------------
# fibers


def fiber_reduce(values: np.ndarray, family: FeasibleFamily, opt: np.ndarray,
                 how: str = "mean") -> np.ndarray:
    """Reduce ``values`` over the family fibers and broadcast back.

    ``how`` is ``"mean"`` or ``"sum"``.  Cells outside ``opt`` are returned
    unchanged; for ``full3d`` every cell is its own fiber.
    """
    values = np.asarray(values)
    if family.kind == "full3d":
        return values.copy()
    out = values.copy()
    inside = np.where(opt, values, 0)
    if family.kind == "cylinder2d":
        red = inside.sum(axis=2, keepdims=True)
        count = opt.sum(axis=2, keepdims=True)
    else:
        red = inside.sum(axis=(0, 1), keepdims=True)
        count = opt.sum(axis=(0, 1), keepdims=True)
    if how == "mean":
        red = red / np.maximum(count, 1)
    elif how != "sum":
        raise ValueError(how)
    out[opt] = np.broadcast_to(red, values.shape)[opt]
    return out


def fiber_labels(family: FeasibleFamily, opt: np.ndarray) -> np.ndarray:
    """Integer fiber id per cell of ``opt`` (-1 elsewhere)."""
    lab = -np.ones(opt.shape, dtype=np.int64)
    if family.kind == "full3d":
        lab[opt] = np.arange(int(opt.sum()))
    elif family.kind == "cylinder2d":
        ids = np.arange(opt.shape[0] * opt.shape[1]).reshape(opt.shape[:2])
        lab[opt] = np.broadcast_to(ids[:, :, None], opt.shape)[opt]
    else:
        ids = np.arange(opt.shape[2])
        lab[opt] = np.broadcast_to(ids[None, None, :], opt.shape)[opt]
    # compress to 0..nfib-1
    used = np.unique(lab[opt])
    remap = -np.ones(int(lab.max()) + 1 if lab.size else 0, dtype=np.int64)
    remap[used] = np.arange(used.size)
    lab[opt] = remap[lab[opt]]
    return lab


# ---------------------------------------------------------------------------
# operations


def _cell(idx) -> str:
    return "(" + ", ".join(str(int(i)) for i in idx) + ")"


def _touches_leaky_face(scene: MaterialScene) -> np.ndarray:
    """Cells of the region adjacent to an impedance face."""
    touch = np.zeros(scene.grid.dims, dtype=bool)
    for f, b in enumerate(scene.boundary):
        if b.kind != "impedance":
            continue
        axis, side = divmod(f, 2)
        sl = [slice(None)] * 3
        sl[axis] = -1 if side else 0
        touch[tuple(sl)] = True
    return touch & scene.opt


def validate_scene(scene: MaterialScene) -> list[str]:
    """Return the violated invariants; an empty list means the scene is feasible."""
    report: list[str] = []
    dims = scene.grid.dims
    fam = scene.family
    for name, arr in (("opt", scene.opt), ("eps_r", scene.eps_r),
                      ("sigma", scene.sigma), ("eps_out", fam.eps_out)):
        if arr.shape != dims:
            report.append(f"shape: {name} has shape {arr.shape}, grid is {dims}")
    if report:
        return report

    if not scene.opt.any():
        report.append("region: optimization region is empty")
    leaky = np.argwhere(_touches_leaky_face(scene))
    if len(leaky):
        report.append(f"region: cell {_cell(leaky[0])} of the optimization region "
                      "touches an impedance face")

    if not np.all(np.isfinite(scene.eps_r)):
        report.append("eps_r: non-finite values")
    lo_tol = fam.eps_minus * (1 - _BOUND_RTOL)
    hi_tol = fam.eps_plus * (1 + _BOUND_RTOL)
    below = np.argwhere(scene.opt & (scene.eps_r < lo_tol))
    if len(below):
        c = tuple(below[0])
        report.append(f"lower-bound: eps_r{_cell(c)} = {scene.eps_r[c]!r} < eps_minus = {fam.eps_minus!r}")
    above = np.argwhere(scene.opt & (scene.eps_r > hi_tol))
    if len(above):
        c = tuple(above[0])
        report.append(f"upper-bound: eps_r{_cell(c)} = {scene.eps_r[c]!r} > eps_plus = {fam.eps_plus!r}")

    out = scene.out
    if np.any(fam.eps_out[out] <= 0):
        report.append("eps_out: must be positive in the outer region")
    mism = np.argwhere(out & ~np.isclose(scene.eps_r, fam.eps_out, rtol=_BOUND_RTOL, atol=0))
    if len(mism):
        report.append(f"eps_out: eps_r{_cell(mism[0])} differs from the fixed outer medium")

    if np.any(scene.sigma < 0):
        report.append(f"sigma: negative conductivity at {_cell(np.argwhere(scene.sigma < 0)[0])}")
    lossy = np.argwhere(scene.opt & (scene.sigma != 0))
    if len(lossy):
        report.append(f"sigma: nonzero conductivity inside the region at {_cell(lossy[0])}")

    for f, b in enumerate(scene.boundary):
        axis = f // 2
        if b.kind == "periodic":
            other = scene.boundary[f ^ 1]
            if other.kind != "periodic":
                report.append(f"boundary: face {FACES[f]} periodic but {FACES[f ^ 1]} is not")
        if b.kind == "impedance":
            z = np.asarray(b.value, dtype=float)
            if not np.all(np.isfinite(z)) or np.any(z <= 0):
                report.append(f"boundary: impedance on {FACES[f]} must be finite and positive")
            face_shape = tuple(n for a, n in enumerate(dims) if a != axis)
            if z.ndim and z.shape != face_shape:
                report.append(f"boundary: impedance on {FACES[f]} has shape {z.shape}, "
                              f"face has {face_shape}")

    if fam.kind != "full3d":
        if fam.cross_section.shape != dims[:2]:
            report.append("family: cross_section shape does not match the grid")
        elif not np.array_equal(fam.cylinder_mask(dims), scene.opt):
            report.append("family: optimization region is not cross_section x [z_range)")
        else:
            sym = fiber_reduce(scene.eps_r, fam, scene.opt)
            bad = np.argwhere(scene.opt & ~np.isclose(scene.eps_r, sym, rtol=1e-12, atol=0))
            if len(bad):
                what = "along x3" if fam.kind == "cylinder2d" else "over the cross-section"
                report.append(f"symmetry: eps_r varies {what} ({fam.kind}) at {_cell(bad[0])}")
    return report


def admissible_direction(scene: MaterialScene, target_eps: np.ndarray) -> Direction:
    """Direction ``p = 1/target - 1/eps_r`` on the region, zero elsewhere."""
    target = np.asarray(target_eps, dtype=float)
    if target.shape != scene.grid.dims:
        full = scene.eps_r.copy()
        full[scene.opt] = target.ravel()
        target = full
    fam = scene.family
    opt = scene.opt
    bad = opt & ((target < fam.eps_minus * (1 - _BOUND_RTOL))
                 | (target > fam.eps_plus * (1 + _BOUND_RTOL)) | ~np.isfinite(target))
    if bad.any():
        c = tuple(np.argwhere(bad)[0])
        raise InfeasibleError(f"target eps{_cell(c)} = {target[c]!r} outside "
                              f"[{fam.eps_minus}, {fam.eps_plus}]")
    if fam.kind != "full3d":
        sym = fiber_reduce(target, fam, opt)
        bad = opt & ~np.isclose(target, sym, rtol=1e-12, atol=0)
        if bad.any():
            raise InfeasibleError(f"target breaks {fam.kind} symmetry at "
                                  f"{_cell(np.argwhere(bad)[0])}")
    p = np.where(opt, 1.0 / np.where(opt, target, 1.0) - 1.0 / scene.eps_r, 0.0)
    return Direction(p)


def symmetry_project(direction: Direction, family: FeasibleFamily,
                     opt: np.ndarray | None = None) -> Direction:
    """Orthogonal projection onto directions respecting the family symmetry."""
    if family.kind == "full3d":
        return direction
    if opt is None:
        opt = family.cylinder_mask(direction.p.shape)
    return Direction(fiber_reduce(direction.p, family, opt))


def apply_direction(scene: MaterialScene, p: np.ndarray, t: float = 1.0,
                    ) -> tuple[MaterialScene, int]:
    """Move ``1/eps_r`` by ``t p`` and clip to the box; returns (scene, #clipped)."""
    p = p.p if isinstance(p, Direction) else np.asarray(p)
    inv = 1.0 / scene.eps_r + t * np.where(scene.opt, p, 0.0)
    lo, hi = scene.lower_inv(), scene.upper_inv()
    clipped = int(np.count_nonzero((inv < lo) | (inv > hi)))
    inv = np.clip(inv, lo, hi)
    eps = np.where(scene.opt, 1.0 / inv, scene.family.eps_out)
    return scene.with_eps(eps), clipped


def default_dead_band(phi: np.ndarray, opt: np.ndarray) -> float:
    vals = np.abs(phi[opt])
    return 1e-10 * float(vals.max()) if vals.size else 0.0


def bang_bang_round(scene: MaterialScene, phi: np.ndarray,
                    dead_band: float | None = None) -> MaterialScene:
    """Snap the region to ``eps_plus`` where ``phi > dead_band``, ``eps_minus``
    where ``phi < -dead_band``; cells inside the band keep their value."""
    phi = np.asarray(phi, dtype=float)
    if phi.shape != scene.grid.dims:
        full = np.zeros(scene.grid.dims)
        full[scene.opt] = phi.ravel()
        phi = full
    phi = fiber_reduce(phi, scene.family, scene.opt)
    if dead_band is None:
        dead_band = default_dead_band(phi, scene.opt)
    eps = scene.eps_r.copy()
    fam = scene.family
    eps[scene.opt & (phi > dead_band)] = fam.eps_plus
    eps[scene.opt & (phi < -dead_band)] = fam.eps_minus
    return scene.with_eps(eps)


def uniform_scene(grid: Grid, opt: np.ndarray, eps_minus: float, eps_plus: float,
                  eps_inside: float, eps_out: float | np.ndarray = 1.0,
                  sigma: np.ndarray | None = None,
                  boundary: Sequence[Boundary] | None = None,
                  kind: str = "full3d") -> MaterialScene:
    """Scene with constant permittivity ``eps_inside`` on the region."""
    dims = grid.dims
    opt = np.asarray(opt, dtype=bool)
    eps_out_arr = np.broadcast_to(np.asarray(eps_out, dtype=float), dims).copy()
    cross = z_range = None
    if kind != "full3d":
        cross = opt.any(axis=2)
        ks = np.flatnonzero(opt.any(axis=(0, 1)))
        z_range = (int(ks[0]), int(ks[-1]) + 1)
    fam = FeasibleFamily(eps_minus, eps_plus, eps_out_arr, kind, cross, z_range)
    eps = np.where(opt, eps_inside, eps_out_arr)
    sig = np.zeros(dims) if sigma is None else np.asarray(sigma, dtype=float)
    bnd = tuple(boundary) if boundary is not None else (Boundary(),) * 6
    return MaterialScene(grid, opt, fam, eps, sig, bnd)
