"""Switching functions, the Euler-Lagrange defect and bang-bang structure metrics."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .eigensolve import EigenPair, NotFirstOrderOptimal, fix_phase
from .maxwell import DiscreteOperator
from .medium import MaterialScene, fiber_reduce

VARIANTS = ("full3d", "crystal2d", "crystal1d", "sigma")
_FAMILY_FOR = {"crystal2d": "cylinder2d", "crystal1d": "slab1d"}


class VariantError(ValueError):
    pass


@dataclass(frozen=True)
class SwitchingField:
    phi: np.ndarray      # grid-shaped; meaningful on the optimization region
    variant: str
    outside: np.ndarray  # cellwise Im(E.E) used as the weight off the region

    def on_region(self, opt: np.ndarray) -> np.ndarray:
        return self.phi[opt]


@dataclass(frozen=True)
class ELReport:
    residual: float
    singular_fraction: float
    bang_bang_fraction: float
    phase_theta: float
    variant: str = "full3d"
    vacuous: bool = False
    first_order_optimal: bool = True

    def to_dict(self) -> dict:
        d = asdict(self)
        if not math.isfinite(d["residual"]):
            d["residual"] = None
        return d


def _check_variant(variant: str, scene: MaterialScene):
    if variant not in VARIANTS:
        raise VariantError(f"unknown variant {variant!r}; expected one of {', '.join(VARIANTS)}")
    need = _FAMILY_FOR.get(variant)
    if need is not None and scene.family.kind != need:
        raise VariantError(f"variant {variant} needs a {need} family, scene has {scene.family.kind}")


def switching(pair: EigenPair, op: DiscreteOperator, variant: str = "full3d",
              part: str = "im") -> SwitchingField:
    """Switching field of an eigenpair whose phase has been fixed.

    ``part="re"`` returns the companion field built from ``Re`` instead of ``Im``.
    """
    scene = op.scene
    _check_variant(variant, scene)
    take = np.imag if part == "im" else np.real
    ee = op.cell_ee(pair.psi.vec)
    cellwise = take(ee)
    hx, hy, hz = scene.grid.spacing
    if variant == "full3d":
        phi = cellwise
    elif variant == "sigma":
        phi = take((scene.eps_r**2 + 1j * scene.sigma * scene.eps_r / pair.omega) * ee)
    elif variant == "crystal2d":
        phi = fiber_reduce(cellwise * hz, scene.family, scene.opt, how="sum")
    else:
        phi = fiber_reduce(cellwise * hx * hy, scene.family, scene.opt, how="sum")
    phi = np.where(scene.opt, phi, 0.0)
    return SwitchingField(phi, variant, np.where(scene.opt, 0.0, cellwise))


def field_identity_phi(e_cells: np.ndarray) -> np.ndarray:
    """``2 sum_j Re E_j Im E_j`` for cell-centered vectors of shape (..., 3)."""
    return 2.0 * np.sum(e_cells.real * e_cells.imag, axis=-1)


def im_dot(e_cells: np.ndarray) -> np.ndarray:
    """``Im(E.E)`` (unconjugated) for cell-centered vectors of shape (..., 3)."""
    return np.imag(np.sum(e_cells * e_cells, axis=-1))


def _whole_domain_phi(field: SwitchingField, opt: np.ndarray) -> np.ndarray:
    return np.where(opt, field.phi, field.outside)


def el_defect(pair: EigenPair, op: DiscreteOperator, field: SwitchingField):
    """Per-edge EL defect and the scale it is measured against.

    Returns ``(R, scale, vacuous)`` where ``R`` is the edge defect vector.
    """
    scene = op.scene
    w = pair.omega
    e = pair.psi.E
    phi = _whole_domain_phi(field, scene.opt)
    aphi = np.abs(phi)
    lo, hi = scene.eps_bounds()
    bracket = 0.5 * (hi + lo) * aphi + 0.5 * (hi - lo) * phi
    a = op.edge_average(aphi)
    m = op.edge_average(aphi * scene.eps_r - bracket)
    cc = op.curl_curl(e, w)
    maxwell = cc - w * w * op.eps_edge * e - 1j * w * op.sigma_edge * e
    R = a * maxwell + w * w * m * e
    wts = np.sqrt(op.w_e)
    scale = np.linalg.norm(wts * a * cc) + abs(w) ** 2 * np.linalg.norm(wts * a * e)
    return R, scale, not np.any(field.phi[scene.opt])


def el_residual(pair: EigenPair, op: DiscreteOperator, field: SwitchingField) -> tuple[float, bool]:
    """Normalized EL defect and the vacuous flag (switching field identically zero)."""
    R, scale, vacuous = el_defect(pair, op, field)
    if vacuous:
        return 0.0, True
    if scale == 0:
        return float("nan"), False
    return float(np.linalg.norm(np.sqrt(op.w_e) * R) / scale), False


def structure_metrics(scene: MaterialScene, phi: np.ndarray, dead_band: float = 1e-10,
                      ) -> tuple[float, float]:
    """``(singular_fraction, bang_bang_fraction)`` on the optimization region.

    ``dead_band`` is relative to ``max|phi|``.  A cell agrees when it sits at
    ``eps_plus`` with ``phi > 0`` or at ``eps_minus`` with ``phi < 0``.
    """
    opt = scene.opt
    fam = scene.family
    phi = fiber_reduce(np.asarray(phi, dtype=float), fam, opt)[opt]
    vol = np.full(phi.shape, scene.grid.cell_volume)
    pmax = np.abs(phi).max() if phi.size else 0.0
    if pmax == 0:
        return 1.0, 1.0
    singular = np.abs(phi) <= dead_band * pmax
    sing_frac = float(vol[singular].sum() / vol.sum())
    eps = scene.eps_r[opt]
    at_plus = np.isclose(eps, fam.eps_plus, rtol=1e-12, atol=0)
    at_minus = np.isclose(eps, fam.eps_minus, rtol=1e-12, atol=0)
    agree = ((phi > 0) & at_plus) | ((phi < 0) & at_minus)
    live = ~singular
    bb = float(agree[live].sum() / live.sum()) if live.any() else 1.0
    return sing_frac, bb


def default_variant(scene: MaterialScene) -> str:
    return {"slab1d": "crystal1d", "cylinder2d": "crystal2d"}.get(scene.family.kind, "full3d")


def el_report(pair: EigenPair, op: DiscreteOperator, variant: str | None = None,
              dead_band: float = 1e-10, fixed: bool = False,
              strict: bool = True) -> tuple[ELReport, EigenPair, SwitchingField]:
    """Phase-fix (unless ``fixed``), build the switching field and measure it.

    With ``strict=False`` a point that is not first-order optimal is still
    measured (phase from the widest gap of the cone) and flagged.
    """
    variant = variant or default_variant(op.scene)
    optimal = True
    if not fixed:
        try:
            pair = fix_phase(pair, op)
        except NotFirstOrderOptimal:
            if strict:
                raise
            optimal = False
            pair = fix_phase(pair, op, strict=False)
    field = switching(pair, op, variant)
    res, vacuous = el_residual(pair, op, field)
    sing, bb = structure_metrics(op.scene, field.phi, dead_band)
    return ELReport(res, sing, bb, pair.phase, variant, vacuous, optimal), pair, field
