"""First-order eigenfrequency shift under perturbations of ``1/eps``.

For ``1/eps -> 1/eps + t p`` the eigenvalue moves as ``omega + t C1(p) + O(t^2)``
with ``C1(p) = sum_cells p g vol`` and ``g = (omega eps^2 + i sigma eps) E.E / <Psi, Psi*>``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .eigensolve import DEFAULT_TOL, EigenPair, EigenSolveError, Simplicity, simplicity_check, track
from .maxwell import DiscreteOperator, LayeredProfile1D, assemble, dispersion_1d
from .medium import Direction, MaterialScene

log = logging.getLogger(__name__)


class DegenerateError(ValueError):
    """The pairing denominator is too small for a first-order formula."""


@dataclass(frozen=True)
class SensitivityDensity:
    g: np.ndarray          # grid-shaped, zero off the optimization region
    denom: complex
    omega0: complex
    cell_volume: float
    opt: np.ndarray

    def shift(self, p: np.ndarray) -> complex:
        return first_order_shift(self, p)


def density(pair: EigenPair, op: DiscreteOperator, tol_pair: float = 1e-8) -> SensitivityDensity:
    """Sensitivity density of ``pair.omega`` with respect to ``1/eps`` per cell."""
    if simplicity_check(pair, op, tol_pair) is not Simplicity.SIMPLE:
        raise DegenerateError(f"pairing {abs(pair.pairing):.3g} below threshold; "
                              f"verdict {Simplicity.DEGENERATE.value}")
    scene = op.scene
    w = pair.omega
    ee = op.cell_ee(pair.psi.vec)
    g = (w * scene.eps_r**2 + 1j * scene.sigma * scene.eps_r) * ee / pair.pairing
    g = np.where(scene.opt, g, 0.0)
    return SensitivityDensity(g, pair.pairing, w, scene.grid.cell_volume, scene.opt)


def _as_array(p) -> np.ndarray:
    return np.asarray(p.p if isinstance(p, Direction) else p, dtype=float)


def first_order_shift(dens: SensitivityDensity, p) -> complex:
    p = _as_array(p)
    if np.any(p[~dens.opt] != 0):
        raise ValueError("direction is nonzero outside the optimization region")
    return complex(np.sum(p[dens.opt] * dens.g[dens.opt]) * dens.cell_volume)


@dataclass(frozen=True)
class FDRow:
    h: float
    slope: complex
    c1: complex
    abs_error: float
    rel_error: float
    discarded: bool = False


@dataclass(frozen=True)
class ConvergenceTable:
    rows: tuple[FDRow, ...]

    def kept(self) -> list[FDRow]:
        return [r for r in self.rows if not r.discarded]

    def errors_decreasing(self) -> bool:
        """Errors shrink as ``h`` shrinks (rows in any order)."""
        rows = sorted(self.kept(), key=lambda r: -r.h)
        return all(b.abs_error < a.abs_error for a, b in zip(rows, rows[1:]))

    def to_text(self, sep: str = "\t") -> str:
        head = sep.join(["h", "re_fd", "im_fd", "re_c1", "im_c1", "abs_err", "discarded"])
        lines = [head]
        for r in self.rows:
            lines.append(sep.join([f"{r.h:.6e}", f"{r.slope.real:.15e}", f"{r.slope.imag:.15e}",
                                   f"{r.c1.real:.15e}", f"{r.c1.imag:.15e}",
                                   f"{r.abs_error:.6e}", str(int(r.discarded))]))
        return "\n".join(lines) + "\n"


def perturbed_scene(scene: MaterialScene, p, h: float) -> MaterialScene:
    """Scene with ``1/eps`` moved by ``h p`` (no clipping)."""
    p = _as_array(p)
    inv = 1.0 / scene.eps_r + h * p
    return scene.with_eps(1.0 / inv)


def fd_validate(op: DiscreteOperator, pair: EigenPair, p, steps,
                tol: float = DEFAULT_TOL) -> ConvergenceTable:
    """Compare one-sided difference quotients of the re-solved eigenvalue with C1(p)."""
    dens = density(pair, op)
    c1 = first_order_shift(dens, p)
    rows = []
    for h in steps:
        if c1 == 0 and not np.any(_as_array(p)):
            rows.append(FDRow(h, 0j, 0j, 0.0, 0.0))
            continue
        radius = 10 * abs(h * c1) + tol * max(1.0, abs(pair.omega))
        op_h = assemble(perturbed_scene(op.scene, p, h))
        try:
            q = track(op_h, pair.omega + h * c1, pair.psi.vec, radius=radius, tol=tol)
        except EigenSolveError as exc:
            log.warning("fd row h=%g discarded: %s", h, exc)
            rows.append(FDRow(h, complex("nan"), c1, np.nan, np.nan, True))
            continue
        slope = (q.omega - pair.omega) / h
        err = abs(slope - c1)
        rows.append(FDRow(h, slope, c1, err, err / abs(c1) if c1 else np.inf))
    return ConvergenceTable(tuple(rows))


# ---------------------------------------------------------------------------
# layered 1D reference


def _layer_square_integrals(profile: LayeredProfile1D, omega: complex):
    """Per-layer ``int y^2`` for the TEM solution with ``y(0)=0, y'(0)=1``,
    plus ``y(L)``."""
    w = complex(omega)
    y, dy = 0j, 1 + 0j
    out = []
    for d, eps in profile.layers:
        k = w * np.sqrt(eps)
        a = 0.5 * (y + dy / (1j * k))
        b = 0.5 * (y - dy / (1j * k))
        e2 = np.exp(2j * k * d)
        out.append(a * a * (e2 - 1) / (2j * k) + b * b * (1 - 1 / e2) / (2j * k) + 2 * a * b * d)
        c, s = np.cos(k * d), np.sin(k * d)
        y, dy = c * y + s / k * dy, -k * s * y + c * dy
    return np.array(out), y


def layered_density(profile: LayeredProfile1D, omega: complex) -> np.ndarray:
    """Exact ``d omega / d(1/eps_j)`` per layer of a layered TEM cavity."""
    sq, y_end = _layer_square_integrals(profile, omega)
    eps = np.array([e for _, e in profile.layers])
    w = complex(omega)
    denom = 2 * w * np.sum(eps * sq) + 1j * profile.gamma * y_end**2
    return w * w * eps**2 * sq / denom


def newton_root_1d(profile: LayeredProfile1D, omega: complex, tol: float = 1e-13,
                   max_iter: int = 50) -> complex:
    z = complex(omega)
    for _ in range(max_iter):
        f, df = dispersion_1d(profile, z, derivative=True)
        step = f / df
        z -= step
        if abs(step) <= tol * max(1.0, abs(z)):
            break
    return z


def fd_validate_1d(profile: LayeredProfile1D, omega0: complex, p_layers, steps) -> ConvergenceTable:
    """Layered counterpart of ``fd_validate`` on exact dispersion roots."""
    p = np.asarray(p_layers, dtype=float)
    w0 = newton_root_1d(profile, omega0)
    c1 = complex(np.sum(p * layered_density(profile, w0)))
    rows = []
    for h in steps:
        layers = tuple((d, 1.0 / (1.0 / e + h * pj)) for (d, e), pj in zip(profile.layers, p))
        pert = LayeredProfile1D(layers, profile.gamma)
        w = newton_root_1d(pert, w0 + h * c1)
        discarded = abs(w - w0) > 10 * abs(h * c1) + 1e-12
        slope = (w - w0) / h
        err = abs(slope - c1)
        rows.append(FDRow(h, slope, c1, err, err / abs(c1) if c1 else 0.0, discarded))
    return ConvergenceTable(tuple(rows))
