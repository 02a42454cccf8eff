"""Eigenfrequency search, continuation, simplicity and phase fixing.

Eigenvalues of ``M = B^{-1} A`` are located by shift-and-invert Arnoldi.
The shifted solve ``(A - s B) x = y`` is reduced to the E unknowns,

    (S / s - s W eps - i (Zb + W sigma)) e = y_E - C^T (y_H / (s W_H)),

which roughly halves the sparse factorization cost compared with the full
first-order system.  Eigenpairs are polished by inverse iteration with the
unconjugated Rayleigh quotient ``x^T A x / x^T B x``, which is stationary
for complex-symmetric pencils.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as sla

from .maxwell import DiscreteOperator, Field, LayeredProfile1D, dispersion_1d
from .medium import fiber_labels

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-9


class EigenSolveError(RuntimeError):
    """Iteration did not converge for the requested window."""


class NotFirstOrderOptimal(RuntimeError):
    """The cone of first-order shifts is not contained in any half-plane."""


class BoundaryZeroError(ValueError):
    """The dispersion function vanishes (numerically) on a rectangle edge."""


class Simplicity(str, enum.Enum):
    SIMPLE = "Simple"
    DEGENERATE = "Degenerate-or-ill-conditioned"


@dataclass(frozen=True)
class ComplexFrequency:
    omega: complex

    @property
    def gamma(self) -> float:
        return -self.omega.imag

    @property
    def q(self) -> float:
        return abs(self.omega.real) / (-2.0 * self.omega.imag) if self.omega.imag < 0 else np.inf


@dataclass(frozen=True)
class SearchWindow:
    center: complex
    radius: float
    count: int = 1

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("window radius must be positive")
        if self.count < 1:
            raise ValueError("window count must be at least 1")


@dataclass(frozen=True)
class EigenPair:
    omega: complex
    psi: Field
    pairing: complex
    residual: float
    phase: float = 0.0

    @property
    def frequency(self) -> ComplexFrequency:
        return ComplexFrequency(self.omega)

    def scaled(self, c: complex) -> "EigenPair":
        """Same pair with the eigenfield multiplied by ``c``."""
        return replace(self, psi=self.psi * c, pairing=self.pairing * c * c)


class ShiftInvert:
    """Factorization of ``A - s B`` through the E-only Schur complement."""

    def __init__(self, op: DiscreteOperator, shift: complex):
        s = complex(shift)
        if abs(s) < 1e-12:
            s = 1e-6 + 0j
        self.op = op
        self.shift = s
        ne = op.n_e
        self._sw_h = s * op.w_h
        schur = (op.stiffness / s
                 - sp.diags(s * op.bdiag[:ne] + 1j * (op.zb + op.w_e * op.sigma_edge)))
        self._perm = op.e_ordering
        self._lu = sla.splu(schur.tocsr()[self._perm][:, self._perm].tocsc(), permc_spec="NATURAL")
        # C = i Dl K maps E to the H rows of A
        self._C = (1j * (sp.diags(op.dl) @ op.K)).tocsr()

    def solve(self, y: np.ndarray) -> np.ndarray:
        ne = self.op.n_e
        yE, yH = y[:ne], y[ne:]
        t = yH / self._sw_h
        rhs = np.asarray(yE - self._C.T @ t, dtype=complex)
        e = np.empty_like(rhs)
        e[self._perm] = self._lu.solve(rhs[self._perm])
        h = t - (self._C @ e) / self._sw_h
        return np.concatenate([e, h])

    def inverse_map(self, v: np.ndarray) -> np.ndarray:
        """``(M - s I)^{-1} v``."""
        return self.solve(self.op.bdiag * v)


def rayleigh(op: DiscreteOperator, x: np.ndarray) -> complex:
    return complex(x @ (op.A @ x)) / complex(np.sum(op.bdiag * x * x))


def _normalize(op: DiscreteOperator, x: np.ndarray) -> np.ndarray:
    """Unit energy norm, phase fixed so the largest entry is real positive."""
    x = x / op.energy_norm(x)
    k = int(np.argmax(np.abs(x)))
    return x * (abs(x[k]) / x[k])


def _polish(op: DiscreteOperator, x: np.ndarray, solver: ShiftInvert, tol: float,
            max_iter: int = 12) -> tuple[complex, np.ndarray, float]:
    x = _normalize(op, x)
    w = rayleigh(op, x)
    res = op.residual(w, x)
    refactored = 0
    it = 0
    while res > 0.01 * tol and it < max_iter:
        it += 1
        x = _normalize(op, solver.inverse_map(x))
        w_new = rayleigh(op, x)
        res = op.residual(w_new, x)
        stalled = abs(w_new - w) > 0.5 * abs(w - solver.shift) and it > 3
        w = w_new
        if (stalled or it == max_iter // 2) and res > tol and refactored < 2:
            solver = ShiftInvert(op, w)
            refactored += 1
    return w, x, res


def _make_pair(op: DiscreteOperator, w: complex, x: np.ndarray, res: float) -> EigenPair:
    return EigenPair(complex(w), Field(x, op.n_e), op.pairing(x, x), float(res))


def find_eigs(op: DiscreteOperator, window: SearchWindow, seed: int = 0,
              tol: float = DEFAULT_TOL) -> list[EigenPair]:
    """Eigenpairs inside ``window``, sorted by distance to its center."""
    n = op.size
    solver = ShiftInvert(op, window.center)
    k = min(window.count + 4, n - 2)
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    s = solver.shift
    # M (M - sI)^{-1} / s maps the static kernel (omega = 0) to zero
    OP = sla.LinearOperator((n, n), matvec=lambda v: solver.inverse_map(v) + v / s, dtype=complex)
    try:
        nu, vecs = sla.eigs(OP, k=k, which="LM", v0=v0, tol=1e-11, maxiter=max(500, 40 * k))
    except sla.ArpackNoConvergence as exc:
        nu, vecs = exc.eigenvalues, exc.eigenvectors
        if nu.size == 0:
            raise EigenSolveError(f"no convergence in window center={window.center} "
                                  f"radius={window.radius}") from exc
    keep = np.abs(nu * s - 1) > 1e-14
    nu, vecs = nu[keep], vecs[:, keep]
    omegas = s * s * nu / (s * nu - 1)
    order = np.argsort(np.abs(omegas - window.center))
    pairs: list[EigenPair] = []
    for j in order:
        if abs(omegas[j] - window.center) > window.radius:
            continue
        w, x, res = _polish(op, vecs[:, j], solver, tol)
        if res > tol:
            raise EigenSolveError(f"residual {res:.3g} above {tol:g} for omega={w} "
                                  f"in window center={window.center}")
        if abs(w - window.center) > window.radius:
            continue
        if any(abs(w - p.omega) <= 1e-10 * max(1.0, abs(w)) and
               abs(op.energy_inner(x, p.psi.vec)) > 0.99 for p in pairs):
            continue
        pairs.append(_make_pair(op, w, x, res))
        if len(pairs) == window.count:
            break
    pairs.sort(key=lambda p: abs(p.omega - window.center))
    return pairs


def track(op: DiscreteOperator, omega_guess: complex, x_guess: np.ndarray,
          radius: float | None = None, tol: float = DEFAULT_TOL) -> EigenPair:
    """Continue an eigenpair to a nearby operator by shifted inverse iteration.

    Raises EigenSolveError when the converged eigenvalue lies farther than
    ``radius`` from the guess (branch jump).
    """
    solver = ShiftInvert(op, omega_guess)
    w, x, res = _polish(op, np.asarray(x_guess, dtype=complex), solver, tol)
    if res > tol:
        raise EigenSolveError(f"continuation from {omega_guess} stalled at residual {res:.3g}")
    if radius is not None and abs(w - omega_guess) > radius:
        raise EigenSolveError(f"branch jump: {omega_guess} -> {w} exceeds radius {radius:.3g}")
    return _make_pair(op, w, x, res)


def simplicity_check(pair: EigenPair, op: DiscreteOperator,
                     tol_pair: float = 1e-8) -> Simplicity:
    """Simple iff ``|<Psi, Psi_star>| >= tol_pair * ||Psi||^2``."""
    norm2 = op.energy_norm(pair.psi.vec) ** 2
    verdict = Simplicity.SIMPLE if abs(pair.pairing) >= tol_pair * norm2 else Simplicity.DEGENERATE
    log.debug("simplicity: |pairing|/||psi||^2 = %.3g (tol %.1g) -> %s",
              abs(pair.pairing) / norm2, tol_pair, verdict.value)
    return verdict


# ---------------------------------------------------------------------------
# phase fixing


def cone_generators(pair: EigenPair, op: DiscreteOperator) -> np.ndarray:
    """Extreme rays of ``{sum p eps^2 E.E vol : p admissible}`` (complex numbers).

    One ray per fiber and available sign: ``+T`` where ``1/eps`` can grow,
    ``-T`` where it can shrink.
    """
    scene = op.scene
    opt = scene.opt
    vol = scene.grid.cell_volume
    t_cell = scene.eps_r**2 * op.cell_ee(pair.psi.vec) * vol
    lab = fiber_labels(scene.family, opt)
    nfib = int(lab.max()) + 1
    t_fib = np.bincount(lab[opt], weights=t_cell[opt].real, minlength=nfib) \
        + 1j * np.bincount(lab[opt], weights=t_cell[opt].imag, minlength=nfib)
    inv = 1.0 / scene.eps_r[opt]
    first = np.zeros(nfib, dtype=np.int64)
    first[lab[opt]] = np.arange(inv.size)
    inv_f = inv[first]
    lo = 1.0 / scene.family.eps_plus - inv_f
    hi = 1.0 / scene.family.eps_minus - inv_f
    eps_gap = 1e-12 * (1.0 / scene.family.eps_minus)
    rays = [t_fib[hi > eps_gap], -t_fib[lo < -eps_gap]]
    rays = np.concatenate(rays)
    scale = np.abs(t_fib).max() if t_fib.size else 0.0
    return rays[np.abs(rays) > 1e-14 * scale]


def phase_rotation(rays: np.ndarray, angle_tol: float = 1e-6, strict: bool = True) -> float:
    """Rotation ``beta`` putting the cone spanned by ``rays`` into the upper
    half-plane, centered on the positive imaginary axis.

    With ``strict=False`` a cone wider than a half-plane is still rotated
    about the center of its largest gap instead of raising.
    """
    if rays.size == 0:
        return 0.0
    ang = np.sort(np.mod(np.angle(rays), 2 * np.pi))
    gaps = np.diff(np.concatenate([ang, [ang[0] + 2 * np.pi]]))
    k = int(np.argmax(gaps))
    if strict and gaps[k] < np.pi - angle_tol:
        raise NotFirstOrderOptimal(
            f"first-order cone spans more than a half-plane (largest gap {gaps[k]:.6f} rad)")
    center = ang[k] + 0.5 * gaps[k]
    return float(np.angle(np.exp(1j * (-0.5 * np.pi - center))))


def fix_phase(pair: EigenPair, op: DiscreteOperator, angle_tol: float = 1e-6,
              strict: bool = True) -> EigenPair:
    """Multiply the eigenfield by ``exp(i theta1)`` so the achievable cone of
    ``sum p eps^2 E.E`` lies in the closed upper half-plane."""
    beta = phase_rotation(cone_generators(pair, op), angle_tol, strict)
    theta = 0.5 * beta
    out = pair.scaled(np.exp(1j * theta))
    return replace(out, phase=float(np.angle(np.exp(1j * (pair.phase + theta)))))


# ---------------------------------------------------------------------------
# argument-principle root finder for the layered oracle


def _edge_phase(f, a: complex, b: complex, n0: int = 32, max_level: int = 18) -> tuple[float, float]:
    """Accumulated arg change of ``f`` along segment a->b and min |f| seen."""
    ts = np.linspace(0.0, 1.0, n0 + 1)
    vals = [f(a + (b - a) * t) for t in ts]
    total = 0.0
    fmin = min(abs(v) for v in vals)
    stack = [(ts[i], ts[i + 1], vals[i], vals[i + 1], 0) for i in range(n0)][::-1]
    while stack:
        t0, t1, v0, v1, lvl = stack.pop()
        d = np.angle(v1 / v0)
        if abs(d) > np.pi / 8 and lvl < max_level:
            tm = 0.5 * (t0 + t1)
            vm = f(a + (b - a) * tm)
            fmin = min(fmin, abs(vm))
            stack.append((tm, t1, vm, v1, lvl + 1))
            stack.append((t0, tm, v0, vm, lvl + 1))
        else:
            total += d
    return total, fmin


def winding_number(f, rect: tuple[float, float, float, float], boundary_tol: float = 1e-12) -> int:
    """Zeros of analytic ``f`` inside ``rect = (xmin, xmax, ymin, ymax)``."""
    x0, x1, y0, y1 = rect
    corners = [complex(x0, y0), complex(x1, y0), complex(x1, y1), complex(x0, y1)]
    total = 0.0
    for a, b in zip(corners, corners[1:] + corners[:1]):
        d, fmin = _edge_phase(f, a, b)
        if fmin <= boundary_tol:
            raise BoundaryZeroError(f"|f| <= {boundary_tol:g} on edge {a}->{b}; perturb the rectangle")
        total += d
    n = total / (2 * np.pi)
    if abs(n - round(n)) > 1e-3:
        raise BoundaryZeroError(f"non-integer winding {n:.6f}; perturb the rectangle")
    return int(round(n))


def _newton_1d(profile, z: complex, tol: float, max_iter: int = 60) -> tuple[complex, float]:
    best, fbest = z, np.inf
    for _ in range(max_iter):
        f, df = dispersion_1d(profile, z, derivative=True)
        if abs(f) < fbest:
            best, fbest = z, abs(f)
        if abs(f) <= tol or df == 0:
            break
        step = f / df
        z = z - step
        if abs(step) <= 1e-16 * max(1.0, abs(z)):
            f = dispersion_1d(profile, z)
            if abs(f) < fbest:
                best, fbest = z, abs(f)
            break
    return best, fbest


def isolate_roots_1d(profile: LayeredProfile1D, rect, tol: float = 1e-12,
                     min_size: float = 1e-9) -> list[tuple[complex, int]]:
    """Roots of ``dispersion_1d`` inside ``rect`` with winding multiplicities."""
    def f(z):
        return dispersion_1d(profile, z)

    out: list[tuple[complex, int]] = []

    def recurse(r, count, depth):
        if count == 0:
            return
        x0, x1, y0, y1 = r
        if count == 1:
            z, fz = _newton_1d(profile, complex(0.5 * (x0 + x1), 0.5 * (y0 + y1)), tol)
            if x0 < z.real < x1 and y0 < z.imag < y1 and fz <= tol:
                out.append((z, 1))
                return
        if max(x1 - x0, y1 - y0) < min_size or depth > 60:
            z, fz = _newton_1d(profile, complex(0.5 * (x0 + x1), 0.5 * (y0 + y1)), tol)
            out.append((z, count))
            return
        # bisect the longer side; nudge the cut off zeros
        for nudge in (0.0, 1e-3, -2e-3, 5e-3, -7e-3):
            try:
                if x1 - x0 >= y1 - y0:
                    m = 0.5 * (x0 + x1) + nudge * (x1 - x0)
                    kids = [(x0, m, y0, y1), (m, x1, y0, y1)]
                else:
                    m = 0.5 * (y0 + y1) + nudge * (y1 - y0)
                    kids = [(x0, x1, y0, m), (x0, x1, m, y1)]
                counts = [winding_number(f, k, 0.0) for k in kids]
                break
            except BoundaryZeroError:
                continue
        else:
            raise BoundaryZeroError(f"could not split rectangle {r} away from zeros")
        if sum(counts) != count:
            raise EigenSolveError(f"winding not conserved on split of {r}: {counts} vs {count}")
        for k, c in zip(kids, counts):
            recurse(k, c, depth + 1)

    recurse(tuple(float(v) for v in rect), winding_number(f, rect), 0)
    out.sort(key=lambda zm: (zm[0].real, zm[0].imag))
    return out


def roots_1d(profile: LayeredProfile1D, rect, tol: float = 1e-12) -> list[complex]:
    """All zeros of ``dispersion_1d`` inside ``rect``, repeated by multiplicity."""
    return [z for z, m in isolate_roots_1d(profile, rect, tol) for _ in range(m)]
