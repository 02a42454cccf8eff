"""Two-parameter perturbations of a simple zero of an analytic function.

For ``Q(z; zeta1, zeta2)`` with a simple zero at the origin, the zero moves
as ``omega(zeta) = eta1 zeta1 + eta2 zeta2 + O(|zeta|^2)``.  The harness here
tracks that zero and checks numerically that nonnegative parameters with
``zeta1 + zeta2 < delta1`` reach every point of a thin sector between the
directions of ``eta1`` and ``eta2``.
"""
from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

_CAUCHY_NODES = 16


class ProbeError(ValueError):
    """The probe violates the lemma's hypotheses."""


class TrackingError(RuntimeError):
    pass


@dataclass(frozen=True)
class AnalyticProbe:
    label: str
    eval: Callable[[complex, complex, complex], complex]
    radius: float = 1.0

    def __call__(self, z, z1=0.0, z2=0.0) -> complex:
        return complex(self.eval(z, z1, z2))


@dataclass(frozen=True)
class EtaPair:
    eta1: complex
    eta2: complex
    theta1: float
    theta2: float
    swapped: bool = False   # True when the probe's zeta labels were exchanged

    @property
    def theta0(self) -> float:
        return self.theta2 - self.theta1


def cauchy_derivative(f: Callable[[complex], complex], z0: complex, r: float,
                      n: int = _CAUCHY_NODES) -> complex:
    """``f'(z0)`` by the trapezoid rule on a circle (spectrally accurate for analytic f)."""
    w = np.exp(2j * np.pi * np.arange(n) / n)
    vals = np.array([f(z0 + r * wk) for wk in w])
    return complex(np.mean(vals / w) / r)


def _partials(probe: AnalyticProbe, z: complex, z1: float, z2: float, r: float = 1e-3):
    dz = cauchy_derivative(lambda s: probe(s, z1, z2), z, r)
    d1 = cauchy_derivative(lambda s: probe(z, s, z2), z1, r)
    d2 = cauchy_derivative(lambda s: probe(z, z1, s), z2, r)
    return dz, d1, d2


def check_analytic(probe: AnalyticProbe, n_points: int = 8, seed: int = 0, h: float = 1e-5,
                   ) -> float:
    """Largest disagreement between real-direction and imaginary-direction
    centered differences in z at random points (Cauchy-Riemann check)."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_points):
        z, a, b = (0.3 * probe.radius * (rng.random(3) - 0.5)
                   + 0.3j * probe.radius * (rng.random(3) - 0.5))
        d_re = (probe(z + h, a, b) - probe(z - h, a, b)) / (2 * h)
        d_im = (probe(z + 1j * h, a, b) - probe(z - 1j * h, a, b)) / (2j * h)
        worst = max(worst, abs(d_re - d_im) / max(1.0, abs(d_re)))
    return worst


def _raw_etas(probe: AnalyticProbe) -> tuple[complex, complex, complex]:
    q0 = probe(0.0)
    if abs(q0) > 1e-12:
        raise ProbeError(f"Q(0; 0, 0) = {q0:.3g} is not a zero")
    dz, d1, d2 = _partials(probe, 0j, 0.0, 0.0)
    if abs(dz) < 1e-8:
        raise ProbeError(f"zero is not simple: |dQ/dz| = {abs(dz):.3g}")
    return -d1 / dz, -d2 / dz, dz


def eta_coefficients(probe: AnalyticProbe) -> EtaPair:
    """First-order coefficients, labelled so that ``theta2 - theta1`` lies in (0, pi)."""
    e1, e2, _ = _raw_etas(probe)
    for k, e in ((1, e1), (2, e2)):
        if abs(e) < 1e-10:
            raise ProbeError(f"eta{k} vanishes ({abs(e):.3g})")
    gap = (cmath.phase(e2) - cmath.phase(e1)) % (2 * math.pi)
    swapped = False
    if gap > math.pi:
        e1, e2, swapped = e2, e1, True
        gap = 2 * math.pi - gap
    if gap < 1e-12 or abs(gap - math.pi) < 1e-12:
        raise ProbeError("eta1 and eta2 are parallel or anti-parallel")
    t1 = cmath.phase(e1)
    return EtaPair(e1, e2, t1, t1 + gap, swapped)


def _newton_zero(probe: AnalyticProbe, z: complex, z1: float, z2: float, tol: float,
                 max_iter: int = 40) -> complex | None:
    for _ in range(max_iter):
        q = probe(z, z1, z2)
        if abs(q) <= tol:
            return z
        dz = cauchy_derivative(lambda s: probe(s, z1, z2), z, 1e-3, 8)
        if dz == 0:
            return None
        z = z - q / dz
        if not cmath.isfinite(z) or abs(z) > 10 * probe.radius:
            return None
    return z if abs(probe(z, z1, z2)) <= tol else None


def zero_track(probe: AnalyticProbe, zeta, tol: float = 1e-13) -> complex:
    """Zero of ``Q(.; zeta)`` continued from the origin (probe's own labels)."""
    z1, z2 = (float(v) for v in zeta)
    if z1 == 0 and z2 == 0:
        return 0j
    e1, e2, _ = _raw_etas(probe)
    z = _newton_zero(probe, e1 * z1 + e2 * z2, z1, z2, tol)
    if z is not None:
        return z
    # homotopy along the ray toward zeta, halving the increment on failure
    s, ds, z = 0.0, 0.25, 0j
    while s < 1.0:
        s_new = min(1.0, s + ds)
        guess = z + (s_new - s) * (e1 * z1 + e2 * z2)
        nz = _newton_zero(probe, guess, s_new * z1, s_new * z2, tol)
        if nz is None:
            ds *= 0.5
            if ds < 1e-6:
                raise TrackingError(f"lost the zero at s={s:.6g} along zeta={zeta}")
            continue
        s, z = s_new, nz
    return z


def remainder_exponent(probe: AnalyticProbe, ts=None) -> float:
    """Fitted exponent of ``|omega(t, t) - (eta1 + eta2) t|`` as t halves.

    Returns ``inf`` when the remainder is at rounding level throughout
    (exactly linear probes).
    """
    ts = np.asarray(ts if ts is not None else 0.25 * 0.5 ** np.arange(8), dtype=float)
    e1, e2, _ = _raw_etas(probe)
    rem = np.array([abs(zero_track(probe, (t, t)) - (e1 + e2) * t) for t in ts])
    if np.all(rem <= 1e-13 * ts):
        return math.inf
    keep = rem > 1e-13 * ts
    if keep.sum() < 2:
        return math.inf
    slope, _ = np.polyfit(np.log(ts[keep]), np.log(rem[keep]), 1)
    return float(slope)


@dataclass(frozen=True)
class Covered:
    delta3: float
    samples: int
    n_angular: int
    n_radial: int
    half_plane_ok: bool = True


@dataclass(frozen=True)
class CounterexamplePoint:
    z: complex
    delta3: float
    reason: str
    zeta: tuple[float, float] | None = None


def _ordered(probe: AnalyticProbe, eta: EtaPair):
    """Probe with labels matching ``eta`` (first label has the smaller angle)."""
    if not eta.swapped:
        return probe
    return AnalyticProbe(probe.label, lambda z, a, b: probe.eval(z, b, a), probe.radius)


def _solve_for_zeta(probe: AnalyticProbe, eta: EtaPair, target: complex, tol: float = 1e-12,
                    max_iter: int = 30):
    """Real ``zeta`` with ``omega(zeta) = target`` by Newton on the 2x2 real system."""
    lin = np.array([[eta.eta1.real, eta.eta2.real], [eta.eta1.imag, eta.eta2.imag]])
    zeta = np.linalg.solve(lin, [target.real, target.imag])
    for _ in range(max_iter):
        w = zero_track(probe, zeta)
        err = w - target
        if abs(err) <= tol * max(abs(target), 1e-300):
            return zeta, w
        dz, d1, d2 = _partials(probe, w, zeta[0], zeta[1])
        j1, j2 = -d1 / dz, -d2 / dz
        jac = np.array([[j1.real, j2.real], [j1.imag, j2.imag]])
        zeta = zeta - np.linalg.solve(jac, [err.real, err.imag])
    w = zero_track(probe, zeta)
    if abs(w - target) <= 1e3 * tol * abs(target):
        return zeta, w
    raise TrackingError(f"no parameter reaches {target}")


def sector_samples(eta: EtaPair, delta2: float, delta3: float, n_angular: int = 32,
                   n_radial: int = 16) -> np.ndarray:
    """Log-polar grid strictly inside the open sector, radii in [1e-3, 0.999] delta3."""
    lo, hi = eta.theta1 + delta2, eta.theta2 - delta2
    if hi <= lo:
        raise ProbeError(f"delta2={delta2} leaves an empty sector")
    ang = lo + (np.arange(n_angular) + 0.5) * (hi - lo) / n_angular
    rad = delta3 * np.geomspace(1e-3, 0.999, n_radial)
    return (rad[:, None] * np.exp(1j * ang)[None, :]).ravel()


def sector_coverage(probe: AnalyticProbe, delta1: float, delta2: float, n_angular: int = 32,
                    n_radial: int = 16, k_max: int = 30, half_plane_tilt: float | None = None,
                    ) -> Covered | CounterexamplePoint:
    """Largest ``delta3 = 2^-k`` whose sector samples are all reached from the triangle
    ``zeta1, zeta2 > 0, zeta1 + zeta2 < delta1``."""
    eta = eta_coefficients(probe)
    q = _ordered(probe, eta)
    tilt = delta2 if half_plane_tilt is None else half_plane_tilt
    rot = cmath.exp(-1j * (eta.theta1 - tilt))
    failure = None
    for k in range(k_max + 1):
        d3 = 0.5**k
        bad = None
        half_ok = True
        for z in sector_samples(eta, delta2, d3, n_angular, n_radial):
            try:
                zeta, w = _solve_for_zeta(q, eta, complex(z))
            except (TrackingError, np.linalg.LinAlgError) as exc:
                bad = CounterexamplePoint(complex(z), d3, str(exc))
                break
            if not (zeta[0] > 0 and zeta[1] > 0 and zeta.sum() < delta1):
                bad = CounterexamplePoint(complex(z), d3, "parameters leave the triangle",
                                          (float(zeta[0]), float(zeta[1])))
                break
            half_ok &= (w * rot).imag >= -1e-12 * abs(w)
        if bad is None:
            return Covered(d3, n_angular * n_radial, n_angular, n_radial, bool(half_ok))
        failure = bad
    return failure


# ---------------------------------------------------------------------------
# registry


PROBES: dict[str, AnalyticProbe] = {
    "linear": AnalyticProbe("linear", lambda z, a, b: z - a - 1j * b),
    "linear-swapped": AnalyticProbe("linear-swapped", lambda z, a, b: z - b - 1j * a),
    "sin": AnalyticProbe("sin", lambda z, a, b: cmath.sin(z) - a * cmath.exp(1j * math.pi / 6)
                         - b * cmath.exp(2j * math.pi / 3)),
}


def get_probe(label: str) -> AnalyticProbe:
    try:
        return PROBES[label]
    except KeyError:
        raise ProbeError(f"unknown probe {label!r}; known: {', '.join(sorted(PROBES))}") from None


def coverage_record(label: str, delta1: float, delta2: float, **kw) -> dict:
    probe = get_probe(label)
    eta = eta_coefficients(probe)
    res = sector_coverage(probe, delta1, delta2, **kw)
    rec = {
        "label": label,
        "eta1": [eta.eta1.real, eta.eta1.imag],
        "eta2": [eta.eta2.real, eta.eta2.imag],
        "theta1": eta.theta1,
        "theta2": eta.theta2,
        "swapped": eta.swapped,
        "delta1": delta1,
        "delta2": delta2,
        "covered": isinstance(res, Covered),
        "delta3": res.delta3 if isinstance(res, Covered) else None,
    }
    if isinstance(res, Covered):
        rec.update(samples=res.samples, n_angular=res.n_angular, n_radial=res.n_radial,
                   half_plane_ok=res.half_plane_ok)
    else:
        rec["counterexample"] = {"z": [res.z.real, res.z.imag], "delta3": res.delta3,
                                 "reason": res.reason}
    return rec


def coverage_json(label: str, delta1: float, delta2: float, **kw) -> str:
    return json.dumps(coverage_record(label, delta1, delta2, **kw), sort_keys=True, indent=1) + "\n"
