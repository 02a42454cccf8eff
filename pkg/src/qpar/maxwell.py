"""Discrete Maxwell pseudo-Hamiltonian on a staggered (Yee) grid.

E components live on cell edges, H components on cell faces.  The operator
is written in the generalized form ``A x = omega B x`` with

    A = [[-i (Zb + W_sigma),  i K^T Dl],
         [ i Dl K,            0       ]]
    B = diag(W_E eps_e, -W_H)

where ``K`` is the edge-to-face circulation matrix, ``Dl`` the dual edge
lengths through each face, ``W`` the dual volumes and ``Zb`` the boundary
admittance term produced by the impedance closure ``n x E = Z H_tau``.  ``A``
is complex symmetric, which is the discrete form of the unconjugated
symmetry of the continuum operator.  The pseudo-Hamiltonian proper is
``M = B^{-1} A``.

Edge permittivity is the arithmetic mean of the (up to four) cells touching
the edge, through the averaging matrix ``P``.  The cell quantity
``E.E = P^T (e**2)`` is what makes the first-order eigenvalue shift exact.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .medium import MaterialScene, validate_scene


class InvalidSceneError(ValueError):
    def __init__(self, report):
        self.report = list(report)
        super().__init__("scene failed validation:\n  " + "\n  ".join(self.report))


class YeeLayout:
    """Index bookkeeping for edge (E) and face (H) unknowns."""

    def __init__(self, scene: MaterialScene):
        grid = scene.grid
        self.dims = grid.dims
        self.spacing = grid.spacing
        self.periodic = tuple(scene.boundary[2 * a].kind == "periodic" for a in range(3))
        self.ncell = self.dims
        self.nnode = tuple(n if p else n + 1 for n, p in zip(self.dims, self.periodic))
        self.e_shapes = [tuple(self.ncell[a] if a == c else self.nnode[a] for a in range(3))
                         for c in range(3)]
        self.h_shapes = [tuple(self.nnode[a] if a == c else self.ncell[a] for a in range(3))
                         for c in range(3)]
        self.e_offsets = np.cumsum([0] + [int(np.prod(s)) for s in self.e_shapes])
        self.h_offsets = np.cumsum([0] + [int(np.prod(s)) for s in self.h_shapes])

        self.e_active = np.ones(self.e_offsets[-1], dtype=bool)
        for f, b in enumerate(scene.boundary):
            if b.kind != "pec":
                continue
            ax, side = divmod(f, 2)
            for c in range(3):
                if c == ax:
                    continue
                arr = self.e_active[self.e_offsets[c]:self.e_offsets[c + 1]].reshape(self.e_shapes[c])
                sl = [slice(None)] * 3
                sl[ax] = self.nnode[ax] - 1 if side else 0
                arr[tuple(sl)] = False
        # faces are dropped later if no active edge feeds them
        self.h_active = np.ones(self.h_offsets[-1], dtype=bool)

    # -- index helpers -----------------------------------------------------
    def _wrap(self, idx, axis):
        return np.mod(idx, self.nnode[axis]) if self.periodic[axis] else idx

    def e_index(self, c, i):
        i = [self._wrap(np.asarray(i[a]), a) if a != c else np.asarray(i[a]) for a in range(3)]
        return self.e_offsets[c] + np.ravel_multi_index(i, self.e_shapes[c])

    def node_dual(self, axis, idx):
        """Dual length at node ``idx`` along ``axis`` (half at bounded ends)."""
        h = self.spacing[axis]
        d = np.full(np.shape(idx), h, dtype=float)
        if not self.periodic[axis]:
            n = self.nnode[axis] - 1
            d = np.where((idx == 0) | (idx == n), 0.5 * h, d)
        return d

    def e_grids(self, c):
        return np.meshgrid(*[np.arange(n) for n in self.e_shapes[c]], indexing="ij")

    def h_grids(self, c):
        return np.meshgrid(*[np.arange(n) for n in self.h_shapes[c]], indexing="ij")

    @property
    def n_e(self) -> int:
        return int(self.e_active.sum())

    @property
    def n_h(self) -> int:
        return int(self.h_active.sum())


@dataclass
class Field:
    """Eigenfield ``[E H]`` restricted to the active unknowns of an operator."""

    vec: np.ndarray
    n_e: int

    @property
    def E(self) -> np.ndarray:
        return self.vec[:self.n_e]

    @property
    def H(self) -> np.ndarray:
        return self.vec[self.n_e:]

    def __mul__(self, c):
        return Field(self.vec * c, self.n_e)

    __rmul__ = __mul__


def adjoint_state(psi: Field) -> Field:
    """``(conj E, -conj H)``: eigenvector of the energy-form adjoint for ``conj(omega)``."""
    v = np.conj(psi.vec)
    v[psi.n_e:] *= -1
    return Field(v, psi.n_e)


class DiscreteOperator:
    """Assembled pseudo-Hamiltonian for one scene."""

    def __init__(self, scene: MaterialScene, check: bool = True):
        if check:
            report = validate_scene(scene)
            if report:
                raise InvalidSceneError(report)
        self.scene = scene
        lay = self.layout = YeeLayout(scene)
        h = scene.grid.spacing
        vol = scene.grid.cell_volume

        K_full = self._circulation(lay, h)
        self._build_averaging(lay)
        zb_full = self._impedance_term(lay, scene, h)

        # drop faces fed by no active edge (normal H on PEC walls)
        e_act = lay.e_active
        K_e = K_full[:, e_act]
        h_keep = np.asarray(abs(K_e).sum(axis=1)).ravel() > 0
        lay.h_active = h_keep
        self.K = K_e[h_keep].tocsr()

        dual = []
        area = []
        for c in range(3):
            g = lay.h_grids(c)
            a, b = [x for x in range(3) if x != c]
            dual.append(lay.node_dual(c, g[c]).ravel())
            area.append(np.full(g[c].size, h[a] * h[b]))
        self.dl = np.concatenate(dual)[h_keep]
        self.face_area = np.concatenate(area)[h_keep]
        self.w_h = self.dl * self.face_area

        self.P = self._P_full[e_act].tocsr()
        self.w_e = vol * np.asarray(self.P.sum(axis=1)).ravel()
        self.zb = zb_full[e_act]
        self.n_e = int(e_act.sum())
        self.n_h = int(h_keep.sum())

        eps_e = vol * (self.P @ scene.eps_r.ravel())
        sig_e = vol * (self.P @ scene.sigma.ravel())
        self.eps_edge = eps_e / self.w_e
        self.sigma_edge = sig_e / self.w_e

        Dl = sp.diags(self.dl)
        curl_h = 1j * (self.K.T @ Dl)
        self.A = sp.bmat([[sp.diags(-1j * (self.zb + sig_e)), curl_h],
                          [curl_h.T, None]], format="csr")
        self.bdiag = np.concatenate([eps_e, -self.w_h])
        self.gdiag = np.abs(self.bdiag)
        self.M = (sp.diags(1.0 / self.bdiag) @ self.A).tocsr()

    # -- assembly pieces ---------------------------------------------------
    @staticmethod
    def _circulation(lay: YeeLayout, h) -> sp.csr_matrix:
        rows, cols, vals = [], [], []
        for c in range(3):
            a, b = (c + 1) % 3, (c + 2) % 3
            g = lay.h_grids(c)
            face = lay.h_offsets[c] + np.ravel_multi_index(g, lay.h_shapes[c])
            ia, ib, ic = g[a], g[b], g[c]

            def idx(comp, ja, jb):
                i = [None] * 3
                i[a], i[b], i[c] = ja, jb, ic
                return lay.e_index(comp, i)

            # counter-clockwise around +c; a face spanning cell j touches nodes j, j+1
            for col, v in ((idx(a, ia, ib), h[a]), (idx(a, ia, ib + 1), -h[a]),
                           (idx(b, ia + 1, ib), h[b]), (idx(b, ia, ib), -h[b])):
                rows.append(face.ravel())
                cols.append(col.ravel())
                vals.append(np.full(col.size, v))
        return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(lay.h_offsets[-1], lay.e_offsets[-1]))

    def _build_averaging(self, lay: YeeLayout):
        dims = lay.dims
        rows, cols = [], []
        for c in range(3):
            g = lay.e_grids(c)
            e = lay.e_offsets[c] + np.ravel_multi_index(g, lay.e_shapes[c])
            a, b = [x for x in range(3) if x != c]
            for da in (-1, 0):
                for db in (-1, 0):
                    cell = [None] * 3
                    cell[c] = g[c]
                    cell[a] = g[a] + da
                    cell[b] = g[b] + db
                    ok = np.ones(e.shape, dtype=bool)
                    for ax in (a, b):
                        if lay.periodic[ax]:
                            cell[ax] = np.mod(cell[ax], dims[ax])
                        else:
                            ok &= (cell[ax] >= 0) & (cell[ax] < dims[ax])
                    idx = np.ravel_multi_index([np.where(ok, ci, 0) for ci in cell], dims)
                    rows.append(e[ok])
                    cols.append(idx[ok])
        r = np.concatenate(rows)
        self._P_full = sp.csr_matrix((np.full(r.size, 0.25), (r, np.concatenate(cols))),
                                     shape=(lay.e_offsets[-1], int(np.prod(dims))))

    @staticmethod
    def _impedance_term(lay: YeeLayout, scene: MaterialScene, h) -> np.ndarray:
        zb = np.zeros(lay.e_offsets[-1])
        for f, bnd in enumerate(scene.boundary):
            if bnd.kind != "impedance":
                continue
            ax, side = divmod(f, 2)
            u, v = [x for x in range(3) if x != ax]
            nu, nv = lay.dims[u], lay.dims[v]
            z = np.broadcast_to(np.asarray(bnd.value, dtype=float), (nu, nv))
            w = 0.5 * h[u] * h[v] / z
            ju, jv = np.meshgrid(np.arange(nu), np.arange(nv), indexing="ij")
            node = np.full(ju.shape, lay.nnode[ax] - 1 if side else 0)
            for comp, iu, iv in ((u, ju, jv), (u, ju, jv + 1), (v, ju, jv), (v, ju + 1, jv)):
                i = [None] * 3
                i[ax], i[u], i[v] = node, iu, iv
                np.add.at(zb, lay.e_index(comp, i).ravel(), w.ravel())
        return zb

    # -- actions -----------------------------------------------------------
    @property
    def size(self) -> int:
        return self.n_e + self.n_h

    def apply(self, psi: Field | np.ndarray) -> Field | np.ndarray:
        if isinstance(psi, Field):
            return Field(self.M @ psi.vec, psi.n_e)
        return self.M @ psi

    def pairing(self, x: np.ndarray, y: np.ndarray) -> complex:
        """Unconjugated form ``sum(eps E1.E2 - H1.H2)`` with dual-volume weights."""
        return complex(np.sum(self.bdiag * x * y))

    def energy_inner(self, x: np.ndarray, y: np.ndarray) -> complex:
        """Sesquilinear energy form ``sum(eps E1.conj(E2) + H1.conj(H2))``."""
        return complex(np.sum(self.gdiag * x * np.conj(y)))

    def energy_norm(self, x: np.ndarray) -> float:
        return float(np.sqrt(np.sum(self.gdiag * np.abs(x) ** 2)))

    def residual(self, omega: complex, x: np.ndarray) -> float:
        r = self.M @ x - omega * x
        return self.energy_norm(r) / self.energy_norm(x)

    def energy_adjoint(self) -> sp.csr_matrix:
        """``G^{-1} M^H G`` with ``G`` the energy-form weights."""
        g = self.gdiag
        return (sp.diags(1.0 / g) @ self.M.conj().T @ sp.diags(g)).tocsr()

    def cell_ee(self, x: np.ndarray) -> np.ndarray:
        """Unconjugated ``E.E`` per cell (cell-averaged squares), grid-shaped."""
        e = x[:self.n_e]
        return (self.P.T @ (e * e)).reshape(self.scene.grid.dims)

    def cell_product(self, u: np.ndarray, v: np.ndarray) -> np.ndarray:
        """Cell average of the componentwise product of two edge fields."""
        return (self.P.T @ (u[:self.n_e] * v[:self.n_e])).reshape(self.scene.grid.dims)

    def edge_average(self, cell_values: np.ndarray) -> np.ndarray:
        """Volume-weighted mean of a cell field over the cells touching each edge."""
        vol = self.scene.grid.cell_volume
        return vol * (self.P @ np.asarray(cell_values).ravel()) / self.w_e

    @cached_property
    def stiffness(self) -> sp.csr_matrix:
        """``K^T Dl W_H^{-1} Dl K``: discrete weighted curl-curl."""
        d = self.dl / self.face_area
        return (self.K.T @ sp.diags(d) @ self.K).tocsr()

    @cached_property
    def e_ordering(self) -> np.ndarray:
        """Fill-reducing permutation of the E unknowns (geometric nested dissection).

        Edge midpoints are split recursively by planes one half-cell thick;
        separators are numbered after both halves.
        """
        lay = self.layout
        pts = []
        for c in range(3):
            g = lay.e_grids(c)
            pts.append(np.stack([g[a] + (0.5 if a == c else 0.0) for a in range(3)], -1).reshape(-1, 3))
        coords = np.concatenate(pts)[lay.e_active]
        out: list[np.ndarray] = []
        stack = [(np.arange(coords.shape[0]), False)]
        while stack:
            idx, done = stack.pop()
            if done or idx.size <= 64:
                out.append(idx)
                continue
            x = coords[idx]
            ax = int(np.argmax(x.max(0) - x.min(0)))
            d = x[:, ax] - np.round(np.median(x[:, ax]) * 2) / 2
            left, right, sep = idx[d < -0.75], idx[d > 0.75], idx[np.abs(d) <= 0.75]
            if left.size == 0 or right.size == 0:
                out.append(idx)
                continue
            # popped in reverse: left, right, then separator
            stack.extend([(sep, True), (right, False), (left, False)])
        return np.concatenate(out)

    def curl_curl(self, e: np.ndarray, omega: complex) -> np.ndarray:
        """Curl-curl of an edge field including the impedance ghost closure."""
        return (self.stiffness @ e - 1j * omega * self.zb * e) / self.w_e

    def to_coo_text(self) -> str:
        m = self.M.tocoo()
        lines = [f"{r} {c} {v.real:.17g} {v.imag:.17g}" for r, c, v in zip(m.row, m.col, m.data)]
        return "\n".join(lines) + "\n"


def assemble(scene: MaterialScene) -> DiscreteOperator:
    return DiscreteOperator(scene)


# ---------------------------------------------------------------------------
# layered 1D oracle


@dataclass(frozen=True)
class LayeredProfile1D:
    """TEM layered cavity: ``y(0) = 0`` on the left, impedance port on the right.

    ``gamma`` is the inverse normalized impedance at the port
    (``y'(L) = i omega gamma y(L)``).
    """

    layers: tuple[tuple[float, float], ...]
    gamma: float
    eps_minus: float | None = None
    eps_plus: float | None = None

    def __post_init__(self):
        layers = tuple((float(d), float(e)) for d, e in self.layers)
        if not layers or any(d <= 0 for d, _ in layers):
            raise ValueError("layers need positive thickness")
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        object.__setattr__(self, "layers", layers)

    @property
    def length(self) -> float:
        return sum(d for d, _ in self.layers)

    @classmethod
    def from_cells(cls, eps: np.ndarray, h: float, gamma: float, **kw) -> "LayeredProfile1D":
        """Merge runs of equal permittivity from a cell profile."""
        eps = np.asarray(eps, dtype=float)
        layers = []
        start = 0
        for i in range(1, eps.size + 1):
            if i == eps.size or eps[i] != eps[start]:
                layers.append(((i - start) * h, eps[start]))
                start = i
        return cls(tuple(layers), gamma, **kw)


def dispersion_1d(profile: LayeredProfile1D, omega: complex, derivative: bool = False):
    """Analytic function whose zeros are the TEM eigenfrequencies.

    Propagates ``(y, y')`` from ``(0, 1)`` through each layer and returns
    ``y'(L) - i omega gamma y(L)``; with ``derivative=True`` also d/d omega.
    """
    w = complex(omega)
    y, dy = 0j, 1 + 0j
    y_w, dy_w = 0j, 0j
    for d, eps in profile.layers:
        n = np.sqrt(eps)
        k = w * n
        c, s = np.cos(k * d), np.sin(k * d)
        sk = s / k
        if derivative:
            c_w = -s * d * n
            sk_w = (c * d * n * k - s * n) / k**2
            msk_w = -n * s - k * c * d * n
            y_w, dy_w = (c_w * y + c * y_w + sk_w * dy + sk * dy_w,
                         msk_w * y - k * s * y_w + c_w * dy + c * dy_w)
        y, dy = c * y + sk * dy, -k * s * y + c * dy
    g = profile.gamma
    f = dy - 1j * w * g * y
    if not derivative:
        return f
    return f, dy_w - 1j * g * y - 1j * w * g * y_w
