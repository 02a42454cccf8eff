"""Binary dumps of scenes, eigenpairs and cell fields, plus the text sidecar.

Every binary file starts with the same little-endian header::

    b"QPAR"  u32 version  u32 kind  u64[3] dims  f64[3] spacing  f64[3] origin

followed by a kind-specific payload.  Scenes carry ``eps_r``, ``sigma`` (f64,
row-major) and the optimization mask (u8); the family bounds and boundary
conditions live in a ``key = value`` text file next to the dump.
"""
from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from .eigensolve import EigenPair
from .maxwell import Field
from .medium import FACES, Boundary, FeasibleFamily, Grid, MaterialScene

MAGIC = b"QPAR"
VERSION = 1
KIND_SCENE, KIND_EIGENPAIR, KIND_FIELD = 1, 2, 3
_HEADER = struct.Struct("<4sII3Q3d3d")


class SceneFormatError(ValueError):
    pass


def _header(kind: int, grid: Grid) -> bytes:
    return _HEADER.pack(MAGIC, VERSION, kind, *grid.dims, *grid.spacing, *grid.origin)


def _read_header(buf: bytes, kind: int) -> tuple[Grid, int]:
    if len(buf) < _HEADER.size:
        raise SceneFormatError("file shorter than the header")
    magic, version, got, *rest = _HEADER.unpack_from(buf)
    if magic != MAGIC:
        raise SceneFormatError(f"bad magic {magic!r}")
    if version != VERSION:
        raise SceneFormatError(f"unsupported version {version}")
    if got != kind:
        raise SceneFormatError(f"expected payload kind {kind}, found {got}")
    dims, spacing, origin = tuple(rest[:3]), tuple(rest[3:6]), tuple(rest[6:9])
    try:
        grid = Grid(dims, spacing, origin)
    except ValueError as exc:
        raise SceneFormatError(f"invalid grid in header: {exc}") from exc
    return grid, _HEADER.size


def _take(buf: bytes, off: int, count: int, dtype) -> tuple[np.ndarray, int]:
    size = count * np.dtype(dtype).itemsize
    if off + size > len(buf):
        raise SceneFormatError("truncated payload")
    return np.frombuffer(buf, dtype=dtype, count=count, offset=off).copy(), off + size


# ---------------------------------------------------------------------------
# scenes


def scene_config_text(scene: MaterialScene) -> str:
    fam = scene.family
    lines = [
        f"version = {VERSION}",
        f"family = {fam.kind}",
        f"eps_minus = {fam.eps_minus!r}",
        f"eps_plus = {fam.eps_plus!r}",
    ]
    if fam.z_range is not None:
        lines.append(f"z_range = {fam.z_range[0]} {fam.z_range[1]}")
    for name, b in zip(FACES, scene.boundary):
        vals = " ".join(repr(float(v)) for v in np.ravel(b.value))
        lines.append(f"boundary.{name} = {b.kind} {vals}")
    return "\n".join(lines) + "\n"


def parse_config_text(text: str) -> dict[str, str]:
    out = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SceneFormatError(f"config line {n}: expected key = value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def config_path(path) -> Path:
    return Path(path).with_suffix(".cfg")


def write_scene(scene: MaterialScene, path) -> Path:
    path = Path(path)
    body = b"".join([
        _header(KIND_SCENE, scene.grid),
        np.ascontiguousarray(scene.eps_r, dtype="<f8").tobytes(),
        np.ascontiguousarray(scene.sigma, dtype="<f8").tobytes(),
        np.ascontiguousarray(scene.opt, dtype=np.uint8).tobytes(),
    ])
    path.write_bytes(body)
    config_path(path).write_text(scene_config_text(scene))
    return path


def read_scene(path) -> MaterialScene:
    """Load a scene dump and its sidecar; raises SceneFormatError on malformed input."""
    path = Path(path)
    try:
        buf = path.read_bytes()
        cfg = parse_config_text(config_path(path).read_text())
    except OSError as exc:
        raise SceneFormatError(str(exc)) from exc
    grid, off = _read_header(buf, KIND_SCENE)
    n = int(np.prod(grid.dims))
    eps, off = _take(buf, off, n, "<f8")
    sigma, off = _take(buf, off, n, "<f8")
    mask, off = _take(buf, off, n, np.uint8)
    if off != len(buf):
        raise SceneFormatError(f"{len(buf) - off} trailing bytes")
    eps, sigma, opt = eps.reshape(grid.dims), sigma.reshape(grid.dims), mask.reshape(grid.dims) != 0
    try:
        kind = cfg.get("family", "full3d")
        bounds = float(cfg["eps_minus"]), float(cfg["eps_plus"])
        boundary = []
        for f, name in enumerate(FACES):
            bkind, *vals = cfg[f"boundary.{name}"].split()
            face = tuple(n for a, n in enumerate(grid.dims) if a != f // 2)
            value = float(vals[0]) if len(vals) == 1 else np.array(vals, float).reshape(face)
            boundary.append(Boundary(bkind, value))
    except (KeyError, ValueError) as exc:
        raise SceneFormatError(f"config {config_path(path).name}: {exc}") from exc
    cross = z_range = None
    if kind != "full3d":
        cross = opt.any(axis=2)
        if "z_range" in cfg:
            z_range = tuple(int(v) for v in cfg["z_range"].split())
        else:
            ks = np.flatnonzero(opt.any(axis=(0, 1)))
            z_range = (int(ks[0]), int(ks[-1]) + 1) if ks.size else (0, 0)
    try:
        # outside the region eps_out is the stored permittivity by construction
        fam = FeasibleFamily(bounds[0], bounds[1], eps, kind, cross, z_range)
    except ValueError as exc:
        raise SceneFormatError(str(exc)) from exc
    return MaterialScene(grid, opt, fam, eps, sigma, tuple(boundary))


# ---------------------------------------------------------------------------
# eigenpairs and fields


_PAIR = struct.Struct("<2d2dddQQ")


def write_eigenpair(pair: EigenPair, grid: Grid, path) -> Path:
    path = Path(path)
    psi = pair.psi
    n_h = psi.vec.size - psi.n_e
    meta = _PAIR.pack(pair.omega.real, pair.omega.imag, pair.pairing.real, pair.pairing.imag,
                      pair.residual, pair.phase, psi.n_e, n_h)
    vec = np.ascontiguousarray(psi.vec, dtype="<c16")
    path.write_bytes(_header(KIND_EIGENPAIR, grid) + meta + vec.tobytes())
    return path


def read_eigenpair(path) -> tuple[EigenPair, Grid]:
    path = Path(path)
    try:
        buf = path.read_bytes()
    except OSError as exc:
        raise SceneFormatError(str(exc)) from exc
    grid, off = _read_header(buf, KIND_EIGENPAIR)
    if off + _PAIR.size > len(buf):
        raise SceneFormatError("truncated eigenpair header")
    wr, wi, pr, pi, res, phase, n_e, n_h = _PAIR.unpack_from(buf, off)
    vec, end = _take(buf, off + _PAIR.size, n_e + n_h, "<c16")
    if end != len(buf):
        raise SceneFormatError(f"{len(buf) - end} trailing bytes")
    pair = EigenPair(complex(wr, wi), Field(vec, int(n_e)), complex(pr, pi), res, phase)
    return pair, grid


def write_field(values: np.ndarray, grid: Grid, path) -> Path:
    path = Path(path)
    data = np.ascontiguousarray(np.broadcast_to(values, grid.dims), dtype="<f8")
    path.write_bytes(_header(KIND_FIELD, grid) + data.tobytes())
    return path


def read_field(path) -> tuple[np.ndarray, Grid]:
    buf = Path(path).read_bytes()
    grid, off = _read_header(buf, KIND_FIELD)
    vals, end = _take(buf, off, int(np.prod(grid.dims)), "<f8")
    if end != len(buf):
        raise SceneFormatError(f"{len(buf) - end} trailing bytes")
    return vals.reshape(grid.dims), grid
