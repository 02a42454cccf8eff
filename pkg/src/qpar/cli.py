"""``qpar`` command line: solve, optimize, sweep, verify-el, lemma, testbed.

Exit codes: 0 on success (including frontier entries flagged NotAchievable),
1 on I/O or validation errors, 2 when a search window holds no eigenvalue.
Structured results are JSON with sorted keys; timestamps go to ``run.log``.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from . import __version__
from .eigensolve import EigenSolveError, SearchWindow, find_eigs, roots_1d
from .elverify import VARIANTS, VariantError, el_report
from .maxwell import InvalidSceneError, LayeredProfile1D, assemble
from .medium import MaterialScene, validate_scene
from .pareto import (NotAchievable, NotAchievableError, OptimizeSettings, frontier_json,
                     optimize, sweep_frontier)
from .perturb2 import ProbeError, coverage_json
from .serialize import (SceneFormatError, read_eigenpair, read_scene, write_eigenpair,
                        write_scene)
from .testbeds import TESTBEDS, UnknownTestbed, build, profile_scene

log = logging.getLogger("qpar")

EXIT_OK, EXIT_ERROR, EXIT_NOT_FOUND = 0, 1, 2


class CliError(Exception):
    """Bad input; reported on stderr with exit code 1."""


@dataclass
class RunConfig:
    command: str
    scene: str | None = None
    testbed: str | None = None
    eigenpair: str | None = None
    alpha: float | None = None
    alphas: list[float] | None = None
    window_center: str | None = None
    window_radius: float | None = None
    count: int = 4
    variant: str | None = None
    probe: str | None = None
    delta1: float = 0.1
    delta2: float = 0.1
    seed: int = 0
    threads: int = 1
    out_dir: str = "."
    tol_eigen: float = 1e-9
    tol_alpha: float = 1e-6
    dead_band: float = 1e-10

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        data = json.loads(text)
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return cls(**data)

    @classmethod
    def from_args(cls, ns: argparse.Namespace) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in vars(ns).items() if k in known})

    def settings(self) -> OptimizeSettings:
        return OptimizeSettings(tol_eigen=self.tol_eigen, tol_alpha=self.tol_alpha,
                                dead_band=self.dead_band, seed=self.seed, variant=self.variant)


def parse_complex(text: str) -> complex:
    try:
        return complex(text.replace(" ", "").replace("i", "j"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a complex number: {text!r}") from None


def _positive_int(text: str) -> int:
    n = int(text)
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def _alpha_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.replace(",", " ").split()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad alpha list {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=_positive_int, default=1,
                        help="worker cap; runs are sequential, recorded for provenance")
    common.add_argument("--out-dir", default=".")
    common.add_argument("--tol-eigen", type=float, default=1e-9)
    common.add_argument("--tol-alpha", type=float, default=1e-6)
    common.add_argument("--dead-band", type=float, default=1e-10)

    source = argparse.ArgumentParser(add_help=False)
    group = source.add_mutually_exclusive_group(required=True)
    group.add_argument("--scene", help="scene dump (with .cfg sidecar)")
    group.add_argument("--testbed", help=f"one of: {', '.join(TESTBEDS)}")

    p = argparse.ArgumentParser(prog="qpar", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"qpar {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", parents=[common, source], help="eigenpairs in a window")
    s.add_argument("--window-center", required=True)
    s.add_argument("--window-radius", type=float, required=True)
    s.add_argument("--count", type=_positive_int, default=4)

    for name, helptext in (("optimize", "minimize the loss rate at one alpha"),
                           ("sweep", "trace the frontier over several alphas")):
        o = sub.add_parser(name, parents=[common, source], help=helptext)
        if name == "optimize":
            o.add_argument("--alpha", type=float, required=True)
        else:
            o.add_argument("--alphas", type=_alpha_list, required=True,
                           help="comma or space separated, increasing")
        o.add_argument("--variant", choices=VARIANTS)

    v = sub.add_parser("verify-el", parents=[common], help="EL report for a stored eigenpair")
    v.add_argument("--eigenpair", required=True)
    v.add_argument("--scene", required=True)
    v.add_argument("--variant", choices=VARIANTS)

    lem = sub.add_parser("lemma", parents=[common], help="sector coverage for a probe")
    lem.add_argument("--probe", required=True)
    lem.add_argument("--delta1", type=float, default=0.1)
    lem.add_argument("--delta2", type=float, default=0.1)

    t = sub.add_parser("testbed", parents=[common], help="dump a named scene and its oracles")
    t.add_argument("name", nargs="?", help="omit to list testbeds")
    return p


# ---------------------------------------------------------------------------
# helpers


def _write_json(path: Path, payload) -> Path:
    path.write_text(json.dumps(payload, sort_keys=True, indent=1, allow_nan=False) + "\n")
    return path


def _load_scene(cfg: RunConfig) -> tuple[MaterialScene, LayeredProfile1D | None]:
    if cfg.testbed:
        try:
            obj = build(cfg.testbed)
        except UnknownTestbed as exc:
            raise CliError(exc.args[0]) from None
        if isinstance(obj, LayeredProfile1D):
            return profile_scene(obj), obj
        return obj, None
    try:
        scene = read_scene(cfg.scene)
    except SceneFormatError as exc:
        raise CliError(f"{cfg.scene}: {exc}") from None
    problems = validate_scene(scene)
    if problems:
        raise CliError(f"{cfg.scene}: invalid scene\n  " + "\n  ".join(problems))
    return scene, None


def _setup_logging(out: Path) -> tuple[logging.Handler, ...]:
    level = getattr(logging, os.environ.get("QPAR_LOG", "WARNING").upper(), logging.WARNING)
    root = logging.getLogger()
    root.setLevel(min(level, logging.INFO))
    console = logging.StreamHandler(sys.stderr)
    console.setLevel(level)
    console.setFormatter(logging.Formatter("%(levelname)s %(name)s: %(message)s"))
    sidecar = logging.FileHandler(out / "run.log", mode="a")
    sidecar.setLevel(logging.INFO)
    sidecar.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    root.addHandler(console)
    root.addHandler(sidecar)
    return console, sidecar


def _alpha_tag(alpha: float) -> str:
    return f"{alpha:.6g}".replace("-", "m")


# ---------------------------------------------------------------------------
# commands


def cmd_solve(cfg: RunConfig, out: Path) -> int:
    scene, profile = _load_scene(cfg)
    try:
        window = SearchWindow(parse_complex(cfg.window_center), cfg.window_radius, cfg.count)
    except (argparse.ArgumentTypeError, ValueError) as exc:
        raise CliError(f"bad window: {exc}") from None
    op = assemble(scene)
    pairs = find_eigs(op, window, seed=cfg.seed, tol=cfg.tol_eigen)
    entries = []
    for k, pair in enumerate(pairs):
        name = f"eigenpair_{k}.bin"
        write_eigenpair(pair, scene.grid, out / name)
        entries.append({"file": name, "omega": [pair.omega.real, pair.omega.imag],
                        "gamma": pair.frequency.gamma, "Q": pair.frequency.q,
                        "residual": pair.residual})
    summary = {"window": {"center": [window.center.real, window.center.imag],
                          "radius": window.radius, "count": window.count},
               "eigenpairs": entries}
    if profile is not None:
        c, r = window.center, window.radius
        exact = roots_1d(profile, (c.real - r, c.real + r, c.imag - r, c.imag + r))
        summary["layered_roots"] = [[z.real, z.imag] for z in exact if abs(z - c) <= r]
    _write_json(out / "summary.json", summary)
    for e in entries:
        print(f"{e['file']}  omega = {e['omega'][0]:.12g} {e['omega'][1]:+.12g}i")
    if not pairs:
        print(f"no eigenvalue within {window.radius} of {window.center}", file=sys.stderr)
        return EXIT_NOT_FOUND
    return EXIT_OK


def _dump_points(points, out: Path) -> list[str | None]:
    files = []
    for pt in points:
        if isinstance(pt, NotAchievable):
            files.append(None)
            continue
        tag = _alpha_tag(pt.alpha)
        write_scene(pt.scene, out / f"scene_alpha_{tag}.bin")
        write_eigenpair(pt.pair, pt.scene.grid, out / f"eigenpair_alpha_{tag}.bin")
        files.append(f"scene_alpha_{tag}.bin")
    return files


def cmd_optimize(cfg: RunConfig, out: Path) -> int:
    scene, _ = _load_scene(cfg)
    if cfg.command == "optimize":
        try:
            points = [optimize(scene, cfg.alpha, cfg.settings())]
        except NotAchievableError as exc:
            points = [exc.report]
    else:
        try:
            points = sweep_frontier(scene, cfg.alphas, cfg.settings())
        except ValueError as exc:
            raise CliError(str(exc)) from None
    files = _dump_points(points, out)
    (out / "frontier.json").write_text(frontier_json(points, files))
    for pt in points:
        if isinstance(pt, NotAchievable):
            print(f"alpha={pt.alpha:g}  NotAchievable: {pt.reason}")
        else:
            print(f"alpha={pt.alpha:g}  gamma={pt.gamma:.10g}  Q={pt.q_factor:.6g}  "
                  f"converged={pt.converged}")
    return EXIT_OK


def cmd_verify_el(cfg: RunConfig, out: Path) -> int:
    try:
        scene = read_scene(cfg.scene)
        pair, grid = read_eigenpair(cfg.eigenpair)
    except SceneFormatError as exc:
        raise CliError(str(exc)) from None
    problems = validate_scene(scene)
    if problems:
        raise CliError(f"{cfg.scene}: invalid scene\n  " + "\n  ".join(problems))
    if grid.dims != scene.grid.dims:
        raise CliError(f"eigenpair grid {grid.dims} does not match scene grid {scene.grid.dims}")
    op = assemble(scene)
    if pair.psi.n_e != op.n_e or pair.psi.vec.size != op.size:
        raise CliError("eigenpair length does not match the scene's unknown count")
    try:
        report, _, _ = el_report(pair, op, cfg.variant, cfg.dead_band, strict=False)
    except VariantError as exc:
        raise CliError(str(exc)) from None
    _write_json(out / "el_report.json", report.to_dict())
    print(json.dumps(report.to_dict(), sort_keys=True))
    return EXIT_OK


def cmd_lemma(cfg: RunConfig, out: Path) -> int:
    try:
        text = coverage_json(cfg.probe, cfg.delta1, cfg.delta2)
    except ProbeError as exc:
        raise CliError(exc.args[0]) from None
    (out / f"lemma_{cfg.probe}.json").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def _oracle_value(v):
    if isinstance(v, complex):
        return [v.real, v.imag]
    if isinstance(v, (tuple, list)):
        return [_oracle_value(x) for x in v]
    return float(v)


def cmd_testbed(cfg: RunConfig, out: Path, name: str | None) -> int:
    if name is None:
        for spec in TESTBEDS.values():
            print(f"{spec.name:18s} {spec.summary}")
        return EXIT_OK
    if name not in TESTBEDS:
        raise CliError(f"unknown testbed {name!r}; known: {', '.join(sorted(TESTBEDS))}")
    spec = TESTBEDS[name]
    obj = spec.build()
    scene = profile_scene(obj) if isinstance(obj, LayeredProfile1D) else obj
    write_scene(scene, out / f"{name}.bin")
    oracles = {o.name: {"value": _oracle_value(o.value), "provenance": o.provenance,
                        "recipe": o.recipe} for o in spec.oracles}
    _write_json(out / f"{name}.oracles.json",
                {"name": name, "summary": spec.summary, "oracles": oracles})
    print(out / f"{name}.bin")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    ns = parser.parse_args(argv)
    cfg = RunConfig.from_args(ns)
    out = Path(cfg.out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"qpar: cannot create {out}: {exc}", file=sys.stderr)
        return EXIT_ERROR
    handlers = _setup_logging(out)
    (out / "config.json").write_text(cfg.to_json())
    log.info("qpar %s %s", __version__, cfg.to_json().replace("\n", " "))
    try:
        if cfg.command == "solve":
            return cmd_solve(cfg, out)
        if cfg.command in ("optimize", "sweep"):
            return cmd_optimize(cfg, out)
        if cfg.command == "verify-el":
            return cmd_verify_el(cfg, out)
        if cfg.command == "lemma":
            return cmd_lemma(cfg, out)
        return cmd_testbed(cfg, out, ns.name)
    except (CliError, InvalidSceneError, EigenSolveError, OSError) as exc:
        print(f"qpar {cfg.command}: {exc}", file=sys.stderr)
        log.info("failed: %s", exc)
        return EXIT_ERROR
    finally:
        root = logging.getLogger()
        for h in handlers:
            root.removeHandler(h)
            h.close()


if __name__ == "__main__":
    sys.exit(main())
