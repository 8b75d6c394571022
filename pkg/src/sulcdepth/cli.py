"""Command-line entry point.

Subcommands: ``depth``, ``expe1``, ``expe2``, ``expe3`` and ``phantoms``.
Exit status is 0 on success, 1 on a runtime or domain error and 2 on a usage
error.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .depth import DEFAULT_ALPHA, METHODS, SolverConfig, compute_depth
from .errors import DomainError, NotClosedError, SulcDepthError
from .experiments import DEFAULT_ALPHAS, run_expe1, run_expe2, run_expe3, worker_count
from .landmarks import load_landmarks, save_landmarks
from .mesh import enclosed_volume, load_mesh, mesh_id, save_field, save_mesh
from .operators import CURVATURE_METHODS
from .phantoms import (PhantomSpec, expe1_suite, expe3_family, generate_phantom, irregular_phantom,
                       phantom_mesh)

logger = logging.getLogger("sulcdepth")

SOLVERS = {"direct": "direct_cholesky", "cg": "conjugate_gradient"}


def _floats(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}")


def _names(text):
    return [x.strip() for x in text.split(",") if x.strip()]


def read_config(path) -> dict:
    """Flat ``key = value`` file; ``#`` starts a comment."""
    cfg = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DomainError(f"{path}:{lineno}: expected key=value")
            key, value = (s.strip() for s in line.split("=", 1))
            cfg[key.replace("-", "_")] = value
    return cfg


def _apply_config(args, sub, cfg):
    # config values replace defaults but never explicit command-line flags
    actions = {a.dest: a for a in sub._actions}
    for key, raw in cfg.items():
        action = actions.get(key)
        if action is None:
            raise DomainError(f"unknown config key {key!r} for '{args.command}'")
        if getattr(args, key) != action.default:
            continue
        value = action.type(raw) if action.type else raw
        if action.choices is not None and value not in action.choices:
            raise DomainError(f"config {key}={raw!r}: expected one of {list(action.choices)}")
        setattr(args, key, value)


def _surface_list(items):
    """Paths given directly or through ``.txt`` list files (one per line)."""
    out = []
    for item in items:
        p = Path(item)
        if p.suffix == ".txt":
            base = p.parent
            for line in p.read_text(encoding="utf-8").splitlines():
                line = line.strip()
                if line and not line.startswith("#"):
                    q = Path(line)
                    out.append(q if q.is_absolute() else base / q)
        else:
            out.append(p)
    return out


def _echo(args) -> dict:
    return {k: v for k, v in sorted(vars(args).items()) if k not in ("func",)}


def _write_json(path, obj):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, Path):
        return str(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _write_rows(path, rows):
    if not rows:
        return
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


def _solver(args):
    return SolverConfig(SOLVERS[args.solver], cg_tol=args.cg_tol)


def _sulc_options(args):
    return {"iterations": args.sulc_iterations, "step": args.sulc_step, "lam": args.sulc_lambda,
            "tol": args.sulc_tol}


# ---------------------------------------------------------------- commands
def cmd_depth(args) -> int:
    mesh = load_mesh(args.mesh)
    t0 = time.perf_counter()
    dm = compute_depth(mesh, args.method, args.alpha, _solver(args), args.curvature, _sulc_options(args))
    runtime = 1e3 * (time.perf_counter() - t0)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_field(mesh, dm.values, out)
    try:
        volume = enclosed_volume(mesh)
    except NotClosedError:
        volume = None
    sidecar = {
        "method": dm.method,
        "alpha": args.alpha if args.method in ("dpf", "dpf_star", "dpf_star_abs") else None,
        "L_mm": None if volume is None else float(np.cbrt(volume)),
        "volume_mm3": volume,
        "solver": SOLVERS[args.solver],
        "runtime_ms": runtime,
        "units": dm.units,
        "config": _echo(args),
        "version": __version__,
    }
    _write_json(out.with_suffix(".json"), sidecar)
    logger.info("wrote %s (%d vertices, %.1f ms)", out, mesh.n_vertices, runtime)
    return 0


def _landmark_files(directory, sid):
    d = Path(directory)
    return d / f"{sid}_crest.csv", d / f"{sid}_fundi.csv"


def cmd_expe1(args) -> int:
    subjects = []
    for p in _surface_list(args.surfaces):
        mesh = load_mesh(p)
        sid = mesh_id(p)
        crest, fundi = _landmark_files(args.landmarks, sid)
        if not crest.exists() or not fundi.exists():
            raise FileNotFoundError(f"missing landmark files for {sid} in {args.landmarks}")
        subjects.append((sid, mesh, load_landmarks(mesh, crest, fundi)))
    subjects.sort(key=lambda s: s[0])
    report = run_expe1(subjects, args.alphas, _solver(args), args.curvature,
                       per_line=not args.pooled, workers=worker_count())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    _write_rows(out / "expe1_metrics.csv", report["rows"])
    med_rows = [{"alpha": a, **{m: report["medians"][m][k] for m in report["medians"]}}
                for k, a in enumerate(report["alphas"])]
    _write_rows(out / "expe1_medians.csv", med_rows)
    report.update(config=_echo(args), version=__version__)
    _write_json(out / "expe1_report.json", report)
    print(json.dumps({"best_alpha": report["best_alpha"], "intersection": report["intersection"]}))
    return 0


def cmd_expe2(args) -> int:
    mesh = load_mesh(args.mesh)
    report = run_expe2(mesh, args.scales, args.methods, args.alpha, _solver(args), args.curvature,
                       _sulc_options(args), workers=worker_count())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for (method, s), res in report.pop("residuals").items():
        save_field(mesh, res, out / f"residual_{method}_s{s:g}.csv")
    _write_rows(out / "expe2_regression.csv", report["results"])
    report.update(config=_echo(args), version=__version__)
    _write_json(out / "expe2_report.json", report)
    for r in report["results"]:
        print(f"{r['method']:>12} s={r['scale']:<5g} slope={r['slope']:.10g} r={r['r']:.10g}")
    return 0


def cmd_expe3(args) -> int:
    paths = _surface_list(args.surfaces)
    if len(paths) < 2 * args.window:
        raise DomainError(f"need at least {2 * args.window} surfaces, got {len(paths)}")
    subjects = [(mesh_id(p), load_mesh(p)) for p in paths]
    report = run_expe3(subjects, args.methods, args.alpha, args.window, args.n_windows, args.mode,
                       _solver(args), args.curvature, _sulc_options(args), workers=worker_count())
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for method, dm in report.pop("matrices").items():
        dm.to_csv(out / f"distances_{method}.csv")
    for method, rows in report["centiles"].items():
        _write_rows(out / f"centiles_{method}.csv", rows)
    _write_json(out / "ks_profiles.json", report["ks_profiles"])
    report.update(config=_echo(args), version=__version__)
    _write_json(out / "expe3_report.json", report)
    print(json.dumps(report["ks_profiles"]))
    return 0


def _write_phantom(out, sid, mesh, landmarks):
    save_mesh(mesh, out / f"{sid}.ply")
    if landmarks is not None:
        save_landmarks(landmarks, *_landmark_files(out, sid))


def cmd_phantoms(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    names = []
    if args.kind == "expe1":
        for k, spec in enumerate(expe1_suite(args.count or 6, args.subdiv or 4, args.seed)):
            mesh, lm = generate_phantom(spec)
            names.append(f"phantom{k:03d}")
            _write_phantom(out, names[-1], mesh, lm)
    elif args.kind == "expe3":
        for k, spec in enumerate(expe3_family(args.count or 40, args.subdiv or 3, seed=args.seed)):
            names.append(f"family{k:03d}")
            _write_phantom(out, names[-1], phantom_mesh(spec), None)
    elif args.kind == "single":
        spec = PhantomSpec(args.radius, args.amplitude, args.frequency, args.subdiv or 4, args.seed)
        mesh, lm = generate_phantom(spec)
        names.append("phantom")
        _write_phantom(out, names[-1], mesh, lm)
    else:
        names.append("irregular")
        _write_phantom(out, names[-1], irregular_phantom(args.subdiv or 4, args.seed), None)
    (out / "surfaces.txt").write_text("".join(f"{n}.ply\n" for n in names), encoding="utf-8")
    print(f"wrote {len(names)} surfaces to {out}")
    return 0


# ------------------------------------------------------------------ parser
def _add_common(p, alpha=True):
    p.add_argument("--config", help="flat key=value file overriding defaults")
    if alpha:
        p.add_argument("--alpha", type=float, default=DEFAULT_ALPHA,
                       help="depth parameter (mm^-2 for dpf, dimensionless for dpf_star)")
    p.add_argument("--solver", choices=sorted(SOLVERS), default="direct")
    p.add_argument("--cg-tol", type=float, default=1e-10, help="relative residual for --solver cg")
    p.add_argument("--curvature", choices=CURVATURE_METHODS, default="tensor")
    p.add_argument("--sulc-iterations", type=int, default=1000)
    p.add_argument("--sulc-step", type=float, default=0.5)
    p.add_argument("--sulc-lambda", type=float, default=0.5)
    p.add_argument("--sulc-tol", type=float, default=1e-3, help="absolute stopping threshold in mm")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sulcdepth", description="Scale-invariant sulcal depth on triangle meshes.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("depth", help="compute a depth map")
    p.add_argument("--mesh", required=True)
    p.add_argument("--method", choices=METHODS, default="dpf_star")
    p.add_argument("--out", required=True, help=".csv, or .ply (writes both)")
    _add_common(p)
    p.set_defaults(func=cmd_depth)

    p = sub.add_parser("expe1", help="parameter sweep against landmarks")
    p.add_argument("--surfaces", nargs="+", required=True, help="mesh files or .txt lists")
    p.add_argument("--landmarks", required=True, help="directory with <id>_crest.csv and <id>_fundi.csv")
    p.add_argument("--alphas", type=_floats, default=list(DEFAULT_ALPHAS))
    p.add_argument("--pooled", action="store_true", help="pool all fundus lines for directional lines")
    p.add_argument("--out", required=True)
    _add_common(p, alpha=False)
    p.set_defaults(func=cmd_expe1)

    p = sub.add_parser("expe2", help="global scaling study")
    p.add_argument("--mesh", required=True)
    p.add_argument("--scales", type=_floats, default=[2.0, 3.0, 4.0, 5.0])
    p.add_argument("--methods", type=_names, default=["dpf_star", "sulc"])
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_expe2)

    p = sub.add_parser("expe3", help="population distribution study")
    p.add_argument("--surfaces", nargs="+", required=True, help="mesh files or .txt lists")
    p.add_argument("--methods", type=_names, default=["dpf_star", "sulc"])
    p.add_argument("--window", type=int, default=10)
    p.add_argument("--n-windows", type=int, default=8)
    p.add_argument("--mode", choices=("within", "cross"), default="within")
    p.add_argument("--out", required=True)
    _add_common(p)
    p.set_defaults(func=cmd_expe3)

    p = sub.add_parser("phantoms", help="write synthetic surfaces and landmark files")
    p.add_argument("--kind", choices=("expe1", "expe3", "single", "irregular"), default="expe1")
    p.add_argument("--out", required=True)
    p.add_argument("--count", type=int)
    p.add_argument("--subdiv", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--radius", type=float, default=30.0)
    p.add_argument("--amplitude", type=float, default=3.0)
    p.add_argument("--frequency", type=int, default=6)
    p.add_argument("--config", help="flat key=value file overriding defaults")
    p.set_defaults(func=cmd_phantoms)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config:
            sub = parser._subparsers._group_actions[0].choices[args.command]
            _apply_config(args, sub, read_config(args.config))
        methods = getattr(args, "methods", [])
        unknown = [m for m in methods if m not in METHODS]
        if unknown:
            raise DomainError(f"unknown method(s) {unknown}; expected {list(METHODS)}")
        return args.func(args)
    except (SulcDepthError, ValueError, OSError) as exc:
        print(f"sulcdepth {args.command}: error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
