"""Command line interface: generate, sweep, evaluate, fit-boundary.

Exit codes: 0 on success, 2 for invalid input (geometry, config, files,
arguments), 3 for numerical failure (divergence, non-finite losses).

Every command writes a run manifest next to its outputs.  The manifest's
"spec" section captures the resolved inputs (config, seeds, geometry
hash); re-running the same spec reproduces the mesh, log, and report
bytes exactly.  `generate --from-manifest` replays a recorded spec.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .classical import discretize_boundary, elliptic_smooth, tfi
from .errors import (DivergedIteration, InvalidGeometry, MeshFileError,
                     NonFiniteGradient, NonFiniteLoss, PinnMeshError)
from .geometry import build_boundary_fit, load_geometry
from .meshfiles import format_suffix, read_mesh, write_mesh
from .network import generate_mesh, save_checkpoint
from .optim import TrainConfig, train, write_history_csv
from .quality import evaluate_mesh

EXIT_OK = 0
EXIT_INVALID_INPUT = 2
EXIT_NUMERIC_FAILURE = 3

_THREADS_ENV = "PINNMESH_THREADS"


# ---------------------------------------------------------------------------
# Small helpers

def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _write_json_atomic(doc, path) -> None:
    path = os.fspath(path)
    fd, tmp = tempfile.mkstemp(dir=os.path.dirname(path) or ".", suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _write_text(path, text) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(text)


def _write_quality(report, out_dir: Path, figures: bool) -> dict:
    quality_path = out_dir / "quality.json"
    _write_text(quality_path, report.to_json() + "\n")
    hist_path = out_dir / "quality_hist.csv"
    with open(hist_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["bin_start_deg", "bin_end_deg", "cells"])
        for row in report.histogram_rows():
            writer.writerow(row)
    outputs = {"quality": str(quality_path), "quality_hist": str(hist_path)}
    if figures:
        from . import report as figs
        fig_path = out_dir / "quality_hist.png"
        figs.save_histogram_figure(report, fig_path)
        outputs["quality_hist_figure"] = str(fig_path)
    return outputs


def _resolve_train_config(args) -> TrainConfig:
    cfg = TrainConfig.from_json(args.config) if args.config else TrainConfig()
    return cfg.with_overrides(
        seed=args.seed,
        layers=getattr(args, "layers_override", None),
        neurons=getattr(args, "neurons_override", None),
        adam_epochs=args.adam_epochs,
        lbfgs_max_iters=args.lbfgs_iters,
        no_aux=True if args.no_aux else None,
        plain_mlp=True if args.plain_mlp else None,
    )


def _manifest(out_dir: Path, spec: dict, run: dict) -> Path:
    path = out_dir / "manifest.json"
    _write_json_atomic({"spec": spec, "run": run}, path)
    return path


# ---------------------------------------------------------------------------
# generate

def cmd_generate(args) -> int:
    if args.from_manifest:
        with open(args.from_manifest) as fh:
            doc = json.load(fh)
        spec = doc.get("spec", {})
        if spec.get("command") != "generate":
            raise ValueError("manifest does not describe a generate run")
        args.geometry = args.geometry or doc.get("run", {}).get("geometry_path")
        args.method = spec["method"]
        args.ni, args.nj = spec["ni"], spec["nj"]
        args.format = spec["format"]
        args.snap_boundary = spec["snap_boundary"]
        args.fit_depth = spec["fit"]["max_depth"]
        args.fit_min_leaf = spec["fit"]["min_leaf"]
        if args.method == "pinn":
            cfg = TrainConfig.from_dict(spec["train_config"])
        if args.method == "elliptic":
            args.iterations = spec["elliptic"]["iterations"]
            args.init = spec["elliptic"]["init"]
            args.omega = spec["elliptic"]["omega"]
        expected = spec.get("geometry_sha256")
    else:
        expected = None
        if args.method == "pinn":
            cfg = _resolve_train_config(args)

    if not args.geometry:
        raise ValueError("--geometry is required")
    geom_sha = _sha256(args.geometry)
    if expected and geom_sha != expected:
        raise ValueError("geometry file does not match the manifest hash")

    t0 = time.perf_counter()
    geom = load_geometry(args.geometry)
    fit = build_boundary_fit(geom, args.fit_depth, args.fit_min_leaf)
    t_fit = time.perf_counter() - t0

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = {}
    timings = {"fit_s": t_fit}
    figures = not args.no_figures
    spec = {
        "tool": "pinnmesh",
        "version": __version__,
        "command": "generate",
        "method": args.method,
        "geometry_sha256": geom_sha,
        "ni": args.ni,
        "nj": args.nj,
        "format": args.format,
        "snap_boundary": bool(args.snap_boundary),
        "fit": {"max_depth": args.fit_depth, "min_leaf": args.fit_min_leaf},
    }

    t1 = time.perf_counter()
    if args.method == "pinn":
        spec["train_config"] = cfg.to_dict()
        net, history = train(geom, fit, cfg)
        timings["train_s"] = time.perf_counter() - t1
        mesh = generate_mesh(net, args.ni, args.nj,
                             snap_boundary=args.snap_boundary, fit=fit)
        ckpt = out_dir / "checkpoint.json"
        save_checkpoint(net, ckpt, seed=cfg.seed)
        log = out_dir / "training_log.csv"
        write_history_csv(history, log)
        outputs["checkpoint"] = str(ckpt)
        outputs["training_log"] = str(log)
        if figures:
            from . import report as figs
            fig = out_dir / "training_curves.png"
            figs.save_convergence_figure(history, fig)
            outputs["training_curves_figure"] = str(fig)
    elif args.method == "tfi":
        bd = discretize_boundary(fit, args.ni, args.nj)
        mesh = tfi(bd)
        timings["generate_s"] = time.perf_counter() - t1
    elif args.method == "elliptic":
        spec["elliptic"] = {"iterations": args.iterations, "init": args.init,
                            "omega": args.omega}
        bd = discretize_boundary(fit, args.ni, args.nj)
        mesh, residuals = elliptic_smooth(bd, args.iterations, args.init,
                                          args.omega)
        timings["generate_s"] = time.perf_counter() - t1
        res_path = out_dir / "residual_history.csv"
        with open(res_path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["sweep", "max_update"])
            for k, v in enumerate(residuals):
                writer.writerow([k, repr(float(v))])
        outputs["residual_history"] = str(res_path)
        if figures:
            from . import report as figs
            fig = out_dir / "residual_history.png"
            figs.save_residual_figure(residuals, fig)
            outputs["residual_figure"] = str(fig)
    else:
        raise ValueError(f"unknown method {args.method!r}")

    mesh_path = out_dir / f"mesh{format_suffix(args.format)}"
    write_mesh(mesh, mesh_path, args.format)
    outputs["mesh"] = str(mesh_path)

    report = evaluate_mesh(mesh)
    outputs.update(_write_quality(report, out_dir, figures))
    if figures:
        from . import report as figs
        fig = out_dir / "mesh.png"
        figs.save_mesh_figure(mesh, fig, title=f"{args.method} {args.ni}x{args.nj}")
        outputs["mesh_figure"] = str(fig)

    timings["total_s"] = time.perf_counter() - t0
    run = {"geometry_path": str(Path(args.geometry).resolve()),
           "out_dir": str(out_dir), "outputs": outputs, "timings_s": timings}
    _manifest(out_dir, spec, run)
    print(f"mesh written to {mesh_path}")
    print(report.to_table())
    return EXIT_OK


# ---------------------------------------------------------------------------
# sweep

def _parse_int_list(text: str) -> list:
    try:
        vals = [int(v) for v in str(text).replace(",", " ").split()]
    except ValueError as exc:
        raise ValueError(f"expected a list of integers, got {text!r}") from exc
    if not vals:
        raise ValueError("expected a non-empty list of integers")
    return vals


SWEEP_COLUMNS = ("layers", "neurons", "seed", "loss_total", "loss_eqns",
                 "loss_bcs", "loss_data", "wall_time_s", "error")


def _sweep_one(geom, fit, cfg):
    t0 = time.perf_counter()
    row = {"layers": cfg.layers, "neurons": cfg.neurons, "seed": cfg.seed,
           "loss_total": "", "loss_eqns": "", "loss_bcs": "",
           "loss_data": "", "wall_time_s": "", "error": ""}
    try:
        _, history = train(geom, fit, cfg)
        final = history.final()
        row["loss_total"] = repr(final.total)
        row["loss_eqns"] = repr(final.eqns)
        row["loss_bcs"] = repr(final.bcs_sum)
        row["loss_data"] = repr(final.data)
    except PinnMeshError as exc:
        row["error"] = f"{type(exc).__name__}: {exc}"
    row["wall_time_s"] = f"{time.perf_counter() - t0:.3f}"
    return row


def cmd_sweep(args) -> int:
    layers = _parse_int_list(args.layers)
    neurons = _parse_int_list(args.neurons)
    seeds = _parse_int_list(args.seeds)
    base = TrainConfig.from_json(args.config) if args.config else TrainConfig()
    base = base.with_overrides(adam_epochs=args.adam_epochs,
                               lbfgs_max_iters=args.lbfgs_iters,
                               no_aux=True if args.no_aux else None,
                               plain_mlp=True if args.plain_mlp else None)

    geom = load_geometry(args.geometry)
    fit = build_boundary_fit(geom, args.fit_depth, args.fit_min_leaf)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    combos = [base.with_overrides(layers=l, neurons=h, seed=s)
              for l in layers for h in neurons for s in seeds]
    workers = args.threads or int(os.environ.get(_THREADS_ENV, "1"))
    t0 = time.perf_counter()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda c: _sweep_one(geom, fit, c), combos))
    else:
        rows = [_sweep_one(geom, fit, c) for c in combos]

    csv_path = out_dir / "sweep.csv"
    # Append-safe: keep prior rows, write the header only for a fresh file.
    fresh = not (csv_path.exists() and csv_path.stat().st_size > 0)
    with open(csv_path, "a", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        if fresh:
            writer.writeheader()
        for row in rows:
            writer.writerow(row)

    outputs = {"sweep": str(csv_path)}
    if not args.no_figures:
        from . import report as figs
        fig = out_dir / "sweep.png"
        figs.save_sweep_figure(rows, fig)
        outputs["sweep_figure"] = str(fig)

    spec = {
        "tool": "pinnmesh",
        "version": __version__,
        "command": "sweep",
        "geometry_sha256": _sha256(args.geometry),
        "layers": layers,
        "neurons": neurons,
        "seeds": seeds,
        "fit": {"max_depth": args.fit_depth, "min_leaf": args.fit_min_leaf},
        "train_config": base.to_dict(),
    }
    run = {"geometry_path": str(Path(args.geometry).resolve()),
           "out_dir": str(out_dir), "outputs": outputs,
           "timings_s": {"total_s": time.perf_counter() - t0}}
    _manifest(out_dir, spec, run)

    failed = sum(1 for r in rows if r["error"])
    print(f"sweep wrote {len(rows)} rows to {csv_path}"
          + (f" ({failed} failed)" if failed else ""))
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluate

def cmd_evaluate(args) -> int:
    mesh = read_mesh(args.mesh, args.format)
    report = evaluate_mesh(mesh)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    outputs = _write_quality(report, out_dir, not args.no_figures)
    if not args.no_figures:
        from . import report as figs
        fig = out_dir / "mesh.png"
        figs.save_mesh_figure(mesh, fig)
        outputs["mesh_figure"] = str(fig)
    spec = {
        "tool": "pinnmesh",
        "version": __version__,
        "command": "evaluate",
        "mesh_sha256": _sha256(args.mesh),
    }
    run = {"mesh_path": str(Path(args.mesh).resolve()), "out_dir": str(out_dir),
           "outputs": outputs, "timings_s": {}}
    _manifest(out_dir, spec, run)
    print(report.to_table())
    return EXIT_OK


# ---------------------------------------------------------------------------
# fit-boundary

def cmd_fit_boundary(args) -> int:
    geom = load_geometry(args.geometry)
    fit = build_boundary_fit(geom, args.fit_depth, args.fit_min_leaf)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    import numpy as np
    t = np.linspace(0.0, 1.0, args.samples)
    csv_path = out_dir / "boundary_fit.csv"
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["side", "t", "x", "y"])
        for side in ("bottom", "top", "left", "right"):
            xs, ys = fit.predict(side, t)
            for tk, xk, yk in zip(t, xs, ys):
                writer.writerow([side, repr(float(tk)), repr(float(xk)),
                                 repr(float(yk))])
    outputs = {"boundary_fit": str(csv_path)}
    if not args.no_figures:
        from . import report as figs
        fig = out_dir / "boundary_fit.png"
        figs.save_boundary_fit_figure(fit, geom, fig, args.samples)
        outputs["boundary_fit_figure"] = str(fig)

    spec = {
        "tool": "pinnmesh",
        "version": __version__,
        "command": "fit-boundary",
        "geometry_sha256": _sha256(args.geometry),
        "samples": args.samples,
        "fit": {"max_depth": args.fit_depth, "min_leaf": args.fit_min_leaf},
    }
    run = {"geometry_path": str(Path(args.geometry).resolve()),
           "out_dir": str(out_dir), "outputs": outputs, "timings_s": {}}
    _manifest(out_dir, spec, run)
    print(f"boundary fit written to {csv_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Parser wiring

def _add_fit_args(p) -> None:
    p.add_argument("--fit-depth", type=int, default=12,
                   help="boundary tree max depth (default 12)")
    p.add_argument("--fit-min-leaf", type=int, default=1,
                   help="boundary tree min samples per leaf (default 1)")


def _add_figures_arg(p) -> None:
    p.add_argument("--no-figures", action="store_true",
                   help="skip PNG figure rendering")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pinnmesh",
        description="Structured 2-D mesh generation with a trained "
                    "coordinate map, plus classical baselines.")
    parser.add_argument("--version", action="version",
                        version=f"pinnmesh {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate a mesh for a geometry")
    g.add_argument("--geometry", help="geometry JSON file")
    g.add_argument("--method", choices=("pinn", "tfi", "elliptic"),
                   default="pinn")
    g.add_argument("--ni", type=int, default=33)
    g.add_argument("--nj", type=int, default=33)
    g.add_argument("--format", choices=("vtk", "p3d", "svg"), default="vtk")
    g.add_argument("--out-dir", default="mesh_out")
    g.add_argument("--config", help="training config JSON")
    g.add_argument("--seed", type=int, default=None)
    g.add_argument("--layers", dest="layers_override", type=int, default=None)
    g.add_argument("--neurons", dest="neurons_override", type=int,
                   default=None)
    g.add_argument("--adam-epochs", type=int, default=None)
    g.add_argument("--lbfgs-iters", type=int, default=None)
    g.add_argument("--no-aux", action="store_true",
                   help="ignore auxiliary lines")
    g.add_argument("--plain-mlp", action="store_true",
                   help="use the ungated architecture")
    g.add_argument("--snap-boundary", action="store_true",
                   help="pin border nodes to the boundary fit")
    g.add_argument("--iterations", type=int, default=1000,
                   help="elliptic solver sweeps (default 1000)")
    g.add_argument("--init", choices=("zero", "tfi"), default="zero",
                   help="elliptic solver initialization (default zero)")
    g.add_argument("--omega", type=float, default=1.5,
                   help="elliptic relaxation factor (default 1.5)")
    g.add_argument("--from-manifest",
                   help="replay the spec section of a recorded manifest")
    _add_fit_args(g)
    _add_figures_arg(g)
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("sweep", help="train a grid of architectures")
    s.add_argument("--geometry", required=True)
    s.add_argument("--layers", default="1,2,3,4,5,6,7",
                   help="comma separated hidden layer counts")
    s.add_argument("--neurons", default="30",
                   help="comma separated layer widths")
    s.add_argument("--seeds", default="0", help="comma separated seeds")
    s.add_argument("--config", help="training config JSON")
    s.add_argument("--adam-epochs", type=int, default=None)
    s.add_argument("--lbfgs-iters", type=int, default=None)
    s.add_argument("--no-aux", action="store_true")
    s.add_argument("--plain-mlp", action="store_true")
    s.add_argument("--out-dir", default="sweep_out")
    s.add_argument("--threads", type=int, default=None,
                   help=f"worker threads (default ${_THREADS_ENV} or 1)")
    _add_fit_args(s)
    _add_figures_arg(s)
    s.set_defaults(func=cmd_sweep)

    e = sub.add_parser("evaluate", help="quality report for a mesh file")
    e.add_argument("--mesh", required=True)
    e.add_argument("--format", choices=("vtk", "p3d"), default=None,
                   help="mesh format (default: by file suffix)")
    e.add_argument("--out-dir", default="evaluate_out")
    _add_figures_arg(e)
    e.set_defaults(func=cmd_evaluate)

    f = sub.add_parser("fit-boundary",
                       help="dump the fitted boundary curves")
    f.add_argument("--geometry", required=True)
    f.add_argument("--samples", type=int, default=256)
    f.add_argument("--out-dir", default="fit_out")
    _add_fit_args(f)
    _add_figures_arg(f)
    f.set_defaults(func=cmd_fit_boundary)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (InvalidGeometry, MeshFileError) as exc:
        if isinstance(exc, InvalidGeometry):
            for v in exc.violations:
                print(f"error: {v}", file=sys.stderr)
        else:
            print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID_INPUT
    except (ValueError, KeyError, FileNotFoundError, IsADirectoryError,
            json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID_INPUT
    except (NonFiniteLoss, NonFiniteGradient, DivergedIteration) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC_FAILURE


if __name__ == "__main__":
    sys.exit(main())
