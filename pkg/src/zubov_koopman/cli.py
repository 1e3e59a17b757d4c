"""Command-line runner.

    zubov-koopman simulate --config vdp
    zubov-koopman learn --config vdp --dataset out/vdp/dataset.csv
    zubov-koopman solve --config vdp --model out/vdp/generator.json [--route direct]
    zubov-koopman certify --config vdp --candidate out/vdp/candidate.json \\
        --model out/vdp/generator.json
    zubov-koopman export-contours --candidate ... --report ... [--grid 200 200]
    zubov-koopman pipeline --config vdp

``--config`` takes a JSON file or a bundled name (``vdp``, ``two_machine``);
``--set section.key=value`` overrides single entries. Exit codes: 0
certified, 2 counterexample or not certified, 3 unknown (budget), 1 error.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import pipeline as pl
from . import serialization as io
from . import verify as ver
from .dynamics import IntegrationError
from .koopman import ConfigError

log = logging.getLogger("zubov_koopman")

EXIT_OK, EXIT_ERROR, EXIT_NOT_CERTIFIED, EXIT_UNKNOWN = 0, 1, 2, 3
THREADS_ENV = "ZUBOV_KOOPMAN_THREADS"


def _outdir(cfg, args) -> Path:
    return Path(args.out or cfg["output"]["dir"])


def _config(args) -> dict:
    cfg = pl.load_config(args.config, args.set)
    if getattr(args, "threads", None):
        cfg["verify"]["workers"] = int(args.threads)
    return cfg


def _dataset_for(cfg, args, required=True):
    path = getattr(args, "dataset", None)
    if path is None and cfg["system"].get("trajectories"):
        path = cfg["system"]["trajectories"]
    if path is None:
        default = _outdir(cfg, args) / "dataset.csv"
        if default.exists():
            path = default
    if path is None:
        if required:
            raise FileNotFoundError("no dataset given (use --dataset)")
        return None
    return io.load_dataset(path)


def _write_model(cfg, out: Path, res: pl.LearnResult):
    prov = pl.provenance(cfg, "learn")
    io.save_generator(res.generator, out / "generator.json", prov)
    io.save_vector_field(res.field, out / "vector_field.json", res.diagnostics, prov)


def _exit_for(report: ver.CertificationReport) -> int:
    status = report.status
    if status == ver.CERTIFIED:
        return EXIT_OK
    if status == ver.UNKNOWN:
        return EXIT_UNKNOWN
    return EXIT_NOT_CERTIFIED


def _summary(report) -> str:
    b = report.bounds
    return (f"status={report.status} c={report.c} c1={report.c1} c2={report.c2} "
            f"beta={b.beta_used:.3g} (required {b.beta_required:.3g}) "
            f"K_f={b.K_f:.3g} K_fhat={b.K_fhat:.3g} nu={b.nu:.3g} alpha={b.alpha:.3g}")


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------

def cmd_simulate(args) -> int:
    cfg = _config(args)
    ds = pl.simulate(cfg)
    out = _outdir(cfg, args)
    path = io.save_dataset(ds, out / "dataset.csv", pl.provenance(cfg, "simulate"),
                           seed=cfg["sampling"]["seed"])
    print(f"wrote {path} ({ds.M} trajectories, {ds.times.size} samples each)")
    return EXIT_OK


def cmd_learn(args) -> int:
    cfg = _config(args)
    ds = _dataset_for(cfg, args)
    res = pl.learn(cfg, ds)
    out = _outdir(cfg, args)
    _write_model(cfg, out, res)
    msg = f"wrote {out / 'generator.json'} and {out / 'vector_field.json'}"
    if "alpha" in res.diagnostics:
        msg += f" (alpha = {res.diagnostics['alpha']:.3g})"
    print(msg)
    return EXIT_OK


def cmd_solve(args) -> int:
    cfg = _config(args)
    out = _outdir(cfg, args)
    g = io.load_generator(args.model or out / "generator.json")
    vf_path = Path(args.field) if args.field else out / "vector_field.json"
    f = io.load_vector_field(vf_path) if vf_path.exists() else None
    ds = _dataset_for(cfg, args, required=cfg["pde"].get("reuse_samples", False))
    c, stats = pl.solve(cfg, g, f, ds, route=args.route)
    path = io.save_candidate(c, out / "candidate.json", pl.provenance(cfg, "solve"),
                             {"residual": stats})
    print(f"wrote {path} (route {stats['route']}, residual rms {stats['rms']:.3g})")
    return EXIT_OK


def cmd_certify(args) -> int:
    cfg = _config(args)
    out = _outdir(cfg, args)
    c = io.load_candidate(args.candidate or out / "candidate.json")
    vf_path = Path(args.field) if args.field else None
    if vf_path is None:
        model = Path(args.model or out / "generator.json")
        sibling = model.with_name("vector_field.json")
        if sibling.exists():
            f = io.load_vector_field(sibling)
        else:
            from .koopman import correct_equilibrium, extract_vector_field
            f = correct_equilibrium(extract_vector_field(io.load_generator(model)))
    else:
        f = io.load_vector_field(vf_path)
    ds = _dataset_for(cfg, args, required=cfg["verify"].get("alpha") is None)
    samples = ds.initial_conditions if ds is not None else np.zeros((1, c.n))
    report = pl.certify(cfg, c, f, samples)
    io.save_report(report, out / "report.json", pl.provenance(cfg, "certify"),
                   {"audit_replay": report.audit(),
                    "counterexamples_valid": report.counterexamples_valid()})
    if args.cover:
        io.save_cover(report, out / "cover.csv")
    print(_summary(report))
    return _exit_for(report)


def cmd_export_contours(args) -> int:
    cfg = pl.load_config(args.config, args.set) if args.config else None
    out = Path(args.out or (cfg["output"]["dir"] if cfg else "."))
    c = io.load_candidate(args.candidate or out / "candidate.json")
    rep = io.read_json(args.report or out / "report.json")
    q = io.quadratic_from_dict(rep["quadratic"])
    window = args.window
    if window is not None:
        window = np.asarray(window, dtype=float).reshape(2, 2).tolist()
    elif cfg is not None:
        window = cfg["contours"]["window"] or cfg["pde"]["domain"]
    else:
        raise ConfigError("give --window or --config")
    grid = args.grid or (cfg["contours"]["grid"] if cfg else [200, 200])
    prov = rep.get("provenance", {})
    path = io.export_contours(c, q, rep, window, grid, out / "contours.csv", prov)
    print(f"wrote {path} ({int(grid[0]) * int(grid[1])} rows)")
    return EXIT_OK


def cmd_pipeline(args) -> int:
    cfg = _config(args)
    out = _outdir(cfg, args)
    if cfg["system"].get("trajectories"):
        ds = io.load_dataset(cfg["system"]["trajectories"])
    else:
        ds = pl.simulate(cfg)
        io.save_dataset(ds, out / "dataset.csv", pl.provenance(cfg, "simulate"),
                        seed=cfg["sampling"]["seed"])
    res = pl.learn(cfg, ds)
    _write_model(cfg, out, res)
    c, stats = pl.solve(cfg, res.generator, res.field, ds, route=args.route)
    io.save_candidate(c, out / "candidate.json", pl.provenance(cfg, "solve"),
                      {"residual": stats})
    report = pl.certify(cfg, c, res.field, ds.initial_conditions)
    prov = pl.provenance(cfg, "certify")
    io.save_report(report, out / "report.json", prov,
                   {"audit_replay": report.audit(),
                    "counterexamples_valid": report.counterexamples_valid()})
    if args.cover:
        io.save_cover(report, out / "cover.csv")
    if report.c is not None:
        window = cfg["contours"]["window"] or cfg["pde"]["domain"]
        io.export_contours(c, report.quadratic, report.to_dict(), window,
                           cfg["contours"]["grid"], out / "contours.csv", prov)
    print(_summary(report))
    return _exit_for(report)


# --------------------------------------------------------------------------
# entry point
# --------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="zubov-koopman",
                                description="Learn a generator from trajectories, solve the "
                                            "Zubov equation and certify a region of attraction.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, config_required=True):
        sp.add_argument("--config", required=config_required,
                        help="config JSON path or bundled name (vdp, two_machine)")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override a config entry, e.g. sampling.M=50")
        sp.add_argument("--out", help="output directory (default: output.dir)")

    sp = sub.add_parser("simulate", help="integrate trajectories and write the dataset")
    common(sp)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("learn", help="learn the generator and the vector field")
    common(sp)
    sp.add_argument("--dataset")
    sp.set_defaults(func=cmd_learn)

    sp = sub.add_parser("solve", help="solve the Lyapunov/Zubov collocation problem")
    common(sp)
    sp.add_argument("--model", help="generator JSON")
    sp.add_argument("--field", help="vector-field JSON (direct route)")
    sp.add_argument("--dataset")
    sp.add_argument("--route", choices=["generator", "direct"])
    sp.set_defaults(func=cmd_solve)

    sp = sub.add_parser("certify", help="certify the region of attraction")
    common(sp)
    sp.add_argument("--candidate")
    sp.add_argument("--model", help="generator JSON (the vector field next to it is used)")
    sp.add_argument("--field", help="vector-field JSON")
    sp.add_argument("--dataset")
    sp.add_argument("--cover", action="store_true", help="also write the box cover CSV")
    sp.add_argument("--threads", type=int, help=f"worker threads (default ${THREADS_ENV} or 1)")
    sp.set_defaults(func=cmd_certify)

    sp = sub.add_parser("export-contours", help="write V and V_P on a grid plus the levels")
    common(sp, config_required=False)
    sp.add_argument("--candidate")
    sp.add_argument("--report")
    sp.add_argument("--grid", type=int, nargs=2, metavar=("N1", "N2"))
    sp.add_argument("--window", type=float, nargs=4, metavar=("X1LO", "X1HI", "X2LO", "X2HI"))
    sp.set_defaults(func=cmd_export_contours)

    sp = sub.add_parser("pipeline", help="run every stage")
    common(sp)
    sp.add_argument("--route", choices=["generator", "direct"])
    sp.add_argument("--cover", action="store_true")
    sp.add_argument("--threads", type=int)
    sp.set_defaults(func=cmd_pipeline)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if getattr(args, "threads", None):
        os.environ[THREADS_ENV] = str(args.threads)
    try:
        return args.func(args)
    except (ConfigError, FileNotFoundError, ValueError, IntegrationError,
            ver.CertificationImpossible) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
