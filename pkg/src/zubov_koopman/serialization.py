"""File formats for datasets, models, candidates, reports and contour grids.

JSON documents carry a ``provenance`` block (config hash and seeds). CSV
payloads are plain tables; their provenance lives in the JSON sidecar that
points to them.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Optional

import numpy as np

from .certificates import LyapunovCandidate, QuadraticLyapunov
from .dictionary import from_dict
from .dynamics import Trajectory, TrajectoryDataset
from .interval import Box
from .koopman import GeneratorModel, VectorFieldModel

FORMAT_VERSION = 1


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def config_hash(cfg: dict) -> str:
    return hashlib.sha256(canonical_json(cfg).encode()).hexdigest()[:16]


def _to_jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def write_json(path, obj):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_to_jsonable(obj), indent=2, sort_keys=True) + "\n")


def read_json(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such file: {path}")
    return json.loads(path.read_text())


def _sidecar(path) -> Path:
    path = Path(path)
    return path.with_suffix(".json")


def _domain_list(domain: Optional[Box]):
    return None if domain is None else domain.to_list()


# --------------------------------------------------------------------------
# trajectory datasets
# --------------------------------------------------------------------------

def save_dataset(ds: TrajectoryDataset, path, provenance: Optional[dict] = None, seed=None):
    """CSV ``traj_id,t,x1,...,xn`` plus a metadata JSON next to it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = ds.n
    rows = []
    for k, tr in enumerate(ds.trajectories):
        rows.append(np.column_stack([np.full(tr.times.size, k), tr.times, tr.states]))
    table = np.vstack(rows)
    header = ",".join(["traj_id", "t"] + [f"x{i + 1}" for i in range(n)])
    fmt = ["%d"] + ["%.17g"] * (n + 1)
    np.savetxt(path, table, delimiter=",", header=header, comments="", fmt=fmt)
    meta = {
        "format_version": FORMAT_VERSION,
        "gamma": ds.gamma,
        "tau_s": ds.tau_s,
        "domain": _domain_list(ds.domain),
        "seed": seed,
        "system": ds.meta.get("system"),
        "M": ds.M,
        "n": n,
        "csv": path.name,
        "provenance": provenance or {},
    }
    write_json(_sidecar(path), meta)
    return path


def load_dataset(path) -> TrajectoryDataset:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"no such dataset: {path}")
    with path.open() as fh:
        header = fh.readline().strip().split(",")
    if header[:2] != ["traj_id", "t"] or len(header) < 3:
        raise ValueError(f"{path}: expected header traj_id,t,x1,...")
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    meta = read_json(_sidecar(path)) if _sidecar(path).exists() else {}
    ids = table[:, 0].astype(int)
    trajs = []
    for k in np.unique(ids):
        block = table[ids == k]
        block = block[np.argsort(block[:, 1], kind="stable")]
        trajs.append(Trajectory(block[0, 2:].copy(), block[:, 1].copy(), block[:, 2:].copy()))
    times = trajs[0].times
    if any(tr.times.shape != times.shape or np.any(tr.times != times) for tr in trajs):
        raise ValueError(f"{path}: trajectories must share their sample times")
    gamma = meta.get("gamma")
    if gamma is None:
        gamma = 1.0 / float(times[1] - times[0]) if times.size > 1 else 1.0
    tau_s = meta.get("tau_s", float(times[-1]))
    dom = meta.get("domain")
    domain = Box.from_pairs(dom) if dom else None
    return TrajectoryDataset(trajs, float(gamma), float(tau_s), domain,
                             {"system": meta.get("system"), "seed": meta.get("seed")})


# --------------------------------------------------------------------------
# models
# --------------------------------------------------------------------------

def save_generator(g: GeneratorModel, path, provenance: Optional[dict] = None):
    """JSON metadata plus the matrix ``L`` as CSV (17 significant digits)."""
    path = Path(path)
    matrix = path.with_name(path.stem + "_L.csv")
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(matrix, g.L, delimiter=",", fmt="%.17g")
    write_json(path, {
        "format_version": FORMAT_VERSION,
        "kind": "generator",
        "lambda": g.lam,
        "mu": g.mu,
        "tau_s": g.tau_s,
        "svd_tol": g.svd_tol,
        "shape": list(g.L.shape),
        "L_csv": matrix.name,
        "dictionary": g.dictionary.to_dict(),
        "diagnostics": g.diagnostics,
        "provenance": provenance or {},
    })
    return path


def load_generator(path) -> GeneratorModel:
    path = Path(path)
    meta = read_json(path)
    if meta.get("kind") != "generator":
        raise ValueError(f"{path} is not a generator file")
    L = np.loadtxt(path.with_name(meta["L_csv"]), delimiter=",", ndmin=2)
    L = L.reshape(meta["shape"])
    return GeneratorModel(L, float(meta["lambda"]), float(meta["mu"]), float(meta["tau_s"]),
                          from_dict(meta["dictionary"]), float(meta["svd_tol"]),
                          meta.get("diagnostics", {}))


def vector_field_to_dict(v: VectorFieldModel) -> dict:
    return {"kind": "vector_field", "coef": v.coef, "offset": v.offset,
            "corrected": v.corrected, "dictionary": v.dictionary.to_dict()}


def vector_field_from_dict(d: dict) -> VectorFieldModel:
    return VectorFieldModel(np.asarray(d["coef"], dtype=float),
                            np.asarray(d["offset"], dtype=float),
                            from_dict(d["dictionary"]), bool(d.get("corrected", False)))


def save_vector_field(v: VectorFieldModel, path, diagnostics=None, provenance=None):
    doc = vector_field_to_dict(v)
    doc.update(format_version=FORMAT_VERSION, diagnostics=diagnostics or {},
               provenance=provenance or {})
    write_json(path, doc)
    return Path(path)


def load_vector_field(path) -> VectorFieldModel:
    d = read_json(path)
    if d.get("kind") != "vector_field":
        raise ValueError(f"{path} is not a vector-field file")
    return vector_field_from_dict(d)


def candidate_to_dict(c: LyapunovCandidate) -> dict:
    return {"kind": "candidate", "theta": c.theta, "dictionary": c.dictionary.to_dict(),
            "form": c.form, "r": c.r, "lambda_b": c.lambda_b, "fit_stats": c.fit_stats}


def save_candidate(c: LyapunovCandidate, path, provenance=None, extra=None):
    doc = candidate_to_dict(c)
    doc.update(format_version=FORMAT_VERSION, provenance=provenance or {})
    if extra:
        doc.update(extra)
    write_json(path, doc)
    return Path(path)


def load_candidate(path) -> LyapunovCandidate:
    d = read_json(path)
    if d.get("kind") != "candidate":
        raise ValueError(f"{path} is not a candidate file")
    return LyapunovCandidate(np.asarray(d["theta"], dtype=float), from_dict(d["dictionary"]),
                             d.get("form", "zubov"), float(d.get("r", 0.1)),
                             float(d.get("lambda_b", 100.0)), d.get("fit_stats", {}))


def quadratic_from_dict(d: dict) -> QuadraticLyapunov:
    A = d.get("A")
    return QuadraticLyapunov(np.asarray(d["P"], dtype=float), np.asarray(d["Q"], dtype=float),
                             None if A is None else np.asarray(A, dtype=float))


# --------------------------------------------------------------------------
# reports and exports
# --------------------------------------------------------------------------

def save_report(report, path, provenance=None, extra=None):
    doc = report.to_dict()
    doc.update(format_version=FORMAT_VERSION, kind="certification_report",
               provenance=provenance or {})
    if extra:
        doc.update(extra)
    write_json(path, doc)
    return Path(path)


def save_cover(report, path):
    """All stored leaf boxes: ``check,kind,lo_1..lo_n,hi_1..hi_n``."""
    rows = []
    names = []
    n = None
    for v in report.verdicts:
        if v.cover is None or len(v.cover) == 0:
            continue
        n = v.cover.lo.shape[1]
        rows.append(np.column_stack([v.cover.kind, v.cover.lo, v.cover.hi]))
        names.extend([v.check] * len(v.cover))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        if n is None:
            fh.write("check,kind\n")
            return path
        fh.write(",".join(["check", "kind"] + [f"lo{i + 1}" for i in range(n)]
                          + [f"hi{i + 1}" for i in range(n)]) + "\n")
        table = np.vstack(rows)
        for name, row in zip(names, table):
            fh.write(name + "," + str(int(row[0])) + ","
                     + ",".join(repr(float(x)) for x in row[1:]) + "\n")
    return path


def contour_grid(window, shape):
    """Row-major grid points over a 2-D window, ``x1`` varying fastest."""
    window = np.asarray(window, dtype=float)
    if window.shape != (2, 2):
        raise ValueError("contour export needs a 2-D window [[x1_lo, x1_hi], [x2_lo, x2_hi]]")
    n1, n2 = int(shape[0]), int(shape[1])
    if n1 < 2 or n2 < 2:
        raise ValueError("grid resolution must be at least 2 per axis")
    x1 = np.linspace(window[0, 0], window[0, 1], n1)
    x2 = np.linspace(window[1, 0], window[1, 1], n2)
    X1, X2 = np.meshgrid(x1, x2)
    return np.column_stack([X1.ravel(), X2.ravel()])


def export_contours(candidate, quadratic, levels: dict, window, shape, path,
                    provenance=None):
    """CSV ``x1,x2,V,VP`` over the grid and a JSON of the level values."""
    G = contour_grid(window, shape)
    V = candidate.value(G)
    VP = quadratic.value(G)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    np.savetxt(path, np.column_stack([G, V, VP]), delimiter=",", header="x1,x2,V,VP",
               comments="", fmt="%.17g")
    lv = {k: levels.get(k) for k in ("c", "c1", "c2")}
    write_json(path.with_name(path.stem + "_levels.json"),
               dict(lv, csv=path.name, grid=list(shape), window=np.asarray(window).tolist(),
                    provenance=provenance or {}))
    return path
