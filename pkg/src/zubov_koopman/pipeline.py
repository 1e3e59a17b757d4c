"""Configuration handling and in-memory pipeline stages.

A configuration is a nested JSON object with one section per stage::

    system      {"builtin": name, "params": {...}}  or  {"trajectories": path}
    sampling    {M, gamma, tau_s, domain, seed, mode: "iid" | "grid", tol}
    dictionary  {kind: "monomial", J, K}  or  {kind: "tanh", features, seed, weight_scale}
    generator   {mu, lambda, svd_tol, nodes, spline_bc}
    pde         {form, route, r, lambda_b, ridge, interior, boundary, domain, seed,
                 reuse_samples}
    verify      {domain, delta, Q, eps_box, max_boxes, rho, bisect_tol, K_f, alpha}
    contours    {grid, window}
    output      {dir}

Missing keys take the defaults below; ``domain`` entries are lists of
``[lo, hi]`` pairs.
"""
from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np

from . import certificates as cert
from . import dictionary as dic
from . import dynamics as dyn
from . import koopman as kp
from . import verify as ver
from .interval import Box
from .koopman import ConfigError
from .serialization import config_hash

DEFAULTS = {
    "name": "run",
    "system": {"builtin": None, "params": {}, "trajectories": None},
    "sampling": {"M": 100, "gamma": 50.0, "tau_s": 5.0, "domain": None, "seed": 0,
                 "mode": "iid", "tol": 1e-10},
    "dictionary": {"kind": "monomial", "J": 8, "K": 8, "features": 100, "seed": 0,
                   "weight_scale": 1.0},
    "generator": {"mu": 2.5, "lambda": 1e8, "svd_tol": 1e-12, "nodes": 5,
                  "spline_bc": "not-a-knot"},
    "pde": {"form": "zubov", "route": "generator", "r": 0.1, "lambda_b": 100.0,
            "ridge": 1e-10, "interior": 3000, "boundary": 100, "domain": None, "seed": 1,
            "reuse_samples": False},
    "verify": {"domain": None, "delta": None, "Q": None, "eps_box": 1e-3,
               "max_boxes": 2_000_000, "rho": None, "bisect_tol": 1e-3, "K_f": None,
               "alpha": None, "workers": 0},
    "contours": {"grid": [200, 200], "window": None},
    "output": {"dir": "out"},
}

BUNDLED = ("vdp", "two_machine")


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_overrides(cfg: dict, overrides) -> dict:
    """Apply ``section.key=value`` strings (values parsed as JSON when possible)."""
    cfg = copy.deepcopy(cfg)
    for item in overrides or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, text = item.split("=", 1)
        parts = key.strip().split(".")
        node = cfg
        for p in parts[:-1]:
            node = node.setdefault(p, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {item!r} descends into a non-section")
        node[parts[-1]] = _parse_value(text)
    return cfg


def bundled_config(name: str) -> dict:
    ref = resources.files("zubov_koopman") / "configs" / f"{name}.json"
    return json.loads(ref.read_text())


def load_config(source, overrides=None) -> dict:
    """Load a config from a path or a bundled name, fill defaults, validate."""
    if isinstance(source, dict):
        raw = source
    else:
        path = Path(source)
        if path.exists():
            raw = json.loads(path.read_text())
        elif str(source) in BUNDLED:
            raw = bundled_config(str(source))
        else:
            raise FileNotFoundError(f"no config file or bundled config named {source!r}")
    cfg = _merge(DEFAULTS, raw)
    cfg = apply_overrides(cfg, overrides)
    validate(cfg)
    return cfg


def _box(pairs, what) -> Box:
    if pairs is None:
        raise ConfigError(f"{what} is required")
    arr = np.asarray(pairs, dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2 or np.any(arr[:, 0] >= arr[:, 1]):
        raise ConfigError(f"{what} must be a list of [lo, hi] pairs with lo < hi")
    return Box.from_pairs(arr.tolist())


def validate(cfg: dict):
    s = cfg["sampling"]
    if cfg["system"].get("trajectories"):
        if not Path(cfg["system"]["trajectories"]).exists():
            raise ConfigError(f"trajectory file {cfg['system']['trajectories']} does not exist")
    elif not cfg["system"].get("builtin"):
        raise ConfigError("system.builtin or system.trajectories is required")
    else:
        if not s["tau_s"] > 0:
            raise ConfigError("sampling.tau_s must be positive")
        if not s["gamma"] > 0:
            raise ConfigError("sampling.gamma must be positive")
        if not int(s["M"]) >= 1:
            raise ConfigError("sampling.M must be at least 1")
        if s["mode"] not in ("iid", "grid"):
            raise ConfigError("sampling.mode must be 'iid' or 'grid'")
        _box(s["domain"], "sampling.domain")
    g = cfg["generator"]
    if not (g["lambda"] > g["mu"] > 0):
        raise ConfigError("generator needs lambda > mu > 0")
    p = cfg["pde"]
    if p["form"] not in ("zubov", "lyapunov"):
        raise ConfigError("pde.form must be 'zubov' or 'lyapunov'")
    if p["route"] not in ("generator", "direct"):
        raise ConfigError("pde.route must be 'generator' or 'direct'")
    for k in ("r", "lambda_b"):
        if not p[k] > 0:
            raise ConfigError(f"pde.{k} must be positive")
    if int(p["interior"]) < 1 or int(p["boundary"]) < 0:
        raise ConfigError("pde.interior must be >= 1 and pde.boundary >= 0")
    _box(p["domain"], "pde.domain")
    if cfg["dictionary"]["kind"] not in ("monomial", "tanh"):
        raise ConfigError("dictionary.kind must be 'monomial' or 'tanh'")


def seeds(cfg: dict) -> dict:
    return {"sampling": cfg["sampling"]["seed"], "dictionary": cfg["dictionary"].get("seed"),
            "pde": cfg["pde"]["seed"]}


def result_config(cfg: dict) -> dict:
    """The config without execution-only settings (output dir, worker count)."""
    out = copy.deepcopy(cfg)
    out.pop("output", None)
    out["verify"].pop("workers", None)
    return out


def provenance(cfg: dict, stage: str) -> dict:
    return {"config_hash": config_hash(result_config(cfg)), "seeds": seeds(cfg),
            "stage": stage, "name": cfg.get("name")}


def system_of(cfg: dict) -> Optional[dyn.OdeSystem]:
    name = cfg["system"].get("builtin")
    if not name:
        return None
    return dyn.builtin(name, **(cfg["system"].get("params") or {}))


def state_dim(cfg: dict, ds: Optional[dyn.TrajectoryDataset] = None) -> int:
    if ds is not None:
        return ds.n
    return len(cfg["sampling"]["domain"])


def build_dictionary(cfg: dict, n: int) -> dic.Dictionary:
    d = cfg["dictionary"]
    if d["kind"] == "monomial":
        return dic.make_monomial(n, int(d["J"]), None if d.get("K") is None else int(d["K"]))
    return dic.make_tanh(n, int(d["features"]), int(d["seed"]), float(d["weight_scale"]))


def verifier_config(cfg: dict) -> ver.VerifierConfig:
    v = cfg["verify"]
    return ver.VerifierConfig(eps_box=float(v["eps_box"]), max_boxes=int(v["max_boxes"]),
                              rho=None if v["rho"] is None else float(v["rho"]),
                              bisect_tol=float(v["bisect_tol"]),
                              workers=int(v.get("workers") or 0))


# --------------------------------------------------------------------------
# stages
# --------------------------------------------------------------------------

def simulate(cfg: dict) -> dyn.TrajectoryDataset:
    sys = system_of(cfg)
    if sys is None:
        raise ConfigError("simulate needs a built-in system")
    s = cfg["sampling"]
    domain = _box(s["domain"], "sampling.domain")
    if s["mode"] == "grid":
        X0 = dyn.grid_initial_conditions(domain, int(s["M"]))
    else:
        X0 = dyn.uniform_initial_conditions(domain, int(s["M"]), int(s["seed"]))
    ds = dyn.sample_trajectories(sys, X0, float(s["gamma"]), float(s["tau_s"]),
                                 tol=float(s["tol"]), domain=domain)
    ds.meta["seed"] = s["seed"]
    return ds


@dataclass
class LearnResult:
    generator: kp.GeneratorModel
    field: kp.VectorFieldModel
    raw_field: kp.VectorFieldModel
    diagnostics: dict = field(default_factory=dict)


def learn(cfg: dict, ds: dyn.TrajectoryDataset) -> LearnResult:
    gcfg = cfg["generator"]
    d = build_dictionary(cfg, ds.n)
    g = kp.learn_from_dataset(ds, d, float(gcfg["mu"]), float(gcfg["lambda"]),
                              float(gcfg["svd_tol"]), int(gcfg["nodes"]), gcfg["spline_bc"])
    raw = kp.extract_vector_field(g)
    f = kp.correct_equilibrium(raw)
    diag = {
        "rank": g.diagnostics.get("rank"),
        "truncated": g.diagnostics.get("truncated"),
        "relative_residual": g.diagnostics.get("relative_residual"),
        "field_at_origin_before_correction": kp.field_at_origin(raw),
        "A_hat": kp.linearize_at_origin(f),
        "N": d.N,
    }
    sys = system_of(cfg)
    if sys is not None:
        diag["alpha"] = ver.compute_alpha(f, ds.initial_conditions, sys)
    return LearnResult(g, f, raw, diag)


def collocation(cfg: dict, ds: Optional[dyn.TrajectoryDataset] = None):
    p = cfg["pde"]
    domain = _box(p["domain"], "pde.domain")
    interior = cert.collocation_points(domain, int(p["interior"]), int(p["seed"]))
    if p.get("reuse_samples"):
        if ds is None:
            raise ConfigError("pde.reuse_samples needs the trajectory dataset")
        interior = np.vstack([interior, ds.initial_conditions])
    boundary = cert.zubov_boundary(domain, int(p["boundary"]), int(p["seed"]) + 1)
    return domain, interior, boundary


def solve(cfg: dict, g: kp.GeneratorModel, f: Optional[kp.VectorFieldModel] = None,
          ds: Optional[dyn.TrajectoryDataset] = None, route: Optional[str] = None):
    p = cfg["pde"]
    route = route or p["route"]
    domain, interior, boundary = collocation(cfg, ds)
    kw = dict(lambda_b=float(p["lambda_b"]), r=float(p["r"]), ridge=float(p["ridge"]))
    if route == "generator":
        if p["form"] == "zubov":
            c = cert.zubov_lsq(g, interior, boundary, **kw)
        else:
            c = cert.lyapunov_lsq(g, interior, **kw)
        stats = cert.residual_stats(c, g, interior)
    elif route == "direct":
        f = f if f is not None else kp.correct_equilibrium(kp.extract_vector_field(g))
        if p["form"] == "zubov":
            c = cert.zubov_lsq_direct(f, g.dictionary, interior, boundary, **kw)
        else:
            c = cert.lyapunov_lsq_direct(f, g.dictionary, interior, **kw)
        stats = cert.residual_stats(c, None, interior, field_model=f)
    else:
        raise ConfigError(f"unknown route {route!r}")
    return c, dict(stats, route=route)


def certify(cfg: dict, candidate, f: kp.VectorFieldModel, samples) -> ver.CertificationReport:
    v = cfg["verify"]
    domain = _box(v["domain"] if v["domain"] is not None else cfg["pde"]["domain"],
                  "verify.domain")
    oracle = system_of(cfg)
    Q = None if v["Q"] is None else np.asarray(v["Q"], dtype=float)
    return ver.certify_roa(candidate, f, oracle, samples, domain, verifier_config(cfg),
                           delta=None if v["delta"] is None else float(v["delta"]), Q=Q,
                           oracle_lipschitz=v.get("K_f"), alpha=v.get("alpha"))


def grid_counts(report: ver.CertificationReport, candidate, window, shape, domain=None):
    """Grid-point counts of the quadratic and Zubov regions plus containment.

    The candidate region is ``{x in domain: V(x) <= c2}``; points of the
    window outside the certification domain are not counted.
    """
    from .serialization import contour_grid
    G = contour_grid(window, shape)
    quad = report.quadratic.value(G) <= report.c
    inside = np.ones(len(G), dtype=bool)
    if domain is not None:
        lo, hi = np.asarray(domain, dtype=float).T
        inside = np.all((G >= lo) & (G <= hi), axis=1)
    if report.c2 is None:
        zub = np.zeros(len(G), dtype=bool)
    else:
        zub = (candidate.value(G) <= report.c2) & inside
    return {"quadratic": int(quad.sum()), "candidate": int(zub.sum()),
            "quadratic_outside_candidate": int((quad & ~zub).sum())}
