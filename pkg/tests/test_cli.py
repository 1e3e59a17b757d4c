import json
from pathlib import Path

import numpy as np
import pytest

from zubov_koopman import cli
from zubov_koopman import serialization as io

SMALL = {
    "name": "small",
    "system": {"builtin": "linear", "params": {"A": [[-1, 0.5], [-0.5, -1]]}},
    "sampling": {"M": 30, "gamma": 20, "tau_s": 3, "domain": [[-1, 1], [-1, 1]], "seed": 0},
    "dictionary": {"kind": "monomial", "J": 4, "K": 4},
    "generator": {"mu": 2.5, "lambda": 1e8},
    "pde": {"interior": 600, "boundary": 40, "domain": [[-2, 2], [-2, 2]], "seed": 1},
    "verify": {"delta": 1e-3},
    "contours": {"grid": [50, 40]},
}


@pytest.fixture
def config(tmp_path):
    path = tmp_path / "small.json"
    path.write_text(json.dumps(SMALL))
    return path


def run(*args):
    return cli.main([str(a) for a in args])


def strip_times(obj):
    if isinstance(obj, dict):
        return {k: strip_times(v) for k, v in obj.items() if "time" not in k}
    if isinstance(obj, list):
        return [strip_times(v) for v in obj]
    return obj


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_stage_by_stage(config, tmp_path):
    out = tmp_path / "out"
    assert run("simulate", "--config", config, "--out", out) == 0
    assert run("learn", "--config", config, "--out", out) == 0
    assert run("solve", "--config", config, "--out", out) == 0
    assert run("certify", "--config", config, "--out", out, "--cover") == 0
    assert run("export-contours", "--config", config, "--out", out) == 0
    for name in ("dataset.csv", "dataset.json", "generator.json", "generator_L.csv",
                 "vector_field.json", "candidate.json", "report.json", "cover.csv",
                 "contours.csv", "contours_levels.json"):
        assert (out / name).exists(), name

    rep = io.read_json(out / "report.json")
    assert rep["status"] == "certified" and rep["audit_replay"] is True
    levels = io.read_json(out / "contours_levels.json")
    assert levels["c2"] == rep["c2"] and levels["c"] == rep["c"]
    table = np.loadtxt(out / "contours.csv", delimiter=",", skiprows=1)
    assert table.shape == (2000, 4)

    # every JSON output carries the config hash and seeds
    for name in ("dataset.json", "generator.json", "vector_field.json", "candidate.json",
                 "report.json", "contours_levels.json"):
        prov = io.read_json(out / name)["provenance"]
        assert len(prov["config_hash"]) == 16
        assert prov["seeds"] == {"sampling": 0, "dictionary": 0, "pde": 1}

    header = (out / "cover.csv").read_text().splitlines()[0]
    assert header == "check,kind,lo1,lo2,hi1,hi2"


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_pipeline_is_bitwise_reproducible(config, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run("pipeline", "--config", config, "--out", a) == 0
    assert run("pipeline", "--config", config, "--out", b, "--threads", "2") == 0
    for name in ("dataset.csv", "generator.json", "generator_L.csv", "vector_field.json",
                 "candidate.json", "contours.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
    ra = strip_times(io.read_json(a / "report.json"))
    rb = strip_times(io.read_json(b / "report.json"))
    assert ra == rb


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_route_flag(config, tmp_path):
    out = tmp_path / "out"
    assert run("simulate", "--config", config, "--out", out) == 0
    assert run("learn", "--config", config, "--out", out) == 0
    assert run("solve", "--config", config, "--out", out, "--route", "direct") == 0
    doc = io.read_json(out / "candidate.json")
    assert doc["residual"]["route"] == "direct"


def test_zero_horizon_rejected(config, tmp_path, capsys):
    assert run("simulate", "--config", config, "--out", tmp_path, "--set", "sampling.tau_s=0") == 1
    assert "error" in capsys.readouterr().err


def test_missing_dataset(config, tmp_path, capsys):
    assert run("learn", "--config", config, "--out", tmp_path / "empty",
               "--dataset", tmp_path / "nope.csv") == 1
    assert "nope.csv" in capsys.readouterr().err


def test_unknown_bundled_config(capsys):
    assert run("simulate", "--config", "no_such_config") == 1


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_corrupted_candidate_exit_code(config, tmp_path):
    out = tmp_path / "out"
    assert run("pipeline", "--config", config, "--out", out) == 0
    doc = io.read_json(out / "candidate.json")
    doc["theta"] = [-t for t in doc["theta"]]
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    code = run("certify", "--config", config, "--out", out, "--candidate", bad)
    assert code == 2
    rep = io.read_json(out / "report.json")
    assert rep["status"] != "certified" and rep["counterexamples_valid"] is True


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_budget_exit_code(config, tmp_path):
    out = tmp_path / "out"
    code = run("pipeline", "--config", config, "--out", out, "--set", "verify.max_boxes=3")
    assert code == 3
    rep = io.read_json(out / "report.json")
    assert rep["status"] == "unknown"


@pytest.mark.slow
@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_vdp_pipeline_and_contours(tmp_path):
    out = tmp_path / "vdp"
    assert run("pipeline", "--config", "vdp", "--out", out) == 0
    table = np.loadtxt(out / "contours.csv", delimiter=",", skiprows=1)
    assert table.shape == (40000, 4)
    origin = np.argmin(np.sum(table[:, :2] ** 2, axis=1))
    cand = io.read_json(out / "candidate.json")
    rms = cand["fit_stats"]["boundary_rms"]
    n_b = cand["fit_stats"]["n_boundary"]
    # the 200 x 200 grid does not contain the origin exactly: compare with the nearest node
    x0 = table[origin, :2]
    assert np.linalg.norm(x0) <= 0.03
    assert abs(table[origin, 2]) <= np.sqrt(n_b) * rms + 0.01
    assert run("export-contours", "--config", "vdp", "--out", out, "--grid", "21", "21",
               "--window", "-1", "1", "-1", "1") == 0
    table = np.loadtxt(out / "contours.csv", delimiter=",", skiprows=1)
    centre = table[np.argmin(np.sum(table[:, :2] ** 2, axis=1))]
    assert np.array_equal(centre[:2], [0.0, 0.0])
    assert abs(centre[2]) <= np.sqrt(n_b) * rms
    assert centre[3] == 0.0
