import warnings
from dataclasses import dataclass

import numpy as np
import pytest

from zubov_koopman import pipeline as pl


@dataclass
class Run:
    cfg: dict
    dataset: object
    learned: object
    candidate: object
    report: object


def run_pipeline(name, route=None, overrides=()):
    cfg = pl.load_config(name, list(overrides))
    ds = pl.simulate(cfg)
    res = pl.learn(cfg, ds)
    c, _ = pl.solve(cfg, res.generator, res.field, ds, route=route)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        rep = pl.certify(cfg, c, res.field, ds.initial_conditions)
    return Run(cfg, ds, res, c, rep)


@pytest.fixture(scope="session")
def vdp_run():
    return run_pipeline("vdp")


@pytest.fixture(scope="session")
def vdp_direct_run():
    return run_pipeline("vdp", route="direct")


@pytest.fixture(scope="session")
def two_machine_run():
    return run_pipeline("two_machine")


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(RESULTS):
        ok, detail = RESULTS[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
