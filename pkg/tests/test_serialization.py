import numpy as np
import pytest

from zubov_koopman import certificates as cert
from zubov_koopman import dynamics as dyn
from zubov_koopman import koopman as kp
from zubov_koopman import serialization as io
from zubov_koopman.dictionary import make_monomial, make_tanh
from zubov_koopman.interval import Box


def small_dataset():
    X0 = dyn.uniform_initial_conditions(Box.from_pairs([[-1, 1], [-1, 1]]), 4, seed=3)
    return dyn.sample_trajectories(dyn.vdp_reversed(), X0, 20, 1.0)


def test_dataset_round_trip(tmp_path):
    ds = small_dataset()
    path = io.save_dataset(ds, tmp_path / "d.csv", provenance={"config_hash": "x"}, seed=3)
    back = io.load_dataset(path)
    assert back.M == ds.M and back.gamma == ds.gamma and back.tau_s == ds.tau_s
    for a, b in zip(ds.trajectories, back.trajectories):
        assert np.array_equal(a.times, b.times) and np.array_equal(a.states, b.states)
    assert io.read_json(tmp_path / "d.json")["provenance"] == {"config_hash": "x"}


def test_dataset_errors(tmp_path):
    with pytest.raises(FileNotFoundError):
        io.load_dataset(tmp_path / "missing.csv")
    bad = tmp_path / "bad.csv"
    bad.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        io.load_dataset(bad)


def test_generator_round_trip(tmp_path):
    ds = small_dataset()
    g = kp.learn_from_dataset(ds, make_monomial(2, 3, 3), mu=2.5)
    back = io.load_generator(io.save_generator(g, tmp_path / "g.json"))
    assert np.array_equal(back.L, g.L)
    assert (back.lam, back.mu, back.tau_s) == (g.lam, g.mu, g.tau_s)
    with pytest.raises(ValueError):
        io.load_vector_field(tmp_path / "g.json")


def test_vector_field_and_candidate_round_trip(tmp_path):
    d = make_tanh(2, 6, seed=1)
    v = kp.VectorFieldModel(np.random.default_rng(0).normal(size=(2, d.N)), np.zeros(2), d)
    w = io.load_vector_field(io.save_vector_field(v, tmp_path / "f.json"))
    X = np.random.default_rng(1).uniform(-1, 1, size=(10, 2))
    assert np.array_equal(w(X), v(X))
    c = cert.LyapunovCandidate(np.arange(d.N, dtype=float), d, fit_stats={"rms": 0.1})
    e = io.load_candidate(io.save_candidate(c, tmp_path / "c.json"))
    assert np.array_equal(e.value(X), c.value(X)) and e.fit_stats == {"rms": 0.1}


def test_config_hash_is_order_independent():
    a = io.config_hash({"x": 1, "y": [1, 2]})
    assert a == io.config_hash({"y": [1, 2], "x": 1})
    assert len(a) == 16 and a != io.config_hash({"x": 2, "y": [1, 2]})


def test_contour_grid():
    G = io.contour_grid([[-1, 1], [0, 2]], (3, 2))
    assert np.array_equal(G, [[-1, 0], [0, 0], [1, 0], [-1, 2], [0, 2], [1, 2]])
    with pytest.raises(ValueError):
        io.contour_grid([[-1, 1], [0, 2]], (1, 5))
    with pytest.raises(ValueError):
        io.contour_grid([[-1, 1]], (5, 5))
