import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zubov_koopman.dictionary import (MonomialDictionary, TanhDictionary, from_dict,
                                      make_monomial, make_tanh)
from zubov_koopman.interval import Box


def test_monomial_ordering():
    d = make_monomial(2, 2, 2)
    assert np.array_equal(d.eval(np.array([2.0, 3.0])), [1, 2, 3, 6])
    assert d.constant_index() == 0


def test_sizes():
    assert make_monomial(2, 8, 8).N == 64
    assert make_tanh(2, 100, seed=0, weight_scale=1.0).N == 102
    d = make_monomial(2, 1, 1)
    assert d.N == 1 and np.array_equal(d.eval(np.array([5.0, -7.0])), [1.0])


def test_tanh_zero_bias_at_origin():
    d = TanhDictionary(np.ones((4, 2)), np.zeros(4), append_state=True)
    assert np.array_equal(d.eval(np.zeros(2)), np.zeros(6))


def test_appended_state_block():
    d = make_tanh(2, 10, seed=3)
    x = np.array([0.4, -1.1])
    assert np.array_equal(d.eval(x)[-2:], x)
    assert d.state_indices() == [10, 11]
    assert np.array_equal(d.eval(np.zeros(2))[-2:], [0.0, 0.0])


def test_gradient_examples():
    d = make_monomial(2, 2, 2)
    G = d.grad(np.array([2.0, 3.0]))
    assert np.array_equal(G[3], [3.0, 2.0])
    assert np.array_equal(G[1], [1.0, 0.0])
    t = make_tanh(2, 5, seed=1)
    X = np.random.default_rng(0).uniform(-2, 2, size=(7, 2))
    assert np.all(t.grad(X)[:, 5, :] == [1.0, 0.0])


def test_dimension_mismatch():
    d = make_monomial(2, 3, 3)
    with pytest.raises(ValueError):
        d.eval(np.zeros(3))
    with pytest.raises(ValueError):
        d.eval_interval(np.zeros(3), np.ones(3))


@pytest.mark.parametrize("d", [make_monomial(2, 5, 4), make_tanh(2, 12, seed=2, weight_scale=1.5)],
                         ids=["monomial", "tanh"])
def test_derivatives_match_finite_differences(d, rng):
    X = rng.uniform(-1.5, 1.5, size=(25, 2))
    h = 1e-6
    G = d.grad(X)
    H = d.hessian(X)
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        fd = (d.eval(X + e) - d.eval(X - e)) / (2 * h)
        assert np.allclose(G[:, :, j], fd, atol=1e-6, rtol=1e-6)
        fdg = (d.grad(X + e) - d.grad(X - e)) / (2 * h)
        assert np.allclose(H[:, :, :, j], fdg, atol=1e-5, rtol=1e-5)


def test_monomial_interval_example():
    d = MonomialDictionary([[2, 1]])
    lo, hi = d.eval_interval(Box.from_pairs([[-1, 1], [0, 2]]))
    # true range of x1^2 x2 over the box is [0, 2]; any enclosure inside [-2, 2] is acceptable
    assert lo[0] <= 0.0 and hi[0] >= 2.0
    assert lo[0] >= -2.0 and hi[0] <= 2.0 + 1e-9


def test_point_box_and_constant():
    t = make_tanh(2, 6, seed=4)
    x = np.array([0.3, -0.8])
    lo, hi = t.eval_interval(x, x)
    assert np.allclose(lo, t.eval(x), rtol=1e-11, atol=1e-15)
    assert np.allclose(hi, t.eval(x), rtol=1e-11, atol=1e-15)
    assert np.all(lo <= t.eval(x)) and np.all(t.eval(x) <= hi)
    m = make_monomial(2, 3, 3)
    lo, hi = m.eval_interval(Box.from_pairs([[-5, 2], [1, 9]]))
    assert lo[0] == 1.0 and hi[0] == 1.0


boxes = st.tuples(st.floats(-2, 2), st.floats(0, 1.5), st.floats(-2, 2), st.floats(0, 1.5))


@settings(max_examples=60, deadline=None)
@given(boxes, st.sampled_from(["monomial", "tanh"]))
def test_interval_enclosures(spec, kind):
    a, wa, b, wb = spec
    lo = np.array([a, b])
    hi = lo + [wa, wb]
    d = make_monomial(2, 4, 4) if kind == "monomial" else make_tanh(2, 8, seed=5)
    X = lo + np.random.default_rng(0).uniform(0, 1, size=(200, 2)) * (hi - lo)
    for point, interval in ((d.eval, d.eval_interval), (d.grad, d.grad_interval),
                            (d.hessian, d.hessian_interval)):
        ilo, ihi = interval(lo, hi)
        v = point(X)
        tol = 1e-9 * (1 + np.abs(v))
        assert np.all(v >= ilo - tol) and np.all(v <= ihi + tol)


@pytest.mark.parametrize("d", [make_monomial(2, 3, 4), make_tanh(2, 5, seed=9, weight_scale=2.0),
                               MonomialDictionary(np.arange(0, 11, 2)[:, None])],
                         ids=["monomial", "tanh", "even"])
def test_round_trip(d):
    e = from_dict(d.to_dict())
    X = np.random.default_rng(1).uniform(-1, 1, size=(5, d.n))
    assert np.array_equal(e.eval(X), d.eval(X))
