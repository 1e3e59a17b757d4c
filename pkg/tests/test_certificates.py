import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from zubov_koopman import certificates as cert
from zubov_koopman import dynamics as dyn
from zubov_koopman import koopman as kp
from zubov_koopman.dictionary import MonomialDictionary
from zubov_koopman.interval import Box

EVEN10 = MonomialDictionary(np.arange(0, 11, 2)[:, None])
DOM = Box.from_pairs([[-2, 2]])
ANCHOR = (np.zeros((1, 1)), np.zeros(1))


def exact_scalar_generator(d):
    # L x^k = -k x^k for x' = -x
    return kp.GeneratorModel(np.diag(-d.exponents[:, 0].astype(float)), 1e8, 2.5, 5.0, d)


def exact_scalar_field(d):
    coef = np.zeros((1, d.N))
    coef[0, list(d.exponents[:, 0]).index(1)] = -1.0
    return kp.VectorFieldModel(coef, np.zeros(1), d, True)


@pytest.fixture(scope="module")
def learned_scalar():
    X0 = dyn.uniform_initial_conditions(DOM, 50, seed=0)
    ds = dyn.sample_trajectories(dyn.scalar_linear(-1.0), X0, 50, 5, domain=DOM)
    return kp.learn_from_dataset(ds, EVEN10, mu=2.5)


def test_matrix_lyapunov_examples():
    q = cert.solve_matrix_lyapunov(-np.eye(2), np.eye(2))
    assert np.allclose(q.P, np.eye(2) / 2, atol=1e-15)
    A = np.array([[0.0, 1.0], [-0.5, -0.5]])
    q = cert.solve_matrix_lyapunov(A)
    assert cert.lyapunov_residual(q) <= 1e-12
    assert np.array_equal(q.P, q.P.T) and np.all(np.linalg.eigvalsh(q.P) > 0)
    with pytest.raises(cert.CertificationImpossible):
        cert.solve_matrix_lyapunov(np.diag([1.0, -1.0]))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=9, max_size=9), st.floats(0.1, 3))
def test_matrix_lyapunov_residual_property(entries, shift):
    M = np.array(entries).reshape(3, 3)
    A = -(M @ M.T + shift * np.eye(3)) + (M - M.T)
    q = cert.solve_matrix_lyapunov(A)
    assert cert.lyapunov_residual(q) <= 1e-10


def test_eta():
    assert cert.eta(np.zeros(2)) == 0.0
    assert cert.eta(np.array([1.0, 1.0]), 0.1) == pytest.approx(0.2, rel=1e-15)
    assert cert.eta(np.array([3.0, 4.0]), 0.1) == pytest.approx(2.5, rel=1e-15)
    with pytest.raises(ValueError):
        cert.eta(np.zeros(2), 0.0)


def test_zubov_closed_form_exact_generator():
    g = exact_scalar_generator(EVEN10)
    c = cert.zubov_lsq(g, cert.collocation_points(DOM, 2000, 1), ANCHOR, r=0.1)
    x = np.linspace(-2, 2, 801)[:, None]
    assert np.max(np.abs(c.value(x) - (1 - np.exp(-0.05 * x[:, 0] ** 2)))) <= 5e-3
    stats = cert.residual_stats(c, g, cert.collocation_points(DOM, 500, 2))
    assert stats["rms"] <= 5e-3 and stats["range_fraction"] == 1.0


def test_zubov_needs_boundary(learned_scalar):
    X = cert.collocation_points(DOM, 50, 1)
    with pytest.raises(kp.ConfigError):
        cert.zubov_lsq(learned_scalar, X, (np.zeros((0, 1)), np.zeros(0)))
    with pytest.raises(kp.ConfigError):
        cert.zubov_lsq(learned_scalar, X, None)
    with pytest.raises(kp.ConfigError):
        cert.zubov_lsq(learned_scalar, X, (np.array([[2.0]]), np.ones(1)))


def test_boundary_dominance_pins_origin(learned_scalar):
    X = cert.collocation_points(DOM, 500, 1)
    bnd = cert.zubov_boundary(DOM, 20, seed=3)
    w0 = []
    for lb in (1.0, 1e2, 1e4, 1e8):
        c = cert.zubov_lsq(learned_scalar, X, bnd, lambda_b=lb)
        w0.append(abs(c.value(np.zeros(1))))
        # the origin row is one of P boundary rows: |r_0| <= sqrt(P) * rms
        assert w0[-1] <= np.sqrt(c.fit_stats["n_boundary"]) * c.fit_stats["boundary_rms"] + 1e-15
    assert w0[-1] < w0[0] and w0[-1] <= 1e-6


def test_lyapunov_closed_form(learned_scalar):
    c = cert.lyapunov_lsq(learned_scalar, cert.collocation_points(DOM, 1000, 1), r=0.1)
    x = np.linspace(-2, 2, 401)[:, None]
    assert np.max(np.abs(c.value(x) - 0.05 * x[:, 0] ** 2)) <= 1e-6


def test_zero_candidate_residuals(learned_scalar):
    X = cert.collocation_points(DOM, 300, 4)
    e = cert.eta(X, 0.1)
    for form in ("zubov", "lyapunov"):
        c = cert.LyapunovCandidate(np.zeros(EVEN10.N), EVEN10, form, 0.1)
        s = cert.residual_stats(c, learned_scalar, X)
        assert s["rms"] == pytest.approx(np.sqrt(np.mean(e**2)), rel=1e-14)


def test_basis_selection():
    x = np.linspace(-1, 1, 7)[:, None]
    for k in range(EVEN10.N):
        theta = np.zeros(EVEN10.N)
        theta[k] = 1.0
        c = cert.LyapunovCandidate(theta, EVEN10)
        assert np.array_equal(c.value(x), EVEN10.eval(x)[:, k])


def test_route_agreement_exact_models():
    d = MonomialDictionary(np.arange(0, 11)[:, None])
    g = exact_scalar_generator(d)
    f = exact_scalar_field(d)
    X = cert.collocation_points(DOM, 1500, 5)
    a = cert.zubov_lsq(g, X, ANCHOR)
    b = cert.zubov_lsq_direct(f, d, X, ANCHOR)
    assert np.linalg.norm(a.theta - b.theta) / np.linalg.norm(a.theta) <= 1e-6
    a = cert.lyapunov_lsq(g, X)
    b = cert.lyapunov_lsq_direct(f, d, X)
    assert np.linalg.norm(a.theta - b.theta) / np.linalg.norm(a.theta) <= 1e-6


def test_route_agreement_linear_2d():
    A = np.array([[-1.0, 0.5], [-0.3, -2.0]])
    # monomials of total degree <= 3 are closed under a linear field
    d = MonomialDictionary([(p, q) for q in range(4) for p in range(4) if p + q <= 3])
    L = np.zeros((d.N, d.N))
    index = {tuple(e): i for i, e in enumerate(d.exponents)}
    for i, (p, q) in enumerate(d.exponents):
        for (a, b), coef in (((p, q), p * A[0, 0] + q * A[1, 1]),
                             ((p - 1, q + 1), p * A[0, 1]), ((p + 1, q - 1), q * A[1, 0])):
            if coef != 0:
                L[index[(a, b)], i] += coef
    g = kp.GeneratorModel(L, 1e8, 2.5, 5.0, d)
    coef = np.zeros((2, d.N))
    coef[:, index[(1, 0)]] = A[:, 0]
    coef[:, index[(0, 1)]] = A[:, 1]
    f = kp.VectorFieldModel(coef, np.zeros(2), d, True)
    dom = Box.from_pairs([[-1, 1], [-1, 1]])
    X = cert.collocation_points(dom, 800, 1)
    bnd = cert.zubov_boundary(dom, 40, 2)
    a = cert.zubov_lsq(g, X, bnd)
    b = cert.zubov_lsq_direct(f, d, X, bnd)
    assert np.linalg.norm(a.theta - b.theta) / np.linalg.norm(a.theta) <= 1e-6


def _stacked_matrix(c, g, X, bnd):
    d = c.dictionary
    Z = d.eval(X)
    e = cert.eta(X, c.r)
    rows = Z @ g.L - e[:, None] * Z
    Yb, vals = bnd
    A = np.vstack([rows / np.sqrt(len(X)), np.sqrt(c.lambda_b / len(Yb)) * d.eval(Yb)])
    return A


def test_least_squares_optimality(learned_scalar, rng):
    X = cert.collocation_points(DOM, 400, 6)
    bnd = cert.zubov_boundary(DOM, 10, 7)
    c = cert.zubov_lsq(learned_scalar, X, bnd)
    base = cert.stacked_objective(c, learned_scalar, X, bnd)
    D = np.linalg.norm(_stacked_matrix(c, learned_scalar, X, bnd), axis=0)
    lam = c.fit_stats["ridge"]
    for _ in range(100):
        p = rng.normal(size=c.theta.size)
        p *= 1e-4 / np.linalg.norm(p)
        c2 = cert.LyapunovCandidate(c.theta + p, c.dictionary, c.form, c.r, c.lambda_b)
        drop = base - cert.stacked_objective(c2, learned_scalar, X, bnd)
        assert drop <= lam * np.sum((D * (c.theta + p)) ** 2) + 1e-14


def test_boundary_weight_monotonicity(learned_scalar):
    X = cert.collocation_points(DOM, 400, 8)
    pts = np.array([[0.0], [-2.0], [2.0]])
    bnd = (pts, np.array([0.0, 1.0, 1.0]))  # W = 1 at +-2 conflicts with the PDE
    rms = [cert.zubov_lsq(learned_scalar, X, bnd, lambda_b=lb).fit_stats["boundary_rms"]
           for lb in (0.1, 1, 10, 100, 1e3, 1e4)]
    assert all(b <= a * (1 + 1e-9) + 1e-15 for a, b in zip(rms, rms[1:]))
    assert rms[-1] < rms[0]


def test_quadratic_candidate_interface():
    q = cert.solve_matrix_lyapunov(np.array([[0.0, 1.0], [-0.5, -0.5]]))
    X = np.random.default_rng(0).uniform(-1, 1, size=(10, 2))
    assert np.allclose(q.value(X), np.einsum("mi,ij,mj->m", X, q.P, X))
    assert np.allclose(q.gradient(X), 2 * X @ q.P)
    lo, hi = q.value_interval(np.array([-0.1, 0.2]), np.array([0.3, 0.5]))
    Y = np.random.default_rng(1).uniform([-0.1, 0.2], [0.3, 0.5], size=(300, 2))
    v = q.value(Y)
    assert np.all(v >= lo - 1e-12) and np.all(v <= hi + 1e-12)


@pytest.mark.slow
def test_vdp_candidate_properties(vdp_run):
    c = vdp_run.candidate
    w0 = abs(c.value(np.zeros(2)))
    assert w0 <= np.sqrt(c.fit_stats["n_boundary"]) * c.fit_stats["boundary_rms"]


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="generator-route Zubov solution overshoots 1.05 outside "
                                       "the basin near the window corners (about 95% in range)")
def test_vdp_zubov_range(vdp_run):
    G = np.stack(np.meshgrid(np.linspace(-2.5, 2.5, 101), np.linspace(-3.5, 3.5, 141)),
                 -1).reshape(-1, 2)
    s = cert.residual_stats(vdp_run.candidate, vdp_run.learned.generator, G)
    assert s["range_fraction"] >= 0.99


@pytest.mark.slow
def test_vdp_zubov_range_direct_route(vdp_direct_run):
    G = np.stack(np.meshgrid(np.linspace(-2.5, 2.5, 101), np.linspace(-3.5, 3.5, 141)),
                 -1).reshape(-1, 2)
    s = cert.residual_stats(vdp_direct_run.candidate, None, G,
                            field_model=vdp_direct_run.learned.field)
    assert s["range_fraction"] >= 0.99


@pytest.mark.slow
@pytest.mark.xfail(strict=True, reason="certified c2 levels of the two routes differ by about 35%")
def test_vdp_cross_route_levels(vdp_run, vdp_direct_run):
    a, b = vdp_run.report, vdp_direct_run.report
    assert a.certified and b.certified
    assert abs(a.c2 - b.c2) / max(a.c2, b.c2) <= 0.10
