"""Lyapunov and Zubov certificates.

* :func:`solve_matrix_lyapunov` -- quadratic ``V_P = x' P x`` at the
  linearisation.
* :func:`zubov_lsq` / :func:`lyapunov_lsq` -- ``V = Z(x) @ theta`` from a
  stacked, weighted least-squares collocation of the PDE written with the
  learned generator (``Z(x) L theta`` stands for ``grad V . f``).
* :func:`zubov_lsq_direct` / :func:`lyapunov_lsq_direct` -- the same PDEs
  written with an identified vector field instead.

Candidates expose point, gradient and Hessian evaluation plus naive interval
enclosures; the verifier builds tighter centred forms on top of these.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import interval as ia
from .dictionary import Dictionary
from .interval import Box
from .koopman import ConfigError, GeneratorModel


class CertificationImpossible(RuntimeError):
    """The linearisation is not Hurwitz, or no positive level can be certified."""


# --------------------------------------------------------------------------
# quadratic Lyapunov function
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class QuadraticLyapunov:
    P: np.ndarray
    Q: np.ndarray
    A: Optional[np.ndarray] = None

    @property
    def n(self) -> int:
        return self.P.shape[0]

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return np.einsum("...i,ij,...j->...", x, self.P, x)

    def gradient(self, x):
        return 2.0 * np.asarray(x, dtype=float) @ self.P

    def hessian(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(2.0 * self.P, x.shape[:-1] + self.P.shape).copy()

    def value_interval(self, lo, hi):
        lo, hi = ia.as_bounds(lo, hi)
        n = self.n
        v_lo = np.zeros(lo.shape[:-1])
        v_hi = np.zeros(lo.shape[:-1])
        for i in range(n):
            s_lo, s_hi = ia.scale(self.P[i, i], *ia.sqr(lo[..., i], hi[..., i]))
            v_lo, v_hi = v_lo + s_lo, v_hi + s_hi
            for j in range(i + 1, n):
                p_lo, p_hi = ia.scale(2.0 * self.P[i, j],
                                      *ia.mul(lo[..., i], hi[..., i], lo[..., j], hi[..., j]))
                v_lo, v_hi = v_lo + p_lo, v_hi + p_hi
        return ia.inflate(v_lo, v_hi)

    def gradient_interval(self, lo, hi):
        lo, hi = ia.as_bounds(lo, hi)
        return ia.lincomb(2.0 * self.P, lo, hi)

    def hessian_interval(self, lo, hi):
        lo, _ = ia.as_bounds(lo, hi)
        H = self.hessian(lo)
        return H, H.copy()


def _kron_lyapunov_matrix(A):
    n = A.shape[0]
    eye = np.eye(n)
    # row-major vec: vec(P A) = (I kron A^T) vec P, vec(A^T P) = (A^T kron I) vec P
    return np.kron(eye, A.T) + np.kron(A.T, eye)


def solve_matrix_lyapunov(A_hat, Q=None) -> QuadraticLyapunov:
    """Solve ``P A + A' P = -Q`` through the Kronecker-vectorised system."""
    A = np.asarray(A_hat, dtype=float)
    n = A.shape[0]
    Q = np.eye(n) if Q is None else np.asarray(Q, dtype=float)
    eig = np.linalg.eigvals(A)
    if np.max(eig.real) >= 0:
        raise CertificationImpossible(f"linearisation is not Hurwitz (eigenvalues {eig})")
    K = _kron_lyapunov_matrix(A)
    try:
        p = np.linalg.solve(K, -Q.reshape(-1))
    except np.linalg.LinAlgError as exc:
        raise ArithmeticError("singular Lyapunov system") from exc
    P = p.reshape(n, n)
    P = 0.5 * (P + P.T)
    np.linalg.cholesky(P)  # raises if P is not positive definite
    return QuadraticLyapunov(P, Q, A)


def lyapunov_residual(q: QuadraticLyapunov, A=None) -> float:
    A = q.A if A is None else A
    R = q.P @ A + A.T @ q.P + q.Q
    return float(np.linalg.norm(R) / np.linalg.norm(q.Q))


# --------------------------------------------------------------------------
# dictionary candidates
# --------------------------------------------------------------------------

def eta(x, r: float = 0.1):
    """``r |x|^2``."""
    if r <= 0:
        raise ValueError("r must be positive")
    x = np.asarray(x, dtype=float)
    return r * np.sum(x * x, axis=-1)


@dataclass(frozen=True)
class LyapunovCandidate:
    theta: np.ndarray
    dictionary: Dictionary
    form: str = "zubov"
    r: float = 0.1
    lambda_b: float = 100.0
    fit_stats: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.dictionary.n

    def value(self, x):
        return self.dictionary.eval(x) @ self.theta

    def gradient(self, x):
        return np.einsum("...Nk,N->...k", self.dictionary.grad(x), self.theta)

    def hessian(self, x):
        return np.einsum("...Nab,N->...ab", self.dictionary.hessian(x), self.theta)

    def value_interval(self, lo, hi=None):
        z_lo, z_hi = self.dictionary.eval_interval(lo, hi)
        return ia.lincomb(self.theta, z_lo, z_hi)

    def gradient_interval(self, lo, hi=None):
        g_lo, g_hi = self.dictionary.grad_interval(lo, hi)  # (..., N, n)
        return ia.lincomb(self.theta, np.swapaxes(g_lo, -1, -2), np.swapaxes(g_hi, -1, -2))

    def hessian_interval(self, lo, hi=None):
        h_lo, h_hi = self.dictionary.hessian_interval(lo, hi)  # (..., N, n, n)
        return ia.lincomb(self.theta, np.moveaxis(h_lo, -3, -1), np.moveaxis(h_hi, -3, -1))

    def negated(self) -> "LyapunovCandidate":
        return LyapunovCandidate(-self.theta, self.dictionary, self.form, self.r,
                                 self.lambda_b, dict(self.fit_stats))


# --------------------------------------------------------------------------
# collocation
# --------------------------------------------------------------------------

def collocation_points(domain: Box, count: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.uniform(domain.lo, domain.hi, size=(count, domain.n))


def perimeter_points(domain: Box, count: int, seed: int) -> np.ndarray:
    """Uniform samples on the boundary of a box (faces weighted by area)."""
    rng = np.random.default_rng(seed)
    lo, hi = domain.lo, domain.hi
    n = domain.n
    if n == 1:
        return np.array([[lo[0]], [hi[0]]])[np.arange(count) % 2]
    widths = hi - lo
    face_area = np.array([np.prod(np.delete(widths, i)) for i in range(n)])
    probs = np.repeat(face_area, 2) / (2 * face_area.sum())
    faces = rng.choice(2 * n, size=count, p=probs)
    pts = rng.uniform(lo, hi, size=(count, n))
    axis = faces // 2
    pts[np.arange(count), axis] = np.where(faces % 2 == 0, lo[axis], hi[axis])
    return pts


def zubov_boundary(domain: Box, count: int, seed: int):
    """The origin with value 0 plus ``count`` perimeter points with value 1."""
    pts = np.vstack([np.zeros((1, domain.n)), perimeter_points(domain, count, seed)])
    vals = np.concatenate([[0.0], np.ones(count)])
    return pts, vals


# --------------------------------------------------------------------------
# least squares
# --------------------------------------------------------------------------

def ridge_solve(A, b, ridge_rel: float = 1e-10):
    """Tikhonov-regularised least squares through the SVD of ``A``.

    Columns are scaled to unit norm first (monomial columns differ by many
    orders of magnitude); the penalty is ``ridge_rel * sigma_max**2`` of the
    scaled matrix.
    """
    norms = np.linalg.norm(A, axis=0)
    norms = np.where(norms > 0, norms, 1.0)
    U, s, Vt = np.linalg.svd(A / norms, full_matrices=False)
    lam = ridge_rel * (s[0] ** 2 if s.size else 0.0)
    filt = s / (s * s + lam) if lam > 0 else np.where(s > 0, 1.0 / np.where(s > 0, s, 1), 0.0)
    theta = (Vt.T @ (filt * (U.T @ b))) / norms
    return theta, {"sigma_max": float(s[0]), "sigma_min": float(s[-1]), "ridge": float(lam)}


def _stack_and_solve(interior_rows, interior_rhs, bnd_rows, bnd_rhs, lambda_b, ridge):
    M = interior_rows.shape[0]
    P = bnd_rows.shape[0]
    w_in = np.sqrt(1.0 / M)
    w_b = np.sqrt(lambda_b / P)
    A = np.vstack([w_in * interior_rows, w_b * bnd_rows])
    b = np.concatenate([w_in * interior_rhs, w_b * bnd_rhs])
    theta, info = ridge_solve(A, b, ridge)
    r_in = interior_rows @ theta - interior_rhs
    r_b = bnd_rows @ theta - bnd_rhs
    stats = dict(info)
    stats.update(
        interior_rms=float(np.sqrt(np.mean(r_in**2))),
        interior_max=float(np.max(np.abs(r_in))),
        boundary_rms=float(np.sqrt(np.mean(r_b**2))),
        boundary_max=float(np.max(np.abs(r_b))),
        objective=float(np.mean(r_in**2) + lambda_b * np.mean(r_b**2)),
        n_interior=int(M),
        n_boundary=int(P),
    )
    return theta, stats


def _check_boundary(boundary, n):
    if boundary is None:
        raise ConfigError("the Zubov solve needs boundary rows (W = 1 is a trivial solution)")
    pts, vals = boundary
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    vals = np.asarray(vals, dtype=float)
    if pts.shape[0] == 0:
        raise ConfigError("the Zubov solve needs boundary rows (W = 1 is a trivial solution)")
    if pts.shape != (vals.size, n):
        raise ConfigError("boundary points and values disagree in shape")
    anchored = np.any(np.all(pts == 0.0, axis=1) & (vals == 0.0))
    if not anchored:
        raise ConfigError("boundary rows must pin W(0) = 0")
    return pts, vals


def zubov_lsq(g: GeneratorModel, interior, boundary, lambda_b: float = 100.0,
              r: float = 0.1, ridge: float = 1e-10) -> LyapunovCandidate:
    """Solve ``[Z(x) L - eta(x) Z(x)] theta = -eta(x)`` with boundary rows."""
    d = g.dictionary
    X = np.atleast_2d(np.asarray(interior, dtype=float))
    if X.shape[0] == 0:
        raise ConfigError("no interior collocation points")
    Yb, vals = _check_boundary(boundary, d.n)
    Z = d.eval(X)
    e = eta(X, r)
    rows = Z @ g.L - e[:, None] * Z
    theta, stats = _stack_and_solve(rows, -e, d.eval(Yb), vals, lambda_b, ridge)
    return LyapunovCandidate(theta, d, "zubov", r, lambda_b, stats)


def lyapunov_lsq(g: GeneratorModel, interior, lambda_b: float = 100.0, r: float = 0.1,
                 ridge: float = 1e-10) -> LyapunovCandidate:
    """Solve ``Z(x) L theta = -eta(x)`` with the single anchor ``V(0) = 0``."""
    d = g.dictionary
    X = np.atleast_2d(np.asarray(interior, dtype=float))
    if X.shape[0] == 0:
        raise ConfigError("no interior collocation points")
    e = eta(X, r)
    rows = d.eval(X) @ g.L
    origin = d.eval(np.zeros((1, d.n)))
    theta, stats = _stack_and_solve(rows, -e, origin, np.zeros(1), lambda_b, ridge)
    return LyapunovCandidate(theta, d, "lyapunov", r, lambda_b, stats)


def _lie_rows(field_model, d: Dictionary, X):
    # grad z_i(x) . f(x) for every dictionary entry
    return np.einsum("mNk,mk->mN", d.grad(X), field_model(X))


def zubov_lsq_direct(field_model, d: Dictionary, interior, boundary, lambda_b: float = 100.0,
                     r: float = 0.1, ridge: float = 1e-10) -> LyapunovCandidate:
    """Zubov collocation with ``grad Z(x) . f(x)`` in place of ``Z(x) L``."""
    X = np.atleast_2d(np.asarray(interior, dtype=float))
    if X.shape[0] == 0:
        raise ConfigError("no interior collocation points")
    Yb, vals = _check_boundary(boundary, d.n)
    Z = d.eval(X)
    e = eta(X, r)
    rows = _lie_rows(field_model, d, X) - e[:, None] * Z
    theta, stats = _stack_and_solve(rows, -e, d.eval(Yb), vals, lambda_b, ridge)
    return LyapunovCandidate(theta, d, "zubov", r, lambda_b, stats)


def lyapunov_lsq_direct(field_model, d: Dictionary, interior, lambda_b: float = 100.0,
                        r: float = 0.1, ridge: float = 1e-10) -> LyapunovCandidate:
    X = np.atleast_2d(np.asarray(interior, dtype=float))
    e = eta(X, r)
    rows = _lie_rows(field_model, d, X)
    origin = d.eval(np.zeros((1, d.n)))
    theta, stats = _stack_and_solve(rows, -e, origin, np.zeros(1), lambda_b, ridge)
    return LyapunovCandidate(theta, d, "lyapunov", r, lambda_b, stats)


def stacked_objective(c: LyapunovCandidate, g: GeneratorModel, interior, boundary=None) -> float:
    """The collocation objective evaluated at ``c.theta`` (operator route)."""
    d = c.dictionary
    X = np.atleast_2d(interior)
    Z = d.eval(X)
    e = eta(X, c.r)
    if c.form == "zubov":
        r_in = (Z @ g.L - e[:, None] * Z) @ c.theta + e
        Yb, vals = boundary
    else:
        r_in = Z @ g.L @ c.theta + e
        Yb, vals = np.zeros((1, d.n)), np.zeros(1)
    r_b = d.eval(np.atleast_2d(Yb)) @ c.theta - vals
    return float(np.mean(r_in**2) + c.lambda_b * np.mean(r_b**2))


def residual_stats(c: LyapunovCandidate, g: Optional[GeneratorModel], points,
                   field_model=None, band=(-0.05, 1.05)) -> dict:
    """PDE residual statistics plus the Zubov range diagnostic.

    Uses ``Z L theta`` for the Lie derivative when ``g`` is given, otherwise
    ``grad V . f`` with ``field_model``.
    """
    X = np.atleast_2d(np.asarray(points, dtype=float))
    V = c.value(X)
    if g is not None:
        lie = c.dictionary.eval(X) @ (g.L @ c.theta)
    else:
        lie = np.einsum("mk,mk->m", c.gradient(X), field_model(X))
    e = eta(X, c.r)
    res = lie + e * (1.0 - V) if c.form == "zubov" else lie + e
    inside = (V >= band[0]) & (V <= band[1])
    return {
        "rms": float(np.sqrt(np.mean(res**2))),
        "max": float(np.max(np.abs(res))),
        "range_fraction": float(np.mean(inside)),
        "min_value": float(V.min()),
        "max_value": float(V.max()),
    }
