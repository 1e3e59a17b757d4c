"""Koopman generator learning through the truncated resolvent.

Pipeline: snapshot data -> observable matrix ``B`` (initial conditions) and
quadrature estimate ``R`` of ``int_0^tau exp(-mu s) Z(phi(s, x)) ds`` ->
generator matrix ``L`` solving ``X L = Y`` in the least-squares sense with

    X = (lam - mu) R + B,     Y = lam mu R - lam B.

Convention: for ``h = Z @ zeta`` the generator acts as ``L h = Z @ (L zeta)``,
so column ``idx(x_j)`` of ``L`` holds the coefficients of ``f_j``.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.interpolate import CubicSpline

from . import interval as ia
from .dictionary import Dictionary
from .dynamics import TrajectoryDataset


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ResolventMatrix:
    R_hat: np.ndarray
    mu: float
    tau_s: float
    panels_per_interval: int = 1
    nodes_per_panel: int = 5
    spline_bc: str = "not-a-knot"


@dataclass(frozen=True)
class GeneratorModel:
    L: np.ndarray
    lam: float
    mu: float
    tau_s: float
    dictionary: Dictionary
    svd_tol: float = 1e-12
    diagnostics: dict = field(default_factory=dict)

    def apply(self, zeta, x):
        """``(L h)(x)`` for ``h = Z @ zeta``."""
        return self.dictionary.eval(x) @ (self.L @ np.asarray(zeta, dtype=float))


def assemble_B(ds: TrajectoryDataset, d: Dictionary) -> np.ndarray:
    X0 = ds.initial_conditions
    if X0.shape[1] != d.n:
        raise ValueError(f"dataset dimension {X0.shape[1]} does not match dictionary ({d.n})")
    return d.eval(X0)


def resolvent_quadrature(ds: TrajectoryDataset, d: Dictionary, mu: float,
                         nodes: int = 5, spline_bc: str = "not-a-knot",
                         chunk: int = 256) -> ResolventMatrix:
    """Composite Gauss-Legendre estimate of the truncated resolvent.

    Observable values along each trajectory are interpolated in time by a
    cubic spline (per dictionary entry); each inter-sample panel gets
    ``nodes`` Gauss-Legendre points and the weight ``exp(-mu s)`` is applied
    exactly at the nodes.
    """
    if mu <= 0:
        raise ConfigError("mu must be positive")
    t = ds.times
    M = ds.M
    if ds.tau_s == 0 or t.size == 1:
        return ResolventMatrix(np.zeros((M, d.N)), mu, ds.tau_s, 1, nodes, spline_bc)
    if t.size < 4:
        raise ConfigError("at least 4 snapshots per trajectory are needed for the spline")
    if abs(t[-1] - ds.tau_s) > 1e-9 * max(1.0, ds.tau_s):
        raise ConfigError("trajectories do not cover [0, tau_s]")

    xg, wg = np.polynomial.legendre.leggauss(nodes)
    a, b = t[:-1, None], t[1:, None]
    s_nodes = (0.5 * (a + b) + 0.5 * (b - a) * xg).ravel()
    weights = ((0.5 * (b - a) * wg) * np.exp(-mu * (0.5 * (a + b) + 0.5 * (b - a) * xg))).ravel()

    snaps = ds.snapshots()  # (M, T, n)
    R = np.empty((M, d.N))
    for start in range(0, M, chunk):
        block = snaps[start:start + chunk]
        m, T, n = block.shape
        Z = d.eval(block.reshape(-1, n)).reshape(m, T, d.N)
        spline = CubicSpline(t, Z, axis=1, bc_type=spline_bc)
        R[start:start + m] = np.einsum("k,mkN->mN", weights, spline(s_nodes))
    return ResolventMatrix(R, float(mu), float(ds.tau_s), 1, nodes, spline_bc)


def pinv_solve(X: np.ndarray, Y: np.ndarray, rel_tol: float):
    """Minimum-norm least-squares solution via a truncated SVD."""
    U, s, Vt = np.linalg.svd(X, full_matrices=False)
    keep = s > rel_tol * s[0] if s.size and s[0] > 0 else np.zeros_like(s, dtype=bool)
    s_inv = np.where(keep, 1.0 / np.where(keep, s, 1.0), 0.0)
    sol = Vt.T @ (s_inv[:, None] * (U.T @ Y))
    info = {
        "rank": int(keep.sum()),
        "truncated": int((~keep).sum()),
        "sigma_max": float(s[0]) if s.size else 0.0,
        "sigma_min_kept": float(s[keep][-1]) if keep.any() else 0.0,
    }
    return sol, info


def learn_generator(B: np.ndarray, R, lam: float = 1e8, mu: Optional[float] = None,
                    svd_tol: float = 1e-12, dictionary: Optional[Dictionary] = None,
                    tau_s: Optional[float] = None) -> GeneratorModel:
    """Solve ``X L = Y`` for the generator matrix ``L``.

    Both sides are divided by ``lam`` before the solve; the minimiser is the
    same and the matrices stay O(1) for ``lam = 1e8``.
    """
    if isinstance(R, ResolventMatrix):
        mu = R.mu if mu is None else mu
        tau_s = R.tau_s if tau_s is None else tau_s
        R = R.R_hat
    if mu is None:
        raise ConfigError("mu is required")
    if not lam > mu > 0:
        raise ConfigError("need lam > mu > 0")
    if B.shape != R.shape:
        raise ValueError(f"B {B.shape} and R {R.shape} differ in shape")
    X = (1.0 - mu / lam) * R + B / lam
    Y = mu * R - B
    L, info = pinv_solve(X, Y, svd_tol)
    if info["truncated"]:
        warnings.warn(f"generator solve is rank deficient: {info['truncated']} singular "
                      f"values below {svd_tol:g} * sigma_max were dropped", RuntimeWarning)
    resid = np.linalg.norm(X @ L - Y)
    info["relative_residual"] = float(resid / max(np.linalg.norm(Y), 1e-300))
    return GeneratorModel(L, float(lam), float(mu), float(tau_s or 0.0), dictionary,
                          svd_tol, info)


def learn_from_dataset(ds: TrajectoryDataset, d: Dictionary, mu: float, lam: float = 1e8,
                       svd_tol: float = 1e-12, nodes: int = 5,
                       spline_bc: str = "not-a-knot") -> GeneratorModel:
    B = assemble_B(ds, d)
    R = resolvent_quadrature(ds, d, mu, nodes=nodes, spline_bc=spline_bc)
    return learn_generator(B, R, lam=lam, svd_tol=svd_tol, dictionary=d)


def apply_generator(g: GeneratorModel, zeta, x):
    return g.apply(zeta, x)


def generator_identity_error(g: GeneratorModel, points, oracle) -> np.ndarray:
    """Per-entry max over ``points`` of ``|Z(y) L[:, i] - grad z_i(y) . f(y)|``."""
    Y = np.atleast_2d(points)
    lhs = g.dictionary.eval(Y) @ g.L
    rhs = np.einsum("mNk,mk->mN", g.dictionary.grad(Y), oracle(Y))
    return np.max(np.abs(lhs - rhs), axis=0)


# --------------------------------------------------------------------------
# identified vector field
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class VectorFieldModel:
    """``f(x) = coef @ Z(x) - offset`` with ``coef`` of shape ``(n, N)``."""

    coef: np.ndarray
    offset: np.ndarray
    dictionary: Dictionary
    corrected: bool = False

    @property
    def n(self) -> int:
        return self.coef.shape[0]

    @property
    def name(self) -> str:
        return "learned"

    def _f(self, X):
        return self.dictionary.eval(X) @ self.coef.T - self.offset

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return self._f(x[None, :])[0]
        return self._f(x)

    f = _f

    def jacobian(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        G = self.dictionary.grad(x[None, :] if single else x)
        J = np.einsum("kN,mNj->mkj", self.coef, G)
        return J[0] if single else J

    def interval(self, lo, hi):
        z_lo, z_hi = self.dictionary.eval_interval(lo, hi)
        f_lo, f_hi = ia.lincomb(self.coef.T, z_lo, z_hi)
        return f_lo - self.offset, f_hi - self.offset

    def jacobian_interval(self, lo, hi):
        g_lo, g_hi = self.dictionary.grad_interval(lo, hi)  # (m, N, n)
        m, N, n = g_lo.shape
        gl = np.swapaxes(g_lo, 1, 2).reshape(m * n, N)
        gh = np.swapaxes(g_hi, 1, 2).reshape(m * n, N)
        J_lo, J_hi = ia.lincomb(self.coef.T, gl, gh)  # (m*n_j, n_k)
        J_lo = J_lo.reshape(m, n, self.n).swapaxes(1, 2)
        J_hi = J_hi.reshape(m, n, self.n).swapaxes(1, 2)
        return J_lo, J_hi

    def hessian_interval(self, lo, hi):
        """Enclosure of ``d^2 f_k / dx_a dx_b``, shape ``(m, n, n, n)``."""
        h_lo, h_hi = self.dictionary.hessian_interval(lo, hi)  # (m, N, n, n)
        m, N, n, _ = h_lo.shape
        hl = np.moveaxis(h_lo, 1, 3).reshape(m * n * n, N)
        hh = np.moveaxis(h_hi, 1, 3).reshape(m * n * n, N)
        H_lo, H_hi = ia.lincomb(self.coef.T, hl, hh)
        H_lo = np.moveaxis(H_lo.reshape(m, n, n, self.n), 3, 1)
        H_hi = np.moveaxis(H_hi.reshape(m, n, n, self.n), 3, 1)
        return H_lo, H_hi


def extract_vector_field(g: GeneratorModel) -> VectorFieldModel:
    idx = g.dictionary.state_indices()
    if idx is None:
        raise ConfigError("the dictionary does not contain the coordinate functions")
    coef = g.L[:, idx].T.copy()
    return VectorFieldModel(coef, np.zeros(len(idx)), g.dictionary, False)


def field_at_origin(v: VectorFieldModel) -> np.ndarray:
    return v(np.zeros(v.n))


def correct_equilibrium(v: VectorFieldModel) -> VectorFieldModel:
    """Shift the field so that the origin is an equilibrium."""
    f0 = field_at_origin(v)
    if not np.any(f0):
        return replace(v, corrected=True)
    k = v.dictionary.constant_index()
    if k is not None:
        coef = v.coef.copy()
        coef[:, k] -= f0
        out = replace(v, coef=coef, corrected=True)
        if not np.any(field_at_origin(out)):
            return out
    return replace(v, offset=v.offset + f0, corrected=True)


def linearize_at_origin(v: VectorFieldModel) -> np.ndarray:
    return v.jacobian(np.zeros(v.n))


def identification_error(v, oracle, points) -> float:
    """``max_y ||f(y) - v(y)||_2`` over the given points."""
    Y = np.atleast_2d(np.asarray(points, dtype=float))
    if Y.shape[0] == 0:
        raise ValueError("empty sample set")
    return float(np.max(np.linalg.norm(oracle(Y) - v(Y), axis=1)))
