"""Observable dictionaries shared by generator learning and PDE solving.

Two families:

* :class:`MonomialDictionary` -- products ``x1**p * x2**q``. For the 2-D
  ``J x K`` family entry ``i`` has ``p = i % J`` and ``q = i // J``, so the
  constant function is entry 0 and ``x1``, ``x2`` sit at ``1`` and ``J``.
* :class:`TanhDictionary` -- random features ``tanh(W x + b)`` followed by
  the coordinate functions ``x1..xn``.

Point evaluations accept a single state ``(n,)`` or a batch ``(m, n)``.
Interval evaluations take a batch of boxes ``(lo, hi)`` of shape ``(m, n)``
(or a :class:`~zubov_koopman.interval.Box`) and return ``(lo, hi)`` arrays.
"""
from __future__ import annotations

import itertools
from typing import Optional

import numpy as np

from . import interval as ia


def _batch(x, n):
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    X = x[None, :] if single else x
    if X.ndim != 2 or X.shape[1] != n:
        raise ValueError(f"expected states of dimension {n}, got shape {x.shape}")
    return X, single


def _boxes(box_or_lo, hi, n):
    lo, hi = ia.as_bounds(box_or_lo, hi)
    single = lo.ndim == 1
    if single:
        lo, hi = lo[None, :], hi[None, :]
    if lo.shape[1] != n:
        raise ValueError(f"expected boxes of dimension {n}, got {lo.shape[1]}")
    return lo, hi, single


def _unbatch(single, *arrays):
    if single:
        arrays = tuple(a[0] for a in arrays)
    return arrays[0] if len(arrays) == 1 else arrays


class Dictionary:
    """Base class; subclasses implement the ``_eval*`` batch kernels."""

    kind = "abstract"
    n: int
    N: int

    def eval(self, x):
        X, single = _batch(x, self.n)
        return _unbatch(single, self._eval(X))

    __call__ = eval

    def grad(self, x):
        """Array of shape ``(..., N, n)``; row ``i`` is the gradient of entry ``i``."""
        X, single = _batch(x, self.n)
        return _unbatch(single, self._grad(X))

    def hessian(self, x):
        X, single = _batch(x, self.n)
        return _unbatch(single, self._hessian(X))

    def eval_interval(self, box_or_lo, hi=None):
        lo, hi, single = _boxes(box_or_lo, hi, self.n)
        return _unbatch(single, *self._eval_interval(lo, hi))

    def grad_interval(self, box_or_lo, hi=None):
        lo, hi, single = _boxes(box_or_lo, hi, self.n)
        return _unbatch(single, *self._grad_interval(lo, hi))

    def hessian_interval(self, box_or_lo, hi=None):
        lo, hi, single = _boxes(box_or_lo, hi, self.n)
        return _unbatch(single, *self._hessian_interval(lo, hi))

    def state_indices(self) -> Optional[list]:
        """Index of the coordinate function ``x_j`` for each ``j``, if present."""
        return None

    def constant_index(self) -> Optional[int]:
        return None

    def to_dict(self) -> dict:
        raise NotImplementedError

    def __repr__(self):
        return f"{type(self).__name__}(n={self.n}, N={self.N})"


class MonomialDictionary(Dictionary):
    kind = "monomial"

    def __init__(self, exponents, J: Optional[int] = None, K: Optional[int] = None):
        exps = np.array(exponents, dtype=int)
        if exps.ndim != 2 or np.any(exps < 0):
            raise ValueError("exponents must be a non-negative (N, n) integer table")
        exps.setflags(write=False)
        self.exponents = exps
        self.N, self.n = exps.shape
        self.J, self.K = J, K
        self._max = exps.max(axis=0)

    # point kernels --------------------------------------------------------
    def _powers(self, X):
        # P[j][:, d] = x_j ** d for d = 0..max degree
        out = []
        for j in range(self.n):
            d = int(self._max[j])
            P = np.ones((X.shape[0], d + 1))
            for k in range(1, d + 1):
                P[:, k] = P[:, k - 1] * X[:, j]
            out.append(P)
        return out

    @staticmethod
    def _take(P, e, shift):
        # x**(e - shift) times the falling-factorial coefficient
        k = e - shift
        vals = P[:, np.maximum(k, 0)]
        coef = np.ones_like(e, dtype=float)
        for s in range(shift):
            coef = coef * (e - s)
        return np.where(k >= 0, vals, 0.0) * coef

    def _eval(self, X):
        P = self._powers(X)
        Z = np.ones((X.shape[0], self.N))
        for j in range(self.n):
            Z *= self._take(P[j], self.exponents[:, j], 0)
        return Z

    def _factors(self, X, order):
        # F[j][s] = d^s/dx_j^s of x_j**e_j for s = 0..order, shape (m, N)
        P = self._powers(X)
        return [[self._take(P[j], self.exponents[:, j], s) for s in range(order + 1)]
                for j in range(self.n)]

    def _grad(self, X):
        F = self._factors(X, 1)
        G = np.ones((X.shape[0], self.N, self.n))
        for k in range(self.n):
            for j in range(self.n):
                G[:, :, k] *= F[j][1 if j == k else 0]
        return G

    def _hessian(self, X):
        F = self._factors(X, 2)
        H = np.ones((X.shape[0], self.N, self.n, self.n))
        for a in range(self.n):
            for b in range(self.n):
                for j in range(self.n):
                    s = (j == a) + (j == b)
                    H[:, :, a, b] *= F[j][s]
        return H

    # interval kernels -----------------------------------------------------
    def _ifactors(self, lo, hi, order):
        # each factor depends on a single coordinate, so the products below
        # are products of independent intervals and hence exact
        out = []
        for j in range(self.n):
            e = self.exponents[:, j]
            per_s = []
            for s in range(order + 1):
                k = np.maximum(e - s, 0)
                coef = np.ones(self.N)
                for t in range(s):
                    coef = coef * (e - t)
                coef = np.where(e - s >= 0, coef, 0.0)
                table_lo = np.empty((lo.shape[0], int(self._max[j]) + 1))
                table_hi = np.empty_like(table_lo)
                for d in range(int(self._max[j]) + 1):
                    table_lo[:, d], table_hi[:, d] = ia.pow_int(lo[:, j], hi[:, j], d)
                f_lo, f_hi = ia.scale(coef, table_lo[:, k], table_hi[:, k])
                per_s.append((f_lo, f_hi))
            out.append(per_s)
        return out

    def _iproduct(self, factors, pick):
        lo = hi = None
        for j in range(self.n):
            f_lo, f_hi = factors[j][pick(j)]
            if lo is None:
                lo, hi = f_lo, f_hi
            else:
                lo, hi = ia.mul(lo, hi, f_lo, f_hi)
        return lo, hi

    def _eval_interval(self, lo, hi):
        F = self._ifactors(lo, hi, 0)
        return self._iproduct(F, lambda j: 0)

    def _grad_interval(self, lo, hi):
        F = self._ifactors(lo, hi, 1)
        G_lo = np.empty((lo.shape[0], self.N, self.n))
        G_hi = np.empty_like(G_lo)
        for k in range(self.n):
            G_lo[:, :, k], G_hi[:, :, k] = self._iproduct(F, lambda j: int(j == k))
        return G_lo, G_hi

    def _hessian_interval(self, lo, hi):
        F = self._ifactors(lo, hi, 2)
        H_lo = np.empty((lo.shape[0], self.N, self.n, self.n))
        H_hi = np.empty_like(H_lo)
        for a in range(self.n):
            for b in range(a, self.n):
                l, h = self._iproduct(F, lambda j: int(j == a) + int(j == b))
                H_lo[:, :, a, b] = H_lo[:, :, b, a] = l
                H_hi[:, :, a, b] = H_hi[:, :, b, a] = h
        return H_lo, H_hi

    # metadata -------------------------------------------------------------
    def state_indices(self):
        idx = []
        for j in range(self.n):
            target = np.zeros(self.n, dtype=int)
            target[j] = 1
            hits = np.nonzero(np.all(self.exponents == target, axis=1))[0]
            if hits.size == 0:
                return None
            idx.append(int(hits[0]))
        return idx

    def constant_index(self):
        hits = np.nonzero(np.all(self.exponents == 0, axis=1))[0]
        return int(hits[0]) if hits.size else None

    def to_dict(self):
        d = {"kind": self.kind, "n": self.n}
        if self.J is not None:
            d.update(J=self.J, K=self.K)
        else:
            d["exponents"] = self.exponents.tolist()
        return d


class TanhDictionary(Dictionary):
    kind = "tanh_features"

    def __init__(self, W, b, append_state: bool = True, seed: Optional[int] = None,
                 weight_scale: Optional[float] = None):
        W = np.array(W, dtype=float)
        b = np.array(b, dtype=float)
        if W.ndim != 2 or b.shape != (W.shape[0],):
            raise ValueError("W must be (F, n) and b must be (F,)")
        W.setflags(write=False)
        b.setflags(write=False)
        self.W, self.b = W, b
        self.F, self.n = W.shape
        self.append_state = bool(append_state)
        self.N = self.F + (self.n if append_state else 0)
        self.seed = seed
        self.weight_scale = weight_scale

    def _eval(self, X):
        T = np.tanh(X @ self.W.T + self.b)
        return np.hstack([T, X]) if self.append_state else T

    def _grad(self, X):
        T = np.tanh(X @ self.W.T + self.b)
        G = (1.0 - T * T)[:, :, None] * self.W[None, :, :]
        if self.append_state:
            eye = np.broadcast_to(np.eye(self.n), (X.shape[0], self.n, self.n))
            G = np.concatenate([G, eye], axis=1)
        return G

    def _hessian(self, X):
        T = np.tanh(X @ self.W.T + self.b)
        d2 = -2.0 * T * (1.0 - T * T)
        H = d2[:, :, None, None] * (self.W[:, :, None] * self.W[:, None, :])[None]
        if self.append_state:
            H = np.concatenate([H, np.zeros((X.shape[0], self.n, self.n, self.n))], axis=1)
        return H

    def _preact(self, lo, hi):
        # W x + b over a box: exact since each coordinate appears once
        u_lo, u_hi = ia.lincomb(self.W.T, lo, hi)
        return u_lo + self.b, u_hi + self.b

    def _eval_interval(self, lo, hi):
        u_lo, u_hi = self._preact(lo, hi)
        t_lo, t_hi = ia.tanh(u_lo, u_hi)
        if self.append_state:
            t_lo = np.hstack([t_lo, lo])
            t_hi = np.hstack([t_hi, hi])
        return t_lo, t_hi

    def _grad_interval(self, lo, hi):
        u_lo, u_hi = self._preact(lo, hi)
        s_lo, s_hi = ia.sech2(u_lo, u_hi)
        G_lo, G_hi = ia.scale(self.W[None, :, :], s_lo[:, :, None], s_hi[:, :, None])
        if self.append_state:
            eye = np.broadcast_to(np.eye(self.n), (lo.shape[0], self.n, self.n))
            G_lo = np.concatenate([G_lo, eye], axis=1)
            G_hi = np.concatenate([G_hi, eye], axis=1)
        return G_lo, G_hi

    def _hessian_interval(self, lo, hi):
        u_lo, u_hi = self._preact(lo, hi)
        d_lo, d_hi = ia.tanh_dd(u_lo, u_hi)
        WW = (self.W[:, :, None] * self.W[:, None, :])[None]
        H_lo, H_hi = ia.scale(WW, d_lo[:, :, None, None], d_hi[:, :, None, None])
        if self.append_state:
            z = np.zeros((lo.shape[0], self.n, self.n, self.n))
            H_lo = np.concatenate([H_lo, z], axis=1)
            H_hi = np.concatenate([H_hi, z], axis=1)
        return H_lo, H_hi

    def state_indices(self):
        if not self.append_state:
            return None
        return list(range(self.F, self.F + self.n))

    def to_dict(self):
        return {"kind": self.kind, "n": self.n, "W": self.W.tolist(), "b": self.b.tolist(),
                "append_state": self.append_state, "seed": self.seed,
                "weight_scale": self.weight_scale}


def monomial_exponents(n: int, J: int, K: Optional[int] = None) -> np.ndarray:
    if n == 2:
        K = J if K is None else K
        return np.array([(i % J, i // J) for i in range(J * K)], dtype=int)
    if n == 1:
        return np.arange(J, dtype=int)[:, None]
    # experimental: all multi-indices of total degree < J, graded order
    exps = [e for e in itertools.product(range(J), repeat=n) if sum(e) < J]
    exps.sort(key=lambda e: (sum(e), e[::-1]))
    return np.array(exps, dtype=int)


def make_monomial(n: int, J: int, K: Optional[int] = None) -> MonomialDictionary:
    """Monomials ``x1**p x2**q`` with ``p < J``, ``q < K`` (``N = J K``).

    For ``n == 1`` this is ``1, x, ..., x**(J-1)``; for ``n > 2`` the
    (experimental) family of all monomials of total degree below ``J``.
    """
    if J < 1 or (K is not None and K < 1):
        raise ValueError("J and K must be at least 1")
    exps = monomial_exponents(n, J, K)
    if n == 2:
        return MonomialDictionary(exps, J, J if K is None else K)
    return MonomialDictionary(exps)


def make_tanh(n: int, n_features: int, seed: int, weight_scale: float = 1.0) -> TanhDictionary:
    """Random tanh features with the coordinate functions appended.

    Weights are i.i.d. uniform on ``[-weight_scale, weight_scale]``, biases
    i.i.d. uniform on ``[-1, 1]``.
    """
    if n_features < 1:
        raise ValueError("n_features must be at least 1")
    rng = np.random.default_rng(seed)
    W = rng.uniform(-weight_scale, weight_scale, size=(n_features, n))
    b = rng.uniform(-1.0, 1.0, size=n_features)
    return TanhDictionary(W, b, True, seed, weight_scale)


def from_dict(d: dict) -> Dictionary:
    kind = d["kind"]
    if kind == "monomial":
        if "exponents" in d:
            return MonomialDictionary(d["exponents"])
        return make_monomial(int(d["n"]), int(d["J"]), int(d["K"]))
    if kind == "tanh_features":
        return TanhDictionary(d["W"], d["b"], d.get("append_state", True), d.get("seed"),
                              d.get("weight_scale"))
    raise ValueError(f"unknown dictionary kind {kind!r}")
