"""Interval branch-and-bound certification of region-of-attraction estimates.

The verifier answers three kinds of questions about a candidate function
``V`` (a :class:`~zubov_koopman.certificates.LyapunovCandidate` or a
:class:`~zubov_koopman.certificates.QuadraticLyapunov`) over a box ``X``:

* band decrease: ``grad V . f + beta <= 0`` wherever ``c1 <= V <= c2``;
* sublevel inclusion: ``V <= c1`` implies ``V_P <= c``;
* boundary clearance: ``V > c2`` on every face of ``X``.

Each check explores a batch of boxes at a time. A box is either discarded
(provably irrelevant), certified (provably satisfies the condition), or
split. A box whose midpoint violates the condition in plain floating point
produces a counterexample; a box that reaches ``eps_box`` undecided, or a
run that exceeds ``max_boxes``, produces ``unknown``. Every certified verdict
keeps the leaf cover so that it can be replayed independently.

Enclosures are second-order Taylor forms for ``V`` and mean-value forms for
the Lie derivative, each intersected with the naive interval extension.
"""
from __future__ import annotations

import math
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.spatial import cKDTree

from . import interval as ia
from .certificates import CertificationImpossible, QuadraticLyapunov, solve_matrix_lyapunov
from .interval import Box

CERTIFIED = "certified"
COUNTEREXAMPLE = "counterexample"
UNKNOWN = "unknown"

_UNDECIDED, _HOLDS, _IRRELEVANT = 0, 1, 2


class DegenerateCertification(RuntimeError):
    """No level ``c2 > c1`` could be certified."""


@dataclass(frozen=True)
class VerifierConfig:
    eps_box: float = 1e-3
    max_boxes: int = 2_000_000
    rho: Optional[float] = None
    bisect_tol: float = 1e-3
    bound_tol: float = 0.02
    bound_max_boxes: int = 200_000
    workers: int = 0

    def __post_init__(self):
        for name in ("eps_box", "max_boxes", "bisect_tol", "bound_tol", "bound_max_boxes"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.rho is not None and not self.rho > 0:
            raise ValueError("rho must be positive")

    def n_workers(self) -> int:
        if self.workers and self.workers > 0:
            return int(self.workers)
        return max(1, int(os.environ.get("ZUBOV_KOOPMAN_THREADS", "1")))


# --------------------------------------------------------------------------
# verdicts
# --------------------------------------------------------------------------

@dataclass
class BoxCover:
    lo: np.ndarray
    hi: np.ndarray
    kind: np.ndarray  # 1 = condition holds, 2 = box irrelevant

    def __len__(self):
        return self.lo.shape[0]

    def to_rows(self):
        return np.hstack([self.lo, self.hi, self.kind[:, None].astype(float)])


@dataclass
class Verdict:
    check: str
    status: str
    point: Optional[np.ndarray] = None
    value: Optional[float] = None
    box: Optional[tuple] = None
    reason: str = ""
    stats: dict = field(default_factory=dict)
    cover: Optional[BoxCover] = None
    params: dict = field(default_factory=dict)
    _classify: Optional[Callable] = field(default=None, repr=False)
    _witness: Optional[Callable] = field(default=None, repr=False)

    @property
    def certified(self) -> bool:
        return self.status == CERTIFIED

    def to_dict(self) -> dict:
        out = {"check": self.check, "status": self.status, "params": self.params,
               "stats": self.stats, "reason": self.reason}
        if self.point is not None:
            out["point"] = np.asarray(self.point).tolist()
            out["value"] = self.value
        if self.box is not None:
            out["box"] = [np.asarray(b).tolist() for b in self.box]
        if self.cover is not None:
            out["cover_boxes"] = len(self.cover)
        return out


def audit_replay(v: Verdict) -> bool:
    """Re-evaluate every stored leaf of a certified verdict.

    True when each box is re-classified exactly as recorded (holds or
    irrelevant). Verdicts other than certified have nothing to replay.
    """
    if v.status != CERTIFIED:
        return True
    if v.cover is None or v._classify is None:
        return False
    if len(v.cover) == 0:
        return True
    got = np.empty(len(v.cover), dtype=int)
    step = 65536
    for s in range(0, len(v.cover), step):
        got[s:s + step] = v._classify(v.cover.lo[s:s + step], v.cover.hi[s:s + step])
    return bool(np.all(got == v.cover.kind))


def recheck_counterexample(v: Verdict) -> bool:
    """True when the stored point still violates the condition in floating point."""
    if v.status != COUNTEREXAMPLE:
        return True
    if v._witness is None:
        return False
    bad, _ = v._witness(np.atleast_2d(v.point))
    return bool(bad[0])


def combine(verdicts) -> str:
    """Counterexample dominates unknown, which dominates certified."""
    status = CERTIFIED
    for v in verdicts:
        if v.status == COUNTEREXAMPLE:
            return COUNTEREXAMPLE
        if v.status == UNKNOWN:
            status = UNKNOWN
    return status


# --------------------------------------------------------------------------
# branch and bound
# --------------------------------------------------------------------------

def _map_chunks(fn, lo, hi, workers, chunk=4096):
    m = lo.shape[0]
    if workers <= 1 or m <= chunk:
        return fn(lo, hi)
    starts = range(0, m, chunk)
    with ThreadPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(lambda s: fn(lo[s:s + chunk], hi[s:s + chunk]), starts))
    return np.concatenate(parts)


def branch_and_bound(check: str, lo, hi, classify, witness, cfg: VerifierConfig,
                     params=None) -> Verdict:
    """Generic driver.

    ``classify(lo, hi)`` returns per box 0 (undecided), 1 (holds) or
    2 (irrelevant); ``witness(points)`` returns ``(violated, value)`` at
    points in floating point.
    """
    t0 = time.perf_counter()
    lo = np.atleast_2d(np.asarray(lo, dtype=float))
    hi = np.atleast_2d(np.asarray(hi, dtype=float))
    workers = cfg.n_workers()
    kept_lo, kept_hi, kept_kind = [], [], []
    explored = 0
    depth = 0
    params = dict(params or {})

    def finish(status, **kw):
        stats = {"boxes": explored, "max_depth": depth,
                 "wall_time": time.perf_counter() - t0}
        cover = None
        if status == CERTIFIED:
            n = lo.shape[1]
            cover = BoxCover(np.concatenate(kept_lo) if kept_lo else np.empty((0, n)),
                             np.concatenate(kept_hi) if kept_hi else np.empty((0, n)),
                             np.concatenate(kept_kind) if kept_kind else np.empty(0, int))
        return Verdict(check, status, stats=stats, cover=cover, params=params,
                       _classify=classify, _witness=witness, **kw)

    while lo.shape[0]:
        if explored + lo.shape[0] > cfg.max_boxes:
            return finish(UNKNOWN, reason="box budget exhausted",
                          box=(lo[0].copy(), hi[0].copy()))
        explored += lo.shape[0]
        status = _map_chunks(classify, lo, hi, workers)
        decided = status != _UNDECIDED
        if decided.any():
            kept_lo.append(lo[decided])
            kept_hi.append(hi[decided])
            kept_kind.append(status[decided])
        lo, hi = lo[~decided], hi[~decided]
        if not lo.shape[0]:
            break
        bad, val = witness(0.5 * (lo + hi))
        if bad.any():
            k = int(np.argmax(np.where(bad, val, -np.inf)))
            return finish(COUNTEREXAMPLE, point=0.5 * (lo[k] + hi[k]), value=float(val[k]),
                          box=(lo[k].copy(), hi[k].copy()), reason="violation at box midpoint")
        small = np.max(hi - lo, axis=1) < cfg.eps_box
        if small.any():
            k = int(np.argmax(small))
            return finish(UNKNOWN, reason="undecided box below eps_box",
                          box=(lo[k].copy(), hi[k].copy()))
        lo, hi = ia.split_arrays(lo, hi)
        depth += 1
    return finish(CERTIFIED)


# --------------------------------------------------------------------------
# enclosures
# --------------------------------------------------------------------------

def _point_box(x):
    x = np.asarray(x, dtype=float)
    return x, x.copy()


def _sum_terms(p_lo, p_hi):
    """Sum the last axis and widen outward, keeping sums of exact zeros exact."""
    s_lo, s_hi = ia.inflate(p_lo.sum(-1), p_hi.sum(-1))
    zero = ~np.any(p_lo, axis=-1) & ~np.any(p_hi, axis=-1)
    return np.where(zero, 0.0, s_lo), np.where(zero, 0.0, s_hi)


def _matvec(A_lo, A_hi, x_lo, x_hi):
    """Interval ``A @ x`` for batches ``A: (m, a, b)``, ``x: (m, b)``."""
    return _sum_terms(*ia.mul(A_lo, A_hi, x_lo[:, None, :], x_hi[:, None, :]))


def _dot(a_lo, a_hi, b_lo, b_hi):
    return _sum_terms(*ia.mul(a_lo, a_hi, b_lo, b_hi))


def _quad_form_radius(H_lo, H_hi, r):
    """Enclosure of ``0.5 * d' H d`` over ``|d_i| <= r_i`` and ``H`` in the interval matrix."""
    n = r.shape[1]
    q_lo = np.zeros(r.shape[0])
    q_hi = np.zeros(r.shape[0])
    for a in range(n):
        for b in range(n):
            if a == b:
                d_lo, d_hi = np.zeros_like(r[:, a]), r[:, a] ** 2
            else:
                d_hi = r[:, a] * r[:, b]
                d_lo = -d_hi
            p_lo, p_hi = ia.mul(H_lo[:, a, b], H_hi[:, a, b], d_lo, d_hi)
            q_lo, q_hi = q_lo + p_lo, q_hi + p_hi
    return ia.inflate(0.5 * q_lo, 0.5 * q_hi)


def value_enclosure(V, lo, hi):
    """Second-order Taylor form of ``V`` intersected with its naive extension."""
    mid = 0.5 * (lo + hi)
    r = 0.5 * (hi - lo)
    v_lo, v_hi = V.value_interval(*_point_box(mid))
    g_lo, g_hi = V.gradient_interval(*_point_box(mid))
    gmag = ia.magnitude(g_lo, g_hi)
    lin = np.sum(gmag * r, axis=1)
    H_lo, H_hi = V.hessian_interval(lo, hi)
    q_lo, q_hi = _quad_form_radius(H_lo, H_hi, r)
    t_lo, t_hi = ia.inflate(v_lo - lin + q_lo, v_hi + lin + q_hi)
    n_lo, n_hi = V.value_interval(lo, hi)
    return ia.intersect(t_lo, t_hi, n_lo, n_hi)


def gradient_enclosure(V, lo, hi, H=None):
    mid = 0.5 * (lo + hi)
    r = 0.5 * (hi - lo)
    g_lo, g_hi = V.gradient_interval(*_point_box(mid))
    H_lo, H_hi = V.hessian_interval(lo, hi) if H is None else H
    d_lo, d_hi = _matvec(H_lo, H_hi, -r, r)
    c_lo, c_hi = g_lo + d_lo, g_hi + d_hi
    n_lo, n_hi = V.gradient_interval(lo, hi)
    return ia.intersect(c_lo, c_hi, n_lo, n_hi)


def jacobian_enclosure(F, lo, hi):
    """Interval Jacobian; centred on the midpoint when second derivatives exist."""
    n_lo, n_hi = F.jacobian_interval(lo, hi)
    hess = getattr(F, "hessian_interval", None)
    if hess is None:
        return n_lo, n_hi
    mid = 0.5 * (lo + hi)
    r = 0.5 * (hi - lo)
    j_lo, j_hi = F.jacobian_interval(*_point_box(mid))
    H_lo, H_hi = hess(lo, hi)  # (m, k, a, b)
    m, k, a, b = H_lo.shape
    d_lo, d_hi = _matvec(H_lo.reshape(m, k * a, b), H_hi.reshape(m, k * a, b), -r, r)
    c_lo = j_lo + d_lo.reshape(m, k, a)
    c_hi = j_hi + d_hi.reshape(m, k, a)
    return ia.intersect(c_lo, c_hi, n_lo, n_hi)


def field_enclosure(F, lo, hi, J=None):
    mid = 0.5 * (lo + hi)
    r = 0.5 * (hi - lo)
    f_lo, f_hi = F.interval(*_point_box(mid))
    J_lo, J_hi = jacobian_enclosure(F, lo, hi) if J is None else J
    d_lo, d_hi = _matvec(J_lo, J_hi, -r, r)
    n_lo, n_hi = F.interval(lo, hi)
    return ia.intersect(f_lo + d_lo, f_hi + d_hi, n_lo, n_hi)


def lie_enclosure(V, F, lo, hi):
    """Enclosure of ``grad V(x) . F(x)`` over each box (mean-value form)."""
    mid = 0.5 * (lo + hi)
    r = 0.5 * (hi - lo)
    H = V.hessian_interval(lo, hi)
    J = jacobian_enclosure(F, lo, hi)
    gV_lo, gV_hi = gradient_enclosure(V, lo, hi, H)
    f_lo, f_hi = field_enclosure(F, lo, hi, J)
    naive = _dot(gV_lo, gV_hi, f_lo, f_hi)
    # d/dx (grad V . F) = H F + J' grad V
    a_lo, a_hi = _matvec(H[0], H[1], f_lo, f_hi)
    b_lo, b_hi = _matvec(np.swapaxes(J[0], 1, 2), np.swapaxes(J[1], 1, 2), gV_lo, gV_hi)
    d_lo, d_hi = a_lo + b_lo, a_hi + b_hi
    s_lo, s_hi = _dot(d_lo, d_hi, -r, r)
    gm_lo, gm_hi = V.gradient_interval(*_point_box(mid))
    fm_lo, fm_hi = F.interval(*_point_box(mid))
    m_lo, m_hi = _dot(gm_lo, gm_hi, fm_lo, fm_hi)
    return ia.intersect(m_lo + s_lo, m_hi + s_hi, *naive)


def _lie_point(V, F, X):
    return np.einsum("mk,mk->m", V.gradient(X), F.f(X))


# --------------------------------------------------------------------------
# rigorous constants
# --------------------------------------------------------------------------

def maximize_bound(upper, lower, domain, parts: int = 4, rel_tol: float = 0.02,
                   max_boxes: int = 200_000) -> float:
    """Sound upper bound of ``sup_domain h``.

    ``upper(lo, hi)`` encloses ``h`` from above on boxes, ``lower(points)``
    evaluates ``h``. Starts from a ``parts**n`` subdivision and refines the
    boxes that could still hold the maximum until the bound is within
    ``rel_tol`` of the best sampled value or the budget is spent.
    """
    lo, hi = ia.as_bounds(domain)
    lo, hi = ia.subdivide(lo, hi, parts)
    best = float(np.max(lower(0.5 * (lo + hi))))
    settled = -np.inf
    used = 0
    while True:
        ub = upper(lo, hi)
        used += lo.shape[0]
        best = max(best, float(np.max(lower(0.5 * (lo + hi)))))
        target = best + rel_tol * abs(best)
        active = ub > target
        if (~active).any():
            settled = max(settled, float(np.max(ub[~active])))
        if not active.any():
            return max(settled, best)
        if used + 2 * int(active.sum()) > max_boxes or np.max(hi - lo) < 1e-9:
            return max(settled, float(np.max(ub[active])))
        lo, hi = ia.split_arrays(lo[active], hi[active])


def _frobenius_upper(F):
    def upper(lo, hi):
        J_lo, J_hi = jacobian_enclosure(F, lo, hi)
        s_lo, s_hi = ia.sqr(J_lo, J_hi)
        return np.sqrt(ia.inflate(0.0, s_hi.reshape(s_hi.shape[0], -1).sum(1))[1])

    def lower(X):
        J = F.jacobian(X)
        return np.sqrt(np.sum(J.reshape(J.shape[0], -1) ** 2, axis=1))

    return upper, lower


def bound_lipschitz(field_, domain, cfg: Optional[VerifierConfig] = None) -> float:
    """Upper bound of ``sup ||J(x)||_F`` over ``domain`` (a Lipschitz constant)."""
    cfg = cfg or VerifierConfig()
    if field_.jacobian_interval is None:
        raise ValueError("the field has no interval Jacobian")
    upper, lower = _frobenius_upper(field_)
    return maximize_bound(upper, lower, domain, 4, cfg.bound_tol, cfg.bound_max_boxes)


def bound_gradient_norm(V, domain, cfg: Optional[VerifierConfig] = None) -> float:
    """Upper bound of ``sup ||grad V(x)||`` over ``domain``."""
    cfg = cfg or VerifierConfig()

    def upper(lo, hi):
        g_lo, g_hi = gradient_enclosure(V, lo, hi)
        return np.sqrt(_sum_terms(*ia.sqr(g_lo, g_hi))[1])

    def lower(X):
        return np.linalg.norm(V.gradient(X), axis=1)

    return maximize_bound(upper, lower, domain, 4, cfg.bound_tol, cfg.bound_max_boxes)


def compute_alpha(field_, samples, oracle) -> float:
    """``max_y ||f(y) - field(y)||_2`` over a finite sample set."""
    Y = np.atleast_2d(np.asarray(samples, dtype=float))
    if Y.size == 0:
        raise ValueError("empty sample set")
    return float(np.max(np.linalg.norm(oracle.f(Y) - field_.f(Y), axis=1)))


def covering_radius(samples, domain: Box, resolution: int = 201) -> float:
    """Grid estimate of ``max_{x in domain} min_y ||x - y||``.

    The grid spacing is added so the value over-approximates the true
    radius on the box.
    """
    Y = np.atleast_2d(np.asarray(samples, dtype=float))
    axes = [np.linspace(a, b, resolution) for a, b in zip(domain.lo, domain.hi)]
    G = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, domain.n)
    dist, _ = cKDTree(Y).query(G)
    spacing = float(np.linalg.norm((domain.hi - domain.lo) / (resolution - 1))) / 2
    return float(dist.max()) + spacing


def required_beta(K_f, K_fhat, delta, alpha, nu) -> float:
    for name, val in (("K_f", K_f), ("K_fhat", K_fhat), ("delta", delta),
                      ("alpha", alpha), ("nu", nu)):
        if val < 0:
            raise ValueError(f"{name} must be non-negative")
    return ((K_f + K_fhat) * delta + alpha) * nu


def select_beta(required: float, margin: float = 0.01, digits: int = 3) -> float:
    """Smallest ``digits``-significant-figure value at least ``(1 + margin)`` above."""
    if required <= 0:
        return 0.0
    target = required * (1.0 + margin)
    e = math.floor(math.log10(target)) - digits + 1
    mant = math.ceil(target / 10.0**e)
    beta = float(f"{mant}e{e}")
    if not beta > required * (1.0 + margin):
        beta = float(f"{mant + 1}e{e}")
    return beta


@dataclass
class BoundsReport:
    K_f: float
    K_fhat: float
    nu: float
    alpha: float
    delta: float
    beta_required: float
    beta_used: float
    delta_estimate: Optional[float] = None
    provenance: dict = field(default_factory=dict)

    @property
    def margin(self) -> float:
        return self.beta_used - self.beta_required

    def to_dict(self) -> dict:
        return {"K_f": self.K_f, "K_fhat": self.K_fhat, "nu": self.nu, "alpha": self.alpha,
                "delta": self.delta, "delta_estimate": self.delta_estimate,
                "beta_required": self.beta_required, "beta_used": self.beta_used,
                "margin": self.margin, "provenance": self.provenance}


# --------------------------------------------------------------------------
# checks
# --------------------------------------------------------------------------

def _lo_hi(domain):
    lo, hi = ia.as_bounds(domain)
    return lo[None, :], hi[None, :]


def check_band_condition(V, field_, c1, c2, beta, domain, cfg: VerifierConfig) -> Verdict:
    """``grad V . f <= -beta`` on ``{x in domain: c1 <= V(x) <= c2}``."""
    if not 0 < c1 < c2:
        raise ValueError("need 0 < c1 < c2")
    if beta < 0:
        raise ValueError("beta must be non-negative")

    def classify(lo, hi):
        v_lo, v_hi = value_enclosure(V, lo, hi)
        out = np.zeros(lo.shape[0], dtype=int)
        out[(v_lo > c2) | (v_hi < c1)] = _IRRELEVANT
        todo = out == _UNDECIDED
        if todo.any():
            _, g_hi = lie_enclosure(V, field_, lo[todo], hi[todo])
            out[np.flatnonzero(todo)[g_hi + beta <= 0]] = _HOLDS
        return out

    def witness(X):
        v = V.value(X)
        g = _lie_point(V, field_, X) + beta
        return (v >= c1) & (v <= c2) & (g > 0), g

    return branch_and_bound("band", *_lo_hi(domain), classify, witness, cfg,
                            {"c1": c1, "c2": c2, "beta": beta})


def check_sublevel_inclusion(V, c1, q: QuadraticLyapunov, c_quad, domain,
                             cfg: VerifierConfig) -> Verdict:
    """``{x in domain: V(x) <= c1}`` lies inside ``{V_P <= c_quad}``."""
    if not (c1 > 0 and c_quad > 0):
        raise ValueError("levels must be positive")
    if c1 <= c_quad and _same_quadratic(V, q):
        # same function: {V <= c1} is a subset of {V <= c_quad} exactly
        return Verdict("inclusion", CERTIFIED, reason="identical functions, c1 <= c",
                       cover=BoxCover(np.empty((0, q.n)), np.empty((0, q.n)), np.empty(0, int)),
                       params={"c1": c1, "c": c_quad}, stats={"boxes": 0, "max_depth": 0,
                                                              "wall_time": 0.0})

    def classify(lo, hi):
        v_lo, _ = value_enclosure(V, lo, hi)
        out = np.zeros(lo.shape[0], dtype=int)
        out[v_lo > c1] = _IRRELEVANT
        todo = out == _UNDECIDED
        if todo.any():
            _, p_hi = q.value_interval(lo[todo], hi[todo])
            out[np.flatnonzero(todo)[p_hi <= c_quad]] = _HOLDS
        return out

    def witness(X):
        vp = q.value(X)
        return (V.value(X) <= c1) & (vp > c_quad), vp - c_quad

    return branch_and_bound("inclusion", *_lo_hi(domain), classify, witness, cfg,
                            {"c1": c1, "c": c_quad})


def _same_quadratic(V, q) -> bool:
    return V is q or (isinstance(V, QuadraticLyapunov) and V.P.shape == q.P.shape
                      and bool(np.array_equal(V.P, q.P)))


def check_domain_containment(V, c2, domain, cfg: VerifierConfig) -> Verdict:
    """``V > c2`` on every face of the box ``domain``."""
    if not c2 > 0:
        raise ValueError("c2 must be positive")
    if not isinstance(domain, Box):
        domain = Box.from_bounds(*ia.as_bounds(domain))
    faces = domain.faces()
    lo = np.stack([f.lo for f in faces])
    hi = np.stack([f.hi for f in faces])

    def classify(lo, hi):
        v_lo, _ = value_enclosure(V, lo, hi)
        return np.where(v_lo > c2, _HOLDS, _UNDECIDED)

    def witness(X):
        v = V.value(X)
        return v <= c2, c2 - v

    return branch_and_bound("containment", lo, hi, classify, witness, cfg, {"c2": c2})


# --------------------------------------------------------------------------
# quadratic basin
# --------------------------------------------------------------------------

def _sym_lambda_max_upper(S_lo, S_hi) -> float:
    """Upper bound of the largest eigenvalue over a symmetric interval matrix."""
    mid = 0.5 * (S_lo + S_hi)
    mid = 0.5 * (mid + mid.T)
    rad = 0.5 * (S_hi - S_lo)
    lam = float(np.max(np.linalg.eigvalsh(mid)))
    # Weyl: |lambda(mid + E) - lambda(mid)| <= ||E||_2 <= ||rad||_F, plus eigensolver error
    return lam + float(np.linalg.norm(rad)) + 1e-13 * max(1.0, float(np.abs(mid).max()))


def linearization_dominance(q: QuadraticLyapunov, field_, rho: float) -> dict:
    """Checks that ``grad V_P . f < 0`` on the ball ``|x| <= rho`` away from the origin.

    With ``-q0`` bounding the top eigenvalue of ``P A + A' P`` and ``kappa``
    bounding ``||J(x) - A||_F`` on the box ``[-rho, rho]^n``, the remainder
    ``f(x) - A x`` has norm at most ``|f(0)| + kappa |x|``, so
    ``grad V_P . f <= (-q0 + 2 ||P|| kappa) |x|^2 + 2 ||P|| |f(0)| |x|``.
    The enclosure of ``f(0)`` is rounding-sized for a corrected field; the
    radius below which it could matter must be negligible against ``rho``.
    """
    P = q.P
    A = q.A if q.A is not None else field_.jacobian(np.zeros((1, q.n)))[0]
    n = q.n
    PA_lo, PA_hi = ia.lincomb(A, P, P)  # rows of P times A, point matrices
    S_lo = PA_lo + PA_lo.T
    S_hi = PA_hi + PA_hi.T
    q0 = -_sym_lambda_max_upper(*ia.inflate(S_lo, S_hi))
    Pnorm = float(np.linalg.norm(P, 2)) * (1 + 1e-12) + 1e-15
    lo = np.full((1, n), -rho)
    hi = np.full((1, n), rho)
    J_lo, J_hi = jacobian_enclosure(field_, lo, hi)
    D = ia.magnitude(J_lo[0] - A, J_hi[0] - A)
    kappa = float(np.sqrt(np.sum(D**2))) * (1 + 1e-12)
    f0_lo, f0_hi = field_.interval(np.zeros((1, n)), np.zeros((1, n)))
    f0 = float(np.linalg.norm(ia.magnitude(f0_lo, f0_hi)))
    gap = q0 - 2.0 * Pnorm * kappa
    # with |f(0)| <= f0 the decrease is only guaranteed for |x| > r0
    r0 = 2.0 * Pnorm * f0 / gap if gap > 0 else math.inf
    ok = q0 > 0 and gap > 0 and r0 <= 1e-6 * rho
    return {"ok": bool(ok), "q0": q0, "P_norm": Pnorm, "kappa": kappa,
            "threshold": q0 / (2.0 * Pnorm) if q0 > 0 else 0.0, "f_origin": f0,
            "unresolved_radius": r0, "rho": rho}


def select_rho(q: QuadraticLyapunov, field_, domain: Box, cfg: VerifierConfig):
    """Radius of the ball handed to the linearisation argument.

    An explicit ``cfg.rho`` is halved until the dominance test passes. In
    automatic mode the largest passing radius (up to the inscribed
    half-width) is found by bisection, since the relaxed decrease margin is
    easier to meet far from the origin.
    """
    half = float(np.min(np.minimum(-domain.lo, domain.hi)))
    if cfg.rho is not None:
        rho = cfg.rho
        lin = linearization_dominance(q, field_, rho)
        for _ in range(20):
            if lin["ok"] or lin["q0"] <= 0:
                break
            rho *= 0.5
            lin = linearization_dominance(q, field_, rho)
    else:
        lin = linearization_dominance(q, field_, half)
        if lin["ok"]:
            return half, lin
        lo, hi = 0.0, half
        lin_lo = None
        for _ in range(40):
            mid = 0.5 * (lo + hi)
            cand = linearization_dominance(q, field_, mid)
            if cand["ok"]:
                lo, lin_lo = mid, cand
            else:
                hi = mid
            if lin_lo is not None and hi - lo < 0.01 * lo:
                break
        if lin_lo is None:
            raise CertificationImpossible(f"linearisation does not dominate near the origin: {lin}")
        rho, lin = lo, lin_lo
    if not lin["ok"]:
        raise CertificationImpossible(f"linearisation does not dominate near the origin: {lin}")
    return rho, lin


def _nu_quadratic(q: QuadraticLyapunov, c: float) -> float:
    # max ||2 P x|| over x' P x <= c equals 2 sqrt(c lambda_max(P))
    return 2.0 * math.sqrt(c * float(np.max(np.linalg.eigvalsh(q.P)))) * (1 + 1e-12)


def check_quadratic_decrease(q: QuadraticLyapunov, field_, c, beta_p, rho, domain,
                             cfg: VerifierConfig) -> Verdict:
    """``grad V_P . f <= -beta_p`` on ``{V_P <= c} minus the open rho-ball``."""
    rho2 = rho * rho

    def classify(lo, hi):
        p_lo, _ = q.value_interval(lo, hi)
        _, n_hi = ia.norm_sq(lo, hi)
        out = np.zeros(lo.shape[0], dtype=int)
        out[(p_lo > c) | (n_hi < rho2)] = _IRRELEVANT
        todo = out == _UNDECIDED
        if todo.any():
            _, g_hi = lie_enclosure(q, field_, lo[todo], hi[todo])
            out[np.flatnonzero(todo)[g_hi + beta_p <= 0]] = _HOLDS
        return out

    def witness(X):
        g = _lie_point(q, field_, X) + beta_p
        inside = (q.value(X) <= c) & (np.sum(X * X, axis=1) >= rho2)
        return inside & (g > 0), g

    return branch_and_bound("quadratic_decrease", *_lo_hi(domain), classify, witness, cfg,
                            {"c": c, "beta_P": beta_p, "rho": rho})


def _inscribed_level(q: QuadraticLyapunov, domain: Box) -> float:
    # largest c with {x' P x <= c} inside the box: the ellipse reaches
    # sqrt(c (P^-1)_ii) along axis i
    Pinv = np.linalg.inv(q.P)
    half = np.minimum(-domain.lo, domain.hi)
    if np.any(half <= 0):
        raise CertificationImpossible("the domain does not contain the origin in its interior")
    return float(np.min(half**2 / np.diag(Pinv)))


def _bisect(test, lo, hi, tol):
    """Largest value in ``[lo, hi]`` passing a monotone ``test``.

    ``lo`` is assumed to pass. Returns the last passing value (rounded down
    to the certified endpoint) and the verdicts from that run.
    """
    ok, res = test(hi)
    if ok:
        return hi, res
    best, best_res = lo, None
    while hi - lo > tol * max(abs(hi), 1e-300):
        mid = 0.5 * (lo + hi)
        ok, r = test(mid)
        if ok:
            lo, best, best_res = mid, mid, r
        else:
            hi = mid
    return best, best_res


def quadratic_basin(q: QuadraticLyapunov, field_, domain, cfg: VerifierConfig,
                    constants: Optional[dict] = None) -> dict:
    """Largest certified ``c`` for ``{V_P <= c}`` with all supporting verdicts.

    ``constants`` holds ``K_f, K_fhat, delta, alpha``; the relaxed margin
    ``beta_P`` is formed with ``nu_P = sup ||grad V_P||`` over the level set.
    Without constants the exact-model margin ``beta_P = 0`` is used.
    """
    if not isinstance(domain, Box):
        domain = Box.from_bounds(*ia.as_bounds(domain))
    constants = constants or {"K_f": 0.0, "K_fhat": 0.0, "delta": 0.0, "alpha": 0.0}
    rho, lin = select_rho(q, field_, domain, cfg)

    lam_min = float(np.min(np.linalg.eigvalsh(q.P)))
    c_floor = lam_min * rho * rho  # level set inside the rho-ball
    c_top = _inscribed_level(q, domain)

    def test(c):
        beta_p = select_beta(required_beta(constants["K_f"], constants["K_fhat"],
                                           constants["delta"], constants["alpha"],
                                           _nu_quadratic(q, c)))
        cont = check_domain_containment(q, c, domain, cfg)
        if not cont.certified:
            return False, (cont, None, beta_p)
        dec = check_quadratic_decrease(q, field_, c, beta_p, rho, domain, cfg)
        return dec.certified, (cont, dec, beta_p)

    c, res = _bisect(test, c_floor, c_top * (1 - 1e-9), cfg.bisect_tol)
    if res is None:
        # only the rho-ball level survives: confirm it explicitly
        ok, res = test(c_floor)
        if not ok:
            err = CertificationImpossible("no positive quadratic level could be certified")
            err.verdicts = [v for v in res[:2] if v is not None]
            raise err
        c = c_floor
    cont, dec, beta_p = res
    return {"c": c, "beta_P": beta_p, "rho": rho, "linearization": lin,
            "verdicts": [cont, dec]}


def certify_quadratic_roa(q: QuadraticLyapunov, field_, domain, cfg: VerifierConfig,
                          constants: Optional[dict] = None) -> float:
    return quadratic_basin(q, field_, domain, cfg, constants)["c"]


# --------------------------------------------------------------------------
# level selection
# --------------------------------------------------------------------------

def _grid(domain: Box, per_axis: int = 101):
    axes = [np.linspace(a, b, per_axis) for a, b in zip(domain.lo, domain.hi)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, domain.n)


def select_c1(V, q: QuadraticLyapunov, c_quad, domain, cfg: VerifierConfig):
    """Largest ``c1`` whose sublevel set is certified inside ``{V_P <= c_quad}``.

    Returns ``(c1, verdict)``; ``c1`` is ``None`` with the failing verdict
    when nothing positive can be certified.
    """
    if not isinstance(domain, Box):
        domain = Box.from_bounds(*ia.as_bounds(domain))
    G = _grid(domain)
    outside = q.value(G) > c_quad
    v_out = V.value(G[outside])
    c_hi = float(v_out.min()) if v_out.size else float(V.value(G).max())
    if c_hi <= 0:
        v = check_sublevel_inclusion(V, max(abs(c_hi), 1e-6), q, c_quad, domain, cfg)
        return None, v

    def test(c1):
        v = check_sublevel_inclusion(V, c1, q, c_quad, domain, cfg)
        return v.certified, v

    c1, v = _bisect(test, 0.0, c_hi, cfg.bisect_tol)
    if v is None:
        v = check_sublevel_inclusion(V, c_hi * cfg.bisect_tol, q, c_quad, domain, cfg)
        return (c_hi * cfg.bisect_tol if v.certified else None), v
    return c1, v


def maximize_c2_detail(V, field_, c1, beta, domain, cfg: VerifierConfig) -> dict:
    if not isinstance(domain, Box):
        domain = Box.from_bounds(*ia.as_bounds(domain))
    c_top = float(V.value(_grid(domain)).max())
    if c_top <= c1:
        raise DegenerateCertification("V never exceeds c1 on the domain")

    def test(c2):
        cont = check_domain_containment(V, c2, domain, cfg)
        if not cont.certified:
            return False, (cont,)
        band = check_band_condition(V, field_, c1, c2, beta, domain, cfg)
        return band.certified, (cont, band)

    ok, res = test(c_top)
    if ok:
        return {"c2": c_top, "verdicts": list(res)}
    lo, hi = c1, c_top
    best, best_res = None, res
    while hi - lo > cfg.bisect_tol * hi:
        mid = 0.5 * (lo + hi)
        ok, r = test(mid)
        if ok:
            lo, best, best_res = mid, mid, r
        else:
            hi = mid
            if best is None:
                best_res = r
    if best is None:
        err = DegenerateCertification(f"no c2 > c1 = {c1:g} could be certified")
        err.verdicts = list(best_res)
        raise err
    return {"c2": best, "verdicts": list(best_res)}


def maximize_c2(V, field_, c1, beta, domain, cfg: VerifierConfig) -> float:
    return maximize_c2_detail(V, field_, c1, beta, domain, cfg)["c2"]


# --------------------------------------------------------------------------
# end to end
# --------------------------------------------------------------------------

@dataclass
class CertificationReport:
    c: Optional[float]
    c1: Optional[float]
    c2: Optional[float]
    verdicts: list
    bounds: BoundsReport
    quadratic: Optional[QuadraticLyapunov] = None
    stats: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    linearization: dict = field(default_factory=dict)

    @property
    def status(self) -> str:
        if not self.verdicts:
            return UNKNOWN
        s = combine(self.verdicts)
        if s == CERTIFIED and (self.c2 is None or self.c1 is None or not self.c1 < self.c2):
            return "not_certified"
        return s

    @property
    def certified(self) -> bool:
        return self.status == CERTIFIED

    def audit(self) -> bool:
        return all(audit_replay(v) for v in self.verdicts)

    def counterexamples_valid(self) -> bool:
        return all(recheck_counterexample(v) for v in self.verdicts)

    def to_dict(self) -> dict:
        q = self.quadratic
        return {
            "status": self.status,
            "certified": self.certified,
            "c": self.c, "c1": self.c1, "c2": self.c2,
            "bounds": self.bounds.to_dict(),
            "quadratic": None if q is None else {"P": q.P.tolist(), "Q": q.Q.tolist(),
                                                 "A": None if q.A is None else q.A.tolist()},
            "linearization": self.linearization,
            "verdicts": [v.to_dict() for v in self.verdicts],
            "stats": self.stats,
            "notes": self.notes,
        }


def certify_roa(candidate, field_, oracle, samples, domain, cfg: VerifierConfig,
                delta: Optional[float] = None, Q=None, oracle_lipschitz: Optional[float] = None,
                alpha: Optional[float] = None) -> CertificationReport:
    """Quadratic basin, rigorous constants, level selection and final checks.

    ``oracle`` is the reference system used for ``K_f`` and ``alpha``. When
    it is ``None`` both must be supplied (``oracle_lipschitz``, ``alpha``)
    and the report records them as user supplied.
    """
    t0 = time.perf_counter()
    if not isinstance(domain, Box):
        domain = Box.from_bounds(*ia.as_bounds(domain))
    notes = []
    n = domain.n
    A_hat = field_.jacobian(np.zeros((1, n)))[0]
    q = solve_matrix_lyapunov(A_hat, Q)

    if oracle is None and (oracle_lipschitz is None or alpha is None):
        raise ValueError("without a reference system both K_f and alpha must be supplied")
    if oracle_lipschitz is None:
        K_f = bound_lipschitz(oracle, domain, cfg)
        prov = "interval bound of the reference system Jacobian"
    else:
        K_f = float(oracle_lipschitz)
        prov = "user supplied"
    K_fhat = bound_lipschitz(field_, domain, cfg)
    if alpha is None:
        alpha = compute_alpha(field_, samples, oracle)
        prov_alpha = f"max over {len(np.atleast_2d(samples))} samples"
    else:
        alpha = float(alpha)
        prov_alpha = "user supplied"
    delta_est = covering_radius(samples, domain)
    if delta is None:
        delta = delta_est
        notes.append("delta taken from the covering-radius estimate")
    elif delta_est > delta:
        msg = (f"covering radius estimate {delta_est:.3g} exceeds the configured "
               f"delta {delta:.3g}")
        warnings.warn(msg, RuntimeWarning)
        notes.append(msg)
    nu = bound_gradient_norm(candidate, domain, cfg)
    beta_req = required_beta(K_f, K_fhat, delta, alpha, nu)
    beta = select_beta(beta_req)
    bounds = BoundsReport(K_f, K_fhat, nu, alpha, float(delta), beta_req, beta, delta_est,
                          {"K_f": prov, "alpha": prov_alpha})
    consts = {"K_f": K_f, "K_fhat": K_fhat, "delta": float(delta), "alpha": alpha}
    times = {"constants": time.perf_counter() - t0}

    t1 = time.perf_counter()
    try:
        basin = quadratic_basin(q, field_, domain, cfg, consts)
    except CertificationImpossible as exc:
        failed = getattr(exc, "verdicts", [])
        if not any(v.status == UNKNOWN for v in failed):
            raise
        # the budget ran out before the basin could be decided
        notes.append(str(exc))
        stats = {"wall_time": time.perf_counter() - t0, "phase_times": times,
                 "boxes": int(sum(v.stats.get("boxes", 0) for v in failed))}
        return CertificationReport(None, None, None, failed, bounds, q, stats, notes, {})
    times["quadratic"] = time.perf_counter() - t1
    c = basin["c"]
    verdicts = list(basin["verdicts"])

    t1 = time.perf_counter()
    c1, inc = select_c1(candidate, q, c, domain, cfg)
    times["c1"] = time.perf_counter() - t1
    verdicts.append(inc)
    c2 = None
    if c1 is not None:
        t1 = time.perf_counter()
        try:
            res = maximize_c2_detail(candidate, field_, c1, beta, domain, cfg)
            c2 = res["c2"]
            verdicts.extend(res["verdicts"])
        except DegenerateCertification as exc:
            notes.append(str(exc))
            verdicts.extend(getattr(exc, "verdicts", []))
        times["c2"] = time.perf_counter() - t1
    else:
        notes.append("no sublevel set of the candidate fits inside the quadratic basin")

    stats = {
        "wall_time": time.perf_counter() - t0,
        "phase_times": times,
        "boxes": int(sum(v.stats.get("boxes", 0) for v in verdicts)),
        "max_depth": int(max([v.stats.get("max_depth", 0) for v in verdicts] or [0])),
    }
    lin = dict(basin["linearization"])
    lin["beta_P"] = basin["beta_P"]
    return CertificationReport(c, c1, c2, verdicts, bounds, q, stats, notes, lin)
