"""ODE systems, a batched Dormand-Prince 5(4) integrator, and trajectory data.

Every right-hand side here is vectorised: ``f(X)`` takes an ``(m, n)`` array
of states and returns the ``(m, n)`` array of derivatives. That lets the
integrator advance many initial conditions in lockstep, which is the only
way generating 2500 trajectories stays cheap in pure numpy.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import interval as ia
from .interval import Box


class IntegrationError(RuntimeError):
    """Step size underflow; ``t_last`` is the last time reached."""

    def __init__(self, message: str, t_last: float):
        super().__init__(f"{message} (last valid time {t_last:.6g})")
        self.t_last = t_last


@dataclass(frozen=True)
class OdeSystem:
    """An autonomous vector field ``x' = f(x)``.

    ``interval`` and ``jacobian_interval`` map batches of boxes ``(lo, hi)``
    to enclosures and are only needed when the system serves as the oracle
    in certification (Lipschitz bounds).
    """

    name: str
    n: int
    f: Callable[[np.ndarray], np.ndarray]
    jacobian: Optional[Callable[[np.ndarray], np.ndarray]] = None
    interval: Optional[Callable] = None
    jacobian_interval: Optional[Callable] = None
    params: dict = field(default_factory=dict)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return self.f(x[None, :])[0]
        return self.f(x)


# --------------------------------------------------------------------------
# built-in systems
# --------------------------------------------------------------------------

def vdp_reversed() -> OdeSystem:
    """Reversed Van der Pol oscillator; the origin is stable and the
    region of attraction is bounded by the (now unstable) limit cycle."""

    def f(X):
        x1, x2 = X[:, 0], X[:, 1]
        return np.stack([-x2, x1 - (1.0 - x1 * x1) * x2], axis=1)

    def jac(X):
        x1, x2 = X[:, 0], X[:, 1]
        J = np.zeros((X.shape[0], 2, 2))
        J[:, 0, 1] = -1.0
        J[:, 1, 0] = 1.0 + 2.0 * x1 * x2
        J[:, 1, 1] = x1 * x1 - 1.0
        return J

    def f_int(lo, hi):
        x1l, x1h, x2l, x2h = lo[:, 0], hi[:, 0], lo[:, 1], hi[:, 1]
        out_lo = np.empty_like(lo)
        out_hi = np.empty_like(hi)
        out_lo[:, 0], out_hi[:, 0] = -x2h, -x2l
        # x1 - x2 + x1^2 x2
        s_lo, s_hi = ia.mul(*ia.sqr(x1l, x1h), x2l, x2h)
        a_lo, a_hi = ia.sub(x1l, x1h, x2l, x2h)
        out_lo[:, 1], out_hi[:, 1] = ia.add(a_lo, a_hi, s_lo, s_hi)
        return out_lo, out_hi

    def jac_int(lo, hi):
        m = lo.shape[0]
        J_lo = np.zeros((m, 2, 2))
        J_hi = np.zeros((m, 2, 2))
        J_lo[:, 0, 1] = J_hi[:, 0, 1] = -1.0
        p_lo, p_hi = ia.mul(lo[:, 0], hi[:, 0], lo[:, 1], hi[:, 1])
        J_lo[:, 1, 0] = 1.0 + 2.0 * p_lo
        J_hi[:, 1, 0] = 1.0 + 2.0 * p_hi
        s_lo, s_hi = ia.sqr(lo[:, 0], hi[:, 0])
        J_lo[:, 1, 1] = s_lo - 1.0
        J_hi[:, 1, 1] = s_hi - 1.0
        return J_lo, J_hi

    return OdeSystem("vdp_reversed", 2, f, jac, f_int, jac_int)


def two_machine(a: float = math.pi / 3) -> OdeSystem:
    """Two-machine power system with load angle ``a``."""
    sin_a = math.sin(a)

    def f(X):
        x1, x2 = X[:, 0], X[:, 1]
        return np.stack([x2, -0.5 * x2 - (np.sin(x1 + a) - sin_a)], axis=1)

    def jac(X):
        J = np.zeros((X.shape[0], 2, 2))
        J[:, 0, 1] = 1.0
        J[:, 1, 0] = -np.cos(X[:, 0] + a)
        J[:, 1, 1] = -0.5
        return J

    def f_int(lo, hi):
        out_lo = np.empty_like(lo)
        out_hi = np.empty_like(hi)
        out_lo[:, 0], out_hi[:, 0] = lo[:, 1], hi[:, 1]
        s_lo, s_hi = ia.sin(lo[:, 0] + a, hi[:, 0] + a)
        d_lo, d_hi = s_lo - sin_a, s_hi - sin_a
        v_lo, v_hi = ia.scale(-0.5, lo[:, 1], hi[:, 1])
        out_lo[:, 1], out_hi[:, 1] = ia.sub(v_lo, v_hi, d_lo, d_hi)
        return ia.inflate(out_lo, out_hi)

    def jac_int(lo, hi):
        m = lo.shape[0]
        J_lo = np.zeros((m, 2, 2))
        J_hi = np.zeros((m, 2, 2))
        J_lo[:, 0, 1] = J_hi[:, 0, 1] = 1.0
        c_lo, c_hi = ia.cos(lo[:, 0] + a, hi[:, 0] + a)
        J_lo[:, 1, 0], J_hi[:, 1, 0] = -c_hi, -c_lo
        J_lo[:, 1, 1] = J_hi[:, 1, 1] = -0.5
        return J_lo, J_hi

    return OdeSystem("two_machine", 2, f, jac, f_int, jac_int, {"a": a})


def linear(A) -> OdeSystem:
    A = np.array(A, dtype=float)
    A.setflags(write=False)
    n = A.shape[0]

    def f(X):
        return X @ A.T

    def jac(X):
        return np.broadcast_to(A, (X.shape[0], n, n)).copy()

    def f_int(lo, hi):
        # row i of the output is sum_j A_ij x_j with independent x_j: exact
        mid = 0.5 * (lo + hi)
        rad = 0.5 * (hi - lo)
        c = mid @ A.T
        r = rad @ np.abs(A).T
        return c - r, c + r

    def jac_int(lo, hi):
        J = jac(lo)
        return J, J.copy()

    return OdeSystem("linear", n, f, jac, f_int, jac_int, {"A": A.tolist()})


def scalar_linear(a: float) -> OdeSystem:
    sys = linear([[a]])
    return OdeSystem("scalar_linear", 1, sys.f, sys.jacobian, sys.interval,
                     sys.jacobian_interval, {"a": float(a)})


_BUILTINS = {
    "vdp_reversed": vdp_reversed,
    "two_machine": two_machine,
    "linear": linear,
    "scalar_linear": scalar_linear,
}


def builtin(name: str, **params) -> OdeSystem:
    try:
        factory = _BUILTINS[name]
    except KeyError:
        raise ValueError(f"unknown system {name!r}; choose from {sorted(_BUILTINS)}") from None
    return factory(**params)


# --------------------------------------------------------------------------
# Dormand-Prince 5(4)
# --------------------------------------------------------------------------

_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4


@dataclass
class Solution:
    """Accepted steps of an integration with cubic Hermite dense output.

    ``states`` and ``derivs`` have shape ``(steps + 1, m, n)``.
    """

    times: np.ndarray
    states: np.ndarray
    derivs: np.ndarray
    n_rejected: int = 0

    def __call__(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if np.any(t < self.times[0]) or np.any(t > self.times[-1]):
            raise ValueError("query time outside the integrated range")
        k = np.clip(np.searchsorted(self.times, t, side="right") - 1, 0, len(self.times) - 2)
        t0, t1 = self.times[k], self.times[k + 1]
        h = (t1 - t0)[:, None, None]
        s = ((t - t0) / (t1 - t0))[:, None, None]
        y0, y1 = self.states[k], self.states[k + 1]
        f0, f1 = self.derivs[k], self.derivs[k + 1]
        h00 = 2 * s**3 - 3 * s**2 + 1
        h10 = s**3 - 2 * s**2 + s
        h01 = -2 * s**3 + 3 * s**2
        h11 = s**3 - s**2
        return h00 * y0 + h10 * h * f0 + h01 * y1 + h11 * h * f1

    @property
    def t_end(self) -> float:
        return float(self.times[-1])


def _initial_step(f, t_end, y0, f0, tol):
    sc = tol + tol * np.abs(y0)
    d0 = np.sqrt(np.mean((y0 / sc) ** 2))
    d1 = np.sqrt(np.mean((f0 / sc) ** 2))
    h0 = 1e-6 if (d0 < 1e-5 or d1 < 1e-5) else 0.01 * d0 / d1
    y1 = y0 + h0 * f0
    d2 = np.sqrt(np.mean(((f(y1) - f0) / sc) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return min(100 * h0, h1, t_end)


def integrate_batch(f, X0, t_end: float, tol: float = 1e-10, t_eval=None,
                    keep_steps: bool = True, max_steps: int = 1_000_000):
    """Integrate ``x' = f(x)`` for every row of ``X0`` on ``[0, t_end]``.

    All rows share the step sequence; a step is accepted only when every
    row's mixed absolute/relative error estimate is within ``tol``. Steps
    are clipped so that each ``t_eval`` time is hit exactly.

    Returns ``(solution, Y_eval)`` where ``Y_eval`` has shape
    ``(len(t_eval), m, n)`` (or ``None``).
    """
    if t_end < 0:
        raise ValueError("t_end must be non-negative")
    if tol <= 0:
        raise ValueError("tol must be positive")
    y = np.array(X0, dtype=float, copy=True)
    if y.ndim != 2:
        raise ValueError("X0 must have shape (m, n)")
    t_eval = np.array([] if t_eval is None else t_eval, dtype=float)
    if t_eval.size and (np.any(np.diff(t_eval) < 0) or t_eval[0] < 0 or t_eval[-1] > t_end + 1e-12):
        raise ValueError("t_eval must be increasing within [0, t_end]")
    Y_eval = np.empty((t_eval.size,) + y.shape) if t_eval.size else None
    next_eval = 0
    while next_eval < t_eval.size and t_eval[next_eval] <= 0.0:
        Y_eval[next_eval] = y
        next_eval += 1

    fy = f(y)
    times, states, derivs = [0.0], [y.copy()], [fy.copy()]
    t = 0.0
    if t_end == 0.0:
        sol = Solution(np.array(times), np.array(states), np.array(derivs))
        return sol, Y_eval

    h = _initial_step(f, t_end, y, fy, tol)
    h_min = 1e-14 * max(1.0, t_end)
    rejected = 0
    K = np.empty((7,) + y.shape)
    for _ in range(max_steps):
        if t >= t_end:
            break
        target = t_end if next_eval >= t_eval.size else min(t_end, t_eval[next_eval])
        hit = False
        if t + h >= target - 1e-13 * max(1.0, abs(target)):
            h = target - t
            hit = True
        K[0] = fy
        for s in range(1, 7):
            ys = y + h * np.tensordot(_A[s], K[:s], axes=1)
            K[s] = f(ys)
        y_new = y + h * np.tensordot(_B5[:6], K[:6], axes=1)
        err = h * np.tensordot(_E, K, axes=1)
        sc = tol + tol * np.maximum(np.abs(y), np.abs(y_new))
        err_norm = np.sqrt(np.mean((err / sc) ** 2, axis=1))
        worst = float(np.max(err_norm)) if err_norm.size else 0.0
        if not np.isfinite(worst):
            worst = np.inf
        if worst <= 1.0:
            t = target if hit else t + h
            y = y_new
            fy = K[6]  # FSAL
            if keep_steps:
                times.append(t)
                states.append(y.copy())
                derivs.append(fy.copy())
            while next_eval < t_eval.size and t_eval[next_eval] <= t + 1e-13 * max(1.0, abs(t)):
                Y_eval[next_eval] = y
                next_eval += 1
            factor = 5.0 if worst == 0.0 else min(5.0, max(0.2, 0.9 * worst ** -0.2))
        else:
            rejected += 1
            factor = max(0.2, 0.9 * worst ** -0.2) if np.isfinite(worst) else 0.2
        h = h * factor
        if h < h_min:
            raise IntegrationError("step size underflow", t)
    else:
        raise IntegrationError("maximum number of steps exceeded", t)

    if not keep_steps:
        times.append(t)
        states.append(y.copy())
        derivs.append(fy.copy())
    sol = Solution(np.array(times), np.array(states), np.array(derivs), rejected)
    return sol, Y_eval


def integrate(sys: OdeSystem, x0, t_end: float, tol: float = 1e-10) -> Solution:
    """Integrate a single initial condition; the result has dense output.

    ``sol(t)`` returns an array of shape ``(len(t), 1, n)``; use
    :func:`flow` for a plain state.
    """
    x0 = np.asarray(x0, dtype=float).reshape(1, -1)
    if t_end <= 0:
        raise ValueError("t_end must be positive")
    sol, _ = integrate_batch(sys.f, x0, t_end, tol)
    return sol


def flow(sys: OdeSystem, X0, t: float, tol: float = 1e-10) -> np.ndarray:
    """The flow map ``phi(t, x)`` for each row of ``X0`` (no dense output)."""
    X0 = np.atleast_2d(np.asarray(X0, dtype=float))
    if t == 0:
        return X0.copy()
    _, Y = integrate_batch(sys.f, X0, t, tol, t_eval=[t], keep_steps=False)
    return Y[0]


# --------------------------------------------------------------------------
# trajectory data
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Trajectory:
    x0: np.ndarray
    times: np.ndarray
    states: np.ndarray


@dataclass
class TrajectoryDataset:
    trajectories: list
    gamma: float
    tau_s: float
    domain: Optional[Box] = None
    meta: dict = field(default_factory=dict)

    @property
    def M(self) -> int:
        return len(self.trajectories)

    @property
    def n(self) -> int:
        return int(self.trajectories[0].states.shape[1])

    @property
    def times(self) -> np.ndarray:
        return self.trajectories[0].times

    @property
    def initial_conditions(self) -> np.ndarray:
        return np.stack([tr.x0 for tr in self.trajectories])

    def snapshots(self) -> np.ndarray:
        """States as an array of shape ``(M, T, n)``."""
        return np.stack([tr.states for tr in self.trajectories])


def sample_times(gamma: float, tau_s: float) -> np.ndarray:
    steps = int(math.floor(gamma * tau_s + 1e-9))
    return np.arange(steps + 1) / gamma


def sample_trajectories(sys: OdeSystem, inits, gamma: float, tau_s: float,
                        tol: float = 1e-10, domain: Optional[Box] = None,
                        chunk: int = 4096) -> TrajectoryDataset:
    """Snapshots of the flow at times ``k / gamma``, ``k = 0..floor(gamma tau_s)``.

    Only the snapshots are kept; the integrator's internal steps are dropped.
    """
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if tau_s < 0:
        raise ValueError("tau_s must be non-negative")
    inits = np.atleast_2d(np.asarray(inits, dtype=float))
    if inits.shape[1] != sys.n:
        raise ValueError(f"initial conditions have dimension {inits.shape[1]}, system has {sys.n}")
    if domain is not None:
        if not all(domain.contains(x) for x in inits):
            raise ValueError("initial condition outside the sampling domain")
    times = sample_times(gamma, tau_s)
    blocks = []
    for start in range(0, inits.shape[0], chunk):
        X0 = inits[start:start + chunk]
        if times[-1] == 0.0:
            blocks.append(X0[None, :, :])
            continue
        _, Y = integrate_batch(sys.f, X0, float(times[-1]), tol, t_eval=times, keep_steps=False)
        blocks.append(Y)
    Y = np.concatenate(blocks, axis=1)  # (T, M, n)
    trajs = [Trajectory(inits[m].copy(), times.copy(), Y[:, m, :].copy()) for m in range(inits.shape[0])]
    return TrajectoryDataset(trajs, float(gamma), float(tau_s), domain, {"system": sys.name})


def uniform_initial_conditions(domain: Box, M: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return rng.uniform(domain.lo, domain.hi, size=(M, domain.n))


def grid_initial_conditions(domain: Box, M: int) -> np.ndarray:
    """Tensor grid with ``M ** (1/n)`` points per axis (endpoints included)."""
    side = int(round(M ** (1.0 / domain.n)))
    if side ** domain.n != M:
        raise ValueError(f"M = {M} is not a perfect {domain.n}-th power")
    axes = [np.linspace(d.lo, d.hi, side) for d in domain.dims]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)
