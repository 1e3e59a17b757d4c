"""Interval arithmetic.

Two layers live here. The array layer works on pairs ``(lo, hi)`` of numpy
arrays and is what the dictionaries and the verifier use for batches of
boxes. The scalar layer (:class:`Interval`, :class:`Box`) is a thin wrapper
over the array layer for readable single-box work and tests.

Soundness model: sums and products use round-to-nearest; transcendental
results and long linear combinations are widened outward by a relative
``INFLATE`` plus one ulp. Certification margins are many orders of magnitude
larger than the rounding this does not capture.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

INFLATE = 1e-12

_HALF_PI = 0.5 * math.pi
_TWO_PI = 2.0 * math.pi
# argmax of |tanh(u) * sech(u)^2|: tanh(u)^2 = 1/3
_TANH_DD_ARG = math.atanh(1.0 / math.sqrt(3.0))


class DomainError(ValueError):
    """Raised when an interval operation leaves its mathematical domain."""


# --------------------------------------------------------------------------
# array layer
# --------------------------------------------------------------------------

def inflate(lo, hi, rel=INFLATE):
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    lo = np.nextafter(lo - rel * np.abs(lo), -np.inf)
    hi = np.nextafter(hi + rel * np.abs(hi), np.inf)
    return lo, hi


def add(alo, ahi, blo, bhi):
    return np.add(alo, blo), np.add(ahi, bhi)


def sub(alo, ahi, blo, bhi):
    return np.subtract(alo, bhi), np.subtract(ahi, blo)


def neg(lo, hi):
    return np.negative(hi), np.negative(lo)


def mul(alo, ahi, blo, bhi):
    p1 = np.multiply(alo, blo)
    p2 = np.multiply(alo, bhi)
    p3 = np.multiply(ahi, blo)
    p4 = np.multiply(ahi, bhi)
    lo = np.minimum(np.minimum(p1, p2), np.minimum(p3, p4))
    hi = np.maximum(np.maximum(p1, p2), np.maximum(p3, p4))
    return lo, hi


def scale(c, lo, hi):
    """Multiply intervals by point values ``c`` (broadcast)."""
    a = np.multiply(c, lo)
    b = np.multiply(c, hi)
    return np.minimum(a, b), np.maximum(a, b)


def div(alo, ahi, blo, bhi):
    blo = np.asarray(blo, dtype=float)
    bhi = np.asarray(bhi, dtype=float)
    if np.any((blo <= 0.0) & (bhi >= 0.0)):
        raise DomainError("division by an interval containing zero")
    return mul(alo, ahi, 1.0 / bhi, 1.0 / blo)


def _ipow(x, k):
    # repeated squaring on float arrays
    result = np.ones_like(x)
    base = np.array(x, dtype=float, copy=True)
    while k:
        if k & 1:
            result = result * base
        k >>= 1
        if k:
            base = base * base
    return result


def pow_int(lo, hi, k):
    if k < 0:
        raise DomainError("negative integer powers are not supported")
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if k == 0:
        return np.ones_like(lo), np.ones_like(hi)
    plo = _ipow(lo, k)
    phi = _ipow(hi, k)
    if k % 2:
        return plo, phi
    straddle = (lo < 0.0) & (hi > 0.0)
    out_lo = np.where(straddle, 0.0, np.minimum(plo, phi))
    out_hi = np.maximum(plo, phi)
    return out_lo, out_hi


def sqr(lo, hi):
    return pow_int(lo, hi, 2)


def abs_(lo, hi):
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    alo = np.where(lo >= 0.0, lo, np.where(hi <= 0.0, -hi, 0.0))
    ahi = np.maximum(np.abs(lo), np.abs(hi))
    return alo, ahi


def sqrt(lo, hi):
    lo = np.asarray(lo, dtype=float)
    if np.any(lo < 0.0):
        raise DomainError("sqrt of an interval with negative lower bound")
    return inflate(np.sqrt(lo), np.sqrt(hi))


def exp(lo, hi):
    return inflate(np.exp(lo), np.exp(hi))


def tanh(lo, hi):
    return inflate(np.tanh(lo), np.tanh(hi))


def sech2(lo, hi):
    """Range of ``1 - tanh(u)**2`` (unimodal, peak 1 at u = 0)."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    slo = 1.0 - np.tanh(lo) ** 2
    shi = 1.0 - np.tanh(hi) ** 2
    straddle = (lo <= 0.0) & (hi >= 0.0)
    out_lo = np.minimum(slo, shi)
    out_hi = np.where(straddle, 1.0, np.maximum(slo, shi))
    return inflate(out_lo, out_hi)


def tanh_dd(lo, hi):
    """Range of ``-2 tanh(u) sech(u)**2``, the second derivative of tanh."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)

    def h(u):
        t = np.tanh(u)
        return -2.0 * t * (1.0 - t * t)

    hl, hh = h(lo), h(hi)
    out_lo = np.minimum(hl, hh)
    out_hi = np.maximum(hl, hh)
    peak = h(np.array(-_TANH_DD_ARG))
    has_max = (lo <= -_TANH_DD_ARG) & (hi >= -_TANH_DD_ARG)
    has_min = (lo <= _TANH_DD_ARG) & (hi >= _TANH_DD_ARG)
    out_hi = np.where(has_max, peak, out_hi)
    out_lo = np.where(has_min, -peak, out_lo)
    return inflate(out_lo, out_hi)


def sin(lo, hi):
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    slo, shi = np.sin(lo), np.sin(hi)
    out_lo = np.minimum(slo, shi)
    out_hi = np.maximum(slo, shi)
    # first crest / trough at or after lo
    k_max = np.ceil((lo - _HALF_PI) / _TWO_PI)
    k_min = np.ceil((lo + _HALF_PI) / _TWO_PI)
    has_max = _HALF_PI + _TWO_PI * k_max <= hi
    has_min = -_HALF_PI + _TWO_PI * k_min <= hi
    wide = (hi - lo) >= _TWO_PI
    out_hi = np.where(has_max | wide, 1.0, out_hi)
    out_lo = np.where(has_min | wide, -1.0, out_lo)
    lo_i, hi_i = inflate(out_lo, out_hi)
    return np.maximum(lo_i, -1.0), np.minimum(hi_i, 1.0)


def cos(lo, hi):
    return sin(np.asarray(lo, dtype=float) + _HALF_PI,
               np.asarray(hi, dtype=float) + _HALF_PI)


def lincomb(coeffs, lo, hi):
    """Enclose ``sum_i lo_hi[..., i] * coeffs[i, ...]`` in midpoint-radius form.

    ``lo``/``hi`` have shape ``(..., N)`` and ``coeffs`` has shape ``(N,)``
    or ``(N, k)``. Exact in real arithmetic for point coefficients.
    """
    coeffs = np.asarray(coeffs, dtype=float)
    mid = 0.5 * (lo + hi)
    rad = 0.5 * (hi - lo)
    c = mid @ coeffs
    r = rad @ np.abs(coeffs)
    slack = INFLATE * (np.abs(mid) @ np.abs(coeffs) + r)
    # every product vanished exactly: the sum is an exact zero
    exact = slack == 0.0
    return (np.where(exact, c, np.nextafter(c - r - slack, -np.inf)),
            np.where(exact, c, np.nextafter(c + r + slack, np.inf)))


def sum_(lo, hi, axis=-1):
    return np.sum(lo, axis=axis), np.sum(hi, axis=axis)


def intersect(alo, ahi, blo, bhi):
    return np.maximum(alo, blo), np.minimum(ahi, bhi)


def hull(alo, ahi, blo, bhi):
    return np.minimum(alo, blo), np.maximum(ahi, bhi)


def magnitude(lo, hi):
    return np.maximum(np.abs(lo), np.abs(hi))


def norm_sq(lo, hi, axis=-1):
    """Enclosure of the squared 2-norm along ``axis``."""
    slo, shi = sqr(lo, hi)
    return np.sum(slo, axis=axis), np.sum(shi, axis=axis)


# --------------------------------------------------------------------------
# scalar layer
# --------------------------------------------------------------------------

def _to_interval(x) -> "Interval":
    if isinstance(x, Interval):
        return x
    x = float(x)
    return Interval(x, x)


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        lo, hi = float(self.lo), float(self.hi)
        if math.isnan(lo) or math.isnan(hi):
            raise DomainError("interval endpoints must not be NaN")
        if lo > hi:
            raise DomainError(f"empty interval [{lo}, {hi}]")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def point(cls, x: float) -> "Interval":
        return cls(x, x)

    @property
    def bounded(self) -> bool:
        return math.isfinite(self.lo) and math.isfinite(self.hi)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def contains(self, x) -> bool:
        if isinstance(x, Interval):
            return self.lo <= x.lo and x.hi <= self.hi
        return self.lo <= x <= self.hi

    def __contains__(self, x) -> bool:
        return self.contains(x)

    def _wrap(self, pair) -> "Interval":
        return Interval(float(pair[0]), float(pair[1]))

    def __add__(self, other):
        o = _to_interval(other)
        return self._wrap(add(self.lo, self.hi, o.lo, o.hi))

    __radd__ = __add__

    def __sub__(self, other):
        o = _to_interval(other)
        return self._wrap(sub(self.lo, self.hi, o.lo, o.hi))

    def __rsub__(self, other):
        return _to_interval(other) - self

    def __mul__(self, other):
        o = _to_interval(other)
        return self._wrap(mul(self.lo, self.hi, o.lo, o.hi))

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = _to_interval(other)
        return self._wrap(div(self.lo, self.hi, o.lo, o.hi))

    def __rtruediv__(self, other):
        return _to_interval(other) / self

    def __neg__(self):
        return Interval(-self.hi, -self.lo)

    def __pow__(self, k: int):
        if not isinstance(k, (int, np.integer)):
            raise TypeError("only integer powers are supported")
        return self._wrap(pow_int(self.lo, self.hi, int(k)))

    def sin(self):
        return self._wrap(sin(self.lo, self.hi))

    def cos(self):
        return self._wrap(cos(self.lo, self.hi))

    def tanh(self):
        return self._wrap(tanh(self.lo, self.hi))

    def exp(self):
        return self._wrap(exp(self.lo, self.hi))

    def sqrt(self):
        return self._wrap(sqrt(self.lo, self.hi))

    def __abs__(self):
        return self._wrap(abs_(self.lo, self.hi))

    def __repr__(self):
        return f"[{self.lo!r}, {self.hi!r}]"


@dataclass(frozen=True)
class Box:
    """Axis-aligned box, one :class:`Interval` per state coordinate."""

    dims: tuple

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(_to_interval(d) if not isinstance(d, Interval)
                                                else d for d in self.dims))

    @classmethod
    def from_bounds(cls, lo: Sequence[float], hi: Sequence[float]) -> "Box":
        return cls(tuple(Interval(a, b) for a, b in zip(lo, hi)))

    @classmethod
    def from_pairs(cls, pairs: Iterable[Sequence[float]]) -> "Box":
        return cls(tuple(Interval(a, b) for a, b in pairs))

    @property
    def n(self) -> int:
        return len(self.dims)

    @property
    def lo(self) -> np.ndarray:
        return np.array([d.lo for d in self.dims])

    @property
    def hi(self) -> np.ndarray:
        return np.array([d.hi for d in self.dims])

    @property
    def widths(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def bounded(self) -> bool:
        return all(d.bounded for d in self.dims)

    def contains(self, x) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(self.lo <= x) and np.all(x <= self.hi))

    def to_list(self) -> list:
        return [[d.lo, d.hi] for d in self.dims]

    def faces(self) -> list:
        """The 2n thin boxes making up the boundary."""
        out = []
        for i, d in enumerate(self.dims):
            for end in (d.lo, d.hi):
                dims = list(self.dims)
                dims[i] = Interval(end, end)
                out.append(Box(tuple(dims)))
        return out

    def __iter__(self):
        return iter(self.dims)

    def __len__(self):
        return len(self.dims)

    def __getitem__(self, i):
        return self.dims[i]


def split(box: Box) -> tuple:
    """Bisect the widest dimension at its midpoint."""
    widths = box.widths
    k = int(np.argmax(widths))
    if widths[k] <= 0.0:
        raise DomainError("cannot split a degenerate (zero-width) box")
    d = box.dims[k]
    m = d.mid
    left = list(box.dims)
    right = list(box.dims)
    left[k] = Interval(d.lo, m)
    right[k] = Interval(m, d.hi)
    return Box(tuple(left)), Box(tuple(right))


def split_arrays(lo: np.ndarray, hi: np.ndarray):
    """Vectorised :func:`split` for a batch of boxes of shape ``(m, n)``."""
    widths = hi - lo
    k = np.argmax(widths, axis=1)
    rows = np.arange(lo.shape[0])
    mid = 0.5 * (lo[rows, k] + hi[rows, k])
    left_hi = hi.copy()
    left_hi[rows, k] = mid
    right_lo = lo.copy()
    right_lo[rows, k] = mid
    return (np.concatenate([lo, right_lo]), np.concatenate([left_hi, hi]))


def subdivide(lo, hi, parts: int):
    """Uniform grid of ``parts**n`` sub-boxes of a single box."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    edges = [np.linspace(a, b, parts + 1) for a, b in zip(lo, hi)]
    idx = np.stack(np.meshgrid(*[np.arange(parts)] * lo.size, indexing="ij"), -1).reshape(-1, lo.size)
    sub_lo = np.stack([edges[j][idx[:, j]] for j in range(lo.size)], axis=1)
    sub_hi = np.stack([edges[j][idx[:, j] + 1] for j in range(lo.size)], axis=1)
    return sub_lo, sub_hi


def norm_sq_bound(v: Sequence[Interval]) -> Interval:
    """Enclosure of ``sum_i v_i**2``."""
    lo = np.array([x.lo for x in v])
    hi = np.array([x.hi for x in v])
    s_lo, s_hi = norm_sq(lo, hi)
    return Interval(float(s_lo), float(s_hi))


def as_bounds(box_or_lo, hi=None):
    """Accept a :class:`Box` or an explicit ``(lo, hi)`` pair of arrays."""
    if hi is None:
        if isinstance(box_or_lo, Box):
            return box_or_lo.lo, box_or_lo.hi
        lo_, hi_ = box_or_lo
        return np.asarray(lo_, dtype=float), np.asarray(hi_, dtype=float)
    return np.asarray(box_or_lo, dtype=float), np.asarray(hi, dtype=float)
