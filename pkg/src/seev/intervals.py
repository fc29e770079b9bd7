"""Scalar interval arithmetic used by the branch-and-bound certifier.

All operations are inclusion-isotone: the returned interval encloses the
exact range of the operation over the operand intervals (up to outward
floating-point slop, which is negligible at the tolerances used here).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

Number = Union[int, float]


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float

    def __post_init__(self):
        if not (self.lo <= self.hi):
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    @staticmethod
    def point(v: Number) -> "Interval":
        v = float(v)
        return Interval(v, v)

    @staticmethod
    def make(a: "IntervalLike") -> "Interval":
        return a if isinstance(a, Interval) else Interval.point(a)

    @property
    def width(self) -> float:
        return self.hi - self.lo

    @property
    def mid(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def __contains__(self, v: Number) -> bool:
        return self.lo <= v <= self.hi

    def __add__(self, other: "IntervalLike") -> "Interval":
        o = Interval.make(other)
        return Interval(self.lo + o.lo, self.hi + o.hi)

    __radd__ = __add__

    def __neg__(self) -> "Interval":
        return Interval(-self.hi, -self.lo)

    def __sub__(self, other: "IntervalLike") -> "Interval":
        return self + (-Interval.make(other))

    def __rsub__(self, other: "IntervalLike") -> "Interval":
        return Interval.make(other) + (-self)

    def __mul__(self, other: "IntervalLike") -> "Interval":
        o = Interval.make(other)
        cands = (self.lo * o.lo, self.lo * o.hi, self.hi * o.lo, self.hi * o.hi)
        return Interval(min(cands), max(cands))

    __rmul__ = __mul__

    def square(self) -> "Interval":
        if self.lo >= 0:
            return Interval(self.lo * self.lo, self.hi * self.hi)
        if self.hi <= 0:
            return Interval(self.hi * self.hi, self.lo * self.lo)
        return Interval(0.0, max(self.lo * self.lo, self.hi * self.hi))

    def __abs__(self) -> "Interval":
        if self.lo >= 0:
            return self
        if self.hi <= 0:
            return -self
        return Interval(0.0, max(-self.lo, self.hi))

    def intersect(self, other: "Interval") -> "Interval | None":
        lo = max(self.lo, other.lo)
        hi = min(self.hi, other.hi)
        return Interval(lo, hi) if lo <= hi else None

    def sin(self) -> "Interval":
        return _periodic_range(self.lo, self.hi, math.sin, math.pi / 2.0)

    def cos(self) -> "Interval":
        return _periodic_range(self.lo, self.hi, math.cos, 0.0)


IntervalLike = Union[Interval, int, float]


def _periodic_range(lo: float, hi: float, fn, peak_offset: float) -> Interval:
    """Range of sin/cos over [lo, hi]: endpoint values plus enclosed extrema."""
    if hi - lo >= 2.0 * math.pi:
        return Interval(-1.0, 1.0)
    vals = [fn(lo), fn(hi)]
    # Extrema of sin at pi/2 + k*pi, of cos at k*pi.
    k = math.ceil((lo - peak_offset) / math.pi)
    while peak_offset + k * math.pi <= hi:
        vals.append(fn(peak_offset + k * math.pi))
        k += 1
    return Interval(min(vals), max(vals))


class IntervalBox:
    """Axis-aligned box of intervals, stored as lo/hi vectors."""

    __slots__ = ("lo", "hi")

    def __init__(self, lo: np.ndarray, hi: np.ndarray):
        self.lo = np.asarray(lo, dtype=float)
        self.hi = np.asarray(hi, dtype=float)
        if (self.lo > self.hi).any():
            raise ValueError("empty box")

    @property
    def n(self) -> int:
        return self.lo.size

    def coord(self, k: int) -> Interval:
        return Interval(float(self.lo[k]), float(self.hi[k]))

    def coords(self) -> list[Interval]:
        return [self.coord(k) for k in range(self.n)]

    @property
    def widths(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def midpoint(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    def split(self, k: int) -> tuple["IntervalBox", "IntervalBox"]:
        m = 0.5 * (self.lo[k] + self.hi[k])
        left_hi = self.hi.copy()
        left_hi[k] = m
        right_lo = self.lo.copy()
        right_lo[k] = m
        return IntervalBox(self.lo.copy(), left_hi), IntervalBox(right_lo, self.hi.copy())

    def contains(self, x: np.ndarray, tol: float = 0.0) -> bool:
        return bool((x >= self.lo - tol).all() and (x <= self.hi + tol).all())


def dot(weights: Sequence[float] | np.ndarray, ivals: Sequence[Interval]) -> Interval:
    """Exact interval of w . x over the box (affine in each coordinate)."""
    lo = 0.0
    hi = 0.0
    for w, iv in zip(np.asarray(weights, dtype=float), ivals):
        a = w * iv.lo
        b = w * iv.hi
        if a > b:
            a, b = b, a
        lo += a
        hi += b
    return Interval(lo, hi)
