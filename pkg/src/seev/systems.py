"""Benchmark control-affine systems with point and interval dynamics.

Each system carries the vector field f, input matrix g, safe-set function h
(with an optional convex quadratic description used by the fast correctness
check), the state box, an initial-set sampler, and the input-set geometry.
All evaluation functions broadcast over leading batch axes and the interval
forms are inclusion-isotone by construction.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .intervals import Interval, dot


class InputKind(enum.Enum):
    NONE = "none"  # open loop, m = 0
    UNCONSTRAINED = "unconstrained"  # U = R^m
    BOX = "box"  # U = {D w : ||w||_inf <= 1}


@dataclass(frozen=True)
class InputSet:
    kind: InputKind
    d_matrix: Optional[np.ndarray] = None

    @staticmethod
    def open_loop() -> "InputSet":
        return InputSet(InputKind.NONE)

    @staticmethod
    def unconstrained() -> "InputSet":
        return InputSet(InputKind.UNCONSTRAINED)

    @staticmethod
    def box(d: np.ndarray) -> "InputSet":
        return InputSet(InputKind.BOX, np.asarray(d, dtype=float))


@dataclass(frozen=True)
class QuadraticForm:
    """h(x) = x' Q x + q . x + c, with Q diagonal PSD for the systems here."""

    q_matrix: np.ndarray
    q_vector: np.ndarray
    constant: float

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        quad = np.einsum("...i,ij,...j->...", x, self.q_matrix, x)
        return quad + x @ self.q_vector + self.constant


@dataclass(frozen=True, eq=False)
class ControlAffineSystem:
    name: str
    n: int
    m: int
    f: Callable[[np.ndarray], np.ndarray]
    g: Callable[[np.ndarray], np.ndarray]
    h: Callable[[np.ndarray], np.ndarray]
    f_interval: Callable[[Sequence[Interval]], list[Interval]]
    g_interval: Callable[[Sequence[Interval]], list[list[Interval]]]
    h_interval: Callable[[Sequence[Interval]], Interval]
    box_lo: np.ndarray
    box_hi: np.ndarray
    initial_contains: Callable[[np.ndarray], np.ndarray]
    sample_initial: Callable[[np.random.Generator, int], np.ndarray]
    input_set: InputSet
    h_quadratic: Optional[QuadraticForm] = None
    h_convex: bool = False
    constant_g: Optional[np.ndarray] = None  # set when g(x) == G everywhere
    sample_unsafe_direct: Optional[Callable[[np.random.Generator, int], np.ndarray]] = None

    @property
    def box(self) -> tuple[np.ndarray, np.ndarray]:
        return self.box_lo, self.box_hi

    def safe_contains(self, x: np.ndarray) -> np.ndarray:
        return self.h(x) >= 0.0

    def unsafe_contains(self, x: np.ndarray) -> np.ndarray:
        return self.h(x) < 0.0

    def sample_states(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return rng.uniform(self.box_lo, self.box_hi, size=(count, self.n))

    def sample_unsafe(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """States in X with h < 0; uses the direct sampler when the unsafe
        set is too small a fraction of the box for rejection sampling."""
        if self.sample_unsafe_direct is not None:
            return self.sample_unsafe_direct(rng, count)
        out = np.empty((0, self.n))
        for _ in range(200):
            cand = rng.uniform(self.box_lo, self.box_hi, size=(4 * count + 64, self.n))
            out = np.vstack([out, cand[self.unsafe_contains(cand)]])
            if out.shape[0] >= count:
                return out[:count]
        return out


def _quadratic_interval(form: QuadraticForm, ivals: Sequence[Interval]) -> Interval:
    total = Interval.point(form.constant)
    diag = np.diag(form.q_matrix)
    for k, iv in enumerate(ivals):
        if diag[k]:
            total = total + iv.square() * float(diag[k])
        if form.q_vector[k]:
            total = total + iv * float(form.q_vector[k])
    return total


def _ball_sampler(
    lo: np.ndarray, hi: np.ndarray, member: Callable[[np.ndarray], np.ndarray]
) -> Callable[[np.random.Generator, int], np.ndarray]:
    def sample(rng: np.random.Generator, count: int) -> np.ndarray:
        out = np.empty((0, lo.size))
        while out.shape[0] < count:
            cand = rng.uniform(lo, hi, size=(4 * count + 16, lo.size))
            out = np.vstack([out, cand[member(cand)]])
        return out[:count]

    return sample


def darboux() -> ControlAffineSystem:
    """Planar open-loop polynomial system with safe set x1 + x2^2 >= 0."""
    lo = np.array([-2.0, -2.0])
    hi = np.array([2.0, 2.0])

    def f(x):
        x = np.asarray(x, dtype=float)
        x1, x2 = x[..., 0], x[..., 1]
        return np.stack([x2 + 2.0 * x1 * x2, -x1 + 2.0 * x1 * x1 - x2 * x2], axis=-1)

    def f_ivl(iv):
        x1, x2 = iv
        return [x2 + 2.0 * (x1 * x2), -x1 + 2.0 * x1.square() - x2.square()]

    hq = QuadraticForm(np.diag([0.0, 1.0]), np.array([1.0, 0.0]), 0.0)
    i_lo = np.array([0.0, 1.0])
    i_hi = np.array([1.0, 2.0])

    def initial_contains(x):
        x = np.asarray(x, dtype=float)
        return ((x >= i_lo) & (x <= i_hi)).all(axis=-1)

    def sample_initial(rng, count):
        return rng.uniform(i_lo, i_hi, size=(count, 2))

    return ControlAffineSystem(
        name="darboux",
        n=2,
        m=0,
        f=f,
        g=lambda x: np.zeros(np.shape(x)[:-1] + (2, 0)),
        h=hq,
        f_interval=f_ivl,
        g_interval=lambda iv: [[] for _ in range(2)],
        h_interval=lambda iv: _quadratic_interval(hq, iv),
        box_lo=lo,
        box_hi=hi,
        initial_contains=initial_contains,
        sample_initial=sample_initial,
        input_set=InputSet.open_loop(),
        h_quadratic=hq,
        h_convex=True,
    )


def obstacle_avoidance(
    speed: float = 1.0, input_set: Optional[InputSet] = None
) -> ControlAffineSystem:
    """Unicycle-style vehicle steered by yaw rate, avoiding a disc at the origin."""
    lo = np.full(3, -2.0)
    hi = np.full(3, 2.0)
    g_const = np.array([[0.0], [0.0], [1.0]])

    def f(x):
        x = np.asarray(x, dtype=float)
        psi = x[..., 2]
        zeros = np.zeros_like(psi)
        return np.stack([speed * np.sin(psi), speed * np.cos(psi), zeros], axis=-1)

    def f_ivl(iv):
        psi = iv[2]
        return [psi.sin() * speed, psi.cos() * speed, Interval.point(0.0)]

    def g(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(g_const, np.shape(x)[:-1] + (3, 1)).copy()

    def g_ivl(iv):
        return [[Interval.point(v) for v in row] for row in g_const]

    hq = QuadraticForm(np.diag([1.0, 1.0, 0.0]), np.zeros(3), -0.04)
    i_lo = np.array([-0.1, -2.0, -math.pi / 6.0])
    i_hi = np.array([0.1, -1.8, math.pi / 6.0])

    def initial_contains(x):
        x = np.asarray(x, dtype=float)
        return ((x >= i_lo) & (x <= i_hi)).all(axis=-1)

    def sample_initial(rng, count):
        return rng.uniform(i_lo, i_hi, size=(count, 3))

    def sample_unsafe(rng, count):
        radius = 0.2 * np.sqrt(rng.uniform(0.0, 1.0, size=count))
        angle = rng.uniform(0.0, 2.0 * math.pi, size=count)
        psi = rng.uniform(-2.0, 2.0, size=count)
        return np.stack([radius * np.cos(angle), radius * np.sin(angle), psi], axis=-1)

    return ControlAffineSystem(
        name="oa",
        n=3,
        m=1,
        f=f,
        g=g,
        h=hq,
        f_interval=f_ivl,
        g_interval=g_ivl,
        h_interval=lambda iv: _quadratic_interval(hq, iv),
        box_lo=lo,
        box_hi=hi,
        initial_contains=initial_contains,
        sample_initial=sample_initial,
        input_set=input_set or InputSet.unconstrained(),
        h_quadratic=hq,
        h_convex=True,
        constant_g=g_const,
        sample_unsafe_direct=sample_unsafe,
    )


def _linear_system(
    name: str,
    a_matrix: np.ndarray,
    g_const: np.ndarray,
    box_lo: np.ndarray,
    box_hi: np.ndarray,
    hq: QuadraticForm,
    initial_contains,
    sample_initial,
    input_set: InputSet,
    sample_unsafe=None,
) -> ControlAffineSystem:
    n, m = g_const.shape

    def f(x):
        return np.asarray(x, dtype=float) @ a_matrix.T

    def f_ivl(iv):
        return [dot(row, iv) for row in a_matrix]

    def g(x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(g_const, np.shape(x)[:-1] + (n, m)).copy()

    def g_ivl(iv):
        return [[Interval.point(v) for v in row] for row in g_const]

    return ControlAffineSystem(
        name=name,
        n=n,
        m=m,
        f=f,
        g=g,
        h=hq,
        f_interval=f_ivl,
        g_interval=g_ivl,
        h_interval=lambda iv: _quadratic_interval(hq, iv),
        box_lo=box_lo,
        box_hi=box_hi,
        initial_contains=initial_contains,
        sample_initial=sample_initial,
        input_set=input_set,
        h_quadratic=hq,
        h_convex=True,
        constant_g=g_const,
        sample_unsafe_direct=sample_unsafe,
    )


def spacecraft_rendezvous(
    mean_motion: float = 1.0, input_set: Optional[InputSet] = None
) -> ControlAffineSystem:
    """Relative-motion rendezvous with standard rotating-frame linear dynamics.

    State (px, py, pz, vx, vy, vz); keep-out ball of radius 0.25 around the
    target, initial states at radius >= 0.75.
    """
    nm = mean_motion
    a = np.zeros((6, 6))
    a[0, 3] = a[1, 4] = a[2, 5] = 1.0
    a[3, 0] = 3.0 * nm * nm
    a[3, 4] = 2.0 * nm
    a[4, 3] = -2.0 * nm
    a[5, 2] = -nm * nm
    g_const = np.vstack([np.zeros((3, 3)), np.eye(3)])
    lo = np.array([-5.0, -5.0, -5.0, -1.0, -1.0, -1.0])
    hi = -lo
    hq = QuadraticForm(np.diag([1.0, 1.0, 1.0, 0.0, 0.0, 0.0]), np.zeros(6), -0.0625)

    def initial_contains(x):
        x = np.asarray(x, dtype=float)
        return (x[..., :3] ** 2).sum(axis=-1) >= 0.5625

    def sample_unsafe(rng, count):
        direction = rng.normal(size=(count, 3))
        direction /= np.linalg.norm(direction, axis=1, keepdims=True)
        radius = 0.25 * rng.uniform(0.0, 1.0, size=(count, 1)) ** (1.0 / 3.0)
        vel = rng.uniform(-1.0, 1.0, size=(count, 3))
        return np.hstack([direction * radius, vel])

    return _linear_system(
        "sr",
        a,
        g_const,
        lo,
        hi,
        hq,
        initial_contains,
        _ball_sampler(lo, hi, initial_contains),
        input_set or InputSet.unconstrained(),
        sample_unsafe=sample_unsafe,
    )


def hi_ord8(constant_as_affine_term: bool = False) -> ControlAffineSystem:
    """Companion form of the eighth-order benchmark ODE (open loop).

    The trailing 576 is read as the coefficient of the undifferentiated state
    by default; `constant_as_affine_term` switches to the literal constant
    reading, which adds a drift of -576 on the last coordinate.
    """
    coeffs = np.array([576.0, 2400.0, 4180.0, 3980.0, 2273.0, 800.0, 170.0, 20.0])
    a = np.zeros((8, 8))
    for i in range(7):
        a[i, i + 1] = 1.0
    a[7, :] = -coeffs
    drift = np.zeros(8)
    if constant_as_affine_term:
        a[7, 0] = 0.0
        drift[7] = -576.0

    def f(x):
        return np.asarray(x, dtype=float) @ a.T + drift

    def f_ivl(iv):
        return [dot(row, iv) + float(d) for row, d in zip(a, drift)]

    lo = np.full(8, -2.0)
    hi = np.full(8, 2.0)
    hq = QuadraticForm(np.eye(8), np.full(8, 4.0), 8.0 * 4.0 - 3.0)

    def initial_contains(x):
        x = np.asarray(x, dtype=float)
        return ((x - 1.0) ** 2).sum(axis=-1) <= 1.0

    def sample_unsafe(rng, count):
        center = np.full(8, -2.0)
        out = np.empty((0, 8))
        while out.shape[0] < count:
            direction = rng.normal(size=(4 * count + 64, 8))
            direction /= np.linalg.norm(direction, axis=1, keepdims=True)
            radius = math.sqrt(3.0) * rng.uniform(0.0, 1.0, size=(direction.shape[0], 1)) ** 0.125
            cand = center + direction * radius
            ok = (cand >= lo).all(axis=1) & (cand <= hi).all(axis=1)
            out = np.vstack([out, cand[ok]])
        return out[:count]

    return ControlAffineSystem(
        name="hi_ord8",
        n=8,
        m=0,
        f=f,
        g=lambda x: np.zeros(np.shape(x)[:-1] + (8, 0)),
        h=hq,
        f_interval=f_ivl,
        g_interval=lambda iv: [[] for _ in range(8)],
        h_interval=lambda iv: _quadratic_interval(hq, iv),
        box_lo=lo,
        box_hi=hi,
        initial_contains=initial_contains,
        sample_initial=_ball_sampler(lo, hi, initial_contains),
        input_set=InputSet.open_loop(),
        h_quadratic=hq,
        h_convex=True,
    )


_BUILDERS = {
    "darboux": darboux,
    "oa": obstacle_avoidance,
    "obstacle_avoidance": obstacle_avoidance,
    "sr": spacecraft_rendezvous,
    "spacecraft_rendezvous": spacecraft_rendezvous,
    "hi_ord8": hi_ord8,
    "hiord8": hi_ord8,
}


def by_name(name: str, **overrides) -> ControlAffineSystem:
    key = name.lower().replace("-", "_")
    if key not in _BUILDERS:
        raise KeyError(f"unknown system {name!r}; choose from {sorted(set(_BUILDERS))}")
    return _BUILDERS[key](**overrides)


def make_system(
    name: str,
    f,
    f_interval,
    box_lo,
    box_hi,
    h,
    h_interval,
    g=None,
    g_interval=None,
    g_const: Optional[np.ndarray] = None,
    m: int = 0,
    input_set: Optional[InputSet] = None,
    initial_lo=None,
    initial_hi=None,
    h_quadratic: Optional[QuadraticForm] = None,
    h_convex: bool = False,
) -> ControlAffineSystem:
    """Assemble an ad-hoc system; used by the test-suite constructors."""
    box_lo = np.asarray(box_lo, dtype=float)
    box_hi = np.asarray(box_hi, dtype=float)
    n = box_lo.size
    if g_const is not None:
        g_const = np.asarray(g_const, dtype=float)
        m = g_const.shape[1]

        def g(x, _gc=g_const):
            return np.broadcast_to(_gc, np.shape(x)[:-1] + _gc.shape).copy()

        def g_interval(iv, _gc=g_const):
            return [[Interval.point(v) for v in row] for row in _gc]

    if g is None:
        g = lambda x: np.zeros(np.shape(x)[:-1] + (n, 0))
        g_interval = lambda iv: [[] for _ in range(n)]
        m = 0
    i_lo = box_lo if initial_lo is None else np.asarray(initial_lo, dtype=float)
    i_hi = box_hi if initial_hi is None else np.asarray(initial_hi, dtype=float)

    def initial_contains(x):
        x = np.asarray(x, dtype=float)
        return ((x >= i_lo) & (x <= i_hi)).all(axis=-1)

    def sample_initial(rng, count):
        return rng.uniform(i_lo, i_hi, size=(count, n))

    if input_set is None:
        input_set = InputSet.open_loop() if m == 0 else InputSet.unconstrained()
    return ControlAffineSystem(
        name=name,
        n=n,
        m=m,
        f=f,
        g=g,
        h=h,
        f_interval=f_interval,
        g_interval=g_interval,
        h_interval=h_interval,
        box_lo=box_lo,
        box_hi=box_hi,
        initial_contains=initial_contains,
        sample_initial=sample_initial,
        input_set=input_set,
        h_quadratic=h_quadratic,
        h_convex=h_convex,
        constant_g=g_const,
    )
