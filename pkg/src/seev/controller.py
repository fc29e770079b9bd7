"""Barrier-based safety filter and a closed-loop simulator.

The filter projects a nominal input onto the constraint set derived from
the barrier network at the current state: one flow constraint per
activation pattern consistent with the state, plus tangency constraints at
non-differentiable points.  With a single active constraint the projection
is closed-form; otherwise a tiny exact active-set enumeration solves the
projection QP.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .network import ActivationSet, Network
from .systems import ControlAffineSystem, InputKind

_QP_TOL = 1e-9


@dataclass(frozen=True)
class FilterConfig:
    gamma: float = 1.0  # class-K gain: alpha(b) = gamma * b
    unstable_tol: float = 1e-8

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")


@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    barrier: np.ndarray
    safety: np.ndarray
    filter_active: np.ndarray
    infeasible_steps: np.ndarray
    truncated: bool = False

    def min_barrier(self) -> float:
        return float(self.barrier.min())

    def min_safety(self) -> float:
        return float(self.safety.min())


def _projection_qp(
    quad_m: np.ndarray,
    target: np.ndarray,
    rows_a: np.ndarray,
    rows_b: np.ndarray,
) -> Optional[np.ndarray]:
    """Exact min ||M v - target||^2 s.t. rows_a v >= rows_b, by KKT subset
    enumeration.  Returns None when the constraints are inconsistent."""
    nv = quad_m.shape[1]
    hess = 2.0 * quad_m.T @ quad_m
    lin = 2.0 * quad_m.T @ target
    m = rows_a.shape[0]

    def feasible(v: np.ndarray) -> bool:
        return not m or not (rows_a @ v < rows_b - _QP_TOL).any()

    # Unconstrained optimum first, then growing active sets.
    for size in range(0, min(m, nv) + 1):
        for active in itertools.combinations(range(m), size):
            a = rows_a[list(active)]
            kkt = np.zeros((nv + size, nv + size))
            kkt[:nv, :nv] = hess
            kkt[:nv, nv:] = -a.T
            kkt[nv:, :nv] = a
            rhs = np.concatenate([lin, rows_b[list(active)]])
            try:
                sol = np.linalg.solve(kkt, rhs)
            except np.linalg.LinAlgError:
                continue
            v = sol[:nv]
            lam = sol[nv:]
            if (lam < -_QP_TOL).any():
                continue
            if feasible(v):
                return v
    return None


def _pattern_candidates(net: Network, x: np.ndarray, tol: float) -> list[ActivationSet]:
    base, unstable = net.activation_pattern(x, tol=tol)
    unstable = sorted(unstable)
    if len(unstable) > 8:
        unstable = unstable[:8]
    out = []
    for bits in range(1 << len(unstable)):
        s = base
        for k, neuron in enumerate(unstable):
            if (bits >> k) & 1:
                s = s.flip(neuron)
        out.append(s)
    seen = set()
    uniq = []
    for s in out:
        if s not in seen:
            seen.add(s)
            uniq.append(s)
    return uniq


def safe_control(
    net: Network,
    system: ControlAffineSystem,
    x: np.ndarray,
    u_nom: np.ndarray,
    cfg: FilterConfig = FilterConfig(),
) -> tuple[np.ndarray, bool]:
    """Minimally modified input satisfying the barrier flow constraint.

    Returns (u, feasible).  When no pattern admits a feasible projection the
    nominal input (clipped into the admissible set) is returned with
    feasible = False; callers must treat such steps as unsound.
    """
    if system.m == 0:
        raise ValueError("safety filter requires a controlled system (m >= 1)")
    x = np.asarray(x, dtype=float)
    u_nom = np.asarray(u_nom, dtype=float)
    bx = float(net.forward(x))
    fx = system.f(x)
    gx = system.g(x)
    alpha = cfg.gamma * bx

    if system.input_set.kind is InputKind.BOX:
        d = system.input_set.d_matrix
        quad_m = d
        box_rows = np.vstack([np.eye(d.shape[1]), -np.eye(d.shape[1])])
        box_rhs = np.full(2 * d.shape[1], -1.0)

        def to_input(v):
            return d @ v
    else:
        d = np.eye(system.m)
        quad_m = d
        box_rows = np.empty((0, system.m))
        box_rhs = np.empty(0)

        def to_input(v):
            return v

    _, unstable = net.activation_pattern(x, tol=cfg.unstable_tol)
    best_u = None
    best_cost = math.inf
    for pattern in _pattern_candidates(net, x, cfg.unstable_tol):
        aff = net.region_affine(pattern)
        rows_a = [aff.out_w @ gx @ d]
        rows_b = [-alpha - float(aff.out_w @ fx)]
        for neuron in sorted(unstable):
            w, _ = aff.neuron_form(neuron)
            sign = 1.0 if neuron in pattern else -1.0
            rows_a.append(sign * (w @ gx @ d))
            rows_b.append(-sign * float(w @ fx))
        rows_a = np.vstack([np.array(rows_a), box_rows])
        rows_b = np.concatenate([np.array(rows_b), box_rhs])
        # v-space target: minimize ||d v - u_nom||^2.
        v = _projection_qp(quad_m, u_nom, rows_a, rows_b)
        if v is None:
            continue
        u = to_input(v)
        cost = float(((u - u_nom) ** 2).sum())
        if cost < best_cost - _QP_TOL or best_u is None:
            best_cost = cost
            best_u = u
    if best_u is not None:
        return best_u, True
    return clip_input(system, u_nom), False


def clip_input(system: ControlAffineSystem, u: np.ndarray) -> np.ndarray:
    if system.input_set.kind is InputKind.BOX:
        d = system.input_set.d_matrix
        try:
            w = np.linalg.solve(d, u)
        except np.linalg.LinAlgError:
            w, *_ = np.linalg.lstsq(d, u, rcond=None)
        return d @ np.clip(w, -1.0, 1.0)
    return np.asarray(u, dtype=float)


def simulate(
    net: Network,
    system: ControlAffineSystem,
    x0: np.ndarray,
    u_nom_policy: Optional[Callable[[np.ndarray], np.ndarray]] = None,
    t_end: float = 10.0,
    dt: float = 1e-3,
    cfg: FilterConfig = FilterConfig(),
) -> Trajectory:
    """Fixed-step RK4 roll-out with the filter applied in zero-order hold."""
    x = np.asarray(x0, dtype=float).copy()
    if float(net.forward(x)) < 0.0:
        raise ValueError("initial state must satisfy b(x0) >= 0")
    if u_nom_policy is None:
        u_nom_policy = lambda _x: np.zeros(system.m)
    steps = int(round(t_end / dt))
    times = np.empty(steps + 1)
    states = np.empty((steps + 1, system.n))
    inputs = np.zeros((steps + 1, max(system.m, 1)))
    barrier = np.empty(steps + 1)
    safety = np.empty(steps + 1)
    active = np.zeros(steps + 1, dtype=bool)
    infeasible = np.zeros(steps + 1, dtype=bool)
    truncated = False

    def deriv(xx: np.ndarray, uu: np.ndarray) -> np.ndarray:
        if system.m == 0:
            return system.f(xx)
        return system.f(xx) + system.g(xx) @ uu

    count = 0
    for k in range(steps + 1):
        times[k] = k * dt
        states[k] = x
        barrier[k] = net.forward(x)
        safety[k] = system.h(x)
        count = k + 1
        if k == steps:
            break
        if system.m == 0:
            u = np.zeros(0)
        else:
            u_nom = np.asarray(u_nom_policy(x), dtype=float)
            u, ok = safe_control(net, system, x, u_nom, cfg)
            inputs[k, : system.m] = u
            active[k] = bool(np.abs(u - u_nom).max() > 1e-12)
            infeasible[k] = not ok
        k1 = deriv(x, u if system.m else np.zeros(0))
        k2 = deriv(x + 0.5 * dt * k1, u if system.m else np.zeros(0))
        k3 = deriv(x + 0.5 * dt * k2, u if system.m else np.zeros(0))
        k4 = deriv(x + dt * k3, u if system.m else np.zeros(0))
        x = x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if (x < system.box_lo).any() or (x > system.box_hi).any():
            truncated = True
            count = k + 1
            break

    return Trajectory(
        times[:count],
        states[:count],
        inputs[:count],
        barrier[:count],
        safety[:count],
        active[:count],
        infeasible[:count],
        truncated,
    )
