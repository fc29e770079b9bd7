"""Certified global minimization over linearly constrained boxes.

Branch-and-bound with interval lower bounds.  The contract mirrors a
delta-complete decision procedure: either the gap between the certified
lower bound and the best feasible value closes to delta, or the node budget
runs out and the caller must treat the result as inconclusive.
"""

from __future__ import annotations

import enum
import heapq
import itertools
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from . import linprog as lpm
from .intervals import Interval, IntervalBox

DEFAULT_DELTA = 1e-4
DEFAULT_NODE_BUDGET = 10_000_000
_CONTRACT_PASSES = 2


class BnbStatus(enum.Enum):
    CERTIFIED = "certified"
    EXHAUSTED = "exhausted"


@dataclass(frozen=True)
class LinearRegion:
    """Linear feasible set: A_eq x = b_eq, A_ub x <= b_ub, within a box."""

    a_eq: np.ndarray
    b_eq: np.ndarray
    a_ub: np.ndarray
    b_ub: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    @staticmethod
    def box_only(lo: np.ndarray, hi: np.ndarray) -> "LinearRegion":
        n = np.asarray(lo).size
        return LinearRegion(
            np.empty((0, n)), np.empty(0), np.empty((0, n)), np.empty(0),
            np.asarray(lo, dtype=float), np.asarray(hi, dtype=float),
        )


@dataclass(frozen=True)
class CertifiedMin:
    lower_bound: float
    upper_bound: float
    minimizer_candidate: Optional[np.ndarray]
    status: BnbStatus
    nodes: int = 0

    @property
    def gap(self) -> float:
        return self.upper_bound - self.lower_bound


def _contract(box: IntervalBox, region: LinearRegion) -> Optional[IntervalBox]:
    """Hull-consistency contraction of the box against the linear rows."""
    lo = box.lo.copy()
    hi = box.hi.copy()
    rows = []
    for a, b in zip(region.a_eq, region.b_eq):
        rows.append((a, b, True))
    for a, b in zip(region.a_ub, region.b_ub):
        rows.append((a, b, False))
    if not rows:
        return box
    for _ in range(_CONTRACT_PASSES):
        for a, b, is_eq in rows:
            act_lo = np.where(a > 0, lo, hi) @ a
            act_hi = np.where(a > 0, hi, lo) @ a
            for k in np.nonzero(np.abs(a) > 1e-12)[0]:
                ak = a[k]
                lo_k, hi_k = (lo[k] * ak, hi[k] * ak) if ak > 0 else (hi[k] * ak, lo[k] * ak)
                rest_lo = act_lo - lo_k
                rest_hi = act_hi - hi_k
                # a_k x_k must land in [b - rest_hi, b - rest_lo] (eq) or
                # (-inf, b - rest_lo] (ineq).
                ub_k = (b - rest_lo) / ak
                lb_k = (b - rest_hi) / ak
                if ak > 0:
                    new_hi = min(hi[k], ub_k)
                    new_lo = max(lo[k], lb_k) if is_eq else lo[k]
                else:
                    new_lo = max(lo[k], ub_k)
                    new_hi = min(hi[k], lb_k) if is_eq else hi[k]
                if new_lo > new_hi + 1e-12:
                    return None
                lo[k] = min(new_lo, new_hi)
                hi[k] = max(new_lo, new_hi)
                act_lo = np.where(a > 0, lo, hi) @ a
                act_hi = np.where(a > 0, hi, lo) @ a
    return IntervalBox(lo, hi)


def _feasible_point(region: LinearRegion, box: IntervalBox) -> Optional[np.ndarray]:
    n = box.n
    lo = np.maximum(region.lo, box.lo)
    hi = np.minimum(region.hi, box.hi)
    if (lo > hi).any():
        return None
    lp = lpm.LinearProgram(
        np.zeros(n), region.a_eq, region.b_eq, region.a_ub, region.b_ub, lo, hi
    )
    out = lpm.solve(lp)
    return out.witness if out.feasible else None


def bb_minimize(
    objective: Callable[[np.ndarray], float],
    objective_interval: Callable[[Sequence[Interval]], Interval],
    region: LinearRegion,
    delta: float = DEFAULT_DELTA,
    node_budget: int = DEFAULT_NODE_BUDGET,
    box_prune: Optional[Callable[[IntervalBox], bool]] = None,
    candidate_ok: Optional[Callable[[np.ndarray], bool]] = None,
    stop_lb: Optional[float] = None,
    stop_ub: Optional[float] = None,
) -> CertifiedMin:
    """Certified minimum of `objective` over the region, to within `delta`.

    `box_prune(box) -> True` marks a box as certainly infeasible under extra
    (non-linear) constraints; `candidate_ok(x)` gates which LP witnesses may
    update the incumbent.  Both default to permissive.

    Verification callers only need a sign decision, not a tight gap:
    `stop_lb` returns as soon as the certified lower bound reaches it, and
    `stop_ub` as soon as the incumbent drops below it.  The returned bounds
    stay sound either way.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    root = IntervalBox(region.lo.copy(), region.hi.copy())
    counter = itertools.count()

    def box_lb(box: IntervalBox) -> float:
        return objective_interval(box.coords()).lo

    best_ub = np.inf
    best_x: Optional[np.ndarray] = None
    pruned_lb = np.inf  # min lb among boxes pruned by the bound test
    heap: list[tuple[float, int, IntervalBox]] = []

    def consider(box: IntervalBox) -> None:
        nonlocal pruned_lb
        lb = box_lb(box)
        if lb >= best_ub - delta:
            pruned_lb = min(pruned_lb, lb)
            return
        heapq.heappush(heap, (lb, next(counter), box))

    def try_candidate(x: Optional[np.ndarray]) -> None:
        nonlocal best_ub, best_x
        if x is None:
            return
        if candidate_ok is not None and not candidate_ok(x):
            return
        v = objective(x)
        if v < best_ub:
            best_ub = v
            best_x = x

    first = _contract(root, region)
    if first is not None:
        try_candidate(_feasible_point(region, first))
        consider(first)

    nodes = 0
    while heap:
        if nodes >= node_budget:
            lb = min(heap[0][0], pruned_lb)
            return CertifiedMin(lb, best_ub, best_x, BnbStatus.EXHAUSTED, nodes)
        lb, _, box = heapq.heappop(heap)
        nodes += 1
        lb_global = min(lb, pruned_lb)
        if best_ub - lb_global <= delta:
            return CertifiedMin(lb_global, best_ub, best_x, BnbStatus.CERTIFIED, nodes)
        if stop_lb is not None and lb_global >= stop_lb:
            return CertifiedMin(lb_global, best_ub, best_x, BnbStatus.CERTIFIED, nodes)
        if stop_ub is not None and best_ub < stop_ub:
            return CertifiedMin(lb_global, best_ub, best_x, BnbStatus.CERTIFIED, nodes)
        if box_prune is not None and box_prune(box):
            continue
        contracted = _contract(box, region)
        if contracted is None:
            continue
        point = _feasible_point(region, contracted)
        if point is None:
            continue
        try_candidate(point)
        k = int(np.argmax(contracted.widths))
        if contracted.widths[k] <= 1e-13:
            # Box has collapsed; its interval bound is as tight as it gets.
            pruned_lb = min(pruned_lb, box_lb(contracted))
            continue
        left, right = contracted.split(k)
        consider(left)
        consider(right)

    if not np.isfinite(best_ub) and not np.isfinite(pruned_lb):
        # Every box was infeasible: the minimum over the empty set.
        return CertifiedMin(np.inf, np.inf, None, BnbStatus.CERTIFIED, nodes)
    lower = min(pruned_lb, best_ub)
    status = BnbStatus.CERTIFIED if best_ub - lower <= delta else BnbStatus.EXHAUSTED
    return CertifiedMin(lower, best_ub, best_x, status, nodes)
