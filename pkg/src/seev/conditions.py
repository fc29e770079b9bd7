"""Safety-condition checks for boundary regions and hinges.

Three condition families are verified per catalog entry: containment of the
zero superlevel set in the safe set, the flow condition on each boundary
hyperplane, and the flow condition at hinges where several regions meet.
Cheap sufficient checks run first; exact certification falls back to the
convex solver (containment with convex h) or interval branch-and-bound.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import linprog as lpm
from .globalopt import BnbStatus, CertifiedMin, LinearRegion, bb_minimize
from .intervals import Interval, dot
from .network import ActivationSet, Network, RegionAffine
from .systems import ControlAffineSystem, InputKind

CE_VALUE_MARGIN = 1e-9
POINT_ON_BOUNDARY_TOL = 1e-6
# Stand-in for an unconstrained input set in point LPs.  Large enough that
# any sanely scaled problem has admissible inputs well inside, small enough
# to keep the simplex numerically comfortable.
UNBOUNDED_INPUT_BOX = 1e6
_VALUE_CLAMP = 1e30


class DischargePath(enum.Enum):
    SUFFICIENT_ZERO_INPUT = "sufficient-zero-input"
    SUFFICIENT_SIGN_CONSENSUS = "sufficient-sign-consensus"
    CONSTANT_G_NONZERO = "constant-g-nonzero"
    CONVEX_SOLVE = "convex-solve"
    BRANCH_AND_BOUND = "branch-and-bound"


class VerdictKind(enum.Enum):
    SAFE = "safe"
    COUNTEREXAMPLE = "counterexample"
    UNDECIDED = "undecided"


@dataclass(frozen=True)
class ConditionVerdict:
    kind: VerdictKind
    path: Optional[DischargePath] = None
    state: Optional[np.ndarray] = None
    detail: str = ""
    lower_bound: Optional[float] = None

    @property
    def safe(self) -> bool:
        return self.kind is VerdictKind.SAFE


@dataclass(frozen=True, eq=False)
class RegionGeometry:
    """Cached per-region data: affine form, constraint rows, segment box."""

    pattern: ActivationSet
    affine: RegionAffine
    rows_a: np.ndarray
    rows_b: np.ndarray
    seg_lo: Optional[np.ndarray]
    seg_hi: Optional[np.ndarray]

    @property
    def out_w(self) -> np.ndarray:
        return self.affine.out_w

    @property
    def out_r(self) -> float:
        return self.affine.out_r

    def segment_region(self) -> Optional[LinearRegion]:
        if self.seg_lo is None:
            return None
        n = self.out_w.size
        return LinearRegion(
            self.out_w.reshape(1, n),
            np.array([-self.out_r]),
            self.rows_a,
            self.rows_b,
            self.seg_lo,
            self.seg_hi,
        )


def _constrained_box(
    n: int,
    a_eq: np.ndarray,
    b_eq: np.ndarray,
    a_ub: np.ndarray,
    b_ub: np.ndarray,
    lo: np.ndarray,
    hi: np.ndarray,
) -> Optional[tuple[np.ndarray, np.ndarray]]:
    out_lo = np.empty(n)
    out_hi = np.empty(n)
    for k in range(n):
        c = np.zeros(n)
        c[k] = 1.0
        low = lpm.solve(lpm.LinearProgram(c, a_eq, b_eq, a_ub, b_ub, lo, hi))
        if not low.feasible:
            return None
        high = lpm.solve(lpm.LinearProgram(-c, a_eq, b_eq, a_ub, b_ub, lo, hi))
        if not high.feasible:
            return None
        out_lo[k] = low.witness[k]
        out_hi[k] = max(high.witness[k], low.witness[k])
    return out_lo, out_hi


def region_geometry(net: Network, pattern: ActivationSet, box) -> RegionGeometry:
    """Geometry of the boundary segment of one region within the state box."""
    lo = np.asarray(box[0], dtype=float)
    hi = np.asarray(box[1], dtype=float)
    aff = net.region_affine(pattern)
    rows_a, rows_b = lpm.region_feasibility_rows(net, pattern)
    eq_a = aff.out_w.reshape(1, -1)
    eq_b = np.array([-aff.out_r])
    if np.abs(aff.out_w).max() == 0.0:
        seg = None if abs(aff.out_r) > lpm.FEAS_TOL else _constrained_box(
            net.n, np.empty((0, net.n)), np.empty(0), rows_a, rows_b, lo, hi
        )
    else:
        seg = _constrained_box(net.n, eq_a, eq_b, rows_a, rows_b, lo, hi)
    if seg is None:
        return RegionGeometry(pattern, aff, rows_a, rows_b, None, None)
    return RegionGeometry(pattern, aff, rows_a, rows_b, seg[0], seg[1])


def _wg_intervals(w: np.ndarray, g_cols: Sequence[Sequence[Interval]]) -> list[Interval]:
    """Intervals of (w . g(x))_j for each input column j over a box."""
    m = len(g_cols[0]) if g_cols else 0
    out = []
    for j in range(m):
        total = Interval.point(0.0)
        for k, wk in enumerate(w):
            if wk:
                total = total + g_cols[k][j] * float(wk)
        out.append(total)
    return out


def _flow_interval(system: ControlAffineSystem, w: np.ndarray, coords) -> Interval:
    return dot(w, system.f_interval(coords))


def _interval_positive_on(
    system: ControlAffineSystem,
    w: np.ndarray,
    region: LinearRegion,
    lo: np.ndarray,
    hi: np.ndarray,
    depth: int,
) -> bool:
    """Certify w.f > 0 on the constrained box by contraction and a bounded
    number of bisections.  Interval arithmetic only; no optimization."""
    from . import globalopt as gopt
    from .intervals import IntervalBox

    contracted = gopt._contract(IntervalBox(lo, hi), region)
    if contracted is None:
        return True  # no feasible points in this sub-box
    coords = contracted.coords()
    bound = _flow_interval(system, w, coords)
    if bound.lo > 0.0:
        return True
    if depth <= 0:
        return False
    k = int(np.argmax(contracted.widths))
    if contracted.widths[k] <= 1e-12:
        return False
    left, right = contracted.split(k)
    return _interval_positive_on(system, w, region, left.lo, left.hi, depth - 1) and (
        _interval_positive_on(system, w, region, right.lo, right.hi, depth - 1)
    )


ZERO_INPUT_SPLIT_DEPTH = 6


def _box_input_objective(system: ControlAffineSystem, w: np.ndarray):
    """Point and interval forms of  w.f(x) + || (w.g(x)) D ||_1  (Eq.-18 shape)."""
    d = system.input_set.d_matrix

    def value(x: np.ndarray) -> float:
        base = float(w @ system.f(x))
        wg = w @ system.g(x)
        return base + float(np.abs(wg @ d).sum())

    def ivl(coords) -> Interval:
        total = _flow_interval(system, w, coords)
        wg = _wg_intervals(w, system.g_interval(coords))
        for i in range(d.shape[1]):
            col = Interval.point(0.0)
            for j, wgj in enumerate(wg):
                if d[j, i]:
                    col = col + wgj * float(d[j, i])
            total = total + abs(col)
        return total

    return value, ivl


def max_input_gain(system: ControlAffineSystem, w: np.ndarray, x: np.ndarray) -> float:
    """max over admissible u of w . g(x) u; +inf for unconstrained inputs."""
    kind = system.input_set.kind
    if kind is InputKind.NONE or system.m == 0:
        return 0.0
    wg = w @ system.g(x)
    if kind is InputKind.BOX:
        return float(np.abs(wg @ system.input_set.d_matrix).sum())
    return math.inf if np.abs(wg).max() > 0.0 else 0.0


def verify_correctness(
    net: Network,
    system: ControlAffineSystem,
    geom: RegionGeometry,
    delta: float = 1e-4,
    node_budget: int = 200_000,
) -> ConditionVerdict:
    """Containment check: min h over the region's boundary segment >= 0."""
    region = geom.segment_region()
    if region is None:
        return ConditionVerdict(VerdictKind.SAFE, DischargePath.BRANCH_AND_BOUND,
                                detail="empty segment")
    if system.h_convex and system.h_quadratic is not None:
        verdict = _convex_containment(system, geom, region)
        if verdict is not None:
            return verdict
    res = bb_minimize(system.h, system.h_interval, region, delta=delta,
                      node_budget=node_budget, stop_lb=0.0, stop_ub=-CE_VALUE_MARGIN)
    return _classify_min(res, DischargePath.BRANCH_AND_BOUND,
                         revalidate=lambda x: float(system.h(x)) < -CE_VALUE_MARGIN)


def _convex_containment(system, geom, region) -> Optional[ConditionVerdict]:
    import cvxpy as cp

    q = system.h_quadratic
    n = geom.out_w.size
    x = cp.Variable(n)
    diag = np.diag(q.q_matrix)
    objective = q.constant + q.q_vector @ x
    if diag.any():
        objective = objective + cp.sum(cp.multiply(diag, cp.square(x)))
    cons = [x >= region.lo, x <= region.hi]
    if region.a_ub.size:
        cons.append(region.a_ub @ x <= region.b_ub)
    if region.a_eq.size:
        cons.append(region.a_eq @ x == region.b_eq)
    prob = cp.Problem(cp.Minimize(objective), cons)
    try:
        prob.solve()
    except cp.error.SolverError:
        return None
    if prob.status not in ("optimal", "optimal_inaccurate") or x.value is None:
        return None
    val = float(prob.value)
    if val >= 0.0:
        return ConditionVerdict(VerdictKind.SAFE, DischargePath.CONVEX_SOLVE,
                                lower_bound=val)
    cand = np.asarray(x.value, dtype=float)
    if float(system.h(cand)) < -CE_VALUE_MARGIN and _point_feasible(cand, region):
        return ConditionVerdict(VerdictKind.COUNTEREXAMPLE, DischargePath.CONVEX_SOLVE,
                                state=cand, detail="containment violated",
                                lower_bound=val)
    return None


def _point_feasible(x: np.ndarray, region: LinearRegion, tol: float = lpm.FEAS_TOL) -> bool:
    if (x < region.lo - tol).any() or (x > region.hi + tol).any():
        return False
    if region.a_ub.size and (region.a_ub @ x - region.b_ub > tol).any():
        return False
    if region.a_eq.size and (np.abs(region.a_eq @ x - region.b_eq) > tol).any():
        return False
    return True


def _classify_min(
    res: CertifiedMin,
    path: DischargePath,
    revalidate,
) -> ConditionVerdict:
    if res.lower_bound >= 0.0:
        return ConditionVerdict(VerdictKind.SAFE, path, lower_bound=res.lower_bound)
    if res.upper_bound < -CE_VALUE_MARGIN and res.minimizer_candidate is not None:
        cand = res.minimizer_candidate
        if revalidate(cand):
            return ConditionVerdict(VerdictKind.COUNTEREXAMPLE, path, state=cand,
                                    detail="certified negative minimum",
                                    lower_bound=res.lower_bound)
    detail = "delta-undecided" if res.status is BnbStatus.CERTIFIED else "budget exhausted"
    return ConditionVerdict(VerdictKind.UNDECIDED, path, detail=detail,
                            lower_bound=res.lower_bound)


def verify_hyperplane(
    net: Network,
    system: ControlAffineSystem,
    geom: RegionGeometry,
    delta: float = 1e-4,
    node_budget: int = 200_000,
) -> ConditionVerdict:
    """Flow condition on one boundary hyperplane: sup_u of the boundary
    derivative must be nonnegative everywhere on the segment."""
    region = geom.segment_region()
    if region is None:
        return ConditionVerdict(VerdictKind.SAFE, DischargePath.BRANCH_AND_BOUND,
                                detail="empty segment")
    w = geom.out_w
    kind = system.input_set.kind

    # Constant-input-matrix shortcut: any nonzero gain column makes the
    # constraint satisfiable by scaling u.
    if kind is InputKind.UNCONSTRAINED and system.constant_g is not None:
        wg = w @ system.constant_g
        if np.abs(wg).max() > 0.0:
            return ConditionVerdict(VerdictKind.SAFE, DischargePath.CONSTANT_G_NONZERO)

    # Zero-input check; u = 0 is admissible for every supported input set.
    if _interval_positive_on(system, w, region, region.lo, region.hi,
                             ZERO_INPUT_SPLIT_DEPTH):
        return ConditionVerdict(VerdictKind.SAFE, DischargePath.SUFFICIENT_ZERO_INPUT)

    if kind is InputKind.BOX:
        value, ivl = _box_input_objective(system, w)
        res = bb_minimize(value, ivl, region, delta=delta, node_budget=node_budget,
                          stop_lb=0.0, stop_ub=-CE_VALUE_MARGIN)
        reval = lambda x: _hyperplane_ce_valid(net, system, x)
        return _classify_min(res, DischargePath.BRANCH_AND_BOUND, reval)

    if kind is InputKind.UNCONSTRAINED:
        # Reduced problem: minimize w.f on the part of the segment where the
        # input gain vanishes; boxes where some gain component is surely
        # nonzero are pruned, and only near-zero-gain points may update the
        # incumbent.
        def gain_zero_possible(bx) -> bool:
            wg = _wg_intervals(w, system.g_interval(bx.coords()))
            return all(col.lo <= 0.0 <= col.hi for col in wg)

        def candidate_ok(x) -> bool:
            return float(np.abs(w @ system.g(x)).max()) <= lpm.FEAS_TOL

        res = bb_minimize(
            lambda x: float(w @ system.f(x)),
            lambda cs: _flow_interval(system, w, cs),
            region,
            delta=delta,
            node_budget=node_budget,
            box_prune=lambda bx: not gain_zero_possible(bx),
            candidate_ok=candidate_ok,
            stop_lb=0.0,
            stop_ub=-CE_VALUE_MARGIN,
        )
        reval = lambda x: _hyperplane_ce_valid(net, system, x)
        return _classify_min(res, DischargePath.BRANCH_AND_BOUND, reval)

    # Open loop: the flow term is the whole condition.
    res = bb_minimize(
        lambda x: float(w @ system.f(x)),
        lambda cs: _flow_interval(system, w, cs),
        region,
        delta=delta,
        node_budget=node_budget,
        stop_lb=0.0,
        stop_ub=-CE_VALUE_MARGIN,
    )
    reval = lambda x: _hyperplane_ce_valid(net, system, x)
    return _classify_min(res, DischargePath.BRANCH_AND_BOUND, reval)


def _hyperplane_ce_valid(net: Network, system: ControlAffineSystem, x: np.ndarray) -> bool:
    if abs(net.forward(x)) > POINT_ON_BOUNDARY_TOL:
        return False
    return not nagumo_point_check(net, system, x)


def zero_input_discharged(
    system: ControlAffineSystem, geom: RegionGeometry
) -> bool:
    """Strict interval certificate that the drift alone keeps the boundary
    segment safe; used to pre-filter hinge work."""
    region = geom.segment_region()
    if region is None:
        return False
    return _interval_positive_on(system, geom.out_w, region, region.lo, region.hi,
                                 ZERO_INPUT_SPLIT_DEPTH)


# ---------------------------------------------------------------------------
# Hinges


@dataclass(frozen=True, eq=False)
class HingeGeometry:
    members: tuple[ActivationSet, ...]
    geoms: tuple[RegionGeometry, ...]
    unstable: tuple[tuple[int, int], ...]
    region: Optional[LinearRegion]


def hinge_geometry(
    net: Network,
    hinge: frozenset[ActivationSet],
    box,
    geom_cache: dict[ActivationSet, RegionGeometry],
) -> HingeGeometry:
    members = tuple(sorted(hinge, key=lambda s: s.masks))
    geoms = tuple(geom_cache[s] for s in members)
    unstable: set[tuple[int, int]] = set()
    for a, b in itertools.combinations(members, 2):
        for i, (ma, mb) in enumerate(zip(a.masks, b.masks)):
            diff = ma ^ mb
            while diff:
                j = (diff & -diff).bit_length() - 1
                unstable.add((i, j))
                diff &= diff - 1
    lo = np.asarray(box[0], dtype=float)
    hi = np.asarray(box[1], dtype=float)
    n = lo.size
    eq_a, eq_b, ub_a, ub_b = [], [], [], []
    for g in geoms:
        if np.abs(g.out_w).max() > 0.0:
            eq_a.append(g.out_w)
            eq_b.append(-g.out_r)
        ub_a.append(g.rows_a)
        ub_b.append(g.rows_b)
    a_eq = np.array(eq_a).reshape(len(eq_a), n)
    b_eq = np.array(eq_b)
    a_ub = np.vstack(ub_a) if ub_a else np.empty((0, n))
    b_ub = np.concatenate(ub_b) if ub_b else np.empty(0)
    cube = _constrained_box(n, a_eq, b_eq, a_ub, b_ub, lo, hi)
    region = None if cube is None else LinearRegion(a_eq, b_eq, a_ub, b_ub, cube[0], cube[1])
    return HingeGeometry(members, geoms, tuple(sorted(unstable)), region)


def _tangency_rows(
    geom: RegionGeometry, unstable: Sequence[tuple[int, int]]
) -> list[tuple[np.ndarray, float]]:
    """Rows (w, sign) for the unstable-neuron consistency conditions under
    this member's pattern: sign +1 demands w.(f+gu) >= 0, -1 demands <= 0."""
    rows = []
    for neuron in unstable:
        w, _ = geom.affine.neuron_form(neuron)
        sign = 1.0 if neuron in geom.pattern else -1.0
        rows.append((w, sign))
    return rows


def _input_box(system: ControlAffineSystem) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(map, lo, hi): admissible inputs are {map @ v : lo <= v <= hi}."""
    if system.input_set.kind is InputKind.BOX:
        d = system.input_set.d_matrix
        m = d.shape[1]
        return d, -np.ones(m), np.ones(m)
    m = system.m
    return np.eye(m), np.full(m, -UNBOUNDED_INPUT_BOX), np.full(m, UNBOUNDED_INPUT_BOX)


def _member_point_value(
    system: ControlAffineSystem,
    geom: RegionGeometry,
    rows: list[tuple[np.ndarray, float]],
    x: np.ndarray,
) -> float:
    """max_u W.(f+gu) subject to the tangency rows and u admissible, at x."""
    fx = system.f(x)
    if system.m == 0:
        for w, sign in rows:
            if sign * float(w @ fx) < -lpm.FEAS_TOL:
                return -_VALUE_CLAMP
        return float(geom.out_w @ fx)
    gx = system.g(x)
    umap, ulo, uhi = _input_box(system)
    nv = ulo.size
    ineq_a, ineq_b = [], []
    for w, sign in rows:
        ineq_a.append(-sign * (w @ gx @ umap))
        ineq_b.append(sign * float(w @ fx))
    objective = -(geom.out_w @ gx @ umap)
    lp = lpm.LinearProgram(
        objective,
        np.empty((0, nv)),
        np.empty(0),
        np.array(ineq_a).reshape(len(ineq_a), nv),
        np.array(ineq_b),
        ulo,
        uhi,
    )
    try:
        out = lpm.solve(lp)
    except lpm.NumericalFailure:
        return -_VALUE_CLAMP
    if not out.feasible:
        return -_VALUE_CLAMP
    gain = -out.objective_value
    return float(np.clip(float(geom.out_w @ fx) + gain, -_VALUE_CLAMP, _VALUE_CLAMP))


def _member_interval_lb(
    system: ControlAffineSystem,
    geom: RegionGeometry,
    rows: list[tuple[np.ndarray, float]],
    coords: Sequence[Interval],
    u_candidates: Sequence[np.ndarray],
) -> float:
    """Sound lower bound of the member value over a box via fixed inputs."""
    best = -math.inf
    g_cols = system.g_interval(coords) if system.m else None
    f_ivl = system.f_interval(coords)
    for u in u_candidates:
        ok = True
        for w, sign in rows:
            total = dot(w, f_ivl)
            if system.m:
                wg = _wg_intervals(w, g_cols)
                for j, wgj in enumerate(wg):
                    if u[j]:
                        total = total + wgj * float(u[j])
            if sign > 0 and total.lo < 0.0:
                ok = False
            if sign < 0 and total.hi > 0.0:
                ok = False
            if not ok:
                break
        if not ok:
            continue
        val = dot(geom.out_w, f_ivl)
        if system.m:
            wg = _wg_intervals(geom.out_w, g_cols)
            for j, wgj in enumerate(wg):
                if u[j]:
                    val = val + wgj * float(u[j])
        best = max(best, val.lo)
    return best


def verify_hinge(
    net: Network,
    system: ControlAffineSystem,
    hg: HingeGeometry,
    delta: float = 1e-4,
    node_budget: int = 100_000,
) -> ConditionVerdict:
    """Flow condition where several boundary regions meet."""
    if hg.region is None:
        return ConditionVerdict(VerdictKind.SAFE, DischargePath.BRANCH_AND_BOUND,
                                detail="empty hinge")
    region = hg.region
    coords = [Interval(float(a), float(b)) for a, b in zip(region.lo, region.hi)]

    # Zero-input heuristic: the drift strictly enters every adjoining piece.
    if all(
        _interval_positive_on(system, g.out_w, region, region.lo, region.hi,
                              ZERO_INPUT_SPLIT_DEPTH)
        for g in hg.geoms
    ):
        return ConditionVerdict(VerdictKind.SAFE, DischargePath.SUFFICIENT_ZERO_INPUT)

    # Sign consensus: some input coordinate has a uniform strict sign of its
    # gain across all members, so a large input along it works for them all.
    if system.m and system.input_set.kind is InputKind.UNCONSTRAINED:
        gains = [
            _wg_intervals(g.out_w, system.g_interval(coords)) for g in hg.geoms
        ]
        for i in range(system.m):
            if all(gain[i].lo > 0.0 for gain in gains) or all(
                gain[i].hi < 0.0 for gain in gains
            ):
                return ConditionVerdict(
                    VerdictKind.SAFE, DischargePath.SUFFICIENT_SIGN_CONSENSUS
                )

    member_rows = [_tangency_rows(g, hg.unstable) for g in hg.geoms]

    def point_value(x: np.ndarray) -> float:
        return max(
            _member_point_value(system, g, rows, x)
            for g, rows in zip(hg.geoms, member_rows)
        )

    def interval_value(cs: Sequence[Interval]) -> Interval:
        mid = np.array([c.mid for c in cs])
        candidates = [np.zeros(system.m)] if system.m else [np.zeros(0)]
        if system.m:
            u_mid = _best_point_input(system, hg, member_rows, mid)
            if u_mid is not None:
                candidates.append(u_mid)
        lb = max(
            _member_interval_lb(system, g, rows, cs, candidates)
            for g, rows in zip(hg.geoms, member_rows)
        )
        ub = max(_optimistic_member_ub(system, g, cs) for g in hg.geoms)
        lb = max(min(lb, ub), -_VALUE_CLAMP)
        return Interval(lb, max(ub, lb))

    res = bb_minimize(point_value, interval_value, region, delta=delta,
                      node_budget=node_budget, stop_lb=0.0, stop_ub=-CE_VALUE_MARGIN)
    reval = lambda x: _hinge_ce_valid(net, system, x)
    return _classify_min(res, DischargePath.BRANCH_AND_BOUND, reval)


def _optimistic_member_ub(system, geom, coords) -> float:
    val = dot(geom.out_w, system.f_interval(coords))
    if system.m == 0:
        return val.hi
    wg = _wg_intervals(geom.out_w, system.g_interval(coords))
    if system.input_set.kind is InputKind.BOX:
        d = system.input_set.d_matrix
        total = val
        for i in range(d.shape[1]):
            col = Interval.point(0.0)
            for j, wgj in enumerate(wg):
                if d[j, i]:
                    col = col + wgj * float(d[j, i])
            total = total + abs(col)
        return total.hi
    if any(w.lo > 0.0 or w.hi < 0.0 for w in wg):
        return _VALUE_CLAMP
    if all(w.lo == 0.0 == w.hi for w in wg):
        return val.hi
    return _VALUE_CLAMP


def _best_point_input(system, hg, member_rows, x) -> Optional[np.ndarray]:
    """Input achieving the best member value at x, for incumbent seeding."""
    best_val = -math.inf
    best_u = None
    fx = system.f(x)
    gx = system.g(x)
    umap, ulo, uhi = _input_box(system)
    nv = ulo.size
    for geom, rows in zip(hg.geoms, member_rows):
        ineq_a = [-sign * (w @ gx @ umap) for w, sign in rows]
        ineq_b = [sign * float(w @ fx) for w, sign in rows]
        lp = lpm.LinearProgram(
            -(geom.out_w @ gx @ umap),
            np.empty((0, nv)),
            np.empty(0),
            np.array(ineq_a).reshape(len(ineq_a), nv),
            np.array(ineq_b),
            ulo,
            uhi,
        )
        try:
            out = lpm.solve(lp)
        except lpm.NumericalFailure:
            continue
        if out.feasible:
            val = float(geom.out_w @ fx) - out.objective_value
            if val > best_val:
                best_val = val
                best_u = umap @ out.witness
    return best_u


def _hinge_ce_valid(net: Network, system: ControlAffineSystem, x: np.ndarray) -> bool:
    if abs(net.forward(x)) > POINT_ON_BOUNDARY_TOL:
        return False
    return not nagumo_point_check(net, system, x)


# ---------------------------------------------------------------------------
# Point check


def nagumo_point_check(
    net: Network,
    system: ControlAffineSystem,
    x: np.ndarray,
    tol: float = 1e-8,
) -> bool:
    """Direct tangent-cone test at a boundary state.

    Used to re-validate counterexamples and in property tests only: for each
    activation pattern consistent with the unstable neurons at x, a small
    feasibility program in u decides whether the flow can be kept inward.
    """
    x = np.asarray(x, dtype=float)
    base, unstable = net.activation_pattern(x, tol=tol)
    unstable = sorted(unstable)
    if len(unstable) > 12:
        raise ValueError("too many unstable neurons for an exact point check")
    patterns = []
    for bits in range(1 << len(unstable)):
        s = base
        for k, neuron in enumerate(unstable):
            if (bits >> k) & 1:
                s = s.flip(neuron)
        patterns.append(s)
    seen = set()
    for s in patterns:
        if s in seen:
            continue
        seen.add(s)
        geom_aff = net.region_affine(s)
        rows = []
        for neuron in unstable:
            w, _ = geom_aff.neuron_form(neuron)
            sign = 1.0 if neuron in s else -1.0
            rows.append((w, sign))
        fx = system.f(x)
        if system.m == 0:
            if all(sign * float(w @ fx) >= -lpm.FEAS_TOL for w, sign in rows) and (
                float(geom_aff.out_w @ fx) >= -lpm.FEAS_TOL
            ):
                return True
            continue
        gx = system.g(x)
        umap, ulo, uhi = _input_box(system)
        nv = ulo.size
        ineq_a = [-sign * (w @ gx @ umap) for w, sign in rows]
        ineq_b = [sign * float(w @ fx) + lpm.FEAS_TOL for w, sign in rows]
        ineq_a.append(-(geom_aff.out_w @ gx @ umap))
        ineq_b.append(float(geom_aff.out_w @ fx) + lpm.FEAS_TOL)
        lp = lpm.LinearProgram(
            np.zeros(nv),
            np.empty((0, nv)),
            np.empty(0),
            np.array(ineq_a).reshape(len(ineq_a), nv),
            np.array(ineq_b),
            ulo,
            uhi,
        )
        try:
            if lpm.solve(lp).feasible:
                return True
        except lpm.NumericalFailure:
            continue
    return False
