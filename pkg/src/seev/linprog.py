"""Dense two-phase simplex and the boundary feasibility programs.

The solver is deliberately small: problems here have at most a few dozen
constraints over at most eight variables, all with finite box bounds, so a
dense tableau with Bland's anti-cycling rule is both fast enough and easy to
trust.  Every Feasible witness is re-checked against the original program
before being returned.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .network import ActivationSet, Network

FEAS_TOL = 1e-7
PIVOT_TOL = 1e-12
_REDUCED_COST_TOL = 1e-9


class NumericalFailure(RuntimeError):
    """The simplex could not make progress with acceptable pivots."""


class LpStatus(enum.Enum):
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class LinearProgram:
    """minimize objective @ x  s.t.  A_eq x = b_eq, A_ub x <= b_ub, lo <= x <= hi."""

    objective: np.ndarray
    a_eq: np.ndarray
    b_eq: np.ndarray
    a_ub: np.ndarray
    b_ub: np.ndarray
    lo: np.ndarray
    hi: np.ndarray

    @staticmethod
    def build(
        n: int,
        objective: Optional[np.ndarray] = None,
        equalities: Sequence[tuple[np.ndarray, float]] = (),
        inequalities: Sequence[tuple[np.ndarray, float]] = (),
        box: Optional[tuple[np.ndarray, np.ndarray]] = None,
    ) -> "LinearProgram":
        c = np.zeros(n) if objective is None else np.asarray(objective, dtype=float)
        a_eq = np.array([a for a, _ in equalities], dtype=float).reshape(len(equalities), n)
        b_eq = np.array([b for _, b in equalities], dtype=float)
        a_ub = np.array([a for a, _ in inequalities], dtype=float).reshape(len(inequalities), n)
        b_ub = np.array([b for _, b in inequalities], dtype=float)
        if box is None:
            raise ValueError("a finite box is required")
        lo = np.asarray(box[0], dtype=float)
        hi = np.asarray(box[1], dtype=float)
        return LinearProgram(c, a_eq, b_eq, a_ub, b_ub, lo, hi)

    def check(self) -> None:
        n = self.objective.size
        if self.lo.shape != (n,) or self.hi.shape != (n,):
            raise ValueError("box shape mismatch")
        if not (np.isfinite(self.lo).all() and np.isfinite(self.hi).all()):
            raise ValueError("box bounds must be finite")
        if (self.lo > self.hi + FEAS_TOL).any():
            raise ValueError("box has lo > hi")
        for arr in (self.objective, self.a_eq, self.b_eq, self.a_ub, self.b_ub):
            if not np.isfinite(arr).all():
                raise ValueError("coefficients must be finite")


@dataclass(frozen=True)
class LpOutcome:
    status: LpStatus
    witness: Optional[np.ndarray] = None
    objective_value: Optional[float] = None

    @property
    def feasible(self) -> bool:
        return self.status is LpStatus.FEASIBLE


def _violation(lp: LinearProgram, x: np.ndarray) -> float:
    v = 0.0
    if lp.a_eq.size:
        v = max(v, float(np.abs(lp.a_eq @ x - lp.b_eq).max()))
    if lp.a_ub.size:
        v = max(v, float(np.maximum(lp.a_ub @ x - lp.b_ub, 0.0).max()))
    v = max(v, float(np.maximum(lp.lo - x, 0.0).max()))
    v = max(v, float(np.maximum(x - lp.hi, 0.0).max()))
    return v


def _bland_pivot(tab: np.ndarray, basis: np.ndarray, ncols: int) -> bool:
    """One simplex iteration on tableau rows [A | rhs] with cost in the last row.

    Returns False when the current basis is optimal.  Raises on unbounded
    columns (caller maps that to a status) or vanishing pivots.
    """
    cost = tab[-1, :ncols]
    entering = -1
    for j in range(ncols):
        if cost[j] < -_REDUCED_COST_TOL:
            entering = j
            break
    if entering < 0:
        return False
    col = tab[:-1, entering]
    rhs = tab[:-1, -1]
    best_ratio = np.inf
    leaving = -1
    degenerate_only_tiny = False
    for r in range(col.size):
        if col[r] > PIVOT_TOL:
            ratio = rhs[r] / col[r]
            if ratio < best_ratio - 1e-12 or (
                abs(ratio - best_ratio) <= 1e-12
                and (leaving < 0 or basis[r] < basis[leaving])
            ):
                best_ratio = ratio
                leaving = r
        elif col[r] > 0.0:
            degenerate_only_tiny = True
    if leaving < 0:
        if degenerate_only_tiny:
            raise NumericalFailure("pivot candidates below pivot tolerance")
        raise _Unbounded()
    piv = tab[leaving, entering]
    tab[leaving] /= piv
    coeffs = tab[:, entering].copy()
    coeffs[leaving] = 0.0
    tab -= np.outer(coeffs, tab[leaving])
    basis[leaving] = entering
    return True


class _Unbounded(Exception):
    pass


def solve(lp: LinearProgram) -> LpOutcome:
    """Two-phase simplex with Bland's rule; witnesses verified within FEAS_TOL."""
    lp.check()
    n = lp.objective.size
    lo, hi = lp.lo, lp.hi
    span = hi - lo

    # Shift to y = x - lo >= 0 and fold upper bounds in as inequality rows.
    rows_a: list[np.ndarray] = []
    rows_b: list[float] = []
    is_eq: list[bool] = []

    def add_ineq(a: np.ndarray, b: float) -> Optional[LpOutcome]:
        amax = float(np.abs(a).max()) if a.size else 0.0
        if amax == 0.0:
            if b < -FEAS_TOL:
                return LpOutcome(LpStatus.INFEASIBLE)
            return None
        rows_a.append(a)
        rows_b.append(b)
        is_eq.append(False)
        return None

    for a, b in zip(lp.a_ub, lp.b_ub):
        out = add_ineq(a, float(b - a @ lo))
        if out is not None:
            return out
    for k in range(n):
        e = np.zeros(n)
        e[k] = 1.0
        out = add_ineq(e, float(span[k]))
        if out is not None:
            return out
    for a, b in zip(lp.a_eq, lp.b_eq):
        bb = float(b - a @ lo)
        amax = float(np.abs(a).max()) if a.size else 0.0
        if amax == 0.0:
            if abs(bb) > FEAS_TOL:
                return LpOutcome(LpStatus.INFEASIBLE)
            continue
        rows_a.append(a)
        rows_b.append(bb)
        is_eq.append(True)

    m = len(rows_a)
    if m == 0:
        x = lo.copy()
        return LpOutcome(LpStatus.FEASIBLE, x, float(lp.objective @ x))

    amat = np.vstack(rows_a)
    bvec = np.array(rows_b)
    eq_mask = np.array(is_eq)

    # Slacks on inequality rows, then sign-normalize rhs, then artificials
    # wherever no slack survived with coefficient +1.
    n_slack = int((~eq_mask).sum())
    full = np.zeros((m, n + n_slack))
    full[:, :n] = amat
    slack_idx = np.where(~eq_mask)[0]
    for s, r in enumerate(slack_idx):
        full[r, n + s] = 1.0
    neg = bvec < 0
    full[neg] *= -1.0
    bvec = np.abs(bvec)

    needs_art = eq_mask | neg
    art_rows = np.where(needs_art)[0]
    n_art = art_rows.size
    ncols = n + n_slack + n_art
    tab = np.zeros((m + 1, ncols + 1))
    tab[:m, : n + n_slack] = full
    tab[:m, -1] = bvec
    basis = np.empty(m, dtype=int)
    for s, r in enumerate(slack_idx):
        basis[r] = n + s
    for a, r in enumerate(art_rows):
        tab[r, n + n_slack + a] = 1.0
        basis[r] = n + n_slack + a

    # Phase 1: minimize the sum of artificials.
    if n_art:
        tab[-1, n + n_slack : ncols] = 1.0
        for r in art_rows:
            tab[-1] -= tab[r]
        try:
            while _bland_pivot(tab, basis, ncols):
                pass
        except _Unbounded as exc:  # cannot happen: objective bounded below by 0
            raise NumericalFailure("phase-1 reported unbounded") from exc
        if tab[-1, -1] < -1e-8:
            return LpOutcome(LpStatus.INFEASIBLE)
        # Pivot remaining artificials out of the basis where possible.
        for r in range(m):
            if basis[r] >= n + n_slack:
                row = tab[r, : n + n_slack]
                cand = np.where(np.abs(row) > PIVOT_TOL)[0]
                if cand.size:
                    j = int(cand[0])
                    piv = tab[r, j]
                    tab[r] /= piv
                    coeffs = tab[:, j].copy()
                    coeffs[r] = 0.0
                    tab -= np.outer(coeffs, tab[r])
                    basis[r] = j
        # Rows still basic in an artificial are redundant; drop them along
        # with the artificial columns before phase 2.
        keep = [r for r in range(m) if basis[r] < n + n_slack]
        ncols = n + n_slack
        trimmed = np.zeros((len(keep) + 1, ncols + 1))
        trimmed[: len(keep), :ncols] = tab[keep][:, :ncols]
        trimmed[: len(keep), -1] = tab[keep][:, -1]
        tab = trimmed
        basis = basis[keep]
        m = len(keep)

    # Phase 2: install the real objective against the current basis.
    tab2 = np.zeros((m + 1, ncols + 1))
    tab2[:m, :ncols] = tab[:m, :ncols]
    tab2[:m, -1] = tab[:m, -1]
    tab2[-1, :n] = lp.objective
    for r in range(m):
        j = basis[r]
        if abs(tab2[-1, j]) > 0:
            tab2[-1] -= tab2[-1, j] * tab2[r]
    try:
        while _bland_pivot(tab2, basis, ncols):
            pass
    except _Unbounded:
        return LpOutcome(LpStatus.UNBOUNDED)

    y = np.zeros(ncols)
    y[basis] = tab2[:m, -1]
    x = y[:n] + lo
    if _violation(lp, x) > FEAS_TOL:
        raise NumericalFailure("witness violates constraints beyond tolerance")
    return LpOutcome(LpStatus.FEASIBLE, x, float(lp.objective @ x))


def _as_box(box) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = box
    return np.asarray(lo, dtype=float), np.asarray(hi, dtype=float)


def region_feasibility_rows(
    net: Network, pattern: ActivationSet
) -> tuple[np.ndarray, np.ndarray]:
    """Region inequality rows of X(S), dropping vacuous all-zero rows."""
    a, b = net.region_constraints(pattern)
    if a.size:
        nz = np.abs(a).max(axis=1) > 0.0
        bad = ~nz & (b < -FEAS_TOL)
        if bad.any():
            # Constant constraint violated: encode an infeasible row explicitly.
            row = np.zeros((1, net.n))
            return np.vstack([a[nz], row]), np.concatenate([b[nz], [-1.0]])
        a, b = a[nz], b[nz]
    return a, b


def boundary_lp(
    net: Network, pattern: ActivationSet, box, objective: Optional[np.ndarray] = None
) -> LpOutcome:
    """Feasibility of {b = 0} within the closed region X(S) and `box`."""
    lo, hi = _as_box(box)
    aff = net.region_affine(pattern)
    a_ub, b_ub = region_feasibility_rows(net, pattern)
    if a_ub.size and (np.abs(a_ub).max(axis=1) == 0.0).any():
        return LpOutcome(LpStatus.INFEASIBLE)
    if np.abs(aff.out_w).max() == 0.0 and abs(aff.out_r) > FEAS_TOL:
        return LpOutcome(LpStatus.INFEASIBLE)
    lp = LinearProgram(
        np.zeros(net.n) if objective is None else np.asarray(objective, dtype=float),
        aff.out_w.reshape(1, -1),
        np.array([-aff.out_r]),
        a_ub,
        b_ub,
        lo,
        hi,
    )
    return solve(lp)


def bounding_box(
    net: Network, pattern: ActivationSet, box
) -> Optional[tuple[np.ndarray, np.ndarray]]:
    """Tightest hypercube containing X(S) within `box`, via 2n LP solves.

    Returns None when the region does not meet `box` at all.
    """
    lo, hi = _as_box(box)
    a_ub, b_ub = region_feasibility_rows(net, pattern)
    n = net.n
    out_lo = np.empty(n)
    out_hi = np.empty(n)
    for k in range(n):
        c = np.zeros(n)
        c[k] = 1.0
        low = solve(LinearProgram(c, np.empty((0, n)), np.empty(0), a_ub, b_ub, lo, hi))
        if not low.feasible:
            return None
        high = solve(LinearProgram(-c, np.empty((0, n)), np.empty(0), a_ub, b_ub, lo, hi))
        out_lo[k] = low.witness[k]
        out_hi[k] = max(high.witness[k], out_lo[k])
    return out_lo, out_hi


def uslp(
    net: Network,
    pattern: ActivationSet,
    neuron: tuple[int, int],
    box,
    hypercube: Optional[tuple[np.ndarray, np.ndarray]] = None,
) -> LpOutcome:
    """Is the zero level of b reachable on the face of `neuron` near X(S)?

    Uses the hypercube relaxation H(S) in place of the full region
    constraints; pass `hypercube` to reuse a cached bounding_box result.
    """
    if hypercube is None:
        hypercube = bounding_box(net, pattern, box)
    if hypercube is None:
        return LpOutcome(LpStatus.INFEASIBLE)
    lo, hi = hypercube
    aff = net.region_affine(pattern)
    fw, fr = aff.neuron_form(neuron)
    eqs = []
    rhs = []
    for w, r in ((aff.out_w, aff.out_r), (fw, fr)):
        if np.abs(w).max() == 0.0:
            if abs(r) > FEAS_TOL:
                return LpOutcome(LpStatus.INFEASIBLE)
            continue
        eqs.append(w)
        rhs.append(-r)
    n = net.n
    lp = LinearProgram(
        np.zeros(n),
        np.array(eqs).reshape(len(eqs), n),
        np.array(rhs),
        np.empty((0, n)),
        np.empty(0),
        lo,
        hi,
    )
    return solve(lp)


def hinge_lp(net: Network, patterns, box) -> LpOutcome:
    """Joint feasibility of all regions' closures and their zero levels."""
    patterns = list(patterns)
    if len(patterns) < 2:
        raise ValueError("a hinge needs at least two activation sets")
    lo, hi = _as_box(box)
    n = net.n
    eqs = []
    rhs = []
    ineq_a = []
    ineq_b = []
    for s in patterns:
        aff = net.region_affine(s)
        if np.abs(aff.out_w).max() == 0.0:
            if abs(aff.out_r) > FEAS_TOL:
                return LpOutcome(LpStatus.INFEASIBLE)
        else:
            eqs.append(aff.out_w)
            rhs.append(-aff.out_r)
        a, b = region_feasibility_rows(net, s)
        if a.size and (np.abs(a).max(axis=1) == 0.0).any():
            return LpOutcome(LpStatus.INFEASIBLE)
        ineq_a.append(a)
        ineq_b.append(b)
    lp = LinearProgram(
        np.zeros(n),
        np.array(eqs).reshape(len(eqs), n),
        np.array(rhs),
        np.vstack(ineq_a) if ineq_a else np.empty((0, n)),
        np.concatenate(ineq_b) if ineq_b else np.empty(0),
        lo,
        hi,
    )
    return solve(lp)
