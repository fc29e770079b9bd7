"""End-to-end safety verification of a trained barrier network.

Pipeline: find an initial boundary region from sample pairs, enumerate the
boundary regions breadth-first, then check containment, hyperplane-flow and
hinge-flow conditions in that order (cheapest counterexamples first).  The
outcome is a report with categorized counterexamples, catalog statistics,
phase timings and a histogram of which check discharged each obligation.
"""

from __future__ import annotations

import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from . import conditions as cnd
from . import enumeration as enu
from .conditions import (
    ConditionVerdict,
    DischargePath,
    HingeGeometry,
    RegionGeometry,
    VerdictKind,
)
from .enumeration import BoundaryCatalog, InitialSetNotFound
from .network import ActivationSet, Network
from .systems import ControlAffineSystem

CATEGORIES = ("correctness", "hyperplane", "hinge")
CONDITION_IDS = {
    "correctness": "containment",
    "hyperplane": "flow-hyperplane",
    "hinge": "flow-hinge",
}


@dataclass(frozen=True)
class Counterexample:
    state: np.ndarray
    category: str
    condition: str
    regions: tuple[ActivationSet, ...]
    detail: str = ""

    def format_line(self) -> str:
        coords = " ".join(format(v, ".17g") for v in self.state)
        return f"CE {self.category} {self.condition} {coords}"


@dataclass
class VerificationReport:
    verified: bool
    counterexamples: list[Counterexample]
    undecided: list[tuple[str, str]]  # (category, description)
    region_count: int
    hinge_count: int
    t_hyperplane: float
    t_hinge: float
    discharge_histogram: Counter
    hinges_prefiltered: int = 0
    catalog: Optional[BoundaryCatalog] = None
    error: Optional[str] = None

    def ce_by_category(self, category: str) -> list[Counterexample]:
        return [ce for ce in self.counterexamples if ce.category == category]

    def sufficient_fraction(self, phase: str = "hyperplane") -> float:
        """Share of safe verdicts in `phase` discharged by a sufficient path."""
        total = 0
        fast = 0
        for (ph, path), count in self.discharge_histogram.items():
            if ph != phase:
                continue
            total += count
            if path in (
                DischargePath.SUFFICIENT_ZERO_INPUT.value,
                DischargePath.SUFFICIENT_SIGN_CONSENSUS.value,
                DischargePath.CONSTANT_G_NONZERO.value,
            ):
                fast += count
        return fast / total if total else 0.0

    def summary_lines(self) -> list[str]:
        lines = [
            f"verified {str(self.verified).lower()}",
            f"regions {self.region_count}",
            f"hinges {self.hinge_count}",
            f"t_h {self.t_hyperplane:.3f}",
            f"t_g {self.t_hinge:.3f}",
        ]
        for (phase, path), count in sorted(self.discharge_histogram.items()):
            lines.append(f"discharge {phase} {path} {count}")
        if self.hinges_prefiltered:
            lines.append(f"hinges_prefiltered {self.hinges_prefiltered}")
        for category, desc in self.undecided:
            lines.append(f"undecided {category} {desc}")
        lines.extend(ce.format_line() for ce in self.counterexamples)
        return lines


def _draw_samples(
    net: Network,
    system: ControlAffineSystem,
    rng: np.random.Generator,
    count: int,
) -> tuple[np.ndarray, np.ndarray]:
    states = system.sample_states(rng, count)
    unsafe = states[system.unsafe_contains(states)]
    floor = max(count // 16, 32)
    if unsafe.shape[0] < floor:
        extra = system.sample_unsafe(rng, floor)
        unsafe = np.vstack([unsafe, extra]) if extra.shape[0] else unsafe
    safe = system.sample_initial(rng, max(count // 8, 32))
    return unsafe, safe


def verify(
    net: Network,
    system: ControlAffineSystem,
    delta: float = 1e-4,
    fail_fast: bool = False,
    max_ces_per_category: int = 32,
    workers: int = 1,
    samples: Optional[tuple[np.ndarray, np.ndarray]] = None,
    sample_count: int = 2000,
    seed: int = 0,
    max_regions: int = enu.DEFAULT_MAX_REGIONS,
    max_hinges: int = enu.DEFAULT_MAX_HINGES,
    use_hinge_prefilter: bool = True,
    node_budget: int = 200_000,
) -> VerificationReport:
    """Run the full verification pipeline and assemble the report.

    Raises InitialSetNotFound when the zero level cannot be located from the
    samples; a network with no boundary in the domain is never reported as
    verified.
    """
    if net.n != system.n:
        raise ValueError("network and system dimensions differ")
    rng = np.random.default_rng(seed)
    if samples is None:
        unsafe, safe = _draw_samples(net, system, rng, sample_count)
    else:
        unsafe, safe = samples
    box = system.box

    histogram: Counter = Counter()
    ces: list[Counterexample] = []
    undecided: list[tuple[str, str]] = []

    t0 = time.perf_counter()
    seeds = enu._initial_sets(net, unsafe, safe, box, first_only=False, max_pairs=64)
    if not seeds:
        raise InitialSetNotFound("no boundary region found from the sample set")
    witnesses: dict[ActivationSet, np.ndarray] = {}
    visited: set[ActivationSet] = set()
    regions: set[ActivationSet] = set()
    for s0 in seeds:
        if s0 in regions:
            continue
        regions |= enu.nbfs(net, s0, box, max_regions=max_regions, visited=visited,
                            witnesses=witnesses)

    ordered = sorted(regions, key=lambda s: s.masks)
    geom_cache: dict[ActivationSet, RegionGeometry] = {}

    def build_geometry(s: ActivationSet) -> RegionGeometry:
        return cnd.region_geometry(net, s, box)

    geoms = _parallel_map(build_geometry, ordered, workers)
    for s, g in zip(ordered, geoms):
        geom_cache[s] = g

    def record(category: str, s_members, verdict: ConditionVerdict) -> bool:
        """Returns True when the caller should stop (fail-fast trip)."""
        if verdict.kind is VerdictKind.SAFE:
            histogram[(category, verdict.path.value)] += 1
            return False
        if verdict.kind is VerdictKind.COUNTEREXAMPLE:
            if len([c for c in ces if c.category == category]) < max_ces_per_category:
                ces.append(
                    Counterexample(
                        np.asarray(verdict.state, dtype=float),
                        category,
                        CONDITION_IDS[category],
                        tuple(s_members),
                        verdict.detail,
                    )
                )
            return fail_fast
        undecided.append((category, verdict.detail or "undecided"))
        return False

    stop = False

    def run_phase(category: str, items, check) -> None:
        nonlocal stop
        if stop:
            return
        verdicts = _parallel_map(check, items, workers)
        for item, verdict in zip(items, verdicts):
            members = item if isinstance(item, tuple) else (item,)
            if record(category, members, verdict):
                stop = True
                return

    run_phase(
        "correctness",
        ordered,
        lambda s: cnd.verify_correctness(net, system, geom_cache[s], delta=delta,
                                         node_budget=node_budget),
    )
    run_phase(
        "hyperplane",
        ordered,
        lambda s: cnd.verify_hyperplane(net, system, geom_cache[s], delta=delta,
                                        node_budget=node_budget),
    )
    t_h = time.perf_counter() - t0

    t1 = time.perf_counter()
    hinges: set[frozenset[ActivationSet]] = set()
    prefiltered = 0
    if not stop:
        skip: set[ActivationSet] = set()
        if use_hinge_prefilter:
            skip = {s for s in ordered if cnd.zero_input_discharged(system, geom_cache[s])}
        stats: dict[str, int] = {}
        hinges = enu.hinge_enum(net, ordered, net.n, box, max_hinges=max_hinges,
                                skip_regions=skip or None, stats=stats)
        prefiltered = stats.get("skipped_combinations", 0)
        if prefiltered:
            histogram[("hinge", DischargePath.SUFFICIENT_ZERO_INPUT.value)] += prefiltered

        hinge_list = sorted(hinges, key=lambda h: sorted(s.masks for s in h))
        hinge_geoms = _parallel_map(
            lambda h: cnd.hinge_geometry(net, h, box, geom_cache), hinge_list, workers
        )
        if not stop:
            verdicts = _parallel_map(
                lambda hg: cnd.verify_hinge(net, system, hg, delta=delta,
                                            node_budget=node_budget),
                hinge_geoms,
                workers,
            )
            for h, verdict in zip(hinge_list, verdicts):
                if record("hinge", tuple(sorted(h, key=lambda s: s.masks)), verdict):
                    stop = True
                    break
    t_g = time.perf_counter() - t1

    catalog = BoundaryCatalog(regions, hinges, witnesses)
    verified = not ces and not undecided and not stop
    return VerificationReport(
        verified=verified,
        counterexamples=ces,
        undecided=undecided,
        region_count=len(regions),
        hinge_count=len(hinges),
        t_hyperplane=t_h,
        t_hinge=t_g,
        discharge_histogram=histogram,
        hinges_prefiltered=prefiltered,
        catalog=catalog,
    )


def _parallel_map(fn, items, workers: int) -> list:
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))
