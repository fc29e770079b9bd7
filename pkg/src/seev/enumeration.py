"""Enumeration of boundary activation regions and hinges.

The zero level set of the network is covered by activation regions whose
affine piece crosses zero.  Starting from one such region (found by
bisecting a segment between an unsafe and a safe sample), a breadth-first
search over single-neuron flips visits every region on the connected
boundary component; region intersections that still meet the zero level are
then grown into hinges of up to n members.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from . import linprog as lpm
from .network import ActivationSet, Network

MAX_BISECTION_STEPS = 64
DEFAULT_MAX_REGIONS = 10**6
DEFAULT_MAX_HINGES = 10**6


class InitialSetNotFound(RuntimeError):
    """No boundary activation set was found along any sample segment."""


class RegionBudgetExceeded(RuntimeError):
    pass


class HingeBudgetExceeded(RuntimeError):
    pass


@dataclass
class BoundaryCatalog:
    """Regions and hinges meeting the zero level, with feasible witnesses."""

    regions: set[ActivationSet]
    hinges: set[frozenset[ActivationSet]]
    witnesses: dict[ActivationSet, np.ndarray]
    hinge_witnesses: dict[frozenset[ActivationSet], np.ndarray] = field(default_factory=dict)

    @property
    def region_count(self) -> int:
        return len(self.regions)

    @property
    def hinge_count(self) -> int:
        return len(self.hinges)


def initial_activation_set(
    net: Network,
    unsafe_samples: np.ndarray,
    safe_samples: np.ndarray,
    box,
    max_pairs: Optional[int] = None,
) -> ActivationSet:
    """First boundary activation set along unsafe-to-safe sample segments.

    Pairs violating the sign precondition (b < 0 at the unsafe end, b > 0 at
    the safe end) are skipped.  Raises InitialSetNotFound when every pair is
    exhausted.
    """
    found = _initial_sets(net, unsafe_samples, safe_samples, box, first_only=True,
                          max_pairs=max_pairs)
    if not found:
        raise InitialSetNotFound("no sample pair produced a boundary activation set")
    return found[0]


def _initial_sets(
    net: Network,
    unsafe_samples: np.ndarray,
    safe_samples: np.ndarray,
    box,
    first_only: bool,
    max_pairs: Optional[int] = None,
) -> list[ActivationSet]:
    unsafe_samples = np.atleast_2d(np.asarray(unsafe_samples, dtype=float))
    safe_samples = np.atleast_2d(np.asarray(safe_samples, dtype=float))
    results: list[ActivationSet] = []
    seen: set[ActivationSet] = set()
    pairs = 0
    for xu in unsafe_samples:
        bu = net.forward(xu)
        if bu >= 0.0:
            continue
        for xs in safe_samples:
            if max_pairs is not None and pairs >= max_pairs:
                return results
            bs = net.forward(xs)
            if bs <= 0.0:
                continue
            pairs += 1
            pattern = _bisect_segment(net, xu, xs, box)
            if pattern is not None and pattern not in seen:
                seen.add(pattern)
                results.append(pattern)
                if first_only:
                    return results
    return results


def _bisect_segment(net: Network, x_neg: np.ndarray, x_pos: np.ndarray, box):
    """Bisection along the segment; returns the first pattern whose region
    provably meets the zero level, or None after the step budget."""
    lo, hi = x_neg.copy(), x_pos.copy()
    for _ in range(MAX_BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        pattern, _ = net.activation_pattern(mid)
        if lpm.boundary_lp(net, pattern, box).feasible:
            return pattern
        if net.forward(mid) > 0.0:
            hi = mid
        else:
            lo = mid
    return None


def nbfs(
    net: Network,
    start: ActivationSet,
    box,
    max_regions: int = DEFAULT_MAX_REGIONS,
    visited: Optional[set[ActivationSet]] = None,
    witnesses: Optional[dict[ActivationSet, np.ndarray]] = None,
) -> set[ActivationSet]:
    """Breadth-first closure of boundary regions reachable from `start`.

    A dequeued region is kept when its boundary program is feasible; its
    single-flip neighbors are enqueued whenever the unstable-neuron program
    over the region's bounding hypercube is feasible.
    """
    if witnesses is None:
        witnesses = {}
    regions: set[ActivationSet] = set()
    if visited is None:
        visited = set()
    queue: deque[ActivationSet] = deque()
    if start not in visited:
        queue.append(start)
        visited.add(start)
    while queue:
        pattern = queue.popleft()
        outcome = lpm.boundary_lp(net, pattern, box)
        if not outcome.feasible:
            continue
        regions.add(pattern)
        witnesses[pattern] = outcome.witness
        if len(regions) > max_regions:
            raise RegionBudgetExceeded(f"more than {max_regions} boundary regions")
        cube = lpm.bounding_box(net, pattern, box)
        for neuron in pattern.neurons():
            if not lpm.uslp(net, pattern, neuron, box, hypercube=cube).feasible:
                continue
            neighbor = pattern.flip(neuron)
            if neighbor not in visited:
                visited.add(neighbor)
                queue.append(neighbor)
    return regions


def _adjacent(a: ActivationSet, b: ActivationSet) -> bool:
    return a.symmetric_difference_size(b) == 1


def hinge_enum(
    net: Network,
    regions: Iterable[ActivationSet],
    n: int,
    box,
    max_hinges: int = DEFAULT_MAX_HINGES,
    skip_regions: Optional[set[ActivationSet]] = None,
    witnesses: Optional[dict[frozenset[ActivationSet], np.ndarray]] = None,
    stats: Optional[dict] = None,
) -> set[frozenset[ActivationSet]]:
    """Feasible hinges of 2..n regions, grown from adjacent pairs.

    Combinations whose members all lie in `skip_regions` (regions already
    discharged by the zero-input sufficient check) are skipped without
    solving: at any of their common boundary points the uncontrolled flow
    already points strictly inward for every piece, so nothing is left to
    verify there.  `stats['skipped_combinations']` counts those skips.
    """
    regions = list(regions)
    skip = skip_regions or set()
    hinges: set[frozenset[ActivationSet]] = set()
    if witnesses is None:
        witnesses = {}
    if stats is None:
        stats = {}
    stats.setdefault("skipped_combinations", 0)

    def feasible(combo: frozenset[ActivationSet]) -> bool:
        out = lpm.hinge_lp(net, combo, box)
        if out.feasible:
            witnesses[combo] = out.witness
            return True
        return False

    level: set[frozenset[ActivationSet]] = set()
    for idx, s in enumerate(regions):
        for other in regions[idx + 1 :]:
            if not _adjacent(s, other):
                continue
            combo = frozenset((s, other))
            if combo in level:
                continue
            if s in skip and other in skip:
                stats["skipped_combinations"] += 1
                continue
            if feasible(combo):
                level.add(combo)
                if len(hinges) + len(level) > max_hinges:
                    raise HingeBudgetExceeded(f"more than {max_hinges} hinges")
    hinges |= level

    for _ in range(3, n + 1):
        nxt: set[frozenset[ActivationSet]] = set()
        for combo in level:
            for s in regions:
                if s in combo:
                    continue
                if not any(_adjacent(s, member) for member in combo):
                    continue
                grown = frozenset(combo | {s})
                if grown in nxt or grown in hinges:
                    continue
                if all(member in skip for member in grown):
                    stats["skipped_combinations"] += 1
                    continue
                if feasible(grown):
                    nxt.add(grown)
                    if len(hinges) + len(nxt) > max_hinges:
                        raise HingeBudgetExceeded(f"more than {max_hinges} hinges")
        hinges |= nxt
        if not nxt:
            break
        level = nxt
    return hinges


def enumerate_boundary(
    net: Network,
    box,
    unsafe_samples: np.ndarray,
    safe_samples: np.ndarray,
    max_regions: int = DEFAULT_MAX_REGIONS,
    max_hinges: int = DEFAULT_MAX_HINGES,
    skip_regions: Optional[set[ActivationSet]] = None,
    max_pairs: Optional[int] = 64,
) -> BoundaryCatalog:
    """Full catalog: initial sets from all sample pairs, NBFS union, hinges.

    Distinct initial activation sets from different sample pairs seed
    separate searches so that disconnected boundary components are all
    covered.
    """
    seeds = _initial_sets(net, unsafe_samples, safe_samples, box, first_only=False,
                          max_pairs=max_pairs)
    if not seeds:
        raise InitialSetNotFound("no sample pair produced a boundary activation set")
    witnesses: dict[ActivationSet, np.ndarray] = {}
    visited: set[ActivationSet] = set()
    regions: set[ActivationSet] = set()
    for seed in seeds:
        if seed in regions:
            continue
        regions |= nbfs(net, seed, box, max_regions=max_regions, visited=visited,
                        witnesses=witnesses)
        if len(regions) > max_regions:
            raise RegionBudgetExceeded(f"more than {max_regions} boundary regions")
    hinge_wit: dict[frozenset[ActivationSet], np.ndarray] = {}
    n = net.n
    hinges = hinge_enum(net, sorted(regions, key=lambda s: s.masks), n, box,
                        max_hinges=max_hinges, skip_regions=skip_regions,
                        witnesses=hinge_wit)
    return BoundaryCatalog(regions, hinges, witnesses, hinge_wit)


def catalog_to_text(catalog: BoundaryCatalog) -> str:
    """Line-oriented rendering: regions (mask hex + witness), then hinges."""
    ordered = sorted(catalog.regions, key=lambda s: s.masks)
    index = {s: i for i, s in enumerate(ordered)}
    lines = []
    for s in ordered:
        w = catalog.witnesses.get(s)
        coords = " ".join(format(v, ".17g") for v in w) if w is not None else ""
        lines.append(f"region {s.to_hex()} {coords}".rstrip())
    for hinge in sorted(catalog.hinges, key=lambda h: sorted(s.masks for s in h)):
        ids = " ".join(str(index[s]) for s in sorted(hinge, key=lambda s: s.masks))
        lines.append(f"hinge {ids}")
    return "\n".join(lines) + "\n"
