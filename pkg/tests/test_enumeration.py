import itertools

import numpy as np
import pytest

from seev import enumeration as enu
from seev import linprog as lpm
from seev.network import ActivationSet

from conftest import fold_net_2d, random_net, two_layer_example

BOX1 = (np.array([-2.0]), np.array([2.0]))
BOX2 = (np.array([-2.0, -2.0]), np.array([2.0, 2.0]))


class TestInitialActivationSet:
    def test_two_layer_bisection(self):
        net = two_layer_example()
        s0 = enu.initial_activation_set(
            net, np.array([[-0.2]]), np.array([[2.0]]), BOX1
        )
        # the region containing x = 0.5 hosts the boundary
        expected, _ = net.activation_pattern(np.array([0.5]))
        assert s0 == expected

    def test_sign_violating_pairs_skipped(self):
        net = two_layer_example()
        # first "unsafe" sample has b > 0 and must be skipped
        s0 = enu.initial_activation_set(
            net, np.array([[1.5], [-0.2]]), np.array([[2.0]]), BOX1
        )
        assert lpm.boundary_lp(net, s0, BOX1).feasible

    def test_immediate_zero_hit(self):
        net = two_layer_example()
        # midpoint of (-0.2, 1.2) is 0.5, exactly on the zero level
        s0 = enu.initial_activation_set(
            net, np.array([[-0.2]]), np.array([[1.2]]), BOX1
        )
        expected, _ = net.activation_pattern(np.array([0.5]))
        assert s0 == expected

    def test_not_found(self):
        net = two_layer_example()
        with pytest.raises(enu.InitialSetNotFound):
            enu.initial_activation_set(net, np.array([[1.0]]), np.array([[2.0]]), BOX1)


def brute_force_regions(net, box):
    """All activation patterns whose region provably meets the zero level."""
    sizes = net.layer_sizes
    total = net.num_neurons
    found = {}
    for bits in range(1 << total):
        members = []
        k = 0
        for i, m in enumerate(sizes):
            for j in range(m):
                if (bits >> k) & 1:
                    members.append((i, j))
                k += 1
        s = ActivationSet.from_members(members, sizes)
        out = lpm.boundary_lp(net, s, box)
        if out.feasible:
            found[s] = out.witness
    return found


def connected_component(net, regions, start, box):
    """Component of `start` under exact pairwise zero-level adjacency."""
    regions = set(regions)
    comp = {start}
    frontier = [start]
    while frontier:
        cur = frontier.pop()
        for other in regions - comp:
            if cur.symmetric_difference_size(other) != 1:
                continue
            if lpm.hinge_lp(net, [cur, other], box).feasible:
                comp.add(other)
                frontier.append(other)
    return comp


class TestNbfs:
    def test_single_region_boundary(self):
        net = two_layer_example()
        s0, _ = net.activation_pattern(np.array([0.5]))
        regions = enu.nbfs(net, s0, BOX1)
        assert regions == {s0}

    def test_fold_net_regions(self):
        # |x1| - 0.5 in the plane: each zero line sits in its own component
        net = fold_net_2d(-0.5)
        s_right, _ = net.activation_pattern(np.array([0.5, 0.0]))
        s_left, _ = net.activation_pattern(np.array([-0.5, 0.0]))
        right = enu.nbfs(net, s_right, BOX2)
        assert right == {s_right}
        catalog = enu.enumerate_boundary(
            net, BOX2, np.array([[0.0, 0.0]]),
            np.array([[1.5, 0.0], [-1.5, 0.0]]),
        )
        assert catalog.regions == {s_right, s_left}

    def test_matches_brute_force_on_random_nets(self):
        rng = np.random.default_rng(101)
        done = 0
        while done < 8:
            net = random_net(rng, n=2, max_layers=2, max_total=7)
            oracle = brute_force_regions(net, BOX2)
            if not oracle:
                continue
            start = min(oracle, key=lambda s: s.masks)
            comp = connected_component(net, oracle, start, BOX2)
            got = enu.nbfs(net, start, BOX2)
            assert got == comp
            done += 1

    def test_region_budget(self):
        net = fold_net_2d(0.0)  # four patterns meet the zero level
        start, _ = net.activation_pattern(np.array([0.5, 0.0]))
        with pytest.raises(enu.RegionBudgetExceeded):
            enu.nbfs(net, start, BOX2, max_regions=1)


class TestHingeEnum:
    def test_single_region_no_hinge(self):
        net = two_layer_example()
        s0, _ = net.activation_pattern(np.array([0.5]))
        assert enu.hinge_enum(net, {s0}, 1, BOX1) == set()

    def test_fold_off_level_no_hinge(self):
        net = fold_net_2d(-0.5)
        catalog = enu.enumerate_boundary(
            net, BOX2, np.array([[0.0, 0.0]]),
            np.array([[1.5, 0.0], [-1.5, 0.0]]),
        )
        assert catalog.hinges == set()

    def test_fold_on_level_has_hinges(self):
        # b = |x1|: the fold line x1 = 0 lies exactly on the zero level
        net = fold_net_2d(0.0)
        s_right, _ = net.activation_pattern(np.array([0.5, 0.0]))
        regions = enu.nbfs(net, s_right, BOX2)
        hinges = enu.hinge_enum(net, regions, 2, BOX2)
        assert hinges, "fold on the zero level must produce hinges"
        for hinge in hinges:
            assert lpm.hinge_lp(net, hinge, BOX2).feasible

    def test_skip_regions_drops_all_discharged_combos(self):
        net = fold_net_2d(0.0)
        s_right, _ = net.activation_pattern(np.array([0.5, 0.0]))
        regions = enu.nbfs(net, s_right, BOX2)
        stats = {}
        hinges = enu.hinge_enum(net, regions, 2, BOX2, skip_regions=set(regions),
                                stats=stats)
        assert hinges == set()
        assert stats["skipped_combinations"] > 0


class TestEnumerateBoundary:
    def test_composition_on_fold(self):
        net = fold_net_2d(0.0)
        # b = |x1| has no negative samples; composition must surface that
        with pytest.raises(enu.InitialSetNotFound):
            enu.enumerate_boundary(net, BOX2, np.array([[0.5, 0.5]]),
                                   np.array([[1.0, 0.0]]))

    def test_catalog_well_formed(self):
        rng = np.random.default_rng(33)
        built = 0
        while built < 5:
            net = random_net(rng, n=2, max_layers=2, max_total=8)
            xs = rng.uniform(-2, 2, size=(64, 2))
            vals = net.forward(xs)
            unsafe = xs[vals < 0]
            safe = xs[vals > 0]
            if not unsafe.shape[0] or not safe.shape[0]:
                continue
            try:
                catalog = enu.enumerate_boundary(net, BOX2, unsafe, safe)
            except enu.InitialSetNotFound:
                continue
            built += 1
            for s in catalog.regions:
                assert lpm.boundary_lp(net, s, BOX2).feasible
                assert s in catalog.witnesses
            for hinge in catalog.hinges:
                assert hinge <= catalog.regions
                assert lpm.hinge_lp(net, hinge, BOX2).feasible

    def test_text_rendering(self):
        net = fold_net_2d(0.0)
        s_right, _ = net.activation_pattern(np.array([0.5, 0.0]))
        regions = enu.nbfs(net, s_right, BOX2)
        wit = {s: lpm.boundary_lp(net, s, BOX2).witness for s in regions}
        hinges = enu.hinge_enum(net, regions, 2, BOX2)
        catalog = enu.BoundaryCatalog(regions, hinges, wit)
        text = enu.catalog_to_text(catalog)
        region_lines = [ln for ln in text.splitlines() if ln.startswith("region")]
        hinge_lines = [ln for ln in text.splitlines() if ln.startswith("hinge")]
        assert len(region_lines) == len(regions)
        assert len(hinge_lines) == len(hinges)
