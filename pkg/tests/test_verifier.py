import numpy as np
import pytest

from seev import verifier as vfy
from seev.enumeration import InitialSetNotFound

from conftest import diamond_net, radial_system


class TestVerify:
    def test_hand_net_verifies(self):
        system = radial_system()
        report = vfy.verify(diamond_net(), system, seed=3)
        assert report.verified
        assert not report.counterexamples
        assert not report.undecided
        assert report.region_count > 0

    def test_poking_outside_safe_set(self):
        system = radial_system()
        # diamond large enough to reach the obstacle disc at (1.5, 1.5)
        net = diamond_net(radius=2.9)
        report = vfy.verify(net, system, seed=3)
        assert not report.verified
        ces = report.ce_by_category("correctness")
        assert ces
        for ce in ces:
            assert float(system.h(ce.state)) < 0.0

    def test_vacuous_boundary_is_an_error(self):
        system = radial_system()
        net = diamond_net(radius=50.0)  # b > 0 on the whole box
        with pytest.raises(InitialSetNotFound):
            vfy.verify(net, system, seed=3)

    def test_dimension_mismatch(self):
        from seev.systems import darboux
        from conftest import two_layer_example

        with pytest.raises(ValueError):
            vfy.verify(two_layer_example(), darboux())

    def test_fail_fast_stops_early(self):
        system = radial_system()
        net = diamond_net(radius=2.9)
        full = vfy.verify(net, system, seed=3)
        fast = vfy.verify(net, system, seed=3, fail_fast=True)
        assert not fast.verified
        assert len(fast.counterexamples) == 1
        assert len(full.counterexamples) >= len(fast.counterexamples)

    def test_ce_cap_respected(self):
        system = radial_system()
        net = diamond_net(radius=2.9)
        report = vfy.verify(net, system, seed=3, max_ces_per_category=2)
        assert len(report.ce_by_category("correctness")) <= 2

    def test_workers_agree_with_serial(self):
        system = radial_system()
        net = diamond_net()
        serial = vfy.verify(net, system, seed=3, workers=1)
        threaded = vfy.verify(net, system, seed=3, workers=4)
        assert serial.verified == threaded.verified
        assert serial.region_count == threaded.region_count
        assert serial.hinge_count == threaded.hinge_count
        assert serial.discharge_histogram == threaded.discharge_histogram

    def test_report_lines_roundtrip(self):
        system = radial_system()
        report = vfy.verify(diamond_net(), system, seed=3)
        lines = report.summary_lines()
        assert lines[0] == "verified true"
        assert any(ln.startswith("regions ") for ln in lines)
        assert any(ln.startswith("t_h ") for ln in lines)

    def test_ce_line_format(self):
        system = radial_system()
        net = diamond_net(radius=2.9)
        report = vfy.verify(net, system, seed=3)
        line = report.counterexamples[0].format_line()
        parts = line.split()
        assert parts[0] == "CE"
        assert parts[1] == "correctness"
        assert parts[2] == "containment"
        assert len(parts) == 3 + system.n

    def test_trained_darboux_report(self, trained_darboux):
        net, system, report = trained_darboux
        assert report.verified
        # no hinge work pending means the hinge phase cost is bookkeeping only
        assert report.hinge_count >= 0
        assert report.t_hinge < report.t_hyperplane + 5.0
