import numpy as np
import pytest

from seev import controller as ctl
from seev.controller import FilterConfig, safe_control, simulate
from seev.intervals import Interval
from seev.network import Network
from seev.systems import InputSet, QuadraticForm, darboux, make_system

from conftest import diamond_net, radial_system


def linear_barrier_net():
    """b(x) = x1, exactly, via relu(x1) - relu(-x1)."""
    return Network(
        (np.array([[1.0, 0.0], [-1.0, 0.0]]),),
        (np.zeros(2),),
        np.array([1.0, -1.0]),
        0.0,
    )


def driftless_system(g_const=np.eye(2), input_set=None):
    hq = QuadraticForm(np.zeros((2, 2)), np.zeros(2), 1.0)
    return make_system(
        "driftless",
        f=lambda x: np.zeros(np.shape(x)),
        f_interval=lambda iv: [Interval.point(0.0)] * 2,
        box_lo=[-4.0, -4.0],
        box_hi=[4.0, 4.0],
        h=hq,
        h_interval=lambda iv: Interval.point(1.0),
        h_quadratic=hq,
        h_convex=True,
        g_const=g_const,
        input_set=input_set,
    )


class TestSafeControl:
    def test_halfspace_projection_on_boundary(self):
        system = driftless_system()
        net = linear_barrier_net()
        u, ok = safe_control(net, system, np.array([0.0, 0.3]), np.array([-1.0, 0.0]))
        assert ok
        np.testing.assert_allclose(u, [0.0, 0.0], atol=1e-9)

    def test_inactive_constraint_keeps_nominal(self):
        system = driftless_system()
        net = linear_barrier_net()
        u, ok = safe_control(net, system, np.array([1.5, 0.0]), np.array([-1.0, 0.0]))
        assert ok
        np.testing.assert_allclose(u, [-1.0, 0.0], atol=1e-9)

    def test_open_loop_rejected(self):
        with pytest.raises(ValueError):
            safe_control(diamond_net(), darboux(), np.zeros(2), np.zeros(0))

    def test_matches_analytic_projection(self):
        # random single-constraint cases: u* = u_nom + max(0, (b_rhs - a.u)/|a|^2) a
        system = driftless_system()
        net = linear_barrier_net()
        rng = np.random.default_rng(4)
        for _ in range(50):
            x = np.array([rng.uniform(0.0, 1.0), rng.uniform(-1, 1)])
            u_nom = rng.normal(size=2)
            gamma = float(rng.uniform(0.5, 2.0))
            u, ok = safe_control(net, system, x, u_nom, FilterConfig(gamma=gamma))
            assert ok
            a = np.array([1.0, 0.0])  # W.g with W = e1, g = I
            rhs = -gamma * x[0]
            gap = rhs - a @ u_nom
            expected = u_nom + max(0.0, gap) * a
            np.testing.assert_allclose(u, expected, atol=1e-8)

    def test_box_input_clipping(self):
        system = driftless_system(
            g_const=np.eye(2), input_set=InputSet.box(np.eye(2))
        )
        net = linear_barrier_net()
        # nominal far outside the box: filter must stay admissible
        u, ok = safe_control(net, system, np.array([0.5, 0.0]), np.array([3.0, -3.0]))
        assert ok
        assert np.abs(u).max() <= 1.0 + 1e-9

    def test_infeasible_flagged(self):
        # contradictory: boundary requires u1 >= 2 but the box caps at 1
        hq = QuadraticForm(np.zeros((2, 2)), np.zeros(2), 1.0)
        system = make_system(
            "pull",
            f=lambda x: np.broadcast_to(np.array([-2.0, 0.0]), np.shape(x)).copy(),
            f_interval=lambda iv: [Interval.point(-2.0), Interval.point(0.0)],
            box_lo=[-4, -4],
            box_hi=[4, 4],
            h=hq,
            h_interval=lambda iv: Interval.point(1.0),
            g_const=np.eye(2),
            input_set=InputSet.box(np.eye(2)),
        )
        net = linear_barrier_net()
        u, ok = safe_control(net, system, np.array([0.0, 0.0]), np.zeros(2))
        assert not ok
        assert np.abs(u).max() <= 1.0 + 1e-9


class TestSimulate:
    def test_filter_holds_barrier(self):
        system = driftless_system()
        net = linear_barrier_net()
        traj = simulate(net, system, np.array([0.2, 0.0]),
                        lambda x: np.array([-1.0, 0.0]), t_end=2.0, dt=1e-3)
        assert traj.min_barrier() >= -1e-6
        assert traj.filter_active.any()
        assert not traj.infeasible_steps.any()

    def test_zero_nominal_inward_drift_never_filters(self):
        system = radial_system()
        net = diamond_net()
        # radial system is open loop; integrate the contraction directly
        traj = simulate(net, system, np.array([0.1, 0.1]), t_end=1.0, dt=1e-3)
        assert traj.min_barrier() >= 0.0
        assert not traj.filter_active.any()

    def test_rejects_unsafe_start(self):
        system = radial_system()
        net = diamond_net()
        with pytest.raises(ValueError):
            simulate(net, system, np.array([1.5, 1.5]), t_end=0.1)

    def test_rk4_order_on_barrier_drift(self):
        # Richardson check: halving dt shrinks the terminal state error ~16x.
        sys_d = darboux()
        net = diamond_net(radius=0.4, center=(0.5, 1.0))
        x0 = np.array([0.5, 1.0])
        ref = simulate(net, sys_d, x0, t_end=0.2, dt=1e-4 / 4)
        assert not ref.truncated
        errs = []
        for dt in (1e-2, 5e-3):
            traj = simulate(net, sys_d, x0, t_end=0.2, dt=dt)
            assert not traj.truncated
            errs.append(np.abs(traj.states[-1] - ref.states[-1]).max())
        # fourth order: ratio ~ 16, allow slack
        assert errs[0] / max(errs[1], 1e-15) > 8.0

    def test_truncates_on_box_exit(self):
        hq = QuadraticForm(np.zeros((2, 2)), np.zeros(2), 1.0)
        runaway = make_system(
            "runaway",
            f=lambda x: np.broadcast_to(np.array([1.0, 0.0]), np.shape(x)).copy(),
            f_interval=lambda iv: [Interval.point(1.0), Interval.point(0.0)],
            box_lo=[-1, -1],
            box_hi=[1, 1],
            h=hq,
            h_interval=lambda iv: Interval.point(1.0),
        )
        net = diamond_net(radius=10.0)  # b > 0 across the whole box
        traj = simulate(net, runaway, np.zeros(2), t_end=5.0, dt=1e-2)
        assert traj.truncated
        assert traj.times[-1] < 5.0
