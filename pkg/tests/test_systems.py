import math

import numpy as np
import pytest

from seev.systems import InputKind, by_name, darboux, hi_ord8, obstacle_avoidance, spacecraft_rendezvous


class TestDarboux:
    def test_vector_field_values(self):
        sys_d = darboux()
        np.testing.assert_allclose(sys_d.f(np.array([1.0, 1.0])), [3.0, 0.0])
        np.testing.assert_allclose(sys_d.f(np.zeros(2)), [0.0, 0.0])

    def test_safe_function(self):
        sys_d = darboux()
        assert sys_d.h(np.array([-1.0, 2.0])) == pytest.approx(3.0)
        assert sys_d.m == 0 and sys_d.input_set.kind is InputKind.NONE

    def test_geometry(self):
        sys_d = darboux()
        np.testing.assert_allclose(sys_d.box_lo, [-2, -2])
        assert sys_d.initial_contains(np.array([0.5, 1.5]))
        assert not sys_d.initial_contains(np.array([-0.5, 1.5]))


class TestObstacleAvoidance:
    def test_drift(self):
        sys_oa = obstacle_avoidance()
        np.testing.assert_allclose(
            sys_oa.f(np.array([0.3, 0.4, 0.0])), [0.0, 1.0, 0.0], atol=1e-15
        )

    def test_constant_input_matrix(self):
        sys_oa = obstacle_avoidance()
        np.testing.assert_allclose(sys_oa.constant_g.ravel(), [0.0, 0.0, 1.0])

    def test_obstacle_boundary(self):
        sys_oa = obstacle_avoidance()
        assert sys_oa.h(np.array([0.2, 0.0, 1.0])) == pytest.approx(0.0, abs=1e-12)

    def test_speed_override(self):
        sys_oa = obstacle_avoidance(speed=2.0)
        np.testing.assert_allclose(
            sys_oa.f(np.array([0.0, 0.0, math.pi / 2.0]))[:2], [2.0, 0.0], atol=1e-12
        )


class TestSpacecraftRendezvous:
    def test_input_block(self):
        sys_sr = spacecraft_rendezvous()
        assert np.linalg.matrix_rank(sys_sr.constant_g) == 3
        np.testing.assert_allclose(sys_sr.constant_g[:3], np.zeros((3, 3)))

    def test_keepout_radius(self):
        sys_sr = spacecraft_rendezvous()
        x = np.zeros(6)
        x[0] = 0.25
        assert sys_sr.h(x) == pytest.approx(0.0)

    def test_relative_dynamics(self):
        sys_sr = spacecraft_rendezvous(mean_motion=1.0)
        e1 = np.zeros(6)
        e1[0] = 1.0
        np.testing.assert_allclose(sys_sr.f(e1), [0, 0, 0, 3.0, 0, 0])
        # velocity coupling: moving along +y velocity accelerates +x
        e5 = np.zeros(6)
        e5[4] = 1.0
        np.testing.assert_allclose(sys_sr.f(e5), [0, 1.0, 0, 2.0, 0, 0])


class TestHiOrd8:
    def test_companion_last_row(self):
        sys_h8 = hi_ord8()
        coeff = np.array([576.0, 2400.0, 4180.0, 3980.0, 2273.0, 800.0, 170.0, 20.0])
        rng = np.random.default_rng(0)
        x = rng.normal(size=8)
        fx = sys_h8.f(x)
        np.testing.assert_allclose(fx[:7], x[1:])
        assert fx[7] == pytest.approx(-(coeff @ x))

    def test_origin_equilibrium(self):
        assert np.abs(hi_ord8().f(np.zeros(8))).max() == 0.0

    def test_unsafe_corner(self):
        sys_h8 = hi_ord8()
        assert sys_h8.h(np.full(8, -2.0)) == pytest.approx(-3.0)

    def test_constant_reading_flag(self):
        sys_lit = hi_ord8(constant_as_affine_term=True)
        fx = sys_lit.f(np.zeros(8))
        assert fx[7] == pytest.approx(-576.0)


class TestSampling:
    @pytest.mark.parametrize("name", ["darboux", "oa", "sr", "hi_ord8"])
    def test_initial_set_inside_safe_set(self, name):
        system = by_name(name)
        rng = np.random.default_rng(2)
        xs = system.sample_initial(rng, 5000)
        assert xs.shape == (5000, system.n)
        assert bool((system.h(xs) >= 0).all()), "initial set must sit inside the safe set"
        assert bool(system.initial_contains(xs).all())

    @pytest.mark.parametrize("name", ["darboux", "oa", "sr", "hi_ord8"])
    def test_state_sampler_in_box(self, name):
        system = by_name(name)
        rng = np.random.default_rng(3)
        xs = system.sample_states(rng, 256)
        assert (xs >= system.box_lo).all() and (xs <= system.box_hi).all()

    def test_unknown_name(self):
        with pytest.raises(KeyError):
            by_name("pendulum")
