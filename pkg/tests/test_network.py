import numpy as np
import pytest

from seev.network import ActivationSet, DimensionError, Network, load_weights, save_weights

from conftest import random_net, two_layer_example


def one_neuron_net():
    return Network((np.array([[1.0]]),), (np.zeros(1),), np.array([1.0]), 0.0)


class TestForward:
    def test_identity_on_positive_halfline(self):
        assert one_neuron_net().forward(np.array([2.0])) == 2.0

    def test_relu_clamps(self):
        assert one_neuron_net().forward(np.array([-3.0])) == 0.0

    def test_two_layer_hand_value(self):
        assert two_layer_example().forward(np.array([1.0])) == pytest.approx(0.5)

    def test_dimension_mismatch(self):
        with pytest.raises(DimensionError):
            one_neuron_net().forward(np.array([1.0, 2.0]))

    def test_batched(self):
        net = two_layer_example()
        xs = np.array([[1.0], [-3.0], [0.5]])
        np.testing.assert_allclose(net.forward(xs), [0.5, 2.5, 0.0])


class TestActivationPattern:
    def test_positive_point(self):
        s, t = one_neuron_net().activation_pattern(np.array([2.0]))
        assert (0, 0) in s and not t

    def test_zero_is_active_and_unstable(self):
        s, t = one_neuron_net().activation_pattern(np.array([0.0]))
        assert (0, 0) in s and t == {(0, 0)}

    def test_three_neuron_signs(self):
        net = Network(
            (np.array([[1.0], [-1.0], [2.0]]),),
            (np.array([0.0, 0.0, -1.0]),),
            np.ones(3),
            0.0,
        )
        s, t = net.activation_pattern(np.array([0.25]))
        assert list(s.members()) == [(0, 0)]
        assert not t


class TestRegionAffine:
    def test_single_active(self):
        net = one_neuron_net()
        s = ActivationSet.from_members([(0, 0)], net.layer_sizes)
        aff = net.region_affine(s)
        assert aff.out_w[0] == 1.0 and aff.out_r == 0.0

    def test_all_inactive_zeroes(self):
        net = one_neuron_net()
        s = ActivationSet.from_members([], net.layer_sizes)
        aff = net.region_affine(s)
        assert aff.out_w[0] == 0.0 and aff.out_r == 0.0

    def test_two_layer_recursion(self):
        net = two_layer_example()
        s = ActivationSet.from_members([(0, 0), (1, 0)], net.layer_sizes)
        aff = net.region_affine(s)
        assert aff.out_w[0] == pytest.approx(1.0)
        assert aff.out_r == pytest.approx(-0.5)

    def test_shape_mismatch(self):
        net = two_layer_example()
        with pytest.raises(DimensionError):
            net.region_affine(ActivationSet.from_members([], (3, 1)))


class TestRegionConstraints:
    def test_half_line(self):
        net = one_neuron_net()
        s = ActivationSet.from_members([(0, 0)], net.layer_sizes)
        a, b = net.region_constraints(s)
        # single row -x <= 0
        assert a.shape == (1, 1) and a[0, 0] == -1.0 and b[0] == 0.0

    def test_complement(self):
        net = one_neuron_net()
        s = ActivationSet.from_members([], net.layer_sizes)
        a, b = net.region_constraints(s)
        assert a[0, 0] == 1.0 and b[0] == 0.0

    def test_two_layer_constraint_per_neuron(self):
        net = two_layer_example()
        s = ActivationSet.from_members([(0, 0), (1, 0)], net.layer_sizes)
        a, b = net.region_constraints(s)
        assert a.shape == (3, 1)
        # {x >= 0, -x <= 0, x >= 0} normalized to <= rows
        np.testing.assert_allclose(a.ravel(), [-1.0, -1.0, -1.0])
        np.testing.assert_allclose(b, [0.0, 0.0, 0.0])


class TestInvariants:
    def test_affine_exactness_random(self):
        rng = np.random.default_rng(42)
        checked = 0
        for _ in range(1000):
            n = int(rng.integers(1, 4))
            net = random_net(rng, n=n, max_layers=2, max_total=8)
            x = rng.uniform(-2, 2, size=n)
            zs = net.preactivations(x)
            if min(abs(z).min() for z in zs) <= 1e-8:
                continue
            s, _ = net.activation_pattern(x)
            aff = net.region_affine(s)
            val = net.forward(x)
            lin = float(aff.out_w @ x + aff.out_r)
            assert abs(val - lin) <= 1e-9 * max(1.0, abs(val))
            checked += 1
        assert checked > 900

    def test_region_membership(self):
        rng = np.random.default_rng(7)
        for _ in range(200):
            net = random_net(rng, n=2)
            x = rng.uniform(-2, 2, size=2)
            s, _ = net.activation_pattern(x)
            a, b = net.region_constraints(s)
            assert (a @ x <= b + 1e-9).all()

    def test_pattern_affine_forms_match_preactivations(self):
        rng = np.random.default_rng(9)
        for _ in range(200):
            net = random_net(rng, n=2)
            x = rng.uniform(-2, 2, size=2)
            s, _ = net.activation_pattern(x)
            aff = net.region_affine(s)
            zs = net.preactivations(x)
            for (i, j) in s.members():
                lin = float(aff.pre_w[i][j] @ x + aff.pre_r[i][j])
                assert abs(lin - zs[i][j]) <= 1e-9 * max(1.0, abs(zs[i][j]))

    def test_flip_changes_only_deeper_layers(self):
        rng = np.random.default_rng(11)
        net = random_net(rng, n=2, max_layers=2, max_total=8)
        while net.depth < 2:
            net = random_net(rng, n=2, max_layers=2, max_total=8)
        x = rng.uniform(-2, 2, size=2)
        s, _ = net.activation_pattern(x)
        neuron = (0, 0)
        flipped = s.flip(neuron)
        a0 = net.region_affine(s)
        a1 = net.region_affine(flipped)
        # Layer-1 pre-activation forms are independent of the pattern.
        np.testing.assert_allclose(a0.pre_w[0], a1.pre_w[0])
        # Deeper forms change only through the flipped neuron's gating.
        assert a0.pre_w[1].shape == a1.pre_w[1].shape


class TestActivationSet:
    def test_symmetric_difference(self):
        a = ActivationSet.from_members([(0, 0), (0, 2)], (3,))
        b = ActivationSet.from_members([(0, 2), (0, 1)], (3,))
        assert a.symmetric_difference_size(b) == 2
        assert a.flip((0, 1)).symmetric_difference_size(a) == 1

    def test_hash_equality(self):
        a = ActivationSet.from_members([(0, 1)], (3,))
        b = ActivationSet.from_members([(0, 1)], (3,))
        assert a == b and hash(a) == hash(b)
        assert len({a, b}) == 1

    def test_hex_roundtrip(self):
        a = ActivationSet.from_members([(0, 1), (1, 3)], (3, 5))
        assert ActivationSet.from_hex(a.to_hex(), (3, 5)) == a


class TestWeightsFile:
    def test_roundtrip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(3)
        net = random_net(rng, n=3, max_layers=2, max_total=9)
        path = tmp_path / "w.txt"
        save_weights(net, str(path))
        back = load_weights(str(path))
        for w0, w1 in zip(net.weights, back.weights):
            assert (w0 == w1).all()
        for b0, b1 in zip(net.biases, back.biases):
            assert (b0 == b1).all()
        assert (net.out_weights == back.out_weights).all()
        assert net.out_bias == back.out_bias

    def test_header_validation(self, tmp_path):
        path = tmp_path / "bad.txt"
        path.write_text("nope v2\n")
        with pytest.raises(ValueError):
            load_weights(str(path))
