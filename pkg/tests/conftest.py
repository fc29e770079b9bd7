"""Shared fixtures: hand nets, toy systems, and a trained benchmark net."""

from __future__ import annotations

import numpy as np
import pytest

from seev.intervals import Interval
from seev.network import Network
from seev.systems import QuadraticForm, make_system


def two_layer_example() -> Network:
    """b(x) = relu(relu(x) + relu(-x)) - 0.5 = |x| - 0.5 on the line."""
    return Network(
        (np.array([[1.0], [-1.0]]), np.array([[1.0, 1.0]])),
        (np.zeros(2), np.zeros(1)),
        np.array([1.0]),
        -0.5,
    )


def fold_net_2d(psi: float) -> Network:
    """b(x) = |x1| + psi in the plane (two neurons sharing the fold x1 = 0)."""
    return Network(
        (np.array([[1.0, 0.0], [-1.0, 0.0]]),),
        (np.zeros(2),),
        np.array([1.0, 1.0]),
        psi,
    )


def diamond_net(radius: float = 0.5, center=(0.0, 0.0)) -> Network:
    """b(x) = radius - |x1 - c1| - |x2 - c2|; zero level is a diamond."""
    c1, c2 = center
    w = np.array([[1.0, 0.0], [-1.0, 0.0], [0.0, 1.0], [0.0, -1.0]])
    b = np.array([-c1, c1, -c2, c2])
    return Network((w,), (b,), np.array([-1.0, -1.0, -1.0, -1.0]), radius)


def random_net(
    rng: np.random.Generator,
    n: int = 2,
    max_layers: int = 2,
    max_total: int = 10,
    scale: float = 1.0,
) -> Network:
    depth = int(rng.integers(1, max_layers + 1))
    sizes = []
    remaining = max_total
    for i in range(depth):
        hi = max(1, remaining - (depth - i - 1))
        width = int(rng.integers(1, min(hi, 8) + 1))
        sizes.append(width)
        remaining -= width
    weights = []
    biases = []
    prev = n
    for width in sizes:
        weights.append(scale * rng.normal(size=(width, prev)))
        biases.append(scale * rng.normal(size=width) * 0.5)
        prev = width
    omega = scale * rng.normal(size=prev)
    psi = float(scale * rng.normal() * 0.5)
    return Network(tuple(weights), tuple(biases), omega, psi)


def radial_system(n: int = 2):
    """Contraction flow toward the origin with a far-away obstacle disc.

    Any small region around the origin is both invariant under f = -x and
    safely inside C, which makes hand-built barrier nets verifiable.
    """
    center = np.full(n, 1.5)
    hq = QuadraticForm(np.eye(n), -2.0 * center, float(center @ center) - 0.25)

    def h_interval(iv):
        total = Interval.point(hq.constant)
        for k in range(n):
            total = total + iv[k].square() + iv[k] * float(hq.q_vector[k])
        return total

    return make_system(
        "radial",
        f=lambda x: -np.asarray(x, dtype=float),
        f_interval=lambda iv: [-c for c in iv],
        box_lo=np.full(n, -2.0),
        box_hi=np.full(n, 2.0),
        h=hq,
        h_interval=h_interval,
        h_quadratic=hq,
        h_convex=True,
        initial_lo=np.full(n, -0.1),
        initial_hi=np.full(n, 0.1),
    )


@pytest.fixture(scope="session")
def trained_darboux():
    """One verifier-passing Darboux net, shared across the suite."""
    from seev import synthesis as syn
    from seev.systems import darboux

    system = darboux()
    for seed in (0, 1, 2):
        cfg = syn.config_for("darboux", seed=seed, layer_sizes=(8, 8))
        result = syn.train(system, cfg)
        if result.verified:
            return result.network, system, result.report
    pytest.fail("no Darboux seed produced a verified network")
