"""ReLU feedforward networks and their exact piecewise-linear structure.

A scalar-output ReLU network splits the state space into polyhedral
activation regions.  Inside one region the network is affine, and both the
affine form and the region's defining inequalities can be recovered exactly
from the weights and the activation pattern.  Everything here is immutable
and pure, so the objects can be shared freely across worker threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

# A neuron with |pre-activation| at or below this is flagged unstable when
# evaluating in floating point.  The LP machinery never uses it: regions are
# closed polyhedra and z = 0 is handled there by exact equality constraints.
UNSTABLE_TOL = 1e-8


class DimensionError(ValueError):
    """Input or pattern shape does not match the network."""


@dataclass(frozen=True, eq=False)
class Network:
    """Weights of an L-layer scalar-output ReLU network.

    ``weights[i]`` has shape (M_i, M_{i-1}) with M_{-1} = n, ``biases[i]``
    has length M_i.  The output is ``out_weights @ relu(z_L) + out_bias``.
    """

    weights: tuple[np.ndarray, ...]
    biases: tuple[np.ndarray, ...]
    out_weights: np.ndarray
    out_bias: float

    def __post_init__(self):
        if len(self.weights) != len(self.biases) or not self.weights:
            raise DimensionError("need one weight matrix and bias vector per layer")
        ws = tuple(np.ascontiguousarray(w, dtype=float) for w in self.weights)
        bs = tuple(np.ascontiguousarray(b, dtype=float) for b in self.biases)
        ow = np.ascontiguousarray(self.out_weights, dtype=float)
        prev = ws[0].shape[1]
        for w, b in zip(ws, bs):
            if w.ndim != 2 or b.ndim != 1 or w.shape != (b.size, prev):
                raise DimensionError(f"layer shape mismatch: {w.shape} vs bias {b.shape}")
            prev = w.shape[0]
        if ow.shape != (prev,):
            raise DimensionError("output weight length must match last layer width")
        arrs = ws + bs + (ow,)
        if not all(np.isfinite(a).all() for a in arrs) or not np.isfinite(self.out_bias):
            raise ValueError("network parameters must be finite")
        for a in arrs:
            a.setflags(write=False)
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)
        object.__setattr__(self, "out_weights", ow)
        object.__setattr__(self, "out_bias", float(self.out_bias))
        object.__setattr__(self, "_affine_cache", {})

    @property
    def n(self) -> int:
        return self.weights[0].shape[1]

    @property
    def depth(self) -> int:
        return len(self.weights)

    @property
    def layer_sizes(self) -> tuple[int, ...]:
        return tuple(w.shape[0] for w in self.weights)

    @property
    def num_neurons(self) -> int:
        return sum(self.layer_sizes)

    def preactivations(self, x: np.ndarray) -> list[np.ndarray]:
        """Pre-activation vectors z^(i) at every layer, batched over leading axes."""
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.n:
            raise DimensionError(f"expected state dimension {self.n}, got {x.shape[-1]}")
        zs = []
        a = x
        for w, b in zip(self.weights, self.biases):
            z = a @ w.T + b
            zs.append(z)
            a = np.maximum(z, 0.0)
        return zs

    def forward(self, x: np.ndarray) -> float | np.ndarray:
        """Evaluate b(x).  `x` may carry leading batch axes."""
        zs = self.preactivations(x)
        out = np.maximum(zs[-1], 0.0) @ self.out_weights + self.out_bias
        return float(out) if out.ndim == 0 else out

    def gradient(self, x: np.ndarray) -> np.ndarray:
        """d b/d x at x, using the pattern with z = 0 counted active."""
        return self.region_affine(self.activation_pattern(x)[0]).out_w

    def activation_pattern(
        self, x: np.ndarray, tol: float = UNSTABLE_TOL
    ) -> tuple["ActivationSet", frozenset[tuple[int, int]]]:
        """Pattern S = {(i,j): z >= 0} and unstable set T = {(i,j): |z| <= tol}."""
        x = np.asarray(x, dtype=float)
        if x.ndim != 1:
            raise DimensionError("activation_pattern takes a single state")
        masks = []
        unstable = []
        for i, z in enumerate(self.preactivations(x)):
            m = 0
            for j, zj in enumerate(z):
                if zj >= 0.0:
                    m |= 1 << j
                if abs(zj) <= tol:
                    unstable.append((i, j))
            masks.append(m)
        return ActivationSet(tuple(masks), self.layer_sizes), frozenset(unstable)

    def region_affine(self, pattern: "ActivationSet") -> "RegionAffine":
        """Exact affine forms of every pre-activation and of b on region `pattern`."""
        cached = self._affine_cache.get(pattern)
        if cached is not None:
            return cached
        if pattern.sizes != self.layer_sizes:
            raise DimensionError("pattern shape does not match network")
        pre_w: list[np.ndarray] = []
        pre_r: list[np.ndarray] = []
        gw = np.empty(0)  # gated W-bar / r-bar of the previous layer
        gr = np.empty(0)
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            if i == 0:
                pw = w.copy()
                pr = b.copy()
            else:
                pw = w @ gw
                pr = w @ gr + b
            mask = pattern.layer_bools(i)
            pre_w.append(pw)
            pre_r.append(pr)
            gw = pw * mask[:, None]
            gr = pr * mask
        out_w = self.out_weights @ gw
        out_r = float(self.out_weights @ gr + self.out_bias)
        for a in pre_w + pre_r + [out_w]:
            a.setflags(write=False)
        aff = RegionAffine(tuple(pre_w), tuple(pre_r), out_w, out_r, pattern)
        self._affine_cache[pattern] = aff
        return aff

    def region_constraints(self, pattern: "ActivationSet") -> tuple[np.ndarray, np.ndarray]:
        """Closed region X(S) as rows (A, b) with A @ x <= b, one row per neuron.

        Active neurons contribute w.x + r >= 0, inactive ones w.x + r <= 0,
        with w, r the pre-activation affine forms under `pattern`.
        """
        aff = self.region_affine(pattern)
        rows = []
        rhs = []
        for i, (pw, pr) in enumerate(zip(aff.pre_w, aff.pre_r)):
            mask = pattern.layer_bools(i)
            sign = np.where(mask, -1.0, 1.0)[:, None]
            rows.append(pw * sign)
            rhs.append(np.where(mask, pr, -pr))
        return np.vstack(rows), np.concatenate(rhs)


@dataclass(frozen=True)
class ActivationSet:
    """Set of active-or-unstable neurons, as one bitmask per layer."""

    masks: tuple[int, ...]
    sizes: tuple[int, ...]

    def __post_init__(self):
        if len(self.masks) != len(self.sizes):
            raise DimensionError("one mask per layer required")
        for m, s in zip(self.masks, self.sizes):
            if m < 0 or m >> s:
                raise DimensionError("mask has bits outside the layer")

    def __contains__(self, neuron: tuple[int, int]) -> bool:
        i, j = neuron
        return bool((self.masks[i] >> j) & 1)

    def __len__(self) -> int:
        return sum(m.bit_count() for m in self.masks)

    def neurons(self) -> Iterator[tuple[int, int]]:
        """All neuron indices (i, j) of the underlying network, in order."""
        for i, s in enumerate(self.sizes):
            for j in range(s):
                yield (i, j)

    def members(self) -> Iterator[tuple[int, int]]:
        for i, m in enumerate(self.masks):
            while m:
                j = (m & -m).bit_length() - 1
                yield (i, j)
                m &= m - 1

    def layer_bools(self, i: int) -> np.ndarray:
        m = self.masks[i]
        return np.array([(m >> j) & 1 for j in range(self.sizes[i])], dtype=bool)

    def flip(self, neuron: tuple[int, int]) -> "ActivationSet":
        i, j = neuron
        masks = list(self.masks)
        masks[i] ^= 1 << j
        return ActivationSet(tuple(masks), self.sizes)

    def symmetric_difference_size(self, other: "ActivationSet") -> int:
        if self.sizes != other.sizes:
            raise DimensionError("patterns from different networks")
        return sum((a ^ b).bit_count() for a, b in zip(self.masks, other.masks))

    def to_hex(self) -> str:
        return ":".join(format(m, "x") for m in self.masks)

    @staticmethod
    def from_hex(text: str, sizes: Sequence[int]) -> "ActivationSet":
        masks = tuple(int(part, 16) for part in text.split(":"))
        return ActivationSet(masks, tuple(sizes))

    @staticmethod
    def from_members(
        members: Iterable[tuple[int, int]], sizes: Sequence[int]
    ) -> "ActivationSet":
        masks = [0] * len(sizes)
        for i, j in members:
            masks[i] |= 1 << j
        return ActivationSet(tuple(masks), tuple(sizes))


@dataclass(frozen=True, eq=False)
class RegionAffine:
    """Affine forms valid on one activation region.

    ``pre_w[i][j] @ x + pre_r[i][j]`` equals the pre-activation of neuron
    (i, j) for x in the region; ``out_w @ x + out_r`` equals b(x) there.
    The gated forms of the recursion (zero for neurons outside the pattern)
    are exposed via :meth:`gated_w` / :meth:`gated_r`.
    """

    pre_w: tuple[np.ndarray, ...]
    pre_r: tuple[np.ndarray, ...]
    out_w: np.ndarray
    out_r: float
    pattern: ActivationSet

    def gated_w(self, i: int) -> np.ndarray:
        return self.pre_w[i] * self.pattern.layer_bools(i)[:, None]

    def gated_r(self, i: int) -> np.ndarray:
        return self.pre_r[i] * self.pattern.layer_bools(i)

    def neuron_form(self, neuron: tuple[int, int]) -> tuple[np.ndarray, float]:
        i, j = neuron
        return self.pre_w[i][j], float(self.pre_r[i][j])


def save_weights(net: Network, path: str) -> None:
    """Write the line-oriented weights file (lossless decimal)."""

    def fmt(v: float) -> str:
        return format(float(v), ".17g")

    lines = [f"ncbf v1 n={net.n} layers={net.depth}"]
    for i, (w, b) in enumerate(zip(net.weights, net.biases), start=1):
        lines.append(f"layer {i} {w.shape[0]}")
        for row in w:
            lines.append(" ".join(fmt(v) for v in row))
        lines.append(" ".join(fmt(v) for v in b))
    lines.append("output")
    lines.append(" ".join(fmt(v) for v in net.out_weights))
    lines.append(fmt(net.out_bias))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def load_weights(path: str) -> Network:
    """Parse a weights file written by :func:`save_weights`."""
    with open(path) as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    header = lines[0].split()
    if len(header) != 4 or header[0] != "ncbf" or header[1] != "v1":
        raise ValueError(f"unrecognized weights header: {lines[0]!r}")
    n = int(header[2].removeprefix("n="))
    depth = int(header[3].removeprefix("layers="))
    pos = 1
    weights = []
    biases = []
    prev = n
    for i in range(depth):
        tag, idx, width = lines[pos].split()
        if tag != "layer" or int(idx) != i + 1:
            raise ValueError(f"expected layer {i + 1} marker, got {lines[pos]!r}")
        m = int(width)
        pos += 1
        w = np.array(
            [[float(v) for v in lines[pos + r].split()] for r in range(m)]
        ).reshape(m, prev)
        pos += m
        b = np.array([float(v) for v in lines[pos].split()])
        pos += 1
        weights.append(w)
        biases.append(b)
        prev = m
    if lines[pos] != "output":
        raise ValueError("missing output marker")
    pos += 1
    omega = np.array([float(v) for v in lines[pos].split()])
    psi = float(lines[pos + 1])
    return Network(tuple(weights), tuple(biases), omega, psi)
