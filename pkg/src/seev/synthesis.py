"""Training of barrier networks with counterexample guidance.

A small numpy MLP engine (explicit reverse-mode gradients, ReLU subgradient
zero at the kink) trains against three loss terms: classification of
safe/unsafe samples, feasibility of the flow constraint through a
closed-form relaxed projection, and a boundary regularizer that pulls the
activation patterns of boundary samples together.  An outer loop invokes
the exact verifier once the samples classify cleanly and feeds any
counterexamples back into the dataset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from . import verifier as vfy
from .network import Network
from .systems import ControlAffineSystem


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainingConfig:
    layer_sizes: tuple[int, ...] = (8, 8)
    n_data: int = 5000
    a1: float = 100.0
    a2: float = 100.0
    lambda_f: float = 4.0
    lambda_c: float = 1.0
    lambda_b: float = 0.0
    n_cluster: int = 5
    k_sigmoid: float = 4.0
    eps_boundary: float = 1.0
    eps_margin: float = 0.01
    rho: float = 100.0
    learning_rate: float = 5e-3
    epochs: int = 50
    batch_size: int = 256
    seed: int = 0
    ce_guidance: bool = True
    max_ce_per_category: int = 32
    verify_delta: float = 1e-4
    verify_node_budget: int = 50_000
    verify_sample_count: int = 2000
    # The boundary regularizer only acts once classification is roughly in
    # place; applying it to an untrained net (where every sample passes the
    # |b| <= eps_boundary filter) collapses all activation patterns before a
    # boundary exists.
    reg_warmup_accuracy: float = 0.95

    def validate(self) -> None:
        if min(self.a1, self.a2, self.lambda_f, self.lambda_c, self.lambda_b) < 0:
            raise ValueError("loss weights must be nonnegative")
        if self.k_sigmoid <= 0 or self.eps_boundary <= 0 or self.eps_margin <= 0:
            raise ValueError("k, eps_boundary and eps_margin must be positive")


# Per-benchmark defaults for the published hyperparameter table.
SYSTEM_PRESETS: dict[str, dict] = {
    "darboux": dict(n_data=5000, a1=100.0, a2=100.0, lambda_f=4.0, lambda_c=1.0,
                    lambda_b=0.0),
    "hi_ord8": dict(n_data=50000, a1=100.0, a2=200.0, lambda_f=1.0, lambda_c=1.0,
                    lambda_b=0.0),
    "oa": dict(n_data=10000, a1=100.0, a2=100.0, lambda_f=2.0, lambda_c=1.0,
               lambda_b=10.0, n_cluster=5, k_sigmoid=4.0, eps_boundary=1.0),
    "sr": dict(n_data=10000, a1=100.0, a2=100.0, lambda_f=2.0, lambda_c=1.0,
               lambda_b=10.0, n_cluster=5, k_sigmoid=4.0, eps_boundary=1.0),
}


def config_for(system_name: str, **overrides) -> TrainingConfig:
    preset = SYSTEM_PRESETS.get(system_name.lower().replace("-", "_"), {})
    merged = {**preset, **overrides}
    cfg = TrainingConfig(**merged)
    cfg.validate()
    return cfg


@dataclass
class MLPParams:
    """Mutable training-time parameters; `network()` freezes a snapshot."""

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    omega: np.ndarray
    psi: float

    @staticmethod
    def init(n: int, layer_sizes: Sequence[int], rng: np.random.Generator) -> "MLPParams":
        weights = []
        biases = []
        prev = n
        for width in layer_sizes:
            bound = 1.0 / math.sqrt(prev)
            weights.append(rng.uniform(-bound, bound, size=(width, prev)))
            biases.append(rng.uniform(-bound, bound, size=width))
            prev = width
        bound = 1.0 / math.sqrt(prev)
        omega = rng.uniform(-bound, bound, size=prev)
        psi = float(rng.uniform(-bound, bound))
        return MLPParams(weights, biases, omega, psi)

    def network(self) -> Network:
        return Network(
            tuple(w.copy() for w in self.weights),
            tuple(b.copy() for b in self.biases),
            self.omega.copy(),
            self.psi,
        )

    def arrays(self) -> list[np.ndarray]:
        return [*self.weights, *self.biases, self.omega]


@dataclass
class Grads:
    weights: list[np.ndarray]
    biases: list[np.ndarray]
    omega: np.ndarray
    psi: float

    @staticmethod
    def zeros_like(p: MLPParams) -> "Grads":
        return Grads(
            [np.zeros_like(w) for w in p.weights],
            [np.zeros_like(b) for b in p.biases],
            np.zeros_like(p.omega),
            0.0,
        )

    def add_scaled(self, other: "Grads", scale: float) -> None:
        for a, b in zip(self.weights, other.weights):
            a += scale * b
        for a, b in zip(self.biases, other.biases):
            a += scale * b
        self.omega += scale * other.omega
        self.psi += scale * other.psi

    def finite(self) -> bool:
        return (
            all(np.isfinite(w).all() for w in self.weights)
            and all(np.isfinite(b).all() for b in self.biases)
            and np.isfinite(self.omega).all()
            and np.isfinite(self.psi)
        )


def forward_batch(p: MLPParams, x: np.ndarray):
    """Returns (pre-activations per layer, post-activations per layer, output)."""
    zs = []
    acts = []
    a = x
    for w, b in zip(p.weights, p.biases):
        z = a @ w.T + b
        zs.append(z)
        a = np.maximum(z, 0.0)
        acts.append(a)
    out = acts[-1] @ p.omega + p.psi
    return zs, acts, out


def backward_batch(
    p: MLPParams,
    x: np.ndarray,
    zs: list[np.ndarray],
    acts: list[np.ndarray],
    dout: np.ndarray,
    dz_extra: Optional[list[Optional[np.ndarray]]] = None,
) -> Grads:
    """Gradients of sum(dout * b(x)) plus injected per-layer z adjoints."""
    g = Grads.zeros_like(p)
    g.omega = acts[-1].T @ dout
    g.psi = float(dout.sum())
    da = np.outer(dout, p.omega)
    for i in range(len(p.weights) - 1, -1, -1):
        dz = da * (zs[i] > 0.0)
        if dz_extra is not None and dz_extra[i] is not None:
            dz = dz + dz_extra[i]
        prev = x if i == 0 else acts[i - 1]
        g.weights[i] = dz.T @ prev
        g.biases[i] = dz.sum(axis=0)
        da = dz @ p.weights[i]
    return g


def loss_correctness(
    p: MLPParams,
    safe: np.ndarray,
    unsafe: np.ndarray,
    a1: float,
    a2: float,
    eps: float,
) -> tuple[float, Grads]:
    """Hinge penalties pushing b positive on safe and negative on unsafe samples.

    Empty partitions contribute zero rather than an undefined mean.
    """
    total = 0.0
    g = Grads.zeros_like(p)
    if safe.shape[0]:
        zs, acts, out = forward_batch(p, safe)
        margin = eps - out
        active = margin > 0.0
        total += a1 * float(margin[active].sum()) / safe.shape[0]
        dout = np.where(active, -a1 / safe.shape[0], 0.0)
        g.add_scaled(backward_batch(p, safe, zs, acts, dout), 1.0)
    if unsafe.shape[0]:
        zs, acts, out = forward_batch(p, unsafe)
        margin = eps + out
        active = margin > 0.0
        total += a2 * float(margin[active].sum()) / unsafe.shape[0]
        dout = np.where(active, a2 / unsafe.shape[0], 0.0)
        g.add_scaled(backward_batch(p, unsafe, zs, acts, dout), 1.0)
    return total, g


def _region_gradient_chain(p: MLPParams, zs: list[np.ndarray]):
    """Per-sample masks, left vectors and propagation matrices for the
    piecewise gradient W(x) = d b/d x (z = 0 counted active)."""
    masks = [(z >= 0.0).astype(float) for z in zs]
    depth = len(p.weights)
    v = [None] * depth  # v[i]: (B, M_i), masked left chain at layer i
    vt = np.broadcast_to(p.omega, masks[-1].shape)
    v[depth - 1] = vt * masks[-1]
    for i in range(depth - 2, -1, -1):
        vt = v[i + 1] @ p.weights[i + 1]
        v[i] = vt * masks[i]
    w_bar = v[0] @ p.weights[0]  # (B, n)
    return masks, v, w_bar


def _backprop_through_gradient(
    p: MLPParams,
    masks: list[np.ndarray],
    v: list[np.ndarray],
    x: np.ndarray,
    d_wbar: np.ndarray,
) -> Grads:
    """Gradients of sum over batch of <d_wbar, W(x)> w.r.t. the parameters."""
    g = Grads.zeros_like(p)
    depth = len(p.weights)
    # r[i]: (B, M_i, n) propagation of the input through masked layers.
    r_prev_dot = d_wbar  # R_0 @ d_wbar with R_0 = I: (B, n)
    for i in range(depth):
        g.weights[i] += np.einsum("bi,bk->ik", v[i], r_prev_dot)
        r_prev_dot = np.einsum("bi,ik,bk->bi", masks[i], p.weights[i], r_prev_dot)
    g.omega += r_prev_dot.sum(axis=0)
    return g


def loss_feasibility(
    p: MLPParams,
    system: ControlAffineSystem,
    samples: np.ndarray,
    rho: float,
    u_nom: Optional[np.ndarray] = None,
) -> tuple[float, Grads]:
    """Closed-form relaxed projection loss for the flow constraint.

    Per sample the inner problem min ||u - u_nom||^2 + rho * r subject to
    W.(f + g u) + r >= 0, r >= 0 has the piecewise solution derived from its
    KKT system; the optimum value is the loss and its analytic gradient
    flows through the constraint coefficients.
    """
    if samples.shape[0] == 0:
        return 0.0, Grads.zeros_like(p)
    b = samples.shape[0]
    zs, _, _ = forward_batch(p, samples)
    masks, v, w_bar = _region_gradient_chain(p, zs)
    fx = system.f(samples)
    if u_nom is None:
        u_nom = np.zeros((b, system.m))
    if system.m:
        gx = system.g(samples)
        d_vec = fx + np.einsum("bnm,bm->bn", gx, u_nom)
        a_vec = np.einsum("bn,bnm->bm", w_bar, gx)
        q = (a_vec**2).sum(axis=1)
    else:
        gx = None
        d_vec = fx
        a_vec = np.zeros((b, 0))
        q = np.zeros(b)
    c_tilde = (w_bar * d_vec).sum(axis=1)

    viol = c_tilde < 0.0
    v_amt = -c_tilde
    full_move = viol & (q > 0.0) & (rho * q / 2.0 >= v_amt)
    partial = viol & (q > 0.0) & ~full_move
    relax_only = viol & (q == 0.0)

    loss = np.zeros(b)
    dc = np.zeros(b)
    dq = np.zeros(b)
    # Full move: control absorbs the violation, r = 0.
    loss[full_move] = v_amt[full_move] ** 2 / q[full_move]
    dc[full_move] = 2.0 * c_tilde[full_move] / q[full_move]
    dq[full_move] = -(v_amt[full_move] ** 2) / q[full_move] ** 2
    # Partial move: optimum splits between control and relaxation.
    loss[partial] = rho * v_amt[partial] - (rho**2) * q[partial] / 4.0
    dc[partial] = -rho
    dq[partial] = -(rho**2) / 4.0
    # No control authority: pure relaxation.
    loss[relax_only] = rho * v_amt[relax_only]
    dc[relax_only] = -rho

    total = float(loss.mean())
    dc /= b
    dq /= b
    d_wbar = dc[:, None] * d_vec
    if system.m:
        d_wbar = d_wbar + 2.0 * np.einsum("b,bm,bnm->bn", dq, a_vec, gx)
    g = _backprop_through_gradient(p, masks, v, samples, d_wbar)
    return total, g


def _kmeans(points: np.ndarray, k: int, rng: np.random.Generator, iters: int = 50):
    """Lloyd's algorithm with distance-weighted seeding; returns labels."""
    n = points.shape[0]
    k = min(k, n)
    centers = np.empty((k, points.shape[1]))
    first = rng.integers(n)
    centers[0] = points[first]
    d2 = ((points - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        total = d2.sum()
        if total <= 0:
            centers[j:] = points[rng.integers(n, size=k - j)]
            break
        probs = d2 / total
        centers[j] = points[rng.choice(n, p=probs)]
        d2 = np.minimum(d2, ((points - centers[j]) ** 2).sum(axis=1))
    labels = np.zeros(n, dtype=int)
    for _ in range(iters):
        dists = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_labels = dists.argmin(axis=1)
        if (new_labels == labels).all() and _ > 0:
            break
        labels = new_labels
        for j in range(k):
            mask = labels == j
            if mask.any():
                centers[j] = points[mask].mean(axis=0)
    return labels


def loss_boundary_reg(
    p: MLPParams,
    samples: np.ndarray,
    k_sigmoid: float,
    n_cluster: int,
    rng: np.random.Generator,
) -> tuple[float, Grads]:
    """Pairwise dissimilarity of smoothed activation patterns, per cluster.

    The smoothed pattern stacks a steep sigmoid of every pre-activation;
    clusters localize the penalty so only nearby boundary samples are pulled
    toward a common pattern.
    """
    if samples.shape[0] < 2:
        return 0.0, Grads.zeros_like(p)
    zs, acts, _ = forward_batch(p, samples)
    labels = _kmeans(samples, n_cluster, rng)
    clusters = [np.nonzero(labels == j)[0] for j in range(labels.max() + 1)]
    clusters = [idx for idx in clusters if idx.size]
    n_used = len(clusters)
    total = 0.0
    dz_extra = [np.zeros_like(z) for z in zs]
    for idx in clusters:
        count = idx.size
        if count < 2:
            continue
        for li, z in enumerate(zs):
            phi = 1.0 / (1.0 + np.exp(-k_sigmoid * z[idx]))
            mean = phi.mean(axis=0)
            diff = phi - mean
            # ordered-pair sum of squared distances = 2 N^2 Var / N^2 ... keep
            # the 1/count^2 normalization of the pairwise double sum.
            total += 2.0 * float((diff**2).sum()) / count / n_used
            dphi = (4.0 / count / n_used) * diff
            dz_extra[li][idx] += dphi * k_sigmoid * phi * (1.0 - phi)
    zero = np.zeros(samples.shape[0])
    g = backward_batch(p, samples, zs, acts, zero, dz_extra)
    return total, g


@dataclass
class EpochRecord:
    epoch: int
    loss_total: float
    loss_c: float
    loss_f: float
    loss_b: float
    boundary_patterns: int
    classification_ok: bool
    verified: bool
    ce_correctness: int = 0
    ce_hyperplane: int = 0
    ce_hinge: int = 0

    def csv_row(self) -> str:
        return ",".join(
            str(v)
            for v in (
                self.epoch,
                f"{self.loss_total:.6g}",
                f"{self.loss_c:.6g}",
                f"{self.loss_f:.6g}",
                f"{self.loss_b:.6g}",
                self.boundary_patterns,
                int(self.classification_ok),
                int(self.verified),
                self.ce_correctness,
                self.ce_hyperplane,
                self.ce_hinge,
            )
        )

    CSV_HEADER = "epoch,loss,loss_c,loss_f,loss_b,boundary_patterns,classified,verified,ce_correctness,ce_hyperplane,ce_hinge"


class _Adam:
    def __init__(self, p: MLPParams, lr: float):
        self.lr = lr
        self.beta1 = 0.9
        self.beta2 = 0.999
        self.eps = 1e-8
        self.t = 0
        self.m = Grads.zeros_like(p)
        self.v = Grads.zeros_like(p)

    def step(self, p: MLPParams, g: Grads) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1.0 - b1**self.t
        corr2 = 1.0 - b2**self.t

        def upd(param, grad, m, v):
            m *= b1
            m += (1 - b1) * grad
            v *= b2
            v += (1 - b2) * grad**2
            param -= self.lr * (m / corr1) / (np.sqrt(v / corr2) + self.eps)

        for w, gw, mw, vw in zip(p.weights, g.weights, self.m.weights, self.v.weights):
            upd(w, gw, mw, vw)
        for b, gb, mb, vb in zip(p.biases, g.biases, self.m.biases, self.v.biases):
            upd(b, gb, mb, vb)
        upd(p.omega, g.omega, self.m.omega, self.v.omega)
        self.m.psi = b1 * self.m.psi + (1 - b1) * g.psi
        self.v.psi = b2 * self.v.psi + (1 - b2) * g.psi**2
        p.psi -= self.lr * (self.m.psi / corr1) / (math.sqrt(self.v.psi / corr2) + self.eps)


@dataclass
class TrainResult:
    network: Network
    history: list[EpochRecord]
    verified: bool
    report: Optional[vfy.VerificationReport] = None


def train(
    system: ControlAffineSystem,
    cfg: TrainingConfig,
    progress: Optional[Callable[[EpochRecord], None]] = None,
) -> TrainResult:
    """Inner-loop gradient descent plus the counterexample-guided outer loop."""
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    params = MLPParams.init(system.n, cfg.layer_sizes, rng)
    opt = _Adam(params, cfg.learning_rate)

    states = system.sample_states(rng, cfg.n_data)
    # The initial and unsafe sets can occupy a vanishing fraction of the
    # box; top the partitions up from the dedicated samplers so both loss
    # terms and the classification gate see real mass.
    floor = max(cfg.n_data // 10, 64)
    if int(system.initial_contains(states).sum()) < floor:
        states = np.vstack([states, system.sample_initial(rng, floor)])
    if int(system.unsafe_contains(states).sum()) < floor:
        extra = system.sample_unsafe(rng, floor)
        if extra.shape[0]:
            states = np.vstack([states, extra])
    safe_mask = system.initial_contains(states)
    unsafe_mask = system.unsafe_contains(states)
    safe = states[safe_mask]
    unsafe = states[unsafe_mask]
    ce_boundary = np.empty((0, system.n))

    history: list[EpochRecord] = []
    last_report: Optional[vfy.VerificationReport] = None
    verified = False
    reg_active = False

    for epoch in range(cfg.epochs):
        if cfg.lambda_b > 0 and not reg_active:
            net_now = params.network()
            safe_acc = (
                float((net_now.forward(safe) > 0.0).mean()) if safe.shape[0] else 1.0
            )
            unsafe_acc = (
                float((net_now.forward(unsafe) < 0.0).mean()) if unsafe.shape[0] else 1.0
            )
            # Both classes must be nearly separated before the pattern
            # regularizer may act, or it flattens the boundary away.
            reg_active = min(safe_acc, unsafe_acc) >= cfg.reg_warmup_accuracy
        order = rng.permutation(states.shape[0])
        sums = np.zeros(3)
        batches = 0
        for start in range(0, order.size, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            batch = states[idx]
            b_safe = batch[system.initial_contains(batch)]
            b_unsafe = batch[system.unsafe_contains(batch)]
            lc, gc = loss_correctness(params, b_safe, b_unsafe, cfg.a1, cfg.a2,
                                      cfg.eps_margin)
            _, _, out = forward_batch(params, batch)
            # Range-based boundary band: the threshold is calibrated to the
            # batch output scale so that small-valued networks still yield a
            # band around the zero level rather than the whole batch.
            absout = np.abs(out)
            eps_eff = min(cfg.eps_boundary, float(np.quantile(absout, 0.25)))
            near = batch[absout <= eps_eff]
            if ce_boundary.shape[0]:
                near = np.vstack([near, ce_boundary])
            lf = lb = 0.0
            g_total = Grads.zeros_like(params)
            g_total.add_scaled(gc, cfg.lambda_c)
            if cfg.lambda_f > 0 and near.shape[0]:
                lf, gf = loss_feasibility(params, system, near, cfg.rho)
                g_total.add_scaled(gf, cfg.lambda_f)
            if cfg.lambda_b > 0 and reg_active and near.shape[0] >= 2:
                lb, gb = loss_boundary_reg(params, near, cfg.k_sigmoid,
                                           cfg.n_cluster, rng)
                g_total.add_scaled(gb, cfg.lambda_b)
            total = cfg.lambda_c * lc + cfg.lambda_f * lf + cfg.lambda_b * lb
            if not math.isfinite(total) or not g_total.finite():
                raise TrainingDiverged(
                    f"non-finite loss at epoch {epoch}: "
                    f"L_c={lc:.3g} L_f={lf:.3g} L_B={lb:.3g}"
                )
            opt.step(params, g_total)
            sums += (lc, lf, lb)
            batches += 1

        net = params.network()
        b_all = net.forward(states)
        boundary_patterns = _distinct_patterns(net, states[np.abs(b_all) <= cfg.eps_boundary])
        class_ok = bool(
            (net.forward(safe) > 0.0).all() if safe.shape[0] else True
        ) and bool((net.forward(unsafe) < 0.0).all() if unsafe.shape[0] else True)

        rec = EpochRecord(
            epoch=epoch,
            loss_total=float(sums @ np.array([cfg.lambda_c, cfg.lambda_f, cfg.lambda_b]) / max(batches, 1)),
            loss_c=sums[0] / max(batches, 1),
            loss_f=sums[1] / max(batches, 1),
            loss_b=sums[2] / max(batches, 1),
            boundary_patterns=boundary_patterns,
            classification_ok=class_ok,
            verified=False,
        )

        if class_ok and cfg.ce_guidance:
            try:
                report = vfy.verify(
                    net,
                    system,
                    delta=cfg.verify_delta,
                    max_ces_per_category=cfg.max_ce_per_category,
                    sample_count=cfg.verify_sample_count,
                    seed=cfg.seed + 1,
                    node_budget=cfg.verify_node_budget,
                )
                last_report = report
                if report.verified:
                    rec.verified = True
                    verified = True
                    history.append(rec)
                    if progress:
                        progress(rec)
                    break
                # Correctness counterexamples refine the unsafe partition
                # first; flow counterexamples join the boundary pool.
                for category, target in (
                    ("correctness", "unsafe"),
                    ("hyperplane", "boundary"),
                    ("hinge", "boundary"),
                ):
                    ces = report.ce_by_category(category)
                    if not ces:
                        continue
                    pts = np.array([ce.state for ce in ces])
                    if target == "unsafe":
                        unsafe = np.vstack([unsafe, pts])
                        states = np.vstack([states, pts])
                        rec.ce_correctness = len(ces)
                    else:
                        ce_boundary = np.vstack([ce_boundary, pts])
                        states = np.vstack([states, pts])
                        if category == "hyperplane":
                            rec.ce_hyperplane = len(ces)
                        else:
                            rec.ce_hinge = len(ces)
            except vfy.InitialSetNotFound:
                pass
        history.append(rec)
        if progress:
            progress(rec)

    return TrainResult(params.network(), history, verified, last_report)


def _distinct_patterns(net: Network, samples: np.ndarray) -> int:
    if samples.shape[0] == 0:
        return 0
    seen = set()
    for x in samples[:2000]:
        seen.add(net.activation_pattern(x)[0])
    return len(seen)
