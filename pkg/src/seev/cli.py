"""Command-line entry point: train / verify / enumerate / simulate / bench.

Every run writes a small manifest next to its outputs so results can be
reproduced from the recorded configuration and seed.  All file formats are
plain text.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from . import controller as ctl
from . import enumeration as enu
from . import synthesis as syn
from . import systems as sysmod
from . import verifier as vfy
from .network import load_weights, save_weights

SYSTEM_OVERRIDE_KEYS = ("v", "n_mean", "d_matrix", "hi_ord8_affine")


def _parse_config_file(path: str) -> dict:
    values: dict[str, str] = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ValueError(f"bad config line: {line!r}")
            key, _, val = line.partition("=")
            values[key.strip()] = val.strip()
    return values


def _parse_layers(text: str) -> tuple[int, ...]:
    text = text.strip().lower()
    if "x" in text:
        depth, width = text.split("x")
        return tuple([int(width)] * int(depth))
    return tuple(int(v) for v in text.split(",") if v)


_CONFIG_KEYS = {
    "N_data": ("n_data", int),
    "a1": ("a1", float),
    "a2": ("a2", float),
    "lambda_f": ("lambda_f", float),
    "lambda_c": ("lambda_c", float),
    "lambda_B": ("lambda_b", float),
    "n_cluster": ("n_cluster", int),
    "k_sigmoid": ("k_sigmoid", float),
    "eps_boundary": ("eps_boundary", float),
    "eps_margin": ("eps_margin", float),
    "rho": ("rho", float),
    "lr": ("learning_rate", float),
    "epochs": ("epochs", int),
    "batch_size": ("batch_size", int),
    "layers": ("layer_sizes", _parse_layers),
    "ce_guidance": ("ce_guidance", lambda v: v.lower() in ("1", "true", "yes")),
}


def _build_system(name: str, raw: dict) -> sysmod.ControlAffineSystem:
    overrides = {}
    if "v" in raw and name.lower() in ("oa", "obstacle_avoidance"):
        overrides["speed"] = float(raw["v"])
    if "n_mean" in raw and name.lower() in ("sr", "spacecraft_rendezvous"):
        overrides["mean_motion"] = float(raw["n_mean"])
    if "hi_ord8_affine" in raw and name.lower() in ("hi_ord8", "hiord8"):
        overrides["constant_as_affine_term"] = raw["hi_ord8_affine"].lower() in (
            "1", "true", "yes",
        )
    system = sysmod.by_name(name, **overrides)
    if "d_matrix" in raw and system.m:
        rows = [
            [float(v) for v in row.split(",")] for row in raw["d_matrix"].split(";")
        ]
        d = np.array(rows)
        return sysmod.by_name(name, input_set=sysmod.InputSet.box(d), **overrides)
    return system


def _training_config(raw: dict, system_name: str, seed: int) -> syn.TrainingConfig:
    overrides = {}
    for key, (attr, conv) in _CONFIG_KEYS.items():
        if key in raw:
            overrides[attr] = conv(raw[key])
    overrides["seed"] = seed
    return syn.config_for(system_name, **overrides)


def _write_manifest(out_dir: Path, subcommand: str, args: argparse.Namespace,
                    resolved: dict, artifacts: list[str]) -> None:
    lines = [
        f"subcommand={subcommand}",
        f"version={__version__}",
        f"numpy={np.__version__}",
        f"seed={getattr(args, 'seed', '')}",
        f"workers={getattr(args, 'workers', 1)}",
    ]
    for key in sorted(resolved):
        lines.append(f"config.{key}={resolved[key]}")
    for art in artifacts:
        lines.append(f"artifact={art}")
    (out_dir / "run.manifest").write_text("\n".join(lines) + "\n")


def _workers(args: argparse.Namespace) -> int:
    if args.workers is not None:
        return args.workers
    env = os.environ.get("SEEV_WORKERS")
    return int(env) if env else 1


def cmd_train(args: argparse.Namespace) -> int:
    raw = _parse_config_file(args.config) if args.config else {}
    system = _build_system(args.system, raw)
    cfg = _training_config(raw, args.system, args.seed)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def progress(rec: syn.EpochRecord) -> None:
        print(
            f"epoch {rec.epoch}: loss {rec.loss_total:.4g} "
            f"(c {rec.loss_c:.4g} f {rec.loss_f:.4g} b {rec.loss_b:.4g}) "
            f"patterns {rec.boundary_patterns} classified {int(rec.classification_ok)} "
            f"verified {int(rec.verified)}"
        )

    result = syn.train(system, cfg, progress=progress)
    weights_path = out_dir / "weights.txt"
    save_weights(result.network, str(weights_path))
    history_path = out_dir / "history.csv"
    with open(history_path, "w") as fh:
        fh.write(syn.EpochRecord.CSV_HEADER + "\n")
        for rec in result.history:
            fh.write(rec.csv_row() + "\n")
    _write_manifest(out_dir, "train", args, cfg.__dict__,
                    [str(weights_path), str(history_path)])
    print(f"verified {str(result.verified).lower()}")
    print(f"weights {weights_path}")
    return 0


def cmd_verify(args: argparse.Namespace) -> int:
    raw = _parse_config_file(args.config) if args.config else {}
    system = _build_system(args.system, raw)
    net = load_weights(args.net)
    try:
        report = vfy.verify(
            net,
            system,
            delta=args.delta,
            fail_fast=args.fail_fast,
            workers=_workers(args),
            seed=args.seed,
        )
    except enu.InitialSetNotFound as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    for line in report.summary_lines():
        print(line)
    if args.out_dir:
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "report.txt").write_text("\n".join(report.summary_lines()) + "\n")
        _write_manifest(out_dir, "verify", args, {"delta": args.delta},
                        [str(out_dir / "report.txt")])
    return 0 if report.verified else 1


def cmd_enumerate(args: argparse.Namespace) -> int:
    raw = _parse_config_file(args.config) if args.config else {}
    system = _build_system(args.system, raw)
    net = load_weights(args.net)
    rng = np.random.default_rng(args.seed)
    states = system.sample_states(rng, 2000)
    unsafe = states[system.unsafe_contains(states)]
    safe = system.sample_initial(rng, 256)
    try:
        catalog = enu.enumerate_boundary(net, system.box, unsafe, safe)
    except enu.InitialSetNotFound as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    text = enu.catalog_to_text(catalog)
    if args.out:
        Path(args.out).write_text(text)
        print(f"regions {catalog.region_count}")
        print(f"hinges {catalog.hinge_count}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_simulate(args: argparse.Namespace) -> int:
    raw = _parse_config_file(args.config) if args.config else {}
    system = _build_system(args.system, raw)
    net = load_weights(args.net)
    rng = np.random.default_rng(args.seed)
    if args.x0 == "sample":
        for _ in range(10_000):
            x0 = system.sample_initial(rng, 1)[0]
            if net.forward(x0) >= 0:
                break
        else:
            print("error: no initial state with nonnegative barrier", file=sys.stderr)
            return 2
    else:
        x0 = np.array([float(v) for v in args.x0.split(",")])
    traj = ctl.simulate(net, system, x0, t_end=args.horizon, dt=args.dt,
                        cfg=ctl.FilterConfig(gamma=args.gamma))
    lines = ["t," + ",".join(f"x{i+1}" for i in range(system.n)) + ",b,h,filter_active"]
    for k in range(traj.times.size):
        coords = ",".join(format(v, ".12g") for v in traj.states[k])
        lines.append(
            f"{traj.times[k]:.6f},{coords},{traj.barrier[k]:.12g},"
            f"{traj.safety[k]:.12g},{int(traj.filter_active[k])}"
        )
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"steps {traj.times.size} min_b {traj.min_barrier():.6g} "
              f"min_h {traj.min_safety():.6g} truncated {traj.truncated}")
    else:
        sys.stdout.write(text)
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    systems = [s.strip() for s in args.systems.split(",") if s.strip()]
    sizes = [s.strip() for s in args.sizes.split(",") if s.strip()]
    rows = []
    for name in systems:
        system = _build_system(name, {})
        for size in sizes:
            layers = _parse_layers(size)
            cfg = syn.config_for(
                name,
                seed=args.seed,
                epochs=args.epochs,
                layer_sizes=layers,
                n_data=min(syn.config_for(name).n_data, 4000),
            )
            result = syn.train(system, cfg)
            net = result.network
            t0 = time.perf_counter()
            try:
                report = vfy.verify(net, system, workers=_workers(args),
                                    seed=args.seed)
            except enu.InitialSetNotFound:
                rows.append((name, size, "-", "-", "-", "-", "no boundary"))
                continue
            fast = report.sufficient_fraction("hyperplane")
            rows.append(
                (
                    name,
                    size,
                    str(report.region_count),
                    f"{report.t_hyperplane:.2f}s",
                    f"{report.t_hinge:.2f}s",
                    f"{100.0 * fast:.0f}%",
                    "verified" if report.verified else
                    f"{len(report.counterexamples)} CE / {len(report.undecided)} undecided",
                )
            )
    header = ("system", "size", "N", "t_h", "t_g", "sufficient", "outcome")
    widths = [max(len(str(r[i])) for r in rows + [header]) for i in range(len(header))]
    fmt = "  ".join("{:<%d}" % w for w in widths)
    print(fmt.format(*header))
    for r in rows:
        print(fmt.format(*r))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seev",
        description="Train and exactly verify ReLU neural control barrier functions.",
    )
    parser.add_argument("--workers", type=int, default=None,
                        help="worker threads (default: SEEV_WORKERS or 1)")
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a barrier network")
    p_train.add_argument("--system", required=True)
    p_train.add_argument("--config", default=None)
    p_train.add_argument("--seed", type=int, default=0)
    p_train.add_argument("--out-dir", default="runs/train")
    p_train.set_defaults(func=cmd_train)

    p_verify = sub.add_parser("verify", help="verify a weights file")
    p_verify.add_argument("--net", required=True)
    p_verify.add_argument("--system", required=True)
    p_verify.add_argument("--config", default=None)
    p_verify.add_argument("--delta", type=float, default=1e-4)
    p_verify.add_argument("--fail-fast", action="store_true")
    p_verify.add_argument("--seed", type=int, default=0)
    p_verify.add_argument("--out-dir", default=None)
    p_verify.set_defaults(func=cmd_verify)

    p_enum = sub.add_parser("enumerate", help="emit the boundary catalog")
    p_enum.add_argument("--net", required=True)
    p_enum.add_argument("--system", required=True)
    p_enum.add_argument("--config", default=None)
    p_enum.add_argument("--seed", type=int, default=0)
    p_enum.add_argument("--out", default=None)
    p_enum.set_defaults(func=cmd_enumerate)

    p_sim = sub.add_parser("simulate", help="closed-loop roll-out")
    p_sim.add_argument("--net", required=True)
    p_sim.add_argument("--system", required=True)
    p_sim.add_argument("--config", default=None)
    p_sim.add_argument("--x0", default="sample",
                       help="comma-separated state or 'sample'")
    p_sim.add_argument("--T", dest="horizon", type=float, default=10.0)
    p_sim.add_argument("--dt", type=float, default=1e-3)
    p_sim.add_argument("--gamma", type=float, default=1.0)
    p_sim.add_argument("--seed", type=int, default=0)
    p_sim.add_argument("--out", default=None)
    p_sim.set_defaults(func=cmd_simulate)

    p_bench = sub.add_parser("bench", help="desk-scale timing matrix")
    p_bench.add_argument("--systems", default="darboux,oa")
    p_bench.add_argument("--sizes", default="2x8")
    p_bench.add_argument("--epochs", type=int, default=20)
    p_bench.add_argument("--seed", type=int, default=0)
    p_bench.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (OSError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
