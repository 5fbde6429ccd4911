"""Command-line entry point.

Subcommands wire configuration files to experiments: training runs,
sharpness measurement of a checkpoint, scale-invariance audits, penalty
gradient approximation checks, and seed-sweep comparisons of the plain
and regularized optimizers.
"""

from __future__ import annotations

import argparse
import concurrent.futures
import json
import math
import sys
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .data import batches
from .network import (BnMlp, CheckpointError, load_checkpoint, save_checkpoint)
from .optimizer import NonFiniteLossError, metrics_to_csv, train
from .params import scale_transform
from .regularizer import h1, quadrature_grad_theta, quadrature_grad_v, h2
from .sharpness import (bn_sharpness, lp_ball_sharpness_mc, measurement_report,
                        trace_sharpness)

APPROX_DELTAS = (1e-1, 5e-2, 2.5e-2, 1.25e-2)


class CommandError(RuntimeError):
    pass


def _measurement_batch(cfg: RunConfig):
    ds = cfg.data.make_dataset()
    return ds, batches(ds, cfg.train.batch_size, cfg.train.seed, epoch=0)[0]


def cmd_train(config_path, out_dir) -> int:
    cfg = load_config(config_path)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ds = cfg.data.make_dataset()
    oracle = BnMlp(cfg.network)
    try:
        theta, metrics = train(oracle, ds, cfg.train)
    except NonFiniteLossError as exc:
        if exc.state is not None:  # keep the last good parameters
            save_checkpoint(out / "checkpoint.json", cfg.network, exc.state.theta)
        raise CommandError(f"training aborted: {exc}") from exc
    (out / "metrics.csv").write_text(metrics_to_csv(metrics))
    save_checkpoint(out / "checkpoint.json", cfg.network, theta)
    (out / "config.ini").write_text(cfg.resolved_text())
    return 0


def cmd_measure(config_path, checkpoint_path) -> int:
    cfg = load_config(config_path)
    spec, theta = load_checkpoint(checkpoint_path)
    oracle = BnMlp(spec)
    _, batch = _measurement_batch(cfg)
    report = measurement_report(
        oracle, theta, cfg.sharpness, batch, seed=cfg.train.seed,
        mc_p=cfg.measure.mc_p, mc_delta=cfg.measure.mc_delta,
        mc_samples=cfg.measure.mc_samples, trace_probes=cfg.measure.trace_probes)
    print(json.dumps(report, indent=2))
    return 0


def _parse_scale(spec_str: str, theta, ball_delta: float):
    n1 = theta.n1
    if spec_str.strip() == "proof":
        # shrink every normalized block far enough into the ball radius
        max_norm = max(theta.block_norm(i) for i in range(n1))
        a0 = ball_delta / (math.sqrt(theta.n_blocks) * max_norm)
        return np.full(n1, a0)
    parts = [float(x) for x in spec_str.split(",")]
    if len(parts) == 1:
        return np.full(n1, parts[0])
    if len(parts) != n1:
        raise CommandError(f"scale spec has {len(parts)} factors, "
                           f"checkpoint has {n1} normalized blocks")
    return np.array(parts)


def cmd_invariance(config_path, checkpoint_path, scale_spec: str) -> int:
    cfg = load_config(config_path)
    spec, theta = load_checkpoint(checkpoint_path)
    oracle = BnMlp(spec)
    _, batch = _measurement_batch(cfg)
    seed, m = cfg.train.seed, cfg.measure
    a = _parse_scale(scale_spec, theta, m.mc_delta)
    theta_scaled = scale_transform(theta, a)

    def all_measures(point):
        return {
            "bn_sharpness": bn_sharpness(oracle, point, cfg.sharpness, batch, seed=seed),
            "lp_mc_inf": lp_ball_sharpness_mc(oracle, point, m.mc_delta, math.inf,
                                              m.mc_samples, batch, seed=seed),
            "trace": trace_sharpness(oracle, point, batch, n_probes=m.trace_probes,
                                     seed=seed),
        }

    base, scaled = all_measures(theta), all_measures(theta_scaled)
    print(f"{'measure':<14}{'at_theta':>16}{'at_scaled':>16}{'ratio':>12}")
    for key in base:
        ratio = scaled[key] / base[key] if base[key] != 0 else float("inf")
        print(f"{key:<14}{base[key]:>16.6g}{scaled[key]:>16.6g}{ratio:>12.6g}")
    return 0


def _rel_err(approx, exact) -> float:
    scale = max(exact.norm(), 1e-30)
    return (approx - exact).norm() / scale


def cmd_approx_check(config_path) -> int:
    cfg = load_config(config_path)
    oracle = BnMlp(cfg.network)
    theta = oracle.init_params(cfg.train.seed)
    _, batch = _measurement_batch(cfg)
    from dataclasses import replace
    from .sharpness import init_direction
    v = init_direction(oracle, theta, batch, seed=cfg.train.seed)
    p = cfg.sharpness.p
    reg_diff = replace(cfg.reg, lam=1.0, clip_norm=1e30, h1_form="difference")
    reg_lit = replace(cfg.reg, lam=1.0, clip_norm=1e30, h1_form="symmetric_sum")
    print("delta,h1_rel_err,h2_rel_err,h1_literal_rel_err")
    for delta in APPROX_DELTAS:
        qt = quadrature_grad_theta(oracle, theta, v, delta, p, batch,
                                   quad_points=cfg.sharpness.quad_points)
        qv = quadrature_grad_v(oracle, theta, v, delta, p, batch,
                               quad_points=cfg.sharpness.quad_points)
        e1 = _rel_err(h1(oracle, theta, v, delta, p, reg_diff, batch, batch, batch), qt)
        e2 = _rel_err(h2(oracle, theta, v, delta, p, batch), qv)
        e1l = _rel_err(h1(oracle, theta, v, delta, p, reg_lit, batch, batch, batch), qt)
        print(f"{delta:.17g},{e1:.17g},{e2:.17g},{e1l:.17g}")
    return 0


def _compare_run(args):
    config_path, algo, seed = args
    cfg = load_config(config_path)
    from dataclasses import replace
    tcfg = replace(cfg.train, algo=algo, seed=seed)
    ds = cfg.data.make_dataset()
    oracle = BnMlp(cfg.network)
    theta, metrics = train(oracle, ds, tcfg)
    last = metrics[-1]
    return algo, seed, last.test_acc, last.bn_sharpness


def cmd_compare(config_path, n_seeds: int, out_dir=None) -> int:
    if n_seeds < 1:
        raise CommandError("need at least one seed")
    jobs = [(str(config_path), algo, seed)
            for algo in ("sgd", "sgds") for seed in range(n_seeds)]
    with concurrent.futures.ProcessPoolExecutor(max_workers=min(len(jobs), 4)) as pool:
        results = list(pool.map(_compare_run, jobs))
    lines = ["algo,seed,final_test_acc,final_bn_sharpness"]
    for algo, seed, acc, sharp in results:
        lines.append(f"{algo},{seed},{acc:.17g},{sharp:.17g}")
    for algo in ("sgd", "sgds"):
        accs = np.array([r[2] for r in results if r[0] == algo])
        sharps = np.array([r[3] for r in results if r[0] == algo])
        lines.append(f"{algo},mean,{accs.mean():.17g},{sharps.mean():.17g}")
        lines.append(f"{algo},std,{accs.std(ddof=0):.17g},{sharps.std(ddof=0):.17g}")
    text = "\n".join(lines) + "\n"
    print(text, end="")
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "compare.csv").write_text(text)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bn-sharp",
        description="Sharpness measurement and sharpness-regularized training "
                    "for batch-normalized networks.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train a model and write metrics/checkpoint")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)

    p = sub.add_parser("measure", help="report all sharpness measures of a checkpoint")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)

    p = sub.add_parser("invariance", help="compare measures before/after rescaling")
    p.add_argument("--config", required=True)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--scale", required=True,
                   help="comma list of per-block factors, a single factor, "
                        "or 'proof' for the shrink-into-the-ball recipe")

    p = sub.add_parser("approx-check",
                       help="error of the two-point penalty gradients vs quadrature")
    p.add_argument("--config", required=True)

    p = sub.add_parser("compare", help="seed sweep of sgd vs sgds")
    p.add_argument("--config", required=True)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--out", default=None)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "train":
            return cmd_train(args.config, args.out)
        if args.command == "measure":
            return cmd_measure(args.config, args.checkpoint)
        if args.command == "invariance":
            return cmd_invariance(args.config, args.checkpoint, args.scale)
        if args.command == "approx-check":
            return cmd_approx_check(args.config)
        if args.command == "compare":
            return cmd_compare(args.config, args.seeds, args.out)
        raise CommandError(f"unknown command {args.command!r}")
    except (ConfigError, CheckpointError, CommandError, OSError) as exc:
        print(f"bn-sharp: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
