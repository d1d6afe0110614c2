"""Command-line experiment runner.

Subcommands: validate, run, train, compare, mpr-check. Every config key can
be overridden from the command line with repeated `--set section.key=value`
flags. Exit codes: 0 success, 1 config error, 2 runtime error, 3 an
acceptance-style invariant check failed.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from . import config as cfgmod
from . import metrics, mpr, nn, topology
from .config import ConfigError, ScenarioConfig
from .engine import Simulator
from .ppo import PpoConfig, StochasticMlpPolicy, TrainConfig, evaluate, train

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_CHECK_FAILED = 3

SUMMARY_COLUMNS = [
    "mode",
    "rate_pps",
    "episodes",
    "delivery_ratio_mean",
    "delivery_ratio_std",
    "overhead_ratio_mean",
    "overhead_ratio_std",
    "gp_over_thr_mean",
    "goodput_bps_mean",
]


def _load_config(args) -> ScenarioConfig:
    overrides = args.set or []
    if args.config is None:
        raw = cfgmod.apply_overrides({}, overrides)
        return cfgmod.validate(raw)
    return cfgmod.from_file(args.config, overrides)


def _parse_seeds(text: str) -> list[int]:
    return [int(part) for part in text.split(",") if part.strip()]


def _parse_rates(text: str) -> list[float]:
    return [float(part) for part in text.split(",") if part.strip()]


def _ensure_out(path: str) -> str:
    os.makedirs(path, exist_ok=True)
    return path


def _snapshot_config(cfg: ScenarioConfig, out_dir: str) -> None:
    with open(os.path.join(out_dir, "config.txt"), "w", encoding="utf-8") as fh:
        fh.write(cfgmod.to_text(cfg))


def _policy_for(cfg: ScenarioConfig):
    if cfg.mode != "deep-mpr":
        return None
    params = nn.load_checkpoint(cfg.checkpoint)
    expected = 2 * cfg.obs_n_max + 1 + cfg.obs_k_max
    if params.shapes.input_width != expected or params.shapes.action_width != cfg.obs_k_max:
        raise ConfigError(
            [
                (
                    "scenario.checkpoint",
                    f"checkpoint geometry ({params.shapes.input_width}/"
                    f"{params.shapes.action_width}) does not match obs config ({expected}/{cfg.obs_k_max})",
                )
            ]
        )
    return StochasticMlpPolicy(params)


def cmd_validate(args) -> int:
    cfg = _load_config(args)
    print("config OK")
    print(cfgmod.to_text(cfg), end="")
    return EXIT_OK


def cmd_run(args) -> int:
    cfg = _load_config(args)
    seeds = _parse_seeds(args.seeds) if args.seeds else [cfg.seed]
    out_dir = _ensure_out(args.out)
    _snapshot_config(cfg, out_dir)
    policy = _policy_for(cfg)
    rows = []
    for seed in seeds:
        trace = Simulator(cfg, seed, policy=policy).run()
        path = os.path.join(out_dir, f"episode_{cfg.mode}_seed{seed}.csv")
        trace.write_csv(path)
        row = {
            "mode": cfg.mode,
            "rate_pps": cfg.flow_rate_pps,
            "episodes": 1,
            "delivery_ratio_mean": trace.delivery_ratio() if trace.offered_bits else "",
            "delivery_ratio_std": 0.0,
            "overhead_ratio_mean": trace.overhead_ratio() if trace.goodput_bits else "",
            "overhead_ratio_std": 0.0,
            "gp_over_thr_mean": trace.gp_over_thr() if trace.throughput_bits else "",
            "goodput_bps_mean": trace.goodput_bps(),
        }
        rows.append(row)
        print(
            f"seed {seed}: goodput {trace.goodput_bps():.1f} bps, "
            f"delivery {row['delivery_ratio_mean']}, overhead {row['overhead_ratio_mean']}, "
            f"csv {path}"
        )
    metrics.write_summary_csv(os.path.join(out_dir, "summary.csv"), rows, SUMMARY_COLUMNS)
    return EXIT_OK


def cmd_compare(args) -> int:
    cfg = _load_config(args)
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    for mode in modes:
        if mode not in cfgmod.MODES:
            raise ConfigError([("--modes", f"unknown mode {mode!r}")])
    if "deep-mpr" in modes and not cfg.checkpoint:
        raise ConfigError([("scenario.checkpoint", "required to compare deep-mpr")])
    seeds = _parse_seeds(args.seeds)
    if not seeds:
        raise ConfigError([("--seeds", "need at least one seed")])
    rates = _parse_rates(args.rates) if args.rates else [cfg.flow_rate_pps]
    out_dir = _ensure_out(args.out)
    _snapshot_config(cfg, out_dir)

    deep_params = None
    if "deep-mpr" in modes:
        deep_params = nn.load_checkpoint(cfg.checkpoint)
    rows = []
    for mode in modes:
        for rate in rates:
            run_cfg = replace(cfg, mode=mode, flow_rate_pps=rate)
            stats = evaluate(run_cfg, mode, seeds, params=deep_params)
            gp_over_thr = 1.0 / stats["overhead_ratio_mean"] if stats["overhead_ratio_mean"] else ""
            row = {
                "mode": mode,
                "rate_pps": rate,
                "episodes": len(seeds),
                "delivery_ratio_mean": stats["delivery_ratio_mean"],
                "delivery_ratio_std": stats["delivery_ratio_std"],
                "overhead_ratio_mean": stats["overhead_ratio_mean"],
                "overhead_ratio_std": stats["overhead_ratio_std"],
                "gp_over_thr_mean": gp_over_thr,
                "goodput_bps_mean": stats["goodput_bps_mean"],
            }
            rows.append(row)
            print(
                f"{mode:>9} rate {rate:7.2f}: delivery "
                f"{row['delivery_ratio_mean']:.4f} ± {row['delivery_ratio_std']:.4f}, "
                f"overhead {row['overhead_ratio_mean']:.3f} ± {row['overhead_ratio_std']:.3f}"
            )
    metrics.write_summary_csv(os.path.join(out_dir, "summary.csv"), rows, SUMMARY_COLUMNS)
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _load_config(args)
    out_dir = _ensure_out(args.out)
    _snapshot_config(cfg, out_dir)
    rates = _parse_rates(args.rates) if args.rates else [cfg.flow_rate_pps]
    scenarios = [replace(cfg, mode="deep-mpr", checkpoint="(training)", flow_rate_pps=r) for r in rates]
    ppo_cfg = PpoConfig(
        learning_rate=args.lr,
        epochs=args.epochs,
        minibatch_size=args.minibatch,
        gamma=args.gamma,
        lam=args.lam,
        clip_eps=args.clip,
        entropy_coef=args.entropy_coef,
        value_coef=args.value_coef,
    )
    train_cfg = TrainConfig(
        total_steps=args.steps,
        rollout_steps=args.rollout_steps,
        seed=args.train_seed,
        out_dir=out_dir,
        eval_every=args.eval_every,
        eval_episodes=args.eval_episodes,
        checkpoint_every=args.checkpoint_every,
        workers=args.workers,
        log=print,
    )
    result = train(scenarios, ppo_cfg, train_cfg)
    print(
        f"trained {result.steps} steps over {result.updates} updates; "
        f"final checkpoint: {result.final_checkpoint}"
    )
    return EXIT_OK


def cmd_mpr_check(args) -> int:
    cfg = _load_config(args)
    seeds = _parse_seeds(args.seeds) if args.seeds else [cfg.seed]
    wanted = args.snapshots
    sample_dt = 1.0
    checked = 0
    coverage_failures = 0
    dominance_failures = 0
    inconsistent = 0
    sizes: list[tuple[int, int]] = []
    for seed in seeds:
        if checked >= wanted:
            break
        sim = Simulator(replace(cfg, mode="s-mpr"), seed)
        t = 3.0
        while t < cfg.episode_length_s and checked < wanted:
            sim.run_until(t)
            for nid in range(1, cfg.node_count + 1):
                if checked >= wanted:
                    break
                table = sim.nodes[nid].table
                if not table.two_hop:
                    checked += 1
                    continue
                chosen, uncoverable = mpr.select_mpr_detailed(table)
                if uncoverable:
                    inconsistent += 1
                target = table.two_hop - uncoverable
                covered = set()
                for y in chosen:
                    covered |= topology.reach_set(y, table)
                if not target <= covered:
                    coverage_failures += 1
                elif len(table.one_hop) <= 12:
                    minimum = mpr.brute_force_min_mpr(table)
                    sizes.append((len(chosen), len(minimum)))
                    if len(chosen) < len(minimum):
                        dominance_failures += 1
                checked += 1
            t += sample_dt
    print(f"snapshots checked: {checked} (inconsistent tables: {inconsistent})")
    print(f"coverage failures: {coverage_failures}")
    print(f"dominance failures: {dominance_failures}")
    if sizes:
        heur = np.array([a for a, _ in sizes], dtype=float)
        mini = np.array([b for _, b in sizes], dtype=float)
        hist: dict[int, int] = {}
        for a, b in sizes:
            hist[a - b] = hist.get(a - b, 0) + 1
        print(f"heuristic mean size {heur.mean():.3f}, oracle mean size {mini.mean():.3f}")
        print("size-gap histogram (heuristic - minimum): " + str(dict(sorted(hist.items()))))
    if coverage_failures or dominance_failures:
        return EXIT_CHECK_FAILED
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mcastlab",
        description="Multicast forwarding laboratory for mobile ad-hoc networks",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("config", nargs="?", help="scenario config file (key = value lines)")
        p.add_argument(
            "--set",
            action="append",
            metavar="KEY=VALUE",
            help="override any config key by its dotted path (repeatable)",
        )

    p = sub.add_parser("validate", help="parse and range-check a scenario config")
    add_common(p)
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("run", help="run episodes and write per-episode CSVs")
    add_common(p)
    p.add_argument("--seeds", help="comma-separated episode seeds (default: scenario.seed)")
    p.add_argument("--out", default="runs/run", help="output directory")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="sweep modes x offered rates x seeds")
    add_common(p)
    p.add_argument("--modes", default="flooding,s-mpr,ns-mpr", help="comma-separated modes")
    p.add_argument("--seeds", default="1,2,3", help="comma-separated seeds")
    p.add_argument("--rates", help="comma-separated offered rates in packets/s per source")
    p.add_argument("--out", default="runs/compare", help="output directory")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("train", help="train the neural forwarding policy")
    add_common(p)
    p.add_argument("--steps", type=int, required=True, help="total agent decisions to train on")
    p.add_argument("--rollout-steps", type=int, default=8192)
    p.add_argument("--rates", help="training offered-rate mix (comma-separated)")
    p.add_argument("--train-seed", type=int, default=0)
    p.add_argument("--lr", type=float, default=3e-4)
    p.add_argument("--gamma", type=float, default=0.99)
    p.add_argument("--lam", type=float, default=0.95)
    p.add_argument("--clip", type=float, default=0.2)
    p.add_argument("--epochs", type=int, default=4)
    p.add_argument("--minibatch", type=int, default=256)
    p.add_argument("--entropy-coef", type=float, default=0.01)
    p.add_argument("--value-coef", type=float, default=0.5)
    p.add_argument("--eval-every", type=int, default=10)
    p.add_argument("--eval-episodes", type=int, default=3)
    p.add_argument("--checkpoint-every", type=int, default=20)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--out", default="runs/train", help="output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("mpr-check", help="sample live neighborhoods and verify relay selection")
    add_common(p)
    p.add_argument("--seeds", help="comma-separated seeds")
    p.add_argument("--snapshots", type=int, default=100)
    p.set_defaults(func=cmd_mpr_check)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        for path, reason in exc.errors:
            print(f"config error: {path}: {reason}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
