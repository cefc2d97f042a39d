"""Command-line front end: train, evaluate, compare, plot.

Every invocation snapshots its configuration and library versions into
a manifest next to the outputs, and all randomness flows from the seed
list, so rerunning a command reproduces its CSVs byte for byte in
synchronous pool mode.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np
import scipy
import yaml

from .config import RunConfig, load_config
from .delay import DelayConfig, DelayWrapper
from .env import DosingEnv
from .evaluate import (ReplayPolicy, SACPolicy, aggregate_metrics, base_env,
                       comparison_rows, compare_controllers, evaluate_policy,
                       write_metrics_csv, write_trace_csv)
from .pid import ActionLog, PIDPolicy
from .pool import EnvPool
from .sac import SACAgent, canonical_mode, train
from . import plots

# large, fixed stride between CLI seeds so env streams never overlap
SEED_STRIDE = 1000


def delay_for_mode(delay_cfg: DelayConfig, alias: str, seed: int) -> DelayConfig:
    """Resolve a named scenario {nd, cd, rd} onto the configured bounds."""
    mode = canonical_mode(alias)
    if mode == "none":
        return replace(delay_cfg, mode="none", kappa_min=0, kappa_max=0,
                       omega_min=0, omega_max=0, seed=delay_cfg.seed + seed)
    return replace(delay_cfg, mode=mode, seed=delay_cfg.seed + seed)


def make_eval_env(cfg: RunConfig, alias: str, seed: int):
    """Fixed-horizon evaluation environment, delay-wrapped when needed."""
    env_cfg = replace(cfg.env, episode_mode="E1",
                      fixed_length=cfg.eval.horizon)
    env = DosingEnv(env_cfg, cfg.plant_cfg(), cfg.reward,
                    cfg.exogenous_cfg(), seed=seed)
    if canonical_mode(alias) != "none":
        env = DelayWrapper(env, delay_for_mode(cfg.delay, alias, seed))
    return env


def make_pool(cfg: RunConfig, alias: str, seed: int) -> EnvPool:
    pool_cfg = replace(cfg.pool,
                       base_seed=cfg.pool.base_seed + seed * SEED_STRIDE,
                       seeds=None)
    delay = delay_for_mode(cfg.delay, alias, seed * SEED_STRIDE)
    return EnvPool(pool_cfg, cfg.env, cfg.plant_cfg(), cfg.reward,
                   cfg.exogenous_cfg(), delay)


def load_agent_for_env(cfg: RunConfig, alias: str, seed: int, env,
                       checkpoint) -> SACAgent:
    """Build an agent shaped like env and restore checkpoint parameters.

    A checkpoint trained under a different delay mode has a different
    observation width; the restore guard reports both modes.
    """
    sac_cfg = replace(cfg.sac, seed=cfg.sac.seed + seed)
    agent = SACAgent(env.observation_dim, len(env.action_high), sac_cfg,
                     env.action_low, env.action_high,
                     delay_mode=canonical_mode(alias))
    agent.load_params(checkpoint)
    return agent


def _versions() -> dict:
    return {"python": sys.version.split()[0], "numpy": np.__version__,
            "scipy": scipy.__version__, "yaml": yaml.__version__}


def write_manifest(out_dir: Path, command: str, cfg: RunConfig,
                   extra: dict) -> Path:
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "created_unix": time.time(),
        "config": {
            "run": {"id": cfg.run_id, "seeds": cfg.seeds,
                    "out_dir": cfg.out_dir},
            **{block: asdict(getattr(cfg, block))
               for block in ("env", "reward", "delay", "pool", "sac",
                             "pid", "eval")},
        },
        "versions": _versions(),
        **extra,
    }
    path = out_dir / f"manifest_{command}.json"
    path.write_text(json.dumps(manifest, indent=2, default=str) + "\n")
    return path


def _resolve(args) -> tuple:
    cfg = load_config(args.config) if args.config else RunConfig()
    seeds = ([int(s) for s in args.seed.split(",")] if args.seed
             else list(cfg.seeds))
    if len(set(seeds)) != len(seeds):
        raise ValueError("seed list must be distinct")
    out_root = Path(args.out) if args.out else Path(cfg.out_dir)
    return cfg, seeds, out_root / cfg.run_id


# -- subcommands --------------------------------------------------------------


def cmd_train(args) -> int:
    cfg, seeds, run_dir = _resolve(args)
    write_manifest(run_dir, "train", cfg,
                   {"delay": args.delay, "seeds": seeds, "steps": args.steps})
    for seed in seeds:
        out = run_dir / args.delay / f"seed_{seed}"
        pool = make_pool(cfg, args.delay, seed)
        sac_cfg = replace(cfg.sac, seed=cfg.sac.seed + seed)
        result = train(pool, args.delay, sac_cfg, args.steps, out_dir=out,
                       log_every=args.log_every,
                       checkpoint_every=args.checkpoint_every)
        print(f"trained {args.delay} seed {seed}: "
              f"log {result.csv_path}, "
              f"checkpoint {result.checkpoint_paths[-1]}")
    return 0


def _build_policy(cfg: RunConfig, args, alias: str, seed: int, env):
    if args.controller == "sac":
        if not args.checkpoint:
            raise ValueError("--checkpoint is required for the sac controller")
        agent = load_agent_for_env(cfg, alias, seed, env, args.checkpoint)
        return SACPolicy(agent, env, deterministic=cfg.eval.deterministic)
    if args.controller == "pid":
        return PIDPolicy(cfg.pid, base_env(env).layout)
    if not args.replay_log:
        raise ValueError("--replay-log is required for the replay controller")
    return ReplayPolicy(ActionLog.from_csv(args.replay_log))


def cmd_evaluate(args) -> int:
    cfg, seeds, run_dir = _resolve(args)
    out = run_dir / f"eval_{args.controller}_{args.delay}"
    out.mkdir(parents=True, exist_ok=True)
    rows, all_episodes = [], []
    for seed in seeds:
        env = make_eval_env(cfg, args.delay, seed)
        policy = _build_policy(cfg, args, args.delay, seed, env)
        report = evaluate_policy(policy, env, cfg.eval.n_episodes,
                                 cfg.reward.x_ideal)
        for i, metrics in enumerate(report.per_episode):
            rows.append({"controller": args.controller, "seed": seed,
                         "episode": i, **metrics.as_dict()})
        all_episodes.extend(report.per_episode)
        if report.traces:
            write_trace_csv(out / f"trace_seed{seed}.csv",
                            [r for rs in report.traces for r in rs])
    mean, std = aggregate_metrics(all_episodes)
    if mean is not None:
        rows.append({"controller": args.controller, "seed": "all",
                     "episode": "mean", **mean.as_dict()})
        rows.append({"controller": args.controller, "seed": "all",
                     "episode": "std", **std})
    write_metrics_csv(out / "metrics.csv", rows)
    write_manifest(out, "evaluate", cfg,
                   {"delay": args.delay, "seeds": seeds,
                    "controller": args.controller,
                    "checkpoint": str(args.checkpoint)})
    if mean is None:
        print("evaluated 0 episodes")
    else:
        print(f"evaluated {len(all_episodes)} episodes: "
              f"avg_reward {mean.avg_reward:.4f}, "
              f"avg_target {mean.avg_target:.3f} mg/L, "
              f"target_dev {mean.target_dev_pct:.2f}%")
    return 0


def cmd_compare(args) -> int:
    cfg, seeds, run_dir = _resolve(args)
    if not args.checkpoint:
        raise ValueError("--checkpoint is required for compare")
    out = run_dir / f"compare_{args.delay}"
    out.mkdir(parents=True, exist_ok=True)

    def sac_factory(env):
        agent = load_agent_for_env(cfg, args.delay, 0, env, args.checkpoint)
        return SACPolicy(agent, env, deterministic=cfg.eval.deterministic)

    def pid_factory(env):
        return PIDPolicy(cfg.pid, base_env(env).layout)

    controllers = [("sac", sac_factory), ("pid", pid_factory)]
    if args.replay_log:
        log = ActionLog.from_csv(args.replay_log)
        controllers.append(("replay", lambda env: ReplayPolicy(log)))

    result = compare_controllers(
        controllers, lambda seed: make_eval_env(cfg, args.delay, seed),
        seeds, cfg.eval.n_episodes, cfg.reward.x_ideal)
    write_metrics_csv(out / "comparison.csv", comparison_rows(result))
    for (name, seed), trace in result.traces.items():
        write_trace_csv(out / f"trace_{name}_seed{seed}.csv", trace)
    write_manifest(out, "compare", cfg,
                   {"delay": args.delay, "seeds": seeds,
                    "controllers": result.names,
                    "checkpoint": str(args.checkpoint)})
    for name in result.names:
        mean, _ = result.aggregates[name]
        print(f"{name}: avg_reward {mean.avg_reward:.4f}, "
              f"avg_target {mean.avg_target:.3f} mg/L, "
              f"target_dev {mean.target_dev_pct:.2f}%, "
              f"tot_costs {mean.tot_costs:.2f}")
    return 0


def cmd_plot(args) -> int:
    cfg = load_config(args.config) if args.config else RunConfig()
    root = Path(args.out) if args.out else Path(cfg.out_dir)
    if not root.exists():
        raise FileNotFoundError(f"no such directory: {root}")
    rendered = []
    for csv_path in sorted(root.rglob("train_*.csv")):
        rendered.append(plots.plot_training_log(csv_path))
    for csv_path in sorted(root.rglob("trace_*.csv")):
        rendered.append(plots.plot_trace(csv_path,
                                         x_ideal=cfg.reward.x_ideal))
    if not rendered:
        raise FileNotFoundError(f"no train_*.csv or trace_*.csv under {root}")
    for path in rendered:
        print(f"rendered {path}")
    return 0


# -- argument parsing ---------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="phosrl",
        description="Delay-aware dosing control: training, evaluation, plots.")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="YAML run configuration")
        p.add_argument("--delay", choices=("nd", "cd", "rd"), default="nd",
                       help="delay scenario: none, constant, random")
        p.add_argument("--seed", help="comma-separated seed list")
        p.add_argument("--out", help="output directory root")

    p_train = sub.add_parser("train", help="train a SAC agent per seed")
    common(p_train)
    p_train.add_argument("--steps", type=int, default=100_000,
                         help="environment steps per seed")
    p_train.add_argument("--log-every", type=int, default=2000)
    p_train.add_argument("--checkpoint-every", type=int, default=None)
    p_train.set_defaults(func=cmd_train)

    p_eval = sub.add_parser("evaluate", help="run one controller and report")
    common(p_eval)
    p_eval.add_argument("--controller", choices=("sac", "pid", "replay"),
                        default="sac")
    p_eval.add_argument("--checkpoint", help="trained agent checkpoint (.npz)")
    p_eval.add_argument("--replay-log", help="action log CSV for replay")
    p_eval.set_defaults(func=cmd_evaluate)

    p_cmp = sub.add_parser("compare",
                           help="run controllers on identical seeds")
    common(p_cmp)
    p_cmp.add_argument("--checkpoint", help="trained agent checkpoint (.npz)")
    p_cmp.add_argument("--replay-log", help="optional replay controller")
    p_cmp.set_defaults(func=cmd_compare)

    p_plot = sub.add_parser("plot", help="render PNGs from emitted CSVs")
    common(p_plot)
    p_plot.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, RuntimeError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
