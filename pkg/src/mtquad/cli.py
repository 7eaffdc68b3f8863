"""Command-line interface: train, eval, simulate, export-plots."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .curriculum import CurriculumConfig
from .harness.config import ConfigError, default_config, load_config
from .harness.controllers import (
    ConstantActionController,
    GateCenterFollower,
    HoverRecoveryController,
    PolicyActor,
)
from .harness.experiment import (
    evaluate_policy,
    policy_from_checkpoint,
    restore_trainer,
    run_experiment,
)
from .harness.export import export_plot_data, record_episode, write_trajectory_csv
from .tasks import TaskId, make_vec_env
from .tasks.envs import resolve_track
from .trainer import load_checkpoint


def _load_cfg(args) -> "ExperimentConfig":
    cfg = load_config(args.config) if args.config else default_config()
    if getattr(args, "seed", None) is not None:
        cfg.seeds = [args.seed]
    if getattr(args, "variant", None):
        cfg.policy.variant = args.variant
    if getattr(args, "task", None):
        cfg.tasks.enabled = args.task.split(",")
    if getattr(args, "total_samples", None) is not None:
        cfg.train.total_samples = args.total_samples
    return cfg


def cmd_train(args) -> int:
    cfg = _load_cfg(args)
    out = Path(args.out) if args.out else Path(cfg.out_dir)
    if args.checkpoint:
        trainer = restore_trainer(cfg, args.checkpoint, out / "resumed")
        trainer.cfg.total_samples = cfg.train.total_samples
        trainer.train()
        print(f"resumed training finished at {trainer.samples} samples -> {out / 'resumed'}")
        return 0
    artifacts = run_experiment(cfg, out)
    print(f"experiment artifacts in {artifacts}")
    return 0


def cmd_eval(args) -> int:
    cfg = _load_cfg(args)
    payload = load_checkpoint(args.checkpoint)
    policy, normalizer, tasks, one_hot = policy_from_checkpoint(payload)
    if args.task:
        wanted = {TaskId(t) for t in args.task.split(",")}
        tasks = [t for t in tasks if t in wanted]
    results = evaluate_policy(cfg, policy, normalizer, tasks, one_hot)
    text = json.dumps({"schema": 1, "results": results}, indent=2)
    print(text)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text + "\n")
    return 0


def cmd_simulate(args) -> int:
    cfg = _load_cfg(args)
    task = TaskId(args.task)
    env = make_vec_env(
        task,
        1,
        cfg.quad,
        cfg.task_cfg(task),
        curriculum_cfg=CurriculumConfig(enabled=False),
        seed=args.seed if args.seed is not None else 0,
        one_hot=cfg.policy.one_hot,
        autoreset=False,
    )
    if args.controller == "gate-follower":
        if task is not TaskId.RACING:
            print("gate-follower drives the racing task only", file=sys.stderr)
            return 2
        actor = GateCenterFollower(resolve_track(cfg.tasks.racing.track), cfg.quad)
    elif args.controller == "hover":
        actor = HoverRecoveryController(cfg.quad, cfg.tasks.stabilization.z_d)
    elif args.controller == "zero":
        actor = ConstantActionController(np.array([-1.0, 0.0, 0.0, 0.0]))
    elif args.controller == "policy":
        if not args.checkpoint:
            print("--checkpoint required for the policy controller", file=sys.stderr)
            return 2
        policy, normalizer, _, _ = policy_from_checkpoint(load_checkpoint(args.checkpoint))
        actor = PolicyActor(policy, normalizer, task)
    else:
        print(f"unknown controller {args.controller!r}", file=sys.stderr)
        return 2
    rows = record_episode(env, actor)
    out = Path(args.out) if args.out else Path(f"trajectory_{task.value}.csv")
    write_trajectory_csv(rows, out)
    print(f"wrote {len(rows)} steps to {out}")
    return 0


def cmd_export_plots(args) -> int:
    written = export_plot_data(args.run, args.out)
    for path in written:
        print(f"wrote {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mtquad",
        description="Multi-task reinforcement learning for quadrotor control.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    train = sub.add_parser("train", help="run a training experiment from a config")
    train.add_argument("--config", help="YAML config path (defaults built in)")
    train.add_argument("--seed", type=int, help="override the config seed list")
    train.add_argument("--variant", choices=["ours", "actor_only", "separate", "single_task"])
    train.add_argument("--task", help="comma-separated task subset")
    train.add_argument("--total-samples", type=int, dest="total_samples")
    train.add_argument("--checkpoint", help="resume from this checkpoint")
    train.add_argument("--out", help="artifact directory")
    train.set_defaults(func=cmd_train)

    ev = sub.add_parser("eval", help="evaluate a checkpoint")
    ev.add_argument("--checkpoint", required=True)
    ev.add_argument("--config", help="YAML config path")
    ev.add_argument("--task", help="comma-separated task subset")
    ev.add_argument("--seed", type=int)
    ev.add_argument("--out", help="write results JSON here")
    ev.set_defaults(func=cmd_eval)

    sim = sub.add_parser("simulate", help="roll out a scripted controller or checkpoint")
    sim.add_argument("--task", required=True, choices=[t.value for t in TaskId])
    sim.add_argument(
        "--controller", default="hover", choices=["gate-follower", "hover", "zero", "policy"]
    )
    sim.add_argument("--checkpoint")
    sim.add_argument("--config")
    sim.add_argument("--seed", type=int)
    sim.add_argument("--out")
    sim.set_defaults(func=cmd_simulate)

    plots = sub.add_parser("export-plots", help="CSV curves from a training run")
    plots.add_argument("--run", required=True, help="run directory with metrics.jsonl")
    plots.add_argument("--out", required=True)
    plots.set_defaults(func=cmd_export_plots)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
