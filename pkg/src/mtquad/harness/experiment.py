"""Experiment orchestration: config -> envs/policy/trainer -> artifacts.

``run_experiment`` trains one policy per seed, optionally evaluates each on
its enabled tasks, and writes per-seed metric logs, checkpoints, evaluation
JSON, and a cross-seed summary table. Every consumer of randomness gets its
seed derived from (config seed, role), so runs are reproducible end to end.
"""

from __future__ import annotations

import dataclasses
import json
import math
from pathlib import Path
from typing import Optional

import numpy as np

from ..dynamics import QuadParams, hover_policy_output
from ..nets import ArchitectureVariant, MultiTaskPolicy, NetConfig
from ..tasks import TaskId, VecTaskEnv, make_vec_env
from ..trainer import ObsNormalizer, Trainer, load_checkpoint
from .config import ExperimentConfig, config_to_dict, save_config
from .controllers import PolicyActor
from .evaluate import eval_racing, eval_stabilization, eval_tracking

_ENV_SEED_STRIDE = 7919  # distinct env streams per task without collisions


def build_envs(
    cfg: ExperimentConfig, seed: int, autoreset: bool = True, n_envs: Optional[int] = None
) -> dict[TaskId, VecTaskEnv]:
    tasks = cfg.enabled_tasks()
    n = n_envs if n_envs is not None else cfg.train.n_envs_per_task
    envs = {}
    for i, task in enumerate(tasks):
        envs[task] = make_vec_env(
            task,
            n,
            cfg.quad,
            cfg.task_cfg(task),
            curriculum_cfg=cfg.curriculum,
            seed=seed + (i + 1) * _ENV_SEED_STRIDE,
            one_hot=cfg.policy.one_hot,
            autoreset=autoreset,
        )
    return envs


def build_policy(cfg: ExperimentConfig, envs: dict[TaskId, VecTaskEnv], seed: int) -> MultiTaskPolicy:
    variant = ArchitectureVariant(cfg.policy.variant)
    net_cfg = dataclasses.replace(cfg.net)
    if cfg.policy.hover_thrust_init and net_cfg.initial_thrust_output is None:
        net_cfg.initial_thrust_output = float(hover_policy_output(cfg.quad)[0])
    dims = {t: env.task_obs_dim for t, env in envs.items()}
    return MultiTaskPolicy(list(envs.keys()), dims, variant, cfg=net_cfg, seed=seed)


def make_trainer(cfg: ExperimentConfig, seed: int, out_dir: Optional[Path]) -> Trainer:
    train_cfg = dataclasses.replace(cfg.train, seed=seed)
    envs = build_envs(cfg, seed)
    policy = build_policy(cfg, envs, seed)
    return Trainer(train_cfg, policy, envs, out_dir=out_dir)


def restore_trainer(cfg: ExperimentConfig, checkpoint_path: str | Path, out_dir: Optional[Path]) -> Trainer:
    payload = load_checkpoint(checkpoint_path)
    trainer = make_trainer(cfg, payload["train_cfg"]["seed"], out_dir)
    trainer.restore(payload)
    return trainer


def policy_from_checkpoint(payload: dict) -> tuple[MultiTaskPolicy, ObsNormalizer, list[TaskId], bool]:
    tasks = [TaskId(t) for t in payload["tasks"]]
    dims = {TaskId(t): d for t, d in payload["task_obs_dims"].items()}
    net_cfg = NetConfig(**payload["net_cfg"])
    policy = MultiTaskPolicy(tasks, dims, ArchitectureVariant(payload["variant"]), cfg=net_cfg)
    policy.load_state_dict(payload["policy_state"])
    one_hot = payload["normalizer"]["one_hot"]
    normalizer = ObsNormalizer(tasks, one_hot, enabled=payload["normalizer"]["enabled"])
    normalizer.set_state(payload["normalizer"])
    return policy, normalizer, tasks, one_hot


def evaluate_policy(
    cfg: ExperimentConfig,
    policy: MultiTaskPolicy,
    normalizer: ObsNormalizer,
    tasks: list[TaskId],
    one_hot: bool,
) -> dict[str, dict]:
    results: dict[str, dict] = {}
    ev = cfg.eval
    for task in tasks:
        actor = PolicyActor(policy, normalizer, task)
        if task is TaskId.RACING:
            from ..tasks.envs import resolve_track

            r = eval_racing(
                actor,
                resolve_track(cfg.tasks.racing.track),
                cfg.quad,
                cfg.tasks.racing,
                n_starts=ev.racing_starts,
                seed=ev.seed,
                horizon_s=ev.racing_horizon_s,
                one_hot=one_hot,
            )
            results[task.value] = {
                "sr": r.success_rate,
                "mge": r.mean_gate_error,
                "lt": r.lap_time,
                "crashes": r.crashes,
                "n_trials": r.n_trials,
            }
        elif task is TaskId.STABILIZATION:
            s = eval_stabilization(
                actor, cfg.quad, cfg.tasks.stabilization,
                n_trials=ev.stabilization_trials, seed=ev.seed, one_hot=one_hot,
            )
            results[task.value] = {
                "t_half": s.t_half,
                "t_full": s.t_full,
                "success_rate": s.success_rate,
                "crashes": s.crashes,
                "n_trials": s.n_trials,
            }
        else:
            t = eval_tracking(
                actor, cfg.quad, cfg.tasks.tracking,
                n_trials=ev.tracking_trials, seed=ev.seed, one_hot=one_hot,
            )
            results[task.value] = {"e_v": t.e_v, "n_trials": t.n_trials}
    return results


SUMMARY_COLUMNS = ["variant", "seed", "samples", "sr", "mge", "lt", "t_half", "t_full", "e_v"]


def _summary_row(variant: str, seed, samples, eval_results: dict) -> dict:
    racing = eval_results.get("racing", {})
    stab = eval_results.get("stabilization", {})
    track = eval_results.get("tracking", {})
    return {
        "variant": variant,
        "seed": seed,
        "samples": samples,
        "sr": racing.get("sr", math.nan),
        "mge": racing.get("mge", math.nan),
        "lt": racing.get("lt", math.nan),
        "t_half": stab.get("t_half", math.nan),
        "t_full": stab.get("t_full", math.nan),
        "e_v": track.get("e_v", math.nan),
    }


def _format_cell(key: str, value) -> str:
    if key in ("variant", "seed", "samples"):
        return str(value)
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "crash" if key in ("mge", "lt") else "-"
    if key == "sr":
        return f"{100.0 * value:.0f}"
    return f"{value:.3f}"


def write_summary(rows: list[dict], out_dir: Path) -> None:
    """Summary table as CSV and aligned text, regenerable from the raw rows."""
    import csv

    with open(out_dir / "summary.csv", "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=["schema"] + SUMMARY_COLUMNS)
        writer.writeheader()
        for row in rows:
            writer.writerow({"schema": 1, **row})

    header = ["variant", "seed", "samples", "SR[%]", "MGE[m]", "LT[s]", "t_half[s]", "t_full[s]", "e_v[m/s]"]
    lines = ["  ".join(f"{h:>10s}" for h in header)]
    for row in rows:
        cells = [_format_cell(k, row[k]) for k in SUMMARY_COLUMNS]
        lines.append("  ".join(f"{c:>10s}" for c in cells))
    (out_dir / "summary.txt").write_text("\n".join(lines) + "\n")


def run_experiment(cfg: ExperimentConfig, out_dir: Optional[str | Path] = None) -> Path:
    """Train and evaluate for every configured seed; returns the artifact dir."""
    root = Path(out_dir if out_dir is not None else cfg.out_dir)
    root.mkdir(parents=True, exist_ok=True)
    save_config(cfg, root / "config.yaml")
    rows = []
    for seed in cfg.seeds:
        seed_dir = root / f"seed_{seed}"
        trainer = make_trainer(cfg, seed, seed_dir)
        trainer.train()
        if cfg.eval_after_training:
            results = evaluate_policy(
                cfg, trainer.policy, trainer.normalizer, trainer.tasks,
                cfg.policy.one_hot,
            )
            with open(seed_dir / "eval.json", "w") as f:
                json.dump({"schema": 1, "samples": trainer.samples, "results": results}, f, indent=2)
            rows.append(_summary_row(cfg.policy.variant, seed, trainer.samples, results))
    if rows:
        mean_row = {
            "variant": cfg.policy.variant,
            "seed": "mean",
            "samples": rows[0]["samples"],
        }
        for key in ("sr", "mge", "lt", "t_half", "t_full", "e_v"):
            vals = [r[key] for r in rows if isinstance(r[key], float) and not math.isnan(r[key])]
            mean_row[key] = float(np.mean(vals)) if vals else math.nan
        write_summary(rows + [mean_row], root)
    return root
