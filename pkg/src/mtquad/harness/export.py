"""Data export: episode trajectory CSVs and plot-ready curves from metric logs."""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from ..dynamics import P, Q, V, W
from ..tasks import VecTaskEnv

TRAJECTORY_HEADER_COMMENT = "# mtquad-trajectory schema=1"


def record_episode(env: VecTaskEnv, actor, max_steps: int | None = None) -> list[dict]:
    """Roll one frozen-on-termination episode batch and record env 0's rows."""
    if env.autoreset:
        raise ValueError("trajectory recording needs an env without autoreset")
    rows = []
    steps = max_steps if max_steps is not None else env.horizon_steps
    for _ in range(steps):
        if not env.active[0]:
            break
        t = float(env.step_counts[0] * env.control_dt)
        state = env.states[0]
        u = actor(env)
        result = env.step(u)
        row = {
            "t": t,
            "px": state[0], "py": state[1], "pz": state[2],
            "qw": state[3], "qx": state[4], "qy": state[5], "qz": state[6],
            "vx": state[7], "vy": state[8], "vz": state[9],
            "wx": state[10], "wy": state[11], "wz": state[12],
            "u1": float(u[0, 0]), "u2": float(u[0, 1]),
            "u3": float(u[0, 2]), "u4": float(u[0, 3]),
            "reward": float(result.rewards[0]),
        }
        for name, values in result.components.items():
            row[f"r_{name}"] = float(values[0])
        rows.append(row)
    return rows


def write_trajectory_csv(rows: list[dict], path: str | Path) -> None:
    if not rows:
        raise ValueError("no trajectory rows to write")
    path = Path(path)
    with open(path, "w", newline="") as f:
        f.write(TRAJECTORY_HEADER_COMMENT + "\n")
        writer = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)


def read_metrics(run_dir: str | Path) -> list[dict]:
    path = Path(run_dir) / "metrics.jsonl"
    rows = []
    with open(path) as f:
        for line in f:
            line = line.strip()
            if line:
                rows.append(json.loads(line))
    return rows


def export_plot_data(run_dir: str | Path, out_dir: str | Path) -> list[Path]:
    """Tidy CSVs (samples vs per-task return, loss curves) from a metric log."""
    rows = read_metrics(run_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    returns_path = out_dir / "returns_curves.csv"
    with open(returns_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["schema", "samples", "task", "return_mean", "episodes", "curriculum_level"])
        for row in rows:
            for task, info in row["tasks"].items():
                writer.writerow(
                    [1, row["samples"], task, info["return_mean"], info["episodes"],
                     info["curriculum_level"]]
                )
    written.append(returns_path)

    losses_path = out_dir / "loss_curves.csv"
    loss_keys = sorted(rows[0]["losses"].keys()) if rows else []
    with open(losses_path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["schema", "samples"] + loss_keys)
        for row in rows:
            writer.writerow([1, row["samples"]] + [row["losses"][k] for k in loss_keys])
    written.append(losses_path)
    return written
