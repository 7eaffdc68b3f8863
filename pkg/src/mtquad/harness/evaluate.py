"""Evaluation protocols and metrics for the three tasks.

All evaluations run the deterministic actor (mean action for policies) on a
batch of frozen-on-termination environments, so repeated runs with the same
seed give identical numbers. Failed trials keep their metric at the episode
horizon in the reported means; per-trial arrays carry inf so success rates
stay visible.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from ..curriculum import CurriculumConfig
from ..dynamics import QuadParams, V
from ..tasks import TaskId, TerminationReason
from ..tasks.envs import (
    RacingTaskConfig,
    RacingVecEnv,
    StabilizationTaskConfig,
    StabilizationVecEnv,
    TrackingTaskConfig,
    TrackingVecEnv,
    racing_start_grid,
)
from ..tracks import Track

Actor = Callable[..., np.ndarray]

_NO_CURRICULUM = CurriculumConfig(enabled=False)  # evaluate at full difficulty


@dataclass
class RacingEval:
    success_rate: float
    mean_gate_error: float
    lap_time: float
    n_trials: int
    lap_times: np.ndarray  # nan where the circuit was not completed
    gate_errors: np.ndarray
    crashes: int

    def as_row(self) -> dict:
        return {
            "sr": self.success_rate,
            "mge": self.mean_gate_error,
            "lt": self.lap_time,
        }


@dataclass
class StabilizationEval:
    t_half: float
    t_full: float
    success_rate: float
    crashes: int
    n_trials: int
    t_half_trials: np.ndarray  # inf where never achieved
    t_full_trials: np.ndarray

    def as_row(self) -> dict:
        return {"t_half": self.t_half, "t_full": self.t_full}


@dataclass
class TrackingEval:
    e_v: float
    n_trials: int

    def as_row(self) -> dict:
        return {"e_v": self.e_v}


def _run_to_completion(env, actor: Actor) -> None:
    for _ in range(env.horizon_steps):
        if not env.active.any():
            break
        env.step(actor(env))


def eval_racing(
    actor: Actor,
    track: Track,
    params: QuadParams,
    cfg: Optional[RacingTaskConfig] = None,
    n_starts: int = 64,
    seed: int = 0,
    horizon_s: float = 25.0,
    one_hot: bool = True,
) -> RacingEval:
    """Race from ``n_starts`` start positions; a trial succeeds when it flies
    one full circuit (first gate back to first gate) without crashing.

    With the default 64 starts, positions come from a 4x4x4 grid over the
    start region; other counts draw uniformly from the region.
    """
    cfg = cfg or RacingTaskConfig()
    eval_cfg = dataclasses.replace(cfg, horizon_s=horizon_s, terminate_on_lap=True)
    if n_starts == 64:
        starts = racing_start_grid(track, eval_cfg)
    else:
        rng = np.random.default_rng(seed)
        gate = track.gates[0]
        center = gate.center - eval_cfg.start_offset * gate.normal
        extent = 0.5 * np.asarray(eval_cfg.start_extent)
        starts = center + rng.uniform(-extent, extent, (n_starts, 3))
    env = RacingVecEnv(
        n_starts, params, eval_cfg, track, fixed_starts=starts,
        curriculum_cfg=_NO_CURRICULUM, seed=seed, one_hot=one_hot, autoreset=False,
    )
    _run_to_completion(env, actor)

    n_gates = len(track)
    lap_times = np.full(n_starts, np.nan)
    errors: list[float] = []
    for i in range(n_starts):
        log = env.pass_log[i]
        errors.extend(err for _, _, err in log)
        gate0_times = [t for t, g, _ in log if g == 0]
        if env.gates_passed[i] >= n_gates + 1 and len(gate0_times) >= 2:
            lap_times[i] = gate0_times[1] - gate0_times[0]
    completed = np.isfinite(lap_times)
    crashes = int(np.sum((~env.active) & (env.step_counts < env.horizon_steps) & ~completed))
    return RacingEval(
        success_rate=float(np.mean(completed)),
        mean_gate_error=float(np.mean(errors)) if errors else math.nan,
        lap_time=float(np.mean(lap_times[completed])) if completed.any() else math.nan,
        n_trials=n_starts,
        lap_times=lap_times,
        gate_errors=np.asarray(errors),
        crashes=crashes,
    )


def eval_stabilization(
    actor: Actor,
    params: QuadParams,
    cfg: Optional[StabilizationTaskConfig] = None,
    n_trials: int = 32,
    seed: int = 0,
    one_hot: bool = True,
) -> StabilizationEval:
    """Time-to-stabilize metrics from the full-difficulty initial distribution.

    t_half: first time speed drops to half its initial value; t_full: first
    time speed falls below the hover threshold. Unachieved trials count as
    the horizon in the means and as inf in the per-trial arrays.
    """
    cfg = cfg or StabilizationTaskConfig()
    eval_cfg = dataclasses.replace(cfg, terminate_on_ground=True)
    env = StabilizationVecEnv(
        n_trials, params, eval_cfg, curriculum_cfg=_NO_CURRICULUM, seed=seed,
        one_hot=one_hot, autoreset=False,
    )
    dt = env.control_dt
    v0 = np.linalg.norm(env.states[:, V], axis=-1)
    t_half = np.full(n_trials, np.inf)
    t_full = np.full(n_trials, np.inf)
    t_half[v0 <= 0.0] = 0.0
    t_full[v0 < cfg.hover_speed_threshold] = 0.0
    crashes = 0
    for k in range(env.horizon_steps):
        if not env.active.any():
            break
        was_active = env.active.copy()
        result = env.step(actor(env))
        crashes += sum(1 for c in result.completed if c["reason"] is TerminationReason.CRASH)
        speed = np.linalg.norm(env.states[:, V], axis=-1)
        t_now = (k + 1) * dt
        t_half[was_active & np.isinf(t_half) & (speed <= 0.5 * v0)] = t_now
        t_full[was_active & np.isinf(t_full) & (speed < cfg.hover_speed_threshold)] = t_now
    horizon = env.horizon_steps * dt
    return StabilizationEval(
        t_half=float(np.mean(np.minimum(t_half, horizon))),
        t_full=float(np.mean(np.minimum(t_full, horizon))),
        success_rate=float(np.mean(np.isfinite(t_full))),
        crashes=crashes,
        n_trials=n_trials,
        t_half_trials=t_half,
        t_full_trials=t_full,
    )


def eval_tracking(
    actor: Actor,
    params: QuadParams,
    cfg: Optional[TrackingTaskConfig] = None,
    n_trials: int = 16,
    seed: int = 0,
    one_hot: bool = True,
) -> TrackingEval:
    """Mean over time and trials of the velocity-tracking error norm."""
    cfg = cfg or TrackingTaskConfig()
    env = TrackingVecEnv(
        n_trials, params, cfg, curriculum_cfg=_NO_CURRICULUM, seed=seed,
        one_hot=one_hot, autoreset=False,
    )
    errors = []
    for _ in range(env.horizon_steps):
        v = env.states[:, V]
        v_d = env.desired_velocity()
        errors.append(np.linalg.norm(v - v_d, axis=-1))
        env.step(actor(env))
    return TrackingEval(e_v=float(np.mean(errors)), n_trials=n_trials)
