"""Task environments for racing, stabilization, and velocity tracking.

Environments are vectorized: one instance advances ``n_envs`` vehicles in
lock-step through the batched dynamics core, while resets and random draws
stay per-vehicle with independent generators. ``TaskEnv`` wraps the
single-vehicle case with reset/step semantics; the trainer drives the
vectorized interface directly.

Episode protocol per step: the raw policy output is clipped to [-1, 1],
mapped to a thrust/body-rate setpoint, and integrated for one control
period. The task then scores the transition, detects crash/success events,
and times out at the horizon. With autoreset on, finished vehicles restart
immediately and the returned observation comes from the fresh episode.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..curriculum import CurriculumConfig, CurriculumState
from ..dynamics import (
    P,
    Q,
    STATE_DIM,
    V,
    W,
    DiagnosticCounters,
    QuadParams,
    linear_acceleration_flat,
    policy_output_to_commands,
    step_commands,
)
from ..tracks import Track, default_track, load_track, segment_point_distances
from .core import (
    Observation,
    StepResult,
    TaskId,
    TerminationReason,
    body_x_axis_world,
    one_hot_code,
    shared_obs_flat,
)
from .rewards import (
    RacingRewardCoeffs,
    StabilizationRewardCoeffs,
    TrackingRewardCoeffs,
    attitude_error_angle,
    racing_reward_terms,
    stabilization_reward_terms,
    tracking_reward_terms,
)
from .sampling import sample_stabilization_initial, sample_velocity_profile


@dataclass
class RacingTaskConfig:
    track: str = "figure8"
    horizon_s: float = 15.0
    pass_margin: float = 0.0
    collision_radius: float = 0.15
    start_offset: float = 3.5
    start_extent: tuple[float, float, float] = (2.0, 2.0, 1.0)
    terminate_on_lap: bool = False
    coeffs: RacingRewardCoeffs = field(default_factory=RacingRewardCoeffs)


@dataclass
class StabilizationTaskConfig:
    z_d: float = 5.0
    horizon_s: float = 5.0
    speed_caps: tuple[float, float, float] = (20.0, 20.0, 4.0)
    pos_xy_range: float = 2.0
    z_sample_range: tuple[float, float] = (2.0, 8.0)
    max_tilt: float = np.pi / 3
    omega_range: float = 1.0
    hover_speed_threshold: float = 0.5
    hover_window_s: float = 0.5
    terminate_on_success: bool = False
    # ground contact ends the episode only when set; left off for training so
    # an all-penalty return cannot be escaped by diving into the ground
    terminate_on_ground: bool = False
    ballistic_safety_s: float = 1.0
    coeffs: StabilizationRewardCoeffs = field(default_factory=StabilizationRewardCoeffs)


@dataclass
class TrackingTaskConfig:
    start_z: float = 3.0
    horizon_s: float = 10.0
    accel_max: float = 6.0
    # pins the profile's initial value instead of drawing it (oracle/debug use)
    v_start: Optional[tuple[float, float, float]] = None
    coeffs: TrackingRewardCoeffs = field(default_factory=TrackingRewardCoeffs)


@dataclass
class _TaskOutcome:
    rewards: np.ndarray
    components: dict[str, np.ndarray]
    crashed: np.ndarray
    success_now: np.ndarray
    success_seen: np.ndarray


@dataclass
class VecStepResult:
    obs_shared: np.ndarray
    obs_task: np.ndarray
    rewards: np.ndarray
    components: dict[str, np.ndarray]
    terminated: np.ndarray
    reasons: np.ndarray  # TerminationReason values as ints
    completed: list[dict]


class VecTaskEnv:
    """Base class: batched stepping, horizons, resets, and bookkeeping."""

    task: TaskId

    def __init__(
        self,
        n_envs: int,
        params: QuadParams,
        horizon_s: float,
        curriculum_cfg: Optional[CurriculumConfig] = None,
        seed: int = 0,
        one_hot: bool = True,
        autoreset: bool = True,
    ):
        if n_envs < 1:
            raise ValueError("n_envs must be >= 1")
        self.n = n_envs
        self.params = params
        self.curriculum_cfg = curriculum_cfg or CurriculumConfig()
        self.curriculum = CurriculumState()
        self.one_hot = one_hot
        self.autoreset = autoreset
        self.counters = DiagnosticCounters()
        self.control_dt = params.control_dt
        self.horizon_steps = int(round(horizon_s / params.control_dt))
        self.rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n_envs)]
        self.states = np.zeros((n_envs, STATE_DIM))
        self.a_prev = np.zeros((n_envs, 4))
        self.step_counts = np.zeros(n_envs, dtype=np.int64)
        self.episode_returns = np.zeros(n_envs)
        self.active = np.ones(n_envs, dtype=bool)

    # ---- per-task hooks -------------------------------------------------
    def _sample_initial(self, i: int) -> None:
        raise NotImplementedError

    def _task_obs(self) -> np.ndarray:
        raise NotImplementedError

    def _step_task(self, prev_states, new_states, u_clipped) -> _TaskOutcome:
        raise NotImplementedError

    def _episode_extra(self, i: int) -> dict:
        return {}

    def _task_state(self) -> dict:
        return {}

    def _set_task_state(self, state: dict) -> None:
        pass

    # ---- common machinery ------------------------------------------------
    def _reset_env(self, i: int) -> None:
        self._sample_initial(i)
        self.a_prev[i] = 0.0
        self.step_counts[i] = 0
        self.episode_returns[i] = 0.0

    def reset_all(self) -> tuple[np.ndarray, np.ndarray]:
        for i in range(self.n):
            self._reset_env(i)
        self.active[:] = True
        return self.observations()

    def observations(self) -> tuple[np.ndarray, np.ndarray]:
        shared = shared_obs_flat(self.states, self.a_prev)
        task_obs = self._task_obs()
        if self.one_hot:
            task_obs = np.concatenate([task_obs, one_hot_code(self.task, self.n)], axis=-1)
        return shared, task_obs

    @property
    def task_obs_dim(self) -> int:
        return self.task.task_obs_dim(self.one_hot)

    @property
    def time_s(self) -> np.ndarray:
        return self.step_counts * self.control_dt

    def step(self, u: np.ndarray) -> VecStepResult:
        u = np.asarray(u, dtype=np.float64)
        if u.shape != (self.n, 4):
            raise ValueError(f"expected actions of shape {(self.n, 4)}, got {u.shape}")
        mask = self.active.copy()
        if not mask.any():
            raise RuntimeError("all environments terminated; reset before stepping")

        u_clipped = np.clip(u, -1.0, 1.0)
        self.counters.action_clips += int(np.sum(np.abs(u[mask]) > 1.0))
        commands = policy_output_to_commands(u_clipped, self.params, None)
        prev_states = self.states
        new_states = step_commands(prev_states, commands, self.control_dt, self.params, self.counters)
        if not mask.all():
            new_states[~mask] = prev_states[~mask]

        outcome = self._step_task(prev_states, new_states, u_clipped)
        self.states = new_states
        self.a_prev = np.where(mask[:, None], u_clipped, self.a_prev)
        rewards = np.where(mask, outcome.rewards, 0.0)
        self.episode_returns += rewards
        self.step_counts += mask

        crashed = mask & outcome.crashed
        success = mask & outcome.success_now & ~crashed
        timeout = mask & (self.step_counts >= self.horizon_steps) & ~crashed & ~success
        terminated = crashed | success | timeout

        reasons = np.full(self.n, TerminationReason.NONE.value, dtype=np.int64)
        reasons[crashed] = TerminationReason.CRASH.value
        reasons[success] = TerminationReason.SUCCESS.value
        reasons[timeout & outcome.success_seen] = TerminationReason.SUCCESS.value
        reasons[timeout & ~outcome.success_seen] = TerminationReason.TIMEOUT.value

        completed = []
        for i in np.nonzero(terminated)[0]:
            summary = {
                "env": int(i),
                "return": float(self.episode_returns[i]),
                "length": int(self.step_counts[i]),
                "reason": TerminationReason(int(reasons[i])),
            }
            summary.update(self._episode_extra(int(i)))
            completed.append(summary)
            if self.autoreset:
                self._reset_env(int(i))
            else:
                self.active[i] = False

        obs_shared, obs_task = self.observations()
        return VecStepResult(
            obs_shared=obs_shared,
            obs_task=obs_task,
            rewards=rewards,
            components=outcome.components,
            terminated=terminated,
            reasons=reasons,
            completed=completed,
        )

    # ---- checkpoint support ----------------------------------------------
    def get_state(self) -> dict:
        return {
            "states": self.states.copy(),
            "a_prev": self.a_prev.copy(),
            "step_counts": self.step_counts.copy(),
            "episode_returns": self.episode_returns.copy(),
            "active": self.active.copy(),
            "rng_states": [r.bit_generator.state for r in self.rngs],
            "curriculum_samples": self.curriculum.samples_seen,
            "counters": (self.counters.action_clips, self.counters.motor_saturations),
            "task": self._task_state(),
        }

    def set_state(self, state: dict) -> None:
        self.states = state["states"].copy()
        self.a_prev = state["a_prev"].copy()
        self.step_counts = state["step_counts"].copy()
        self.episode_returns = state["episode_returns"].copy()
        self.active = state["active"].copy()
        for rng, s in zip(self.rngs, state["rng_states"]):
            rng.bit_generator.state = s
        self.curriculum = CurriculumState(samples_seen=state["curriculum_samples"])
        self.counters.action_clips, self.counters.motor_saturations = state["counters"]
        self._set_task_state(state["task"])


class RacingVecEnv(VecTaskEnv):
    task = TaskId.RACING

    def __init__(
        self,
        n_envs: int,
        params: QuadParams,
        cfg: RacingTaskConfig,
        track: Track,
        fixed_starts: Optional[np.ndarray] = None,
        **kwargs,
    ):
        self.cfg = cfg
        self.track = track
        g = track.gates
        self._centers = np.stack([gate.center for gate in g])
        self._normals = np.stack([gate.normal for gate in g])
        self._sides = np.stack([gate.side for gate in g])
        self._ups = np.stack([gate.up for gate in g])
        self._half_w = np.array([gate.half_width for gate in g])
        self._half_h = np.array([gate.half_height for gate in g])
        corners = np.stack([gate.corners() for gate in g])  # (G,4,3)
        self._corners_flat = corners.reshape(len(g), 12)
        self._delta2 = (np.roll(corners, -1, axis=0) - corners).reshape(len(g), 12)
        self._edge_starts, self._edge_ends = track.all_edges()
        self.fixed_starts = fixed_starts
        start_gate = g[0]
        self._start_center = start_gate.center - cfg.start_offset * start_gate.normal
        super().__init__(n_envs, params, cfg.horizon_s, **kwargs)
        self.gate_idx = np.zeros(self.n, dtype=np.int64)
        self.d_gate = np.zeros(self.n)
        self.gates_passed = np.zeros(self.n, dtype=np.int64)
        self.pass_log: list[list[tuple[float, int, float]]] = [[] for _ in range(self.n)]
        self.reset_all()

    def _sample_initial(self, i: int) -> None:
        if self.fixed_starts is not None:
            p = np.asarray(self.fixed_starts[i], dtype=np.float64)
        else:
            extent = 0.5 * np.asarray(self.cfg.start_extent)
            p = self._start_center + self.rngs[i].uniform(-extent, extent)
        to_gate = self._centers[0] - p
        yaw = np.arctan2(to_gate[1], to_gate[0])
        self.states[i, P] = p
        self.states[i, Q] = [np.cos(yaw / 2), 0.0, 0.0, np.sin(yaw / 2)]
        self.states[i, V] = 0.0
        self.states[i, W] = 0.0
        self.states[i, 13:17] = self.params.hover_thrust / 4.0
        self.gate_idx[i] = 0
        self.d_gate[i] = np.linalg.norm(p - self._centers[0])
        self.gates_passed[i] = 0
        self.pass_log[i] = []

    def _task_obs(self) -> np.ndarray:
        p = self.states[:, P]
        g = self.gate_idx
        delta_p1 = self._corners_flat[g] - np.tile(p, 4)
        return np.concatenate([delta_p1, self._delta2[g]], axis=-1)

    def _step_task(self, prev_states, new_states, u_clipped) -> _TaskOutcome:
        p_prev = prev_states[:, P]
        p_curr = new_states[:, P]
        g = self.gate_idx
        normal = self._normals[g]
        center = self._centers[g]

        d_prev_sig = np.sum(normal * (p_prev - center), axis=-1)
        d_curr_sig = np.sum(normal * (p_curr - center), axis=-1)
        denom = d_prev_sig - d_curr_sig
        with np.errstate(divide="ignore", invalid="ignore"):
            frac = np.where(np.abs(denom) > 1e-12, d_prev_sig / denom, 0.0)
        crossing = p_prev + frac[:, None] * (p_curr - p_prev)
        offset = crossing - center
        in_aperture = (
            np.abs(np.sum(offset * self._sides[g], axis=-1))
            <= self._half_w[g] + self.cfg.pass_margin
        ) & (
            np.abs(np.sum(offset * self._ups[g], axis=-1))
            <= self._half_h[g] + self.cfg.pass_margin
        )
        passed = (d_prev_sig < 0.0) & (d_curr_sig >= 0.0) & in_aperture
        gate_err = np.linalg.norm(offset, axis=-1)

        d_curr_dist = np.linalg.norm(p_curr - center, axis=-1)
        delta_d = self.d_gate - d_curr_dist

        to_gate = center - p_curr
        dist = np.linalg.norm(to_gate, axis=-1)
        optical = body_x_axis_world(new_states[:, Q])
        with np.errstate(invalid="ignore"):
            cos_angle = np.sum(optical * to_gate, axis=-1) / np.maximum(dist, 1e-9)
        cam_angle = np.where(dist > 1e-9, np.arccos(np.clip(cos_angle, -1.0, 1.0)), 0.0)

        edge_dist = segment_point_distances(p_curr, self._edge_starts, self._edge_ends).min(axis=1)
        crashed = (p_curr[:, 2] <= 0.0) | (edge_dist < self.cfg.collision_radius)

        rewards, components = racing_reward_terms(
            delta_d,
            cam_angle,
            np.linalg.norm(u_clipped - self.a_prev, axis=-1),
            np.linalg.norm(new_states[:, W], axis=-1),
            passed,
            crashed,
            self.cfg.coeffs,
        )

        for i in np.nonzero(passed)[0]:
            t_cross = (self.step_counts[i] + frac[i]) * self.control_dt
            self.pass_log[i].append((float(t_cross), int(g[i]), float(gate_err[i])))
        self.gates_passed += passed
        self.gate_idx = np.where(passed, (g + 1) % len(self.track), g)
        self.d_gate = np.linalg.norm(p_curr - self._centers[self.gate_idx], axis=-1)

        lap_done = self.gates_passed >= len(self.track) + 1
        success_now = lap_done & self.cfg.terminate_on_lap
        return _TaskOutcome(rewards, components, crashed, success_now, lap_done)

    def _episode_extra(self, i: int) -> dict:
        return {"gates_passed": int(self.gates_passed[i])}

    def _task_state(self) -> dict:
        return {
            "gate_idx": self.gate_idx.copy(),
            "d_gate": self.d_gate.copy(),
            "gates_passed": self.gates_passed.copy(),
            "pass_log": [list(log) for log in self.pass_log],
        }

    def _set_task_state(self, state: dict) -> None:
        self.gate_idx = state["gate_idx"].copy()
        self.d_gate = state["d_gate"].copy()
        self.gates_passed = state["gates_passed"].copy()
        self.pass_log = [list(log) for log in state["pass_log"]]


class StabilizationVecEnv(VecTaskEnv):
    task = TaskId.STABILIZATION

    def __init__(self, n_envs: int, params: QuadParams, cfg: StabilizationTaskConfig, **kwargs):
        self.cfg = cfg
        super().__init__(n_envs, params, cfg.horizon_s, **kwargs)
        self.window_steps = max(1, int(round(cfg.hover_window_s / params.control_dt)))
        self.hover_streak = np.zeros(self.n, dtype=np.int64)
        self.success_seen = np.zeros(self.n, dtype=bool)
        self.reset_all()

    def _sample_initial(self, i: int) -> None:
        scale = self.curriculum.stabilization_speed_scale(self.curriculum_cfg)
        state = sample_stabilization_initial(
            self.rngs[i],
            scale,
            np.asarray(self.cfg.speed_caps),
            self.params,
            pos_xy_range=self.cfg.pos_xy_range,
            z_range=self.cfg.z_sample_range,
            max_tilt=self.cfg.max_tilt,
            omega_range=self.cfg.omega_range,
            ballistic_safety_s=self.cfg.ballistic_safety_s,
        )
        self.states[i] = state.as_vector()
        self.hover_streak[i] = 0
        self.success_seen[i] = False

    def _task_obs(self) -> np.ndarray:
        accel = linear_acceleration_flat(self.states, self.params)
        z_d = np.full((self.n, 1), self.cfg.z_d)
        return np.concatenate([accel, z_d], axis=-1)

    def _step_task(self, prev_states, new_states, u_clipped) -> _TaskOutcome:
        v_norm = np.linalg.norm(new_states[:, V], axis=-1)
        below = v_norm < self.cfg.hover_speed_threshold
        self.hover_streak = np.where(below, self.hover_streak + 1, 0)
        hovering = self.hover_streak >= self.window_steps
        self.success_seen |= hovering

        rewards, components = stabilization_reward_terms(
            np.abs(new_states[:, 2] - self.cfg.z_d),
            attitude_error_angle(new_states[:, Q], self.cfg.coeffs.attitude_mode),
            v_norm,
            np.linalg.norm(new_states[:, W], axis=-1),
            np.linalg.norm(u_clipped - self.a_prev, axis=-1),
            hovering,
            self.cfg.coeffs,
        )
        if self.cfg.terminate_on_ground:
            crashed = new_states[:, 2] <= 0.0
        else:
            crashed = np.zeros(self.n, dtype=bool)
        success_now = hovering & self.cfg.terminate_on_success
        return _TaskOutcome(rewards, components, crashed, success_now, self.success_seen.copy())

    def _episode_extra(self, i: int) -> dict:
        return {"hover_success": bool(self.success_seen[i])}

    def _task_state(self) -> dict:
        return {"hover_streak": self.hover_streak.copy(), "success_seen": self.success_seen.copy()}

    def _set_task_state(self, state: dict) -> None:
        self.hover_streak = state["hover_streak"].copy()
        self.success_seen = state["success_seen"].copy()


class TrackingVecEnv(VecTaskEnv):
    task = TaskId.TRACKING

    def __init__(self, n_envs: int, params: QuadParams, cfg: TrackingTaskConfig, **kwargs):
        self.cfg = cfg
        super().__init__(n_envs, params, cfg.horizon_s, **kwargs)
        self.profiles = np.zeros((self.n, self.horizon_steps + 1, 3))
        self.reset_all()

    def _sample_initial(self, i: int) -> None:
        bounds = self.curriculum.tracking_speed_bounds(self.curriculum_cfg)
        v_start = None if self.cfg.v_start is None else np.asarray(self.cfg.v_start)
        profile = sample_velocity_profile(
            self.rngs[i], bounds, self.horizon_steps, self.control_dt, self.cfg.accel_max,
            v_start=v_start,
        )
        self.profiles[i] = profile.v_d
        self.states[i, P] = [0.0, 0.0, self.cfg.start_z]
        self.states[i, Q] = [1.0, 0.0, 0.0, 0.0]
        self.states[i, V] = 0.0
        self.states[i, W] = 0.0
        self.states[i, 13:17] = self.params.hover_thrust / 4.0

    def desired_velocity(self) -> np.ndarray:
        """Current v_d target, aligned with the current observation time."""
        k = np.minimum(self.step_counts, self.horizon_steps)
        return self.profiles[np.arange(self.n), k]

    def _task_obs(self) -> np.ndarray:
        accel = linear_acceleration_flat(self.states, self.params)
        return np.concatenate([self.desired_velocity(), accel], axis=-1)

    def _step_task(self, prev_states, new_states, u_clipped) -> _TaskOutcome:
        k = np.minimum(self.step_counts + 1, self.horizon_steps)
        v_d = self.profiles[np.arange(self.n), k]
        rewards, components = tracking_reward_terms(
            np.linalg.norm(new_states[:, V] - v_d, axis=-1),
            np.linalg.norm(new_states[:, W], axis=-1),
            np.linalg.norm(u_clipped - self.a_prev, axis=-1),
            self.cfg.coeffs,
        )
        never = np.zeros(self.n, dtype=bool)
        return _TaskOutcome(rewards, components, never, never, never)

    def _task_state(self) -> dict:
        return {"profiles": self.profiles.copy()}

    def _set_task_state(self, state: dict) -> None:
        self.profiles = state["profiles"].copy()


class TaskEnv:
    """Single-vehicle environment with explicit reset/step semantics."""

    def __init__(self, vec: VecTaskEnv):
        if vec.n != 1 or vec.autoreset:
            raise ValueError("TaskEnv wraps a single-instance env without autoreset")
        self._vec = vec
        self._terminated = True

    @property
    def task(self) -> TaskId:
        return self._vec.task

    @property
    def vec(self) -> VecTaskEnv:
        return self._vec

    @property
    def state(self):
        from ..dynamics import QuadState

        return QuadState.from_vector(self._vec.states[0])

    def reset(self) -> Observation:
        self._vec._reset_env(0)
        self._vec.active[:] = True
        self._terminated = False
        shared, task_obs = self._vec.observations()
        return Observation(shared[0], task_obs[0], self.task)

    def step(self, u: np.ndarray) -> StepResult:
        if self._terminated:
            raise RuntimeError("episode already terminated; call reset() first")
        result = self._vec.step(np.asarray(u, dtype=np.float64)[None, :])
        self._terminated = bool(result.terminated[0])
        return StepResult(
            observation=Observation(result.obs_shared[0], result.obs_task[0], self.task),
            reward=float(result.rewards[0]),
            reward_components={k: float(v[0]) for k, v in result.components.items()},
            terminated=self._terminated,
            termination_reason=TerminationReason(int(result.reasons[0])),
        )


def resolve_track(spec: str) -> Track:
    if spec == "figure8":
        return default_track()
    return load_track(spec)


def make_vec_env(
    task: TaskId,
    n_envs: int,
    params: QuadParams,
    cfg,
    curriculum_cfg: Optional[CurriculumConfig] = None,
    seed: int = 0,
    one_hot: bool = True,
    autoreset: bool = True,
    track: Optional[Track] = None,
    fixed_starts: Optional[np.ndarray] = None,
) -> VecTaskEnv:
    common = dict(curriculum_cfg=curriculum_cfg, seed=seed, one_hot=one_hot, autoreset=autoreset)
    if task is TaskId.RACING:
        track = track if track is not None else resolve_track(cfg.track)
        return RacingVecEnv(n_envs, params, cfg, track, fixed_starts=fixed_starts, **common)
    if task is TaskId.STABILIZATION:
        return StabilizationVecEnv(n_envs, params, cfg, **common)
    if task is TaskId.TRACKING:
        return TrackingVecEnv(n_envs, params, cfg, **common)
    raise ValueError(f"unknown task {task}")


def make_env(task: TaskId, params: QuadParams, cfg, **kwargs) -> TaskEnv:
    kwargs.setdefault("one_hot", True)
    vec = make_vec_env(task, 1, params, cfg, autoreset=False, **kwargs)
    return TaskEnv(vec)


def racing_task_obs(state, track: Track, next_gate_index: int) -> np.ndarray:
    """Gate-corner observation: offsets of the next gate's corners from the
    vehicle, then corner-wise offsets from the next gate to the one after."""
    gate = track.gate(next_gate_index)
    after = track.gate(next_gate_index + 1)
    corners = gate.corners()
    delta_p1 = (corners - state.p_WB).reshape(12)
    delta_p2 = (after.corners() - corners).reshape(12)
    return np.concatenate([delta_p1, delta_p2])


def racing_start_grid(track: Track, cfg: RacingTaskConfig, n_per_axis: int = 4) -> np.ndarray:
    """Deterministic evaluation start grid over the racing start region."""
    gate = track.gates[0]
    center = gate.center - cfg.start_offset * gate.normal
    extent = 0.5 * np.asarray(cfg.start_extent)
    axes = [np.linspace(-e, e, n_per_axis) for e in extent]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    return center + grid
