"""Scripted controllers: evaluation oracles and debugging baselines.

All controllers are callables taking a vectorized environment and returning
raw commands in the policy's [-1, 1]^4 range, so they plug into the same
evaluation loop as trained policies. The geometric backend converts a
desired world acceleration plus yaw direction into collective thrust and
body-rate setpoints (SE(3)-style attitude error feedback).
"""

from __future__ import annotations

import numpy as np
import torch

from ..dynamics import P, Q, V, QuadParams
from ..geom import quat_to_rotmat
from ..tasks import TaskId, VecTaskEnv
from ..tasks.envs import RacingVecEnv
from ..tracks import Track

_Z = np.array([0.0, 0.0, 1.0])


class GeometricBackend:
    """Maps (desired acceleration, yaw direction) to policy-range commands."""

    def __init__(self, params: QuadParams, k_att: float = 10.0):
        self.params = params
        self.k_att = k_att

    def commands(self, states: np.ndarray, accel_des: np.ndarray, yaw_dir: np.ndarray) -> np.ndarray:
        p = self.params
        n = states.shape[0]
        f_des = p.mass * (accel_des + p.gravity * _Z)  # world-frame thrust vector
        thrust = np.linalg.norm(f_des, axis=-1)
        thrust = np.clip(thrust, 0.02 * p.max_total_thrust, 0.98 * p.max_total_thrust)

        z_des = f_des / np.maximum(np.linalg.norm(f_des, axis=-1, keepdims=True), 1e-9)
        x_c = yaw_dir.copy()
        x_c[:, 2] = 0.0
        norms = np.linalg.norm(x_c, axis=-1, keepdims=True)
        x_c = np.where(norms > 1e-6, x_c / np.maximum(norms, 1e-9), np.array([1.0, 0.0, 0.0]))
        y_des = np.cross(z_des, x_c)
        y_des /= np.maximum(np.linalg.norm(y_des, axis=-1, keepdims=True), 1e-9)
        x_des = np.cross(y_des, z_des)
        r_des = np.stack([x_des, y_des, z_des], axis=-1)

        q = states[:, Q] / np.linalg.norm(states[:, Q], axis=-1, keepdims=True)
        r = quat_to_rotmat(q)
        err = 0.5 * (
            np.swapaxes(r_des, -1, -2) @ r - np.swapaxes(r, -1, -2) @ r_des
        )
        e_att = np.stack([err[:, 2, 1], err[:, 0, 2], err[:, 1, 0]], axis=-1)
        omega_cmd = -self.k_att * e_att

        u = np.empty((n, 4))
        u[:, 0] = 2.0 * thrust / p.max_total_thrust - 1.0
        u[:, 1:4] = np.clip(omega_cmd / p._rate_limits, -1.0, 1.0)
        return u


class GateCenterFollower:
    """Line-tracking controller flying through gate centers in track order.

    The path is a waypoint loop with one leg per gate running straight down
    the gate axis (approach point to exit point) and transfer legs between
    gates. Desired velocity combines cruise speed along the current leg with
    lateral-error feedback toward the leg line, so plane crossings land on
    the gate center. Used as the racing evaluation oracle.
    """

    def __init__(
        self,
        track: Track,
        params: QuadParams,
        v_cruise: float = 2.0,
        k_v: float = 4.0,
        k_line: float = 3.0,
        pre_dist: float = 3.0,
        post_dist: float = 1.0,
        switch_radius: float = 0.35,
        max_accel: float = 10.0,
    ):
        self.track = track
        self.backend = GeometricBackend(params)
        self.v_cruise = v_cruise
        self.k_v = k_v
        self.k_line = k_line
        self.switch_radius = switch_radius
        self.max_accel = max_accel
        points = []
        for gate in track.gates:
            points.append(gate.center - pre_dist * gate.normal)
            points.append(gate.center + post_dist * gate.normal)
        self.waypoints = np.asarray(points)
        self._wp_idx: np.ndarray | None = None

    def _legs(self, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        n_wp = len(self.waypoints)
        target = self.waypoints[idx % n_wp]
        prev = self.waypoints[(idx - 1) % n_wp]
        return prev, target

    def _advance(self, pos: np.ndarray) -> None:
        idx = self._wp_idx
        for _ in range(2):
            prev, target = self._legs(idx)
            leg = target - prev
            leg /= np.maximum(np.linalg.norm(leg, axis=-1, keepdims=True), 1e-9)
            close = np.linalg.norm(target - pos, axis=-1) < self.switch_radius
            beyond = np.sum((pos - target) * leg, axis=-1) > 0.0
            idx = idx + (close | beyond)
        self._wp_idx = idx

    def __call__(self, env: RacingVecEnv) -> np.ndarray:
        states = env.states
        pos = states[:, P]
        vel = states[:, V]
        if self._wp_idx is None or len(self._wp_idx) != env.n:
            self._wp_idx = np.zeros(env.n, dtype=np.int64)
        self._advance(pos)
        prev, target = self._legs(self._wp_idx)
        leg = target - prev
        leg_dir = leg / np.maximum(np.linalg.norm(leg, axis=-1, keepdims=True), 1e-9)
        # lateral offset from the leg line, measured at the current position
        rel = pos - prev
        lateral = rel - np.sum(rel * leg_dir, axis=-1, keepdims=True) * leg_dir
        v_des = self.v_cruise * leg_dir - self.k_line * lateral
        accel = self.k_v * (v_des - vel)
        scale = np.minimum(1.0, self.max_accel / np.maximum(np.linalg.norm(accel, axis=-1), 1e-9))
        accel *= scale[:, None]
        # camera toward the next gate center to keep the perception term honest
        gate_centers = env._centers[env.gate_idx]
        yaw_dir = gate_centers - pos
        return self.backend.commands(states, accel, yaw_dir)


class HoverRecoveryController:
    """Velocity-damping altitude-hold oracle for the stabilization task."""

    def __init__(self, params: QuadParams, z_target: float, k_v: float = 2.5, k_z: float = 2.0,
                 max_accel: float = 12.0):
        self.backend = GeometricBackend(params)
        self.z_target = z_target
        self.k_v = k_v
        self.k_z = k_z
        self.max_accel = max_accel

    def __call__(self, env: VecTaskEnv) -> np.ndarray:
        states = env.states
        vel = states[:, V]
        accel = -self.k_v * vel
        accel[:, 2] += self.k_z * (self.z_target - states[:, 2])
        norm = np.linalg.norm(accel, axis=-1)
        accel *= np.minimum(1.0, self.max_accel / np.maximum(norm, 1e-9))[:, None]
        yaw_dir = np.tile([1.0, 0.0, 0.0], (env.n, 1))
        return self.backend.commands(states, accel, yaw_dir)


class ConstantActionController:
    """Replays one fixed command; the exact-hover case is the tracking oracle."""

    def __init__(self, u: np.ndarray):
        self.u = np.asarray(u, dtype=np.float64)

    def __call__(self, env: VecTaskEnv) -> np.ndarray:
        return np.tile(self.u, (env.n, 1))


class PolicyActor:
    """Deterministic (mean-action) wrapper around a trained policy."""

    def __init__(self, policy, normalizer, task: TaskId):
        self.policy = policy
        self.normalizer = normalizer
        self.task = task

    def __call__(self, env: VecTaskEnv) -> np.ndarray:
        shared_raw, task_raw = env.observations()
        shared, task_obs = self.normalizer.normalize(self.task, shared_raw, task_raw)
        mean = self.policy.mean_action(
            self.task,
            torch.as_tensor(np.asarray(shared, dtype=np.float32)),
            torch.as_tensor(np.asarray(task_obs, dtype=np.float32)),
        )
        return mean.numpy().astype(np.float64)
