"""Reward functions for the three tasks.

Each reward is a sum of named components; the scalar reward always equals
the sum of the emitted components exactly. Coefficients default to the
tuned values used for joint training of all three tasks.

The gate-pass coefficient is negative in the tuned table; flip its sign in
the config if a pass bonus is wanted instead.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dynamics import QuadState
from ..tracks import Track
from .core import TaskId, body_x_axis_world, geodesic_angle_from_quat, tilt_angle_from_quat


@dataclass
class RacingRewardCoeffs:
    progress: float = 0.5
    perception: float = 0.025
    perception_exp: float = -1.0
    action_diff: float = -2e-4
    body_rate: float = -5e-4
    gate_pass: float = -5.0
    crash: float = -10.0


@dataclass
class StabilizationRewardCoeffs:
    height: float = -2e-3
    attitude: float = -2e-4
    velocity: float = -4e-5
    body_rate: float = -1e-5
    action_diff: float = -1e-4
    success: float = 10.0
    attitude_mode: str = "geodesic"  # or "tilt"


@dataclass
class TrackingRewardCoeffs:
    velocity: float = -2e-4
    body_rate: float = -1.2e-3
    action_diff: float = -1e-4


def _norm(x: np.ndarray) -> np.ndarray:
    return np.linalg.norm(x, axis=-1)


def racing_reward_terms(
    delta_gate_dist: np.ndarray,
    cam_angle: np.ndarray,
    action_diff_norm: np.ndarray,
    body_rate_norm: np.ndarray,
    passed: np.ndarray,
    crashed: np.ndarray,
    c: RacingRewardCoeffs,
) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Racing reward from precomputed per-transition quantities (batched)."""
    components = {
        "progress": c.progress * np.asarray(delta_gate_dist, dtype=np.float64),
        "perception": c.perception * np.exp(c.perception_exp * np.asarray(cam_angle) ** 4),
        "action_diff": c.action_diff * np.asarray(action_diff_norm, dtype=np.float64),
        "body_rate": c.body_rate * np.asarray(body_rate_norm, dtype=np.float64),
        "gate_pass": c.gate_pass * np.asarray(passed, dtype=np.float64),
        "crash": c.crash * np.asarray(crashed, dtype=np.float64),
    }
    reward = sum(components.values())
    return reward, components


def racing_reward(
    prev_state: QuadState,
    curr_state: QuadState,
    u_t: np.ndarray,
    u_prev: np.ndarray,
    track: Track,
    gate_index: int,
    passed: bool = False,
    crashed: bool = False,
    coeffs: RacingRewardCoeffs | None = None,
) -> tuple[float, dict[str, float]]:
    """Racing reward for one transition toward the gate at ``gate_index``."""
    c = coeffs or RacingRewardCoeffs()
    center = track.gate(gate_index).center
    d_prev = float(np.linalg.norm(prev_state.p_WB - center))
    d_curr = float(np.linalg.norm(curr_state.p_WB - center))
    to_gate = center - curr_state.p_WB
    dist = np.linalg.norm(to_gate)
    if dist > 1e-9:
        optical = body_x_axis_world(curr_state.q_WB)
        cam_angle = float(np.arccos(np.clip(np.dot(optical, to_gate / dist), -1.0, 1.0)))
    else:
        cam_angle = 0.0
    reward, comps = racing_reward_terms(
        d_prev - d_curr,
        cam_angle,
        float(np.linalg.norm(np.asarray(u_t) - np.asarray(u_prev))),
        float(np.linalg.norm(curr_state.omega_B)),
        passed,
        crashed,
        c,
    )
    return float(reward), {k: float(v) for k, v in comps.items()}


def stabilization_reward_terms(
    height_err: np.ndarray,
    attitude_angle: np.ndarray,
    velocity_norm: np.ndarray,
    body_rate_norm: np.ndarray,
    action_diff_norm: np.ndarray,
    hovering: np.ndarray,
    c: StabilizationRewardCoeffs,
) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    components = {
        "height": c.height * np.asarray(height_err, dtype=np.float64),
        "attitude": c.attitude * np.asarray(attitude_angle, dtype=np.float64),
        "velocity": c.velocity * np.asarray(velocity_norm, dtype=np.float64),
        "body_rate": c.body_rate * np.asarray(body_rate_norm, dtype=np.float64),
        "action_diff": c.action_diff * np.asarray(action_diff_norm, dtype=np.float64),
        "success": c.success * np.asarray(hovering, dtype=np.float64),
    }
    reward = sum(components.values())
    return reward, components


def attitude_error_angle(q: np.ndarray, mode: str) -> np.ndarray:
    if mode == "geodesic":
        return geodesic_angle_from_quat(q)
    if mode == "tilt":
        return tilt_angle_from_quat(q)
    raise ValueError(f"unknown attitude mode {mode!r}")


def stabilization_reward(
    state: QuadState,
    u_t: np.ndarray,
    u_prev: np.ndarray,
    z_d: float,
    hovering: bool = False,
    coeffs: StabilizationRewardCoeffs | None = None,
) -> tuple[float, dict[str, float]]:
    """Stabilization reward; ``hovering`` is the sustained low-speed flag
    maintained by the environment."""
    c = coeffs or StabilizationRewardCoeffs()
    reward, comps = stabilization_reward_terms(
        abs(float(state.p_WB[2]) - z_d),
        float(attitude_error_angle(state.q_WB, c.attitude_mode)),
        float(np.linalg.norm(state.v_WB)),
        float(np.linalg.norm(state.omega_B)),
        float(np.linalg.norm(np.asarray(u_t) - np.asarray(u_prev))),
        hovering,
        c,
    )
    return float(reward), {k: float(v) for k, v in comps.items()}


def tracking_reward_terms(
    velocity_err_norm: np.ndarray,
    body_rate_norm: np.ndarray,
    action_diff_norm: np.ndarray,
    c: TrackingRewardCoeffs,
) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    components = {
        "velocity": c.velocity * np.asarray(velocity_err_norm, dtype=np.float64),
        "body_rate": c.body_rate * np.asarray(body_rate_norm, dtype=np.float64),
        "action_diff": c.action_diff * np.asarray(action_diff_norm, dtype=np.float64),
    }
    reward = sum(components.values())
    return reward, components


def tracking_reward(
    state: QuadState,
    u_t: np.ndarray,
    u_prev: np.ndarray,
    v_d: np.ndarray,
    coeffs: TrackingRewardCoeffs | None = None,
) -> tuple[float, dict[str, float]]:
    c = coeffs or TrackingRewardCoeffs()
    reward, comps = tracking_reward_terms(
        float(np.linalg.norm(state.v_WB - np.asarray(v_d))),
        float(np.linalg.norm(state.omega_B)),
        float(np.linalg.norm(np.asarray(u_t) - np.asarray(u_prev))),
        c,
    )
    return float(reward), {k: float(v) for k, v in comps.items()}
