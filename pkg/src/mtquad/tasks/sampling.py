"""Initial-condition and reference sampling for the task environments."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import geom
from ..dynamics import QuadParams, QuadState


def random_attitude(rng: np.random.Generator, max_tilt: float) -> np.ndarray:
    """Random yaw composed with a random tilt of at most ``max_tilt`` rad."""
    yaw = rng.uniform(-np.pi, np.pi)
    q_yaw = geom.quat_from_axis_angle(np.array([0.0, 0.0, 1.0]), yaw)
    tilt = rng.uniform(0.0, max_tilt)
    phi = rng.uniform(-np.pi, np.pi)
    axis = np.array([np.cos(phi), np.sin(phi), 0.0])
    return geom.quat_mul(q_yaw, geom.quat_from_axis_angle(axis, tilt))


def ballistic_safe_height(v_z: float, gravity: float, safety_s: float) -> float:
    """Minimum start height keeping a zero-input drop above ground for safety_s."""
    return max(0.0, 0.5 * gravity * safety_s**2 - v_z * safety_s)


def sample_stabilization_initial(
    rng: np.random.Generator,
    speed_scale: float,
    speed_caps: np.ndarray,
    params: QuadParams,
    pos_xy_range: float = 2.0,
    z_range: tuple[float, float] = (2.0, 8.0),
    max_tilt: float = np.pi / 3,
    omega_range: float = 1.0,
    ballistic_safety_s: float = 1.0,
) -> QuadState:
    """Random pose and velocity for a stabilization episode.

    Speeds are uniform within the curriculum-scaled caps; the start height
    is raised so a zero-input trajectory stays airborne for the safety
    window even at the sampled descent rate.
    """
    caps = speed_scale * np.asarray(speed_caps, dtype=np.float64)
    v = rng.uniform(-caps, caps)
    p_xy = rng.uniform(-pos_xy_range, pos_xy_range, 2)
    z = rng.uniform(*z_range)
    z = max(z, ballistic_safe_height(v[2], params.gravity, ballistic_safety_s))
    return QuadState(
        p_WB=np.array([p_xy[0], p_xy[1], z]),
        q_WB=random_attitude(rng, max_tilt),
        v_WB=v,
        omega_B=rng.uniform(-omega_range, omega_range, 3),
        motor_thrusts=np.full(4, params.hover_thrust / 4.0),
    )


@dataclass
class VelocityProfile:
    """Per-step desired velocities and the accelerations that generated them.

    ``v_d[k]`` is the target at control step k (length n_steps + 1);
    ``accels[k]`` drove v_d[k] -> v_d[k+1] before per-axis clamping.
    """

    v_d: np.ndarray
    accels: np.ndarray


def sample_velocity_profile(
    rng: np.random.Generator,
    bounds: np.ndarray,
    n_steps: int,
    dt: float,
    accel_max: float,
    v_start: np.ndarray | None = None,
) -> VelocityProfile:
    """Random walk in acceleration space, clamped per axis to ``bounds``."""
    bounds = np.asarray(bounds, dtype=np.float64)
    v0 = rng.uniform(-bounds, bounds) if v_start is None else np.asarray(v_start, dtype=np.float64)
    accels = rng.uniform(-accel_max, accel_max, (n_steps, 3))
    v_d = np.empty((n_steps + 1, 3))
    v_d[0] = v0
    for k in range(n_steps):
        v_d[k + 1] = np.clip(v_d[k] + accels[k] * dt, -bounds, bounds)
    return VelocityProfile(v_d=v_d, accels=accels)
