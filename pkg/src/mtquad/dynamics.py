"""Rigid-body quadrotor simulation with motor lag and a body-rate inner loop.

The vehicle state is 17 numbers: position, unit quaternion attitude, linear
velocity, body rates, and four per-motor thrusts. The policy-facing action is
collective thrust plus body-rate setpoints; a proportional rate controller
with gyroscopic feedforward allocates it to motors through an X-configuration
mixer, and motor thrusts follow the commands with a first-order lag.

All stepping core functions operate on flat float64 arrays with an optional
leading batch dimension, so one simulator instance can advance many vehicles
at once. ``QuadState`` / ``Action`` wrap the single-vehicle case.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import geom

# flat-state layout
P = slice(0, 3)
Q = slice(3, 7)
V = slice(7, 10)
W = slice(10, 13)
M = slice(13, 17)
STATE_DIM = 17


class SimulationError(RuntimeError):
    """Raised when the simulated state stops being physically meaningful."""


@dataclass
class DiagnosticCounters:
    """Counts silent saturations so misbehaving policies are visible in logs."""

    action_clips: int = 0
    motor_saturations: int = 0


@dataclass
class QuadParams:
    """Physical and controller parameters of the simulated platform.

    Defaults describe a 0.6 kg racing quadrotor (inertia entries converted
    from g*m^2). ``thrust_to_weight`` is the reported platform figure and is
    carried for bookkeeping only; ``max_total_thrust`` is authoritative for
    the simulation limits.
    """

    mass: float = 0.6
    inertia: tuple[float, float, float] = (2.50e-3, 2.51e-3, 4.32e-3)
    arm_length: float = 0.15
    max_total_thrust: float = 20.0
    thrust_to_weight: float = 5.78
    motor_time_constant: float = 0.033
    torque_coeff: float = 0.016
    gravity: float = 9.81
    body_rate_limits: tuple[float, float, float] = (10.0, 10.0, 4.0)
    rate_controller_gains: tuple[float, float, float] = (20.0, 20.0, 8.0)
    physics_dt: float = 1.0 / 500.0
    control_dt: float = 1.0 / 50.0

    def __post_init__(self) -> None:
        if self.mass <= 0.0:
            raise ValueError("mass must be positive")
        if any(j <= 0.0 for j in self.inertia):
            raise ValueError("inertia components must be positive")
        if self.max_total_thrust < self.mass * self.gravity:
            raise ValueError("max_total_thrust must allow hovering")
        if self.physics_dt <= 0.0 or self.control_dt <= 0.0:
            raise ValueError("time steps must be positive")
        self._j = np.asarray(self.inertia, dtype=np.float64)
        self._j_inv = 1.0 / self._j
        self._rate_gains = np.asarray(self.rate_controller_gains, dtype=np.float64)
        self._rate_limits = np.asarray(self.body_rate_limits, dtype=np.float64)
        l = self.arm_length / np.sqrt(2.0)
        k = self.torque_coeff
        # rows: collective, roll, pitch, yaw; motors ordered FL, FR, BR, BL
        self._mix = np.array(
            [
                [1.0, 1.0, 1.0, 1.0],
                [l, -l, -l, l],
                [-l, -l, l, l],
                [-k, k, -k, k],
            ]
        )
        self._mix_inv = np.linalg.inv(self._mix)
        # torque produced by per-motor thrusts: tau = thrusts @ _motor_torque
        self._motor_torque = self._mix[1:4].T.copy()

    @property
    def hover_thrust(self) -> float:
        return self.mass * self.gravity

    @property
    def max_motor_thrust(self) -> float:
        return self.max_total_thrust / 4.0

    @property
    def substeps_per_control(self) -> int:
        ratio = self.control_dt / self.physics_dt
        n = int(round(ratio))
        if n < 1 or abs(ratio - n) > 1e-9:
            raise ValueError("control_dt must be an integer multiple of physics_dt")
        return n


@dataclass
class QuadState:
    """Vehicle state: world-frame pose and velocity, body rates, motor thrusts."""

    p_WB: np.ndarray
    q_WB: np.ndarray
    v_WB: np.ndarray
    omega_B: np.ndarray
    motor_thrusts: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate(
            [self.p_WB, self.q_WB, self.v_WB, self.omega_B, self.motor_thrusts]
        ).astype(np.float64)

    @classmethod
    def from_vector(cls, x: np.ndarray) -> "QuadState":
        x = np.asarray(x, dtype=np.float64)
        return cls(x[P].copy(), x[Q].copy(), x[V].copy(), x[W].copy(), x[M].copy())

    def validate(self, params: QuadParams) -> None:
        if abs(np.linalg.norm(self.q_WB) - 1.0) > 1e-6:
            raise ValueError("attitude quaternion is not unit within 1e-6")
        if np.any(self.motor_thrusts < -1e-9) or np.any(
            self.motor_thrusts > params.max_motor_thrust + 1e-9
        ):
            raise ValueError("motor thrusts outside [0, max_total_thrust/4]")


@dataclass
class Action:
    """Inner-loop setpoint: collective thrust [N] and body rates [rad/s]."""

    collective_thrust_cmd: float
    body_rate_cmd: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate([[self.collective_thrust_cmd], self.body_rate_cmd])


def hover_state(params: QuadParams, p: np.ndarray | None = None) -> QuadState:
    """Level equilibrium state at position p with motors at hover thrust."""
    p = np.zeros(3) if p is None else np.asarray(p, dtype=np.float64)
    return QuadState(
        p_WB=p.copy(),
        q_WB=np.array([1.0, 0.0, 0.0, 0.0]),
        v_WB=np.zeros(3),
        omega_B=np.zeros(3),
        motor_thrusts=np.full(4, params.hover_thrust / 4.0),
    )


def hover_action(params: QuadParams) -> Action:
    return Action(params.hover_thrust, np.zeros(3))


def hover_policy_output(params: QuadParams) -> np.ndarray:
    """Raw policy output u in [-1, 1]^4 that maps to the hover action."""
    u_thrust = 2.0 * params.hover_thrust / params.max_total_thrust - 1.0
    return np.array([u_thrust, 0.0, 0.0, 0.0])


def policy_output_to_commands(
    u: np.ndarray, params: QuadParams, counters: Optional[DiagnosticCounters] = None
) -> np.ndarray:
    """Affine map from raw policy outputs in [-1,1]^4 to [thrust, rates].

    Out-of-range inputs are clamped and counted: the policy sampler may
    overshoot the tanh range.
    """
    u = np.asarray(u, dtype=np.float64)
    clipped = np.clip(u, -1.0, 1.0)
    if counters is not None:
        counters.action_clips += int(np.sum(np.abs(u) > 1.0))
    out = np.empty_like(clipped)
    out[..., 0] = 0.5 * (clipped[..., 0] + 1.0) * params.max_total_thrust
    out[..., 1:4] = clipped[..., 1:4] * params._rate_limits
    return out


def action_from_policy_output(
    u: np.ndarray, params: QuadParams, counters: Optional[DiagnosticCounters] = None
) -> Action:
    cmd = policy_output_to_commands(u, params, counters)
    return Action(float(cmd[0]), cmd[1:4].copy())


def _rate_controller_commands(
    states: np.ndarray,
    commands: np.ndarray,
    params: QuadParams,
    counters: Optional[DiagnosticCounters] = None,
) -> np.ndarray:
    """Per-motor thrust commands for [thrust, rates] setpoints (batched).

    Desired torque is J*(K*(w_cmd - w)) + w x Jw, allocated through the
    X-configuration mixer. When the allocation saturates a motor, yaw
    authority is shed first so collective thrust is preserved.
    """
    wx, wy, wz = states[..., 10], states[..., 11], states[..., 12]
    thrust_cmd = commands[..., 0]
    jx, jy, jz = params._j
    kx, ky, kz = params._rate_gains
    jwx, jwy, jwz = jx * wx, jy * wy, jz * wz
    tau_x = jx * (kx * (commands[..., 1] - wx)) + (wy * jwz - wz * jwy)
    tau_y = jy * (ky * (commands[..., 2] - wy)) + (wz * jwx - wx * jwz)
    tau_z = jz * (kz * (commands[..., 3] - wz)) + (wx * jwy - wy * jwx)

    minv = params._mix_inv
    base = np.stack(
        [minv[i, 0] * thrust_cmd + minv[i, 1] * tau_x + minv[i, 2] * tau_y for i in range(4)],
        axis=-1,
    )
    delta = tau_z[..., None] * minv[:, 3]

    hi = params.max_motor_thrust
    with np.errstate(divide="ignore", invalid="ignore"):
        caps = np.where(
            delta > 0.0,
            (hi - base) / delta,
            np.where(delta < 0.0, -base / delta, np.inf),
        )
    scale = np.clip(np.min(caps, axis=-1, keepdims=True), 0.0, 1.0)
    motors = np.clip(base + scale * delta, 0.0, hi)
    if counters is not None:
        full = base + delta
        saturated = np.any(np.abs(motors - full) > 1e-12, axis=-1)
        counters.motor_saturations += int(np.sum(saturated))
    return motors


def rate_controller(
    state: QuadState,
    action: Action,
    params: QuadParams,
    counters: Optional[DiagnosticCounters] = None,
) -> np.ndarray:
    cmd = np.concatenate([[action.collective_thrust_cmd], action.body_rate_cmd])
    return _rate_controller_commands(state.as_vector(), cmd, params, counters)


def _derivative_flat(states: np.ndarray, params: QuadParams) -> np.ndarray:
    """Time derivative of the 13-dim rigid-body block; motors held constant.

    The quaternion is normalized before use so intermediate RK4 stages do
    not distort the thrust direction.
    """
    q = states[..., Q]
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    omega = states[..., W]
    motors = states[..., M]

    thrust = np.sum(motors, axis=-1)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    # third rotation-matrix column times collective thrust
    acc_scale = thrust / params.mass
    v_dot = np.stack(
        [
            2.0 * (x * z + w * y) * acc_scale,
            2.0 * (y * z - w * x) * acc_scale,
            (1.0 - 2.0 * (x * x + y * y)) * acc_scale - params.gravity,
        ],
        axis=-1,
    )
    tau = motors @ params._motor_torque
    omega_dot = params._j_inv * (tau - np.cross(omega, params._j * omega))

    out = np.empty_like(states)
    out[..., P] = states[..., V]
    out[..., Q] = geom.quat_derivative(q, omega)
    out[..., V] = v_dot
    out[..., W] = omega_dot
    out[..., M] = 0.0
    return out


def dynamics_derivative(state: QuadState, params: QuadParams) -> np.ndarray:
    """13-vector [p_dot, q_dot, v_dot, omega_dot] at the given state."""
    x = state.as_vector()
    if not np.all(np.isfinite(x)):
        raise SimulationError("non-finite state")
    return _derivative_flat(x, params)[:13]


def linear_acceleration_flat(states: np.ndarray, params: QuadParams) -> np.ndarray:
    """World-frame acceleration implied by the current attitude and motors."""
    q = states[..., Q]
    thrust = np.sum(states[..., M], axis=-1, keepdims=True)
    body_z = np.zeros(states.shape[:-1] + (3,))
    body_z[..., 2] = 1.0
    acc = geom.quat_rotate(q, body_z) * thrust / params.mass
    acc[..., 2] -= params.gravity
    return acc


def linear_acceleration(state: QuadState, params: QuadParams) -> np.ndarray:
    return linear_acceleration_flat(state.as_vector(), params)


def _rigid_body_rates(y: tuple, thrust_over_m, tau, params: QuadParams) -> tuple:
    """Fused 13-component derivative; motors (thrust, torque) held constant."""
    px, py, pz, qw, qx, qy, qz, vx, vy, vz, wx, wy, wz = y
    inv = 1.0 / np.sqrt(qw * qw + qx * qx + qy * qy + qz * qz)
    nw, nx, ny, nz = qw * inv, qx * inv, qy * inv, qz * inv
    jx, jy, jz = params._j
    ijx, ijy, ijz = params._j_inv
    tx, ty, tz = tau
    jwx, jwy, jwz = jx * wx, jy * wy, jz * wz
    return (
        vx,
        vy,
        vz,
        -0.5 * (nx * wx + ny * wy + nz * wz),
        0.5 * (nw * wx + ny * wz - nz * wy),
        0.5 * (nw * wy - nx * wz + nz * wx),
        0.5 * (nw * wz + nx * wy - ny * wx),
        2.0 * (nx * nz + nw * ny) * thrust_over_m,
        2.0 * (ny * nz - nw * nx) * thrust_over_m,
        (1.0 - 2.0 * (nx * nx + ny * ny)) * thrust_over_m - params.gravity,
        ijx * (tx - (wy * jwz - wz * jwy)),
        ijy * (ty - (wz * jwx - wx * jwz)),
        ijz * (tz - (wx * jwy - wy * jwx)),
    )


def step_commands(
    states: np.ndarray,
    commands: np.ndarray,
    dt_ctrl: float,
    params: QuadParams,
    counters: Optional[DiagnosticCounters] = None,
) -> np.ndarray:
    """Advance flat state(s) by one control period of [thrust, rates] commands.

    Each physics sub-step updates motor thrusts along the exact first-order
    lag toward the rate-controller output, integrates the rigid-body block
    with classic RK4, and re-normalizes the quaternion. The integration is
    written out component-wise (this is the simulator's hot loop); it must
    stay equivalent to RK4 over ``_derivative_flat``, which the tests check.
    """
    ratio = dt_ctrl / params.physics_dt
    n_sub = int(round(ratio))
    if n_sub < 1 or abs(ratio - n_sub) > 1e-9:
        raise ValueError("dt_ctrl must be an integer multiple of physics_dt")
    if not np.all(np.isfinite(states)):
        raise SimulationError("non-finite state entering step")

    x = np.array(states, dtype=np.float64)
    dt = params.physics_dt
    decay = np.exp(-dt / params.motor_time_constant)
    half, sixth = 0.5 * dt, dt / 6.0
    for _ in range(n_sub):
        motor_cmd = _rate_controller_commands(x, commands, params, counters)
        motors = motor_cmd + (x[..., M] - motor_cmd) * decay
        x[..., M] = motors

        thrust_over_m = (motors[..., 0] + motors[..., 1] + motors[..., 2] + motors[..., 3]) / params.mass
        tau = tuple(motors @ params._motor_torque[:, k] for k in range(3))
        y0 = tuple(x[..., k] for k in range(13))
        k1 = _rigid_body_rates(y0, thrust_over_m, tau, params)
        k2 = _rigid_body_rates(
            tuple(y + half * dy for y, dy in zip(y0, k1)), thrust_over_m, tau, params
        )
        k3 = _rigid_body_rates(
            tuple(y + half * dy for y, dy in zip(y0, k2)), thrust_over_m, tau, params
        )
        k4 = _rigid_body_rates(
            tuple(y + dt * dy for y, dy in zip(y0, k3)), thrust_over_m, tau, params
        )
        for k in range(13):
            x[..., k] = y0[k] + sixth * (k1[k] + 2.0 * (k2[k] + k3[k]) + k4[k])
        x[..., Q] /= np.linalg.norm(x[..., Q], axis=-1, keepdims=True)
    if not np.all(np.isfinite(x)):
        raise SimulationError("non-finite state after step")
    return x


def step(
    state: QuadState,
    action: Action,
    dt_ctrl: float,
    params: QuadParams,
    counters: Optional[DiagnosticCounters] = None,
) -> QuadState:
    """Advance a single vehicle by one control period."""
    cmd = np.concatenate([[action.collective_thrust_cmd], action.body_rate_cmd])
    out = step_commands(state.as_vector(), cmd, dt_ctrl, params, counters)
    return QuadState.from_vector(out)
