"""Task identities, observation layout, and step results.

Every task shares a 19-dim dynamics observation: position (3), the first two
rotation-matrix columns (6), linear velocity (3), body rates (3), and the
previous raw policy output (4). Task-specific parts have pairwise-distinct
lengths (24 racing / 4 stabilization / 6 tracking before the optional
one-hot task code), so observation length identifies the task.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .. import dynamics
from ..dynamics import P, Q, V, W, QuadState

SHARED_OBS_DIM = 19
ONE_HOT_DIM = 3


class TaskId(enum.Enum):
    RACING = "racing"
    STABILIZATION = "stabilization"
    TRACKING = "tracking"

    @property
    def base_obs_dim(self) -> int:
        return {TaskId.RACING: 24, TaskId.STABILIZATION: 4, TaskId.TRACKING: 6}[self]

    def task_obs_dim(self, one_hot: bool = True) -> int:
        return self.base_obs_dim + (ONE_HOT_DIM if one_hot else 0)

    @property
    def index(self) -> int:
        return list(TaskId).index(self)


class TerminationReason(enum.Enum):
    NONE = 0
    CRASH = 1
    SUCCESS = 2
    TIMEOUT = 3


@dataclass
class Observation:
    shared: np.ndarray
    task_specific: np.ndarray
    task: TaskId

    def full(self) -> np.ndarray:
        return np.concatenate([self.shared, self.task_specific])


@dataclass
class StepResult:
    observation: Observation
    reward: float
    reward_components: dict[str, float]
    terminated: bool
    termination_reason: TerminationReason


def rot6d_from_quat(q: np.ndarray) -> np.ndarray:
    """First two rotation-matrix columns straight from the quaternion."""
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    return np.stack(
        [
            1.0 - 2.0 * (y * y + z * z),
            2.0 * (x * y + w * z),
            2.0 * (x * z - w * y),
            2.0 * (x * y - w * z),
            1.0 - 2.0 * (x * x + z * z),
            2.0 * (y * z + w * x),
        ],
        axis=-1,
    )


def body_x_axis_world(q: np.ndarray) -> np.ndarray:
    """Camera optical axis (body x) expressed in the world frame."""
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    return np.stack(
        [1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y + w * z), 2.0 * (x * z - w * y)],
        axis=-1,
    )


def geodesic_angle_from_quat(q: np.ndarray) -> np.ndarray:
    """Rotation angle [rad] of the attitude relative to identity."""
    return 2.0 * np.arccos(np.clip(np.abs(q[..., 0]), 0.0, 1.0))


def tilt_angle_from_quat(q: np.ndarray) -> np.ndarray:
    """Angle [rad] between the body z axis and the world z axis."""
    x, y = q[..., 1], q[..., 2]
    return np.arccos(np.clip(1.0 - 2.0 * (x * x + y * y), -1.0, 1.0))


def shared_obs_flat(states: np.ndarray, a_prev: np.ndarray) -> np.ndarray:
    """Vectorized 19-dim dynamics observation [p, R6, v, omega, a_prev]."""
    return np.concatenate(
        [
            states[..., P],
            rot6d_from_quat(states[..., Q]),
            states[..., V],
            states[..., W],
            a_prev,
        ],
        axis=-1,
    )


def assemble_shared_obs(state: QuadState, a_prev: np.ndarray) -> np.ndarray:
    """19-dim dynamics observation for a single vehicle state."""
    a_prev = np.asarray(a_prev, dtype=np.float64)
    if a_prev.shape != (4,):
        raise ValueError("a_prev must be the previous 4-dim policy output")
    return shared_obs_flat(state.as_vector(), a_prev)


def one_hot_code(task: TaskId, n: int | None = None) -> np.ndarray:
    code = np.zeros(ONE_HOT_DIM)
    code[task.index] = 1.0
    if n is None:
        return code
    return np.broadcast_to(code, (n, ONE_HOT_DIM)).copy()
