"""Rotation algebra and fixed-step integration used by the simulator.

Quaternions are scalar-first ``[w, x, y, z]`` and always describe the
body-to-world rotation. All functions accept a leading batch dimension:
a quaternion argument may be shaped ``(4,)`` or ``(..., 4)`` and the result
keeps the batch shape. Everything here is a pure function of its inputs.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

_UNIT_TOL = 1e-6


class GeomError(ValueError):
    """Degenerate geometric input (zero-norm quaternion, non-unit attitude)."""


def quat_normalize(q: np.ndarray) -> np.ndarray:
    """Scale a quaternion to unit norm, preserving direction.

    Raises GeomError on (near-)zero norm, which signals a corrupted
    attitude state rather than something recoverable.
    """
    q = np.asarray(q, dtype=np.float64)
    norm = np.linalg.norm(q, axis=-1, keepdims=True)
    if np.any(norm < 1e-12):
        raise GeomError("cannot normalize zero-norm quaternion")
    return q / norm


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    out = q.copy()
    out[..., 1:] *= -1.0
    return out


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Hamilton product a ⊗ b (scalar-first)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    w1, x1, y1, z1 = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    w2, x2, y2, z2 = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ],
        axis=-1,
    )


def quat_rotate(q: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Rotate vector(s) v from body to world frame by unit quaternion q."""
    q = np.asarray(q, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    qv = q[..., 1:]
    w = q[..., 0:1]
    t = 2.0 * np.cross(qv, v)
    return v + w * t + np.cross(qv, t)


def quat_from_axis_angle(axis: np.ndarray, angle: float | np.ndarray) -> np.ndarray:
    """Unit quaternion for a rotation of ``angle`` rad about a unit ``axis``."""
    axis = np.asarray(axis, dtype=np.float64)
    half = 0.5 * np.asarray(angle, dtype=np.float64)
    w = np.cos(half)[..., None]
    xyz = axis * np.sin(half)[..., None]
    return np.concatenate([np.broadcast_to(w, xyz[..., :1].shape), xyz], axis=-1)


def quat_to_rotmat(q: np.ndarray) -> np.ndarray:
    """Convert unit quaternion(s) to body-to-world rotation matrices.

    Input must be unit within 1e-6; the result is orthonormal with
    determinant +1 to numerical precision.
    """
    q = np.asarray(q, dtype=np.float64)
    norm = np.linalg.norm(q, axis=-1)
    if np.any(np.abs(norm - 1.0) > _UNIT_TOL):
        raise GeomError("quaternion is not unit within 1e-6")
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    xx, yy, zz = x * x, y * y, z * z
    wx, wy, wz = w * x, w * y, w * z
    xy, xz, yz = x * y, x * z, y * z
    row0 = np.stack([1.0 - 2.0 * (yy + zz), 2.0 * (xy - wz), 2.0 * (xz + wy)], axis=-1)
    row1 = np.stack([2.0 * (xy + wz), 1.0 - 2.0 * (xx + zz), 2.0 * (yz - wx)], axis=-1)
    row2 = np.stack([2.0 * (xz - wy), 2.0 * (yz + wx), 1.0 - 2.0 * (xx + yy)], axis=-1)
    return np.stack([row0, row1, row2], axis=-2)


def quat_from_rotmat(R: np.ndarray) -> np.ndarray:
    """Rotation matrix to unit quaternion (Shepperd's method), w >= 0."""
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3):
        raise GeomError("expected a single 3x3 rotation matrix")
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0.0:
        s = np.sqrt(tr + 1.0) * 2.0
        q = np.array([0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s])
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = np.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2]) * 2.0
        q = np.array([(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s])
    elif R[1, 1] > R[2, 2]:
        s = np.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2]) * 2.0
        q = np.array([(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s])
    else:
        s = np.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1]) * 2.0
        q = np.array([(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s])
    q = quat_normalize(q)
    if q[0] < 0.0:
        q = -q
    return q


def rotmat_to_6d(R: np.ndarray) -> np.ndarray:
    """Stack the first two columns of R into a 6-vector.

    out[0:3] is column 1, out[3:6] is column 2. This is the continuous
    6-number attitude representation fed to the policy networks.
    """
    R = np.asarray(R, dtype=np.float64)
    return np.concatenate([R[..., :, 0], R[..., :, 1]], axis=-1)


def rot6d_to_rotmat(r6: np.ndarray) -> np.ndarray:
    """Rebuild a rotation matrix from its 6-D representation via Gram-Schmidt."""
    r6 = np.asarray(r6, dtype=np.float64)
    a = r6[..., 0:3]
    b = r6[..., 3:6]
    c1 = a / np.linalg.norm(a, axis=-1, keepdims=True)
    b = b - np.sum(c1 * b, axis=-1, keepdims=True) * c1
    c2 = b / np.linalg.norm(b, axis=-1, keepdims=True)
    c3 = np.cross(c1, c2)
    return np.stack([c1, c2, c3], axis=-1)


def quat_derivative(q: np.ndarray, omega_B: np.ndarray) -> np.ndarray:
    """Time derivative of the attitude quaternion under body rates omega_B.

    Computes (1/2) q ⊗ (0, omega); the result is orthogonal to q, so the
    norm is preserved to first order.
    """
    q = np.asarray(q, dtype=np.float64)
    w = np.asarray(omega_B, dtype=np.float64)
    qw, qx, qy, qz = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    ox, oy, oz = w[..., 0], w[..., 1], w[..., 2]
    return 0.5 * np.stack(
        [
            -qx * ox - qy * oy - qz * oz,
            qw * ox + qy * oz - qz * oy,
            qw * oy - qx * oz + qz * ox,
            qw * oz + qx * oy - qy * ox,
        ],
        axis=-1,
    )


def random_unit_quat(rng: np.random.Generator, n: int | None = None) -> np.ndarray:
    """Uniformly distributed rotation(s): normalized 4-D Gaussian samples."""
    shape = (4,) if n is None else (n, 4)
    return quat_normalize(rng.standard_normal(shape))


def rk4_step(
    derivative_fn: Callable[[np.ndarray], np.ndarray],
    state: np.ndarray,
    dt: float,
) -> np.ndarray:
    """One classic 4th-order Runge-Kutta step on a flat state vector.

    The caller re-normalizes any quaternion block afterwards. Raises on
    non-finite derivative output, which aborts the episode upstream.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    k1 = derivative_fn(state)
    k2 = derivative_fn(state + 0.5 * dt * k1)
    k3 = derivative_fn(state + 0.5 * dt * k2)
    k4 = derivative_fn(state + dt * k3)
    out = state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    if not np.all(np.isfinite(out)):
        raise FloatingPointError("non-finite state derivative in RK4 step")
    return out
