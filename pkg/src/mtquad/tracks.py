"""Race-track geometry: gates, corner layout, pass detection, and file IO.

A gate is a rectangular aperture defined by its center, passing direction
(``normal``), and ``up`` vector. Corners are ordered top-left, top-right,
bottom-right, bottom-left as seen looking along the normal, with
``side = normal x up`` pointing to the viewer's right.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

TRACK_SCHEMA = 1
DEFAULT_GATE_SIZE = 1.5  # inner side length [m]


@dataclass
class Gate:
    center: np.ndarray
    normal: np.ndarray
    up: np.ndarray
    half_width: float = DEFAULT_GATE_SIZE / 2.0
    half_height: float = DEFAULT_GATE_SIZE / 2.0

    def __post_init__(self) -> None:
        self.center = np.asarray(self.center, dtype=np.float64)
        self.normal = np.asarray(self.normal, dtype=np.float64)
        self.up = np.asarray(self.up, dtype=np.float64)
        self.normal = self.normal / np.linalg.norm(self.normal)
        self.up = self.up / np.linalg.norm(self.up)
        if abs(np.dot(self.normal, self.up)) > 1e-9:
            raise ValueError("gate normal and up must be perpendicular")

    @property
    def side(self) -> np.ndarray:
        return np.cross(self.normal, self.up)

    def corners(self) -> np.ndarray:
        """4x3 corner array: TL, TR, BR, BL viewed along the normal."""
        hw, hh = self.half_width, self.half_height
        s, u, c = self.side, self.up, self.center
        return np.stack(
            [c + hh * u - hw * s, c + hh * u + hw * s, c - hh * u + hw * s, c - hh * u - hw * s]
        )

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Frame edge segments as (starts 4x3, ends 4x3), consecutive corners."""
        corners = self.corners()
        return corners, np.roll(corners, -1, axis=0)

    @classmethod
    def from_yaw(cls, center, yaw_deg: float, size: float = DEFAULT_GATE_SIZE) -> "Gate":
        """Upright gate whose passing direction has the given world yaw."""
        yaw = math.radians(yaw_deg)
        normal = np.array([math.cos(yaw), math.sin(yaw), 0.0])
        return cls(center=np.asarray(center, dtype=np.float64), normal=normal,
                   up=np.array([0.0, 0.0, 1.0]), half_width=size / 2.0, half_height=size / 2.0)


@dataclass
class Track:
    gates: list[Gate]
    name: str = "track"

    def __post_init__(self) -> None:
        if len(self.gates) < 1:
            raise ValueError("a track needs at least one gate")

    def __len__(self) -> int:
        return len(self.gates)

    def gate(self, index: int) -> Gate:
        return self.gates[index % len(self.gates)]

    def all_edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Every frame edge of every gate, stacked ((4*n_gates) x 3 twice)."""
        starts, ends = [], []
        for g in self.gates:
            a, b = g.edges()
            starts.append(a)
            ends.append(b)
        return np.concatenate(starts), np.concatenate(ends)


def gate_pass_check(
    p_prev: np.ndarray, p_curr: np.ndarray, gate: Gate, margin: float = 0.0
) -> tuple[bool, float]:
    """Check whether the segment p_prev -> p_curr passes through the gate.

    A pass crosses the gate plane along +normal with the crossing point
    inside the aperture rectangle grown by ``margin``. Returns the pass flag
    and the distance from the crossing point to the gate center (nan when
    no pass). Sub-dividing a step cannot double count: the crossing
    sub-segment starts strictly behind the plane and ends on or past it.
    """
    p_prev = np.asarray(p_prev, dtype=np.float64)
    p_curr = np.asarray(p_curr, dtype=np.float64)
    d_prev = float(np.dot(gate.normal, p_prev - gate.center))
    d_curr = float(np.dot(gate.normal, p_curr - gate.center))
    if not (d_prev < 0.0 <= d_curr):
        return False, math.nan
    s = d_prev / (d_prev - d_curr)
    crossing = p_prev + s * (p_curr - p_prev)
    offset = crossing - gate.center
    if abs(np.dot(offset, gate.side)) > gate.half_width + margin:
        return False, math.nan
    if abs(np.dot(offset, gate.up)) > gate.half_height + margin:
        return False, math.nan
    return True, float(np.linalg.norm(offset))


def segment_point_distances(points: np.ndarray, starts: np.ndarray, ends: np.ndarray) -> np.ndarray:
    """Distance from each point (N,3) to each segment (M,3)-(M,3), as (N,M)."""
    points = np.asarray(points, dtype=np.float64)
    d = ends - starts  # (M,3)
    len_sq = np.sum(d * d, axis=-1)  # (M,)
    rel = points[:, None, :] - starts[None, :, :]  # (N,M,3)
    t = np.einsum("nmk,mk->nm", rel, d) / np.maximum(len_sq, 1e-12)
    t = np.clip(t, 0.0, 1.0)
    nearest = starts[None, :, :] + t[..., None] * d[None, :, :]
    return np.linalg.norm(points[:, None, :] - nearest, axis=-1)


def save_track(track: Track, path: str | Path) -> None:
    """Write a track file; only upright yaw-parameterized gates are supported."""
    gates = []
    for g in track.gates:
        if abs(g.normal[2]) > 1e-9 or abs(g.up[0]) > 1e-9 or abs(g.up[1]) > 1e-9:
            raise ValueError("track files store upright gates only")
        yaw = math.degrees(math.atan2(g.normal[1], g.normal[0]))
        gates.append(
            {
                "center": [float(x) for x in g.center],
                "yaw_deg": float(yaw),
                "size": float(2.0 * g.half_width),
            }
        )
    payload = {"schema": TRACK_SCHEMA, "name": track.name, "gates": gates}
    Path(path).write_text(yaml.safe_dump(payload, sort_keys=False))


def load_track(path: str | Path) -> Track:
    data = yaml.safe_load(Path(path).read_text())
    return track_from_dict(data)


def track_from_dict(data: dict) -> Track:
    if not isinstance(data, dict) or "gates" not in data:
        raise ValueError("track file must contain a 'gates' list")
    if data.get("schema", TRACK_SCHEMA) != TRACK_SCHEMA:
        raise ValueError(f"unsupported track schema {data.get('schema')!r}")
    gates = [
        Gate.from_yaw(g["center"], g["yaw_deg"], g.get("size", DEFAULT_GATE_SIZE))
        for g in data["gates"]
    ]
    return Track(gates=gates, name=data.get("name", "track"))


def default_track() -> Track:
    """The bundled six-gate figure-8 track (about 20 x 10 m)."""
    ref = resources.files("mtquad").joinpath("data/tracks/figure8.yaml")
    return track_from_dict(yaml.safe_load(ref.read_text()))
