"""Difficulty scheduling driven by cumulative per-task sample counts.

Stabilization grows its initial-speed scale by 10% per 100k samples;
tracking grows its desired-speed bounds by 1 m/s per axis per 100k samples.
Both stop at configured caps and racing has no curriculum. The schedule is
a pure function of the cumulative count, so checkpoint resume cannot drift.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

CURRICULUM_INTERVAL = 100_000  # samples per difficulty increment
STAB_GROWTH = 1.1
TRACK_INCREMENT = 1.0  # m/s per axis per increment


@dataclass
class CurriculumConfig:
    enabled: bool = True
    interval: int = CURRICULUM_INTERVAL
    # stabilization: speed scale grows s0 * growth^level up to cap
    stab_initial_scale: float = 0.25
    stab_scale_cap: float = 1.0
    stab_growth: float = STAB_GROWTH
    # tracking: per-axis bounds grow bounds0 + increment*level up to caps
    track_initial_bounds: tuple[float, float, float] = (3.0, 3.0, 1.0)
    track_bound_caps: tuple[float, float, float] = (15.0, 15.0, 5.0)
    track_increment: float = TRACK_INCREMENT


@dataclass
class CurriculumState:
    """Progress of one task's difficulty schedule."""

    samples_seen: int = 0

    def level(self, cfg: CurriculumConfig) -> int:
        if not cfg.enabled:
            return 0
        return self.samples_seen // cfg.interval

    def stabilization_speed_scale(self, cfg: CurriculumConfig) -> float:
        """Multiplier on the stabilization initial-speed ranges, in (0, cap]."""
        if not cfg.enabled:
            return 1.0
        scale = cfg.stab_initial_scale * cfg.stab_growth ** self.level(cfg)
        return min(scale, cfg.stab_scale_cap)

    def tracking_speed_bounds(self, cfg: CurriculumConfig) -> np.ndarray:
        """Per-axis |v_d| bounds [m/s] for the tracking task."""
        caps = np.asarray(cfg.track_bound_caps, dtype=np.float64)
        if not cfg.enabled:
            return caps.copy()
        bounds = (
            np.asarray(cfg.track_initial_bounds, dtype=np.float64)
            + cfg.track_increment * self.level(cfg)
        )
        return np.minimum(bounds, caps)


def curriculum_update(state: CurriculumState, new_samples: int) -> CurriculumState:
    """Account for freshly collected samples; difficulty follows the count."""
    if new_samples < 0:
        raise ValueError("new_samples must be non-negative")
    return replace(state, samples_seen=state.samples_seen + int(new_samples))
