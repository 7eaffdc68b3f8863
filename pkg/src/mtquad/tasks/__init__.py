from .core import (
    ONE_HOT_DIM,
    SHARED_OBS_DIM,
    Observation,
    StepResult,
    TaskId,
    TerminationReason,
    assemble_shared_obs,
    shared_obs_flat,
)
from .envs import (
    RacingTaskConfig,
    RacingVecEnv,
    StabilizationTaskConfig,
    StabilizationVecEnv,
    TaskEnv,
    TrackingTaskConfig,
    TrackingVecEnv,
    VecStepResult,
    VecTaskEnv,
    make_env,
    make_vec_env,
    racing_start_grid,
    racing_task_obs,
    resolve_track,
)
from .rewards import (
    RacingRewardCoeffs,
    StabilizationRewardCoeffs,
    TrackingRewardCoeffs,
    racing_reward,
    stabilization_reward,
    tracking_reward,
)
from .sampling import (
    VelocityProfile,
    ballistic_safe_height,
    sample_stabilization_initial,
    sample_velocity_profile,
)

__all__ = [
    "ONE_HOT_DIM",
    "SHARED_OBS_DIM",
    "Observation",
    "StepResult",
    "TaskId",
    "TerminationReason",
    "assemble_shared_obs",
    "shared_obs_flat",
    "RacingTaskConfig",
    "RacingVecEnv",
    "StabilizationTaskConfig",
    "StabilizationVecEnv",
    "TaskEnv",
    "TrackingTaskConfig",
    "TrackingVecEnv",
    "VecStepResult",
    "VecTaskEnv",
    "make_env",
    "make_vec_env",
    "racing_start_grid",
    "racing_task_obs",
    "resolve_track",
    "RacingRewardCoeffs",
    "StabilizationRewardCoeffs",
    "TrackingRewardCoeffs",
    "racing_reward",
    "stabilization_reward",
    "tracking_reward",
    "VelocityProfile",
    "ballistic_safe_height",
    "sample_stabilization_initial",
    "sample_velocity_profile",
]
