from .config import (
    ConfigError,
    EvalConfig,
    ExperimentConfig,
    PolicyConfig,
    TasksConfig,
    config_from_dict,
    config_to_dict,
    default_config,
    load_config,
    save_config,
)
from .controllers import (
    ConstantActionController,
    GateCenterFollower,
    GeometricBackend,
    HoverRecoveryController,
    PolicyActor,
)
from .evaluate import (
    RacingEval,
    StabilizationEval,
    TrackingEval,
    eval_racing,
    eval_stabilization,
    eval_tracking,
)
from .experiment import (
    build_envs,
    build_policy,
    evaluate_policy,
    make_trainer,
    policy_from_checkpoint,
    restore_trainer,
    run_experiment,
    write_summary,
)
from .export import export_plot_data, read_metrics, record_episode, write_trajectory_csv

__all__ = [
    "ConfigError",
    "EvalConfig",
    "ExperimentConfig",
    "PolicyConfig",
    "TasksConfig",
    "config_from_dict",
    "config_to_dict",
    "default_config",
    "load_config",
    "save_config",
    "ConstantActionController",
    "GateCenterFollower",
    "GeometricBackend",
    "HoverRecoveryController",
    "PolicyActor",
    "RacingEval",
    "StabilizationEval",
    "TrackingEval",
    "eval_racing",
    "eval_stabilization",
    "eval_tracking",
    "build_envs",
    "build_policy",
    "evaluate_policy",
    "make_trainer",
    "policy_from_checkpoint",
    "restore_trainer",
    "run_experiment",
    "write_summary",
    "export_plot_data",
    "read_metrics",
    "record_episode",
    "write_trajectory_csv",
]
