import json
import math
from importlib import resources

import numpy as np
import pytest
import yaml

from mtquad.dynamics import QuadParams, hover_policy_output
from mtquad.harness import (
    ConfigError,
    ConstantActionController,
    GateCenterFollower,
    HoverRecoveryController,
    PolicyActor,
    config_from_dict,
    config_to_dict,
    default_config,
    eval_racing,
    eval_stabilization,
    eval_tracking,
    load_config,
    record_episode,
    run_experiment,
    save_config,
    write_trajectory_csv,
)
from mtquad.harness.experiment import (
    build_envs,
    build_policy,
    make_trainer,
    policy_from_checkpoint,
    restore_trainer,
    write_summary,
)
from mtquad.harness.export import export_plot_data, read_metrics
from mtquad.tasks import TaskId
from mtquad.tasks.envs import StabilizationTaskConfig, TrackingTaskConfig, make_vec_env
from mtquad.tracks import default_track
from mtquad.trainer import load_checkpoint


@pytest.fixture
def params():
    return QuadParams()


def smoke_config(tmp_path, tasks=("stabilization",), total=64):
    cfg = default_config()
    cfg.out_dir = str(tmp_path / "run")
    cfg.tasks.enabled = list(tasks)
    cfg.train.total_samples = total
    cfg.train.rollout_len = 8
    cfg.train.n_envs_per_task = 2
    cfg.train.minibatch_size = 16
    cfg.train.epochs = 2
    cfg.net.encoder_hidden = 16
    cfg.net.actor_hidden = 16
    cfg.net.critic_hidden = 16
    cfg.eval.stabilization_trials = 4
    cfg.eval.tracking_trials = 2
    cfg.eval.racing_starts = 2
    cfg.eval.racing_horizon_s = 2.0
    return cfg


class TestConfig:
    def test_defaults_round_trip(self, tmp_path):
        cfg = default_config()
        path = tmp_path / "c.yaml"
        save_config(cfg, path)
        loaded = load_config(path)
        assert config_to_dict(loaded) == config_to_dict(cfg)

    def test_shipped_default_matches_code_defaults(self):
        ref = resources.files("mtquad").joinpath("data/default_config.yaml")
        data = yaml.safe_load(ref.read_text())
        assert config_from_dict(data) == default_config()

    def test_unknown_key_reports_field_path(self):
        with pytest.raises(ConfigError, match=r"config\.train\.leraning_rate"):
            config_from_dict({"train": {"leraning_rate": 1e-3}})

    def test_nested_unknown_key_path(self):
        with pytest.raises(ConfigError, match=r"config\.tasks\.racing\.coeffs\.progresss"):
            config_from_dict({"tasks": {"racing": {"coeffs": {"progresss": 1.0}}}})

    def test_type_error_reports_path(self):
        with pytest.raises(ConfigError, match=r"config\.train\.gamma"):
            config_from_dict({"train": {"gamma": "fast"}})

    def test_bad_schema_rejected(self):
        with pytest.raises(ConfigError, match="schema"):
            config_from_dict({"schema": 99})

    def test_unknown_task_name(self):
        cfg = config_from_dict({"tasks": {"enabled": ["hovering"]}})
        with pytest.raises(ConfigError, match="unknown task"):
            cfg.enabled_tasks()

    def test_partial_override_keeps_defaults(self):
        cfg = config_from_dict({"train": {"gamma": 0.95}})
        assert cfg.train.gamma == 0.95
        assert cfg.train.lr == 3e-4
        assert cfg.quad.mass == 0.6


class TestEvalOracles:
    def test_constant_offset_tracking_error(self, params):
        cfg = TrackingTaskConfig(accel_max=0.0, v_start=(1.0, 0.0, 0.0))
        actor = ConstantActionController(hover_policy_output(params))
        res = eval_tracking(actor, params, cfg, n_trials=2, seed=0)
        assert res.e_v == pytest.approx(1.0, abs=1e-6)

    def test_tracking_error_nonnegative_random_policy(self, params):
        rng = np.random.default_rng(0)

        class RandomActor:
            def __call__(self, env):
                return rng.uniform(-1, 1, (env.n, 4))

        res = eval_tracking(RandomActor(), params, TrackingTaskConfig(horizon_s=2.0), n_trials=2, seed=0)
        assert res.e_v >= 0.0

    def test_ballistic_policy_never_halves_horizontal_speed(self, params):
        cfg = StabilizationTaskConfig(
            speed_caps=(5.0, 5.0, 0.0), max_tilt=0.0, omega_range=0.0,
            z_sample_range=(60.0, 60.0), horizon_s=2.0, ballistic_safety_s=0.0,
        )
        actor = ConstantActionController(np.array([-1.0, 0.0, 0.0, 0.0]))
        res = eval_stabilization(actor, params, cfg, n_trials=4, seed=1)
        horizon = cfg.horizon_s
        # free fall only adds vertical speed; horizontal speed never halves
        assert np.all(np.isinf(res.t_half_trials))
        assert res.t_half == pytest.approx(horizon)

    def test_hover_oracle_t_half_before_t_full(self, params):
        cfg = StabilizationTaskConfig()
        actor = HoverRecoveryController(params, cfg.z_d)
        res = eval_stabilization(actor, params, cfg, n_trials=8, seed=2)
        assert res.success_rate == 1.0
        assert res.crashes == 0
        finite = np.isfinite(res.t_full_trials)
        assert np.all(res.t_half_trials[finite] <= res.t_full_trials[finite])
        assert 0.0 < res.t_half < res.t_full

    def test_initial_speed_below_threshold_gives_zero_t_full(self, params):
        cfg = StabilizationTaskConfig(
            speed_caps=(0.2, 0.2, 0.0), max_tilt=0.0, omega_range=0.0,
            z_sample_range=(5.0, 5.0), horizon_s=1.0,
        )
        actor = ConstantActionController(hover_policy_output(params))
        res = eval_stabilization(actor, params, cfg, n_trials=4, seed=3)
        assert np.all(res.t_full_trials == 0.0)

    def test_gate_follower_oracle_small(self, params):
        track = default_track()
        actor = GateCenterFollower(track, params)
        res = eval_racing(actor, track, params, n_starts=4, seed=4, horizon_s=45.0)
        assert res.success_rate == 1.0
        assert res.mean_gate_error < 0.05
        assert np.isfinite(res.lap_time)

    def test_crashing_policy_zero_sr(self, params):
        track = default_track()
        actor = ConstantActionController(np.array([-1.0, 0.0, 0.0, 0.0]))
        res = eval_racing(actor, track, params, n_starts=4, seed=5, horizon_s=5.0)
        assert res.success_rate == 0.0
        assert math.isnan(res.lap_time)
        assert res.crashes == 4

    def test_racing_trial_count(self, params):
        track = default_track()
        actor = ConstantActionController(np.array([-1.0, 0.0, 0.0, 0.0]))
        res = eval_racing(actor, track, params, n_starts=7, seed=6, horizon_s=2.0)
        assert res.n_trials == 7
        assert len(res.lap_times) == 7

    def test_eval_deterministic(self, params):
        cfg = StabilizationTaskConfig(horizon_s=1.0)
        actor = HoverRecoveryController(params, cfg.z_d)
        a = eval_stabilization(actor, params, cfg, n_trials=4, seed=7)
        b = eval_stabilization(actor, params, cfg, n_trials=4, seed=7)
        np.testing.assert_array_equal(a.t_full_trials, b.t_full_trials)
        assert a.t_half == b.t_half


class TestExperiment:
    def test_run_experiment_artifacts(self, tmp_path):
        cfg = smoke_config(tmp_path)
        root = run_experiment(cfg)
        assert (root / "config.yaml").exists()
        assert (root / "seed_0" / "metrics.jsonl").exists()
        assert (root / "seed_0" / "checkpoint_final.pt").exists()
        assert (root / "seed_0" / "eval.json").exists()
        assert (root / "summary.csv").exists()
        assert (root / "summary.txt").exists()

    def test_eval_json_fields(self, tmp_path):
        cfg = smoke_config(tmp_path)
        root = run_experiment(cfg)
        data = json.loads((root / "seed_0" / "eval.json").read_text())
        assert data["schema"] == 1
        assert "t_half" in data["results"]["stabilization"]

    def test_summary_regenerable_from_eval_json(self, tmp_path):
        cfg = smoke_config(tmp_path)
        root = run_experiment(cfg)
        import csv

        with open(root / "summary.csv") as f:
            rows = list(csv.DictReader(f))
        data = json.loads((root / "seed_0" / "eval.json").read_text())
        assert float(rows[0]["t_half"]) == pytest.approx(
            data["results"]["stabilization"]["t_half"]
        )

    def test_checkpoint_policy_round_trip(self, tmp_path):
        cfg = smoke_config(tmp_path)
        root = run_experiment(cfg)
        payload = load_checkpoint(root / "seed_0" / "checkpoint_final.pt")
        policy, normalizer, tasks, one_hot = policy_from_checkpoint(payload)
        assert tasks == [TaskId.STABILIZATION]
        actor = PolicyActor(policy, normalizer, TaskId.STABILIZATION)
        res = eval_stabilization(
            actor, cfg.quad, cfg.tasks.stabilization, n_trials=2, seed=0, one_hot=one_hot
        )
        assert np.isfinite(res.t_half)

    def test_restore_trainer_continues(self, tmp_path):
        cfg = smoke_config(tmp_path, total=32)
        root = run_experiment(cfg)
        cfg2 = smoke_config(tmp_path, total=64)
        trainer = restore_trainer(cfg2, root / "seed_0" / "checkpoint_final.pt", tmp_path / "resumed")
        assert trainer.samples == 32
        trainer.cfg.total_samples = 64
        trainer.train()
        assert trainer.samples == 64

    def test_single_task_variant_runs(self, tmp_path):
        cfg = smoke_config(tmp_path, tasks=("stabilization", "tracking"), total=32)
        cfg.policy.variant = "single_task"
        root = run_experiment(cfg)
        assert (root / "seed_0" / "checkpoint_final.pt").exists()


class TestExport:
    def test_trajectory_csv(self, tmp_path, params):
        cfg = TrackingTaskConfig(horizon_s=1.0)
        env = make_vec_env(TaskId.TRACKING, 1, params, cfg, seed=0, autoreset=False)
        actor = ConstantActionController(hover_policy_output(params))
        rows = record_episode(env, actor)
        assert len(rows) == env.horizon_steps
        path = tmp_path / "traj.csv"
        write_trajectory_csv(rows, path)
        text = path.read_text().splitlines()
        assert text[0].startswith("# mtquad-trajectory schema=1")
        header = text[1].split(",")
        for col in ("t", "px", "qw", "vx", "wx", "u1", "reward", "r_velocity"):
            assert col in header

    def test_export_plot_data(self, tmp_path):
        cfg = smoke_config(tmp_path)
        root = run_experiment(cfg)
        written = export_plot_data(root / "seed_0", tmp_path / "plots")
        assert all(p.exists() for p in written)
        lines = (tmp_path / "plots" / "returns_curves.csv").read_text().splitlines()
        assert lines[0].split(",")[:3] == ["schema", "samples", "task"]
        assert len(lines) > 1

    def test_read_metrics(self, tmp_path):
        cfg = smoke_config(tmp_path)
        root = run_experiment(cfg)
        rows = read_metrics(root / "seed_0")
        assert all(r["schema"] == 1 for r in rows)


class TestBuildHelpers:
    def test_build_envs_enabled_subset(self, tmp_path):
        cfg = smoke_config(tmp_path, tasks=("tracking",))
        envs = build_envs(cfg, seed=0)
        assert list(envs.keys()) == [TaskId.TRACKING]

    def test_build_policy_uses_hover_bias(self, tmp_path):
        import torch

        cfg = smoke_config(tmp_path)
        envs = build_envs(cfg, seed=0)
        policy = build_policy(cfg, envs, seed=0)
        shared = torch.zeros(1, 19)
        task_obs = torch.zeros(1, envs[TaskId.STABILIZATION].task_obs_dim)
        mean = policy.mean_action(TaskId.STABILIZATION, shared, task_obs)
        expected = hover_policy_output(cfg.quad)[0]
        assert mean[0, 0].item() == pytest.approx(expected, abs=0.02)
