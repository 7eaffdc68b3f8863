"""Multi-task PPO: uniform task sampling via equal env allocation, GAE,
clipped-surrogate updates against per-task critics, and curriculum tracking.

One iteration collects ``rollout_len`` steps from every environment of every
task (so per-task sample counts stay exactly equal), computes advantages per
task, then runs minibatch updates over the task-mixed dataset. Shared
parameters receive gradients from all tasks; task-specific parameters only
from their own samples, which autograd routing gives for free.

Everything that evolves during training (policy, optimizer moments, RNG
streams, env states mid-episode, normalizer and reward-scaler statistics,
curriculum counters) is captured in checkpoints, so a resumed run reproduces
the original bit for bit.
"""

from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
import torch

from .curriculum import curriculum_update
from .nets import MultiTaskPolicy, gaussian_entropy, gaussian_log_prob
from .tasks import TaskId, VecTaskEnv
from .tasks.core import ONE_HOT_DIM, SHARED_OBS_DIM

METRICS_SCHEMA = 1
CHECKPOINT_SCHEMA = 1


class TrainerError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_eps: float = 0.2
    lr: float = 3e-4
    epochs: int = 10
    minibatch_size: int = 1024
    rollout_len: int = 256
    n_envs_per_task: int = 16
    total_samples: int = 1_000_000
    entropy_coeff: float = 0.0
    value_coeff: float = 0.5
    max_grad_norm: float = 1.0
    seed: int = 0
    obs_norm: bool = True
    reward_scaling: bool = True
    checkpoint_every_iters: int = 0  # 0: final checkpoint only


class RunningMeanStd:
    """Streaming per-dimension mean/variance (Chan's parallel update)."""

    def __init__(self, dim: int):
        self.mean = np.zeros(dim)
        self.var = np.ones(dim)
        self.count = 1e-4

    def update(self, batch: np.ndarray) -> None:
        batch_mean = batch.mean(axis=0)
        batch_var = batch.var(axis=0)
        n = batch.shape[0]
        delta = batch_mean - self.mean
        total = self.count + n
        self.mean = self.mean + delta * n / total
        m_a = self.var * self.count
        m_b = batch_var * n
        self.var = (m_a + m_b + delta**2 * self.count * n / total) / total
        self.count = total

    def normalize(self, x: np.ndarray, clip: float = 10.0) -> np.ndarray:
        return np.clip((x - self.mean) / np.sqrt(self.var + 1e-8), -clip, clip)

    def state(self) -> dict:
        return {"mean": self.mean.copy(), "var": self.var.copy(), "count": self.count}

    def set_state(self, state: dict) -> None:
        self.mean = state["mean"].copy()
        self.var = state["var"].copy()
        self.count = state["count"]


class ObsNormalizer:
    """One shared normalizer for the 19 dynamics dims, one per task for the
    task-specific dims; the one-hot task code passes through untouched."""

    def __init__(self, tasks: list[TaskId], one_hot: bool, enabled: bool = True):
        self.enabled = enabled
        self.one_hot = one_hot
        self.shared = RunningMeanStd(SHARED_OBS_DIM)
        self.task = {t: RunningMeanStd(t.base_obs_dim) for t in tasks}

    def _split(self, task: TaskId, task_obs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        base = task.base_obs_dim
        return task_obs[..., :base], task_obs[..., base:]

    def update(self, task: TaskId, shared: np.ndarray, task_obs: np.ndarray) -> None:
        if not self.enabled:
            return
        self.shared.update(shared)
        base, _ = self._split(task, task_obs)
        self.task[task].update(base)

    def normalize(
        self, task: TaskId, shared: np.ndarray, task_obs: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray]:
        if not self.enabled:
            return shared, task_obs
        base, rest = self._split(task, task_obs)
        return (
            self.shared.normalize(shared),
            np.concatenate([self.task[task].normalize(base), rest], axis=-1),
        )

    def state(self) -> dict:
        return {
            "enabled": self.enabled,
            "one_hot": self.one_hot,
            "shared": self.shared.state(),
            "task": {t.value: rms.state() for t, rms in self.task.items()},
        }

    def set_state(self, state: dict) -> None:
        self.enabled = state["enabled"]
        self.one_hot = state["one_hot"]
        self.shared.set_state(state["shared"])
        for t, rms in self.task.items():
            rms.set_state(state["task"][t.value])


class RewardScaler:
    """Scales rewards by the running std of the discounted return, keeping
    critic targets near unit scale across tasks with wildly different
    reward magnitudes. Reported episode returns stay raw."""

    def __init__(self, n_envs: int, gamma: float, enabled: bool = True, clip: float = 10.0):
        self.enabled = enabled
        self.gamma = gamma
        self.clip = clip
        self.returns = np.zeros(n_envs)
        self.rms = RunningMeanStd(1)

    def scale(self, rewards: np.ndarray, dones: np.ndarray) -> np.ndarray:
        if not self.enabled:
            return rewards
        self.returns = self.returns * self.gamma + rewards
        self.rms.update(self.returns[:, None])
        scaled = np.clip(rewards / np.sqrt(self.rms.var[0] + 1e-8), -self.clip, self.clip)
        self.returns[dones] = 0.0
        return scaled

    def state(self) -> dict:
        return {"returns": self.returns.copy(), "rms": self.rms.state(), "enabled": self.enabled}

    def set_state(self, state: dict) -> None:
        self.returns = state["returns"].copy()
        self.rms.set_state(state["rms"])
        self.enabled = state["enabled"]


def compute_gae(
    rewards: np.ndarray,
    values: np.ndarray,
    dones: np.ndarray,
    bootstrap_value: np.ndarray,
    gamma: float,
    lam: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimation over (T, N) sequences.

    delta_t = r_t + gamma*V_{t+1}*(1-done_t) - V_t, accumulated with
    gamma*lam*(1-done_t); returns are advantages + values.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    if not (rewards.shape == values.shape == dones.shape):
        raise ValueError("rewards, values, and done flags must share a shape")
    T = rewards.shape[0]
    advantages = np.zeros_like(rewards)
    carry = np.zeros_like(bootstrap_value, dtype=np.float64)
    next_values = np.asarray(bootstrap_value, dtype=np.float64)
    for t in reversed(range(T)):
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_values * nonterminal - values[t]
        carry = delta + gamma * lam * nonterminal * carry
        advantages[t] = carry
        next_values = values[t]
    return advantages, advantages + values


@dataclass
class RolloutBuffer:
    """Per-task transition storage for one iteration."""

    obs_shared: np.ndarray
    obs_task: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    dones: np.ndarray
    advantages: Optional[np.ndarray] = None
    returns: Optional[np.ndarray] = None

    @classmethod
    def allocate(cls, T: int, n_envs: int, task_obs_dim: int) -> "RolloutBuffer":
        return cls(
            obs_shared=np.zeros((T, n_envs, SHARED_OBS_DIM), dtype=np.float32),
            obs_task=np.zeros((T, n_envs, task_obs_dim), dtype=np.float32),
            actions=np.zeros((T, n_envs, 4), dtype=np.float32),
            log_probs=np.zeros((T, n_envs), dtype=np.float64),
            rewards=np.zeros((T, n_envs), dtype=np.float64),
            values=np.zeros((T, n_envs), dtype=np.float64),
            dones=np.zeros((T, n_envs), dtype=bool),
        )

    @property
    def n_samples(self) -> int:
        return self.rewards.shape[0] * self.rewards.shape[1]

    def finalize(self, bootstrap_value: np.ndarray, gamma: float, lam: float) -> None:
        self.advantages, self.returns = compute_gae(
            self.rewards, self.values, self.dones.astype(np.float64), bootstrap_value, gamma, lam
        )

    def flat(self) -> dict[str, np.ndarray]:
        T, N = self.rewards.shape
        return {
            "obs_shared": self.obs_shared.reshape(T * N, -1),
            "obs_task": self.obs_task.reshape(T * N, -1),
            "actions": self.actions.reshape(T * N, 4),
            "log_probs": self.log_probs.reshape(T * N),
            "advantages": self.advantages.reshape(T * N),
            "returns": self.returns.reshape(T * N),
        }


def _tensor(x: np.ndarray) -> torch.Tensor:
    return torch.as_tensor(np.asarray(x, dtype=np.float32))


class Trainer:
    """Owns the optimization loop for one policy over one or more tasks."""

    def __init__(
        self,
        cfg: TrainConfig,
        policy: MultiTaskPolicy,
        envs: dict[TaskId, VecTaskEnv],
        out_dir: Optional[str | Path] = None,
    ):
        if not envs:
            raise ValueError("at least one task environment required")
        self.cfg = cfg
        self.policy = policy
        self.envs = dict(envs)
        self.tasks = list(envs.keys())
        self.out_dir = Path(out_dir) if out_dir is not None else None
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)

        self.torch_gen = torch.Generator().manual_seed(cfg.seed)
        self.optimizer = torch.optim.Adam(policy.parameters(), lr=cfg.lr)
        one_hot = next(iter(envs.values())).one_hot
        self.normalizer = ObsNormalizer(self.tasks, one_hot, enabled=cfg.obs_norm)
        self.reward_scalers = {
            t: RewardScaler(envs[t].n, cfg.gamma, enabled=cfg.reward_scaling) for t in self.tasks
        }
        self.samples = 0
        self.iteration = 0
        self.episode_history: dict[TaskId, list[dict]] = {t: [] for t in self.tasks}
        self.metrics_rows: list[dict] = []
        self._obs = {t: envs[t].observations() for t in self.tasks}

    # ---- rollout collection -------------------------------------------------
    def _policy_obs(self, task: TaskId, update_stats: bool) -> tuple[np.ndarray, np.ndarray]:
        shared_raw, task_raw = self._obs[task]
        if update_stats:
            self.normalizer.update(task, shared_raw, task_raw)
        return self.normalizer.normalize(task, shared_raw, task_raw)

    def collect_rollouts(self) -> dict[TaskId, RolloutBuffer]:
        cfg = self.cfg
        buffers = {}
        for task in self.tasks:
            env = self.envs[task]
            buf = RolloutBuffer.allocate(cfg.rollout_len, env.n, env.task_obs_dim)
            scaler = self.reward_scalers[task]
            for t in range(cfg.rollout_len):
                shared_n, task_n = self._policy_obs(task, update_stats=True)
                u, log_prob, value = self.policy.act(
                    task, _tensor(shared_n), _tensor(task_n), self.torch_gen
                )
                u_np = u.numpy().astype(np.float64)
                result = env.step(u_np)
                buf.obs_shared[t] = shared_n
                buf.obs_task[t] = task_n
                buf.actions[t] = u_np
                buf.log_probs[t] = log_prob.numpy()
                buf.values[t] = value.numpy()
                buf.dones[t] = result.terminated
                buf.rewards[t] = scaler.scale(result.rewards, result.terminated)
                self._obs[task] = (result.obs_shared, result.obs_task)
                for summary in result.completed:
                    self.episode_history[task].append(
                        {
                            "samples": self.samples + (t + 1) * env.n,
                            "return": summary["return"],
                            "length": summary["length"],
                            "reason": summary["reason"].name,
                        }
                    )
            shared_n, task_n = self._policy_obs(task, update_stats=False)
            with torch.no_grad():
                bootstrap = self.policy.value(task, _tensor(shared_n), _tensor(task_n)).numpy()
            buf.finalize(bootstrap.astype(np.float64), cfg.gamma, cfg.gae_lambda)
            buffers[task] = buf
        # advance sample counts and curricula from this iteration's collection
        for task in self.tasks:
            env = self.envs[task]
            env.curriculum = curriculum_update(env.curriculum, cfg.rollout_len * env.n)
        self.samples += sum(b.n_samples for b in buffers.values())
        return buffers

    # ---- optimization --------------------------------------------------------
    def update(self, buffers: dict[TaskId, RolloutBuffer]) -> dict[str, float]:
        cfg = self.cfg
        tasks = [t for t in self.tasks if t in buffers]
        flats = {t: buffers[t].flat() for t in tasks}
        sizes = [flats[t]["log_probs"].shape[0] for t in tasks]
        offsets = np.concatenate([[0], np.cumsum(sizes)])
        total = int(offsets[-1])

        stats = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0, "approx_kl": 0.0, "clip_frac": 0.0}
        n_batches = 0
        for _ in range(cfg.epochs):
            perm = torch.randperm(total, generator=self.torch_gen).numpy()
            for start in range(0, total, cfg.minibatch_size):
                idx = perm[start : start + cfg.minibatch_size]
                losses = self._minibatch_losses(tasks, flats, offsets, idx)
                loss = (
                    losses["policy_loss"]
                    + cfg.value_coeff * losses["value_loss"]
                    - cfg.entropy_coeff * losses["entropy"]
                )
                if not torch.isfinite(loss):
                    self._dump_emergency_checkpoint()
                    raise TrainerError("non-finite loss during PPO update")
                self.optimizer.zero_grad()
                loss.backward()
                torch.nn.utils.clip_grad_norm_(self.policy.parameters(), cfg.max_grad_norm)
                self.optimizer.step()
                self.policy.clamp_log_std()
                for key in stats:
                    stats[key] += float(losses[key].detach())
                n_batches += 1
        return {k: v / max(n_batches, 1) for k, v in stats.items()}

    def _minibatch_losses(self, tasks, flats, offsets, idx: np.ndarray) -> dict[str, torch.Tensor]:
        cfg = self.cfg
        surrogates, value_errors, entropies, kls, clipped = [], [], [], [], []
        for k, task in enumerate(tasks):
            local = idx[(idx >= offsets[k]) & (idx < offsets[k + 1])] - offsets[k]
            if local.size == 0:
                continue
            data = flats[task]
            shared = _tensor(data["obs_shared"][local])
            task_obs = _tensor(data["obs_task"][local])
            actions = _tensor(data["actions"][local])
            old_logp = _tensor(data["log_probs"][local])
            adv = torch.as_tensor(data["advantages"][local], dtype=torch.float32)
            ret = torch.as_tensor(data["returns"][local], dtype=torch.float32)

            # per-task normalization keeps tasks with small reward scales alive
            if adv.numel() > 1:
                adv = (adv - adv.mean()) / (adv.std(unbiased=False) + 1e-8)
            else:
                adv = adv - adv.mean()

            mean, log_std = self.policy.dist_params(task, shared, task_obs)
            new_logp = gaussian_log_prob(actions, mean, log_std)
            ratio = torch.exp(new_logp - old_logp)
            clipped_ratio = torch.clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps)
            surrogates.append(torch.minimum(ratio * adv, clipped_ratio * adv))

            value = self.policy.value(task, shared, task_obs)
            value_errors.append((value - ret) ** 2)
            entropies.append(gaussian_entropy(log_std).expand(local.size))
            with torch.no_grad():
                kls.append(old_logp - new_logp)
                clipped.append((torch.abs(ratio - 1.0) > cfg.clip_eps).float())

        return {
            "policy_loss": -torch.cat(surrogates).mean(),
            "value_loss": torch.cat(value_errors).mean(),
            "entropy": torch.cat(entropies).mean(),
            "approx_kl": torch.cat(kls).mean(),
            "clip_frac": torch.cat(clipped).mean(),
        }

    # ---- driver ---------------------------------------------------------------
    def train(self) -> list[dict]:
        cfg = self.cfg
        if cfg.total_samples <= self.samples:
            self.save_checkpoint(self._checkpoint_path("final"))
            return self.metrics_rows
        while self.samples < cfg.total_samples:
            history_marks = {t: len(self.episode_history[t]) for t in self.tasks}
            buffers = self.collect_rollouts()
            losses = self.update(buffers)
            self.iteration += 1
            row = self._metrics_row(history_marks, losses)
            self.metrics_rows.append(row)
            self._write_metrics_row(row)
            if (
                cfg.checkpoint_every_iters > 0
                and self.iteration % cfg.checkpoint_every_iters == 0
            ):
                self.save_checkpoint(self._checkpoint_path(f"iter{self.iteration:06d}"))
        self.save_checkpoint(self._checkpoint_path("final"))
        return self.metrics_rows

    def _metrics_row(self, history_marks: dict[TaskId, int], losses: dict[str, float]) -> dict:
        row = {
            "schema": METRICS_SCHEMA,
            "iteration": self.iteration,
            "samples": self.samples,
            "losses": losses,
            "tasks": {},
        }
        for task in self.tasks:
            new_eps = self.episode_history[task][history_marks[task]:]
            returns = [e["return"] for e in new_eps]
            env = self.envs[task]
            row["tasks"][task.value] = {
                "episodes": len(new_eps),
                "return_mean": float(np.mean(returns)) if returns else None,
                "curriculum_level": env.curriculum.level(env.curriculum_cfg),
            }
        return row

    def _write_metrics_row(self, row: dict) -> None:
        if self.out_dir is None:
            return
        with open(self.out_dir / "metrics.jsonl", "a") as f:
            f.write(json.dumps(row) + "\n")

    # ---- checkpointing ---------------------------------------------------------
    def _checkpoint_path(self, tag: str) -> Optional[Path]:
        if self.out_dir is None:
            return None
        return self.out_dir / f"checkpoint_{tag}.pt"

    def _dump_emergency_checkpoint(self) -> None:
        path = self._checkpoint_path("emergency")
        if path is not None:
            self.save_checkpoint(path)

    def checkpoint_payload(self) -> dict:
        return {
            "schema": CHECKPOINT_SCHEMA,
            "variant": self.policy.variant.value,
            "tasks": [t.value for t in self.tasks],
            "task_obs_dims": {t.value: d for t, d in self.policy.task_obs_dims.items()},
            "net_cfg": dataclasses.asdict(self.policy.cfg),
            "train_cfg": dataclasses.asdict(self.cfg),
            "policy_state": self.policy.state_dict(),
            "optimizer_state": self.optimizer.state_dict(),
            "torch_rng": self.torch_gen.get_state(),
            "normalizer": self.normalizer.state(),
            "reward_scalers": {t.value: s.state() for t, s in self.reward_scalers.items()},
            "env_states": {t.value: self.envs[t].get_state() for t in self.tasks},
            "samples": self.samples,
            "iteration": self.iteration,
            "episode_history": {t.value: list(v) for t, v in self.episode_history.items()},
        }

    def save_checkpoint(self, path: Optional[str | Path]) -> None:
        if path is None:
            return
        torch.save(self.checkpoint_payload(), path)

    def restore(self, payload: dict) -> None:
        """Load a checkpoint produced by an identically configured trainer."""
        if payload["schema"] != CHECKPOINT_SCHEMA:
            raise TrainerError(f"unsupported checkpoint schema {payload['schema']!r}")
        if payload["tasks"] != [t.value for t in self.tasks]:
            raise TrainerError("checkpoint task set does not match trainer")
        self.policy.load_state_dict(payload["policy_state"])
        self.optimizer.load_state_dict(payload["optimizer_state"])
        self.torch_gen.set_state(payload["torch_rng"])
        self.normalizer.set_state(payload["normalizer"])
        for t in self.tasks:
            self.reward_scalers[t].set_state(payload["reward_scalers"][t.value])
            self.envs[t].set_state(payload["env_states"][t.value])
        self.samples = payload["samples"]
        self.iteration = payload["iteration"]
        self.episode_history = {
            t: list(payload["episode_history"][t.value]) for t in self.tasks
        }
        self._obs = {t: self.envs[t].observations() for t in self.tasks}


def load_checkpoint(path: str | Path) -> dict:
    return torch.load(path, weights_only=False)
