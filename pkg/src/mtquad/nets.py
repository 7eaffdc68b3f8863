"""Policy and value networks: shared dynamics encoder, per-task encoders,
a tanh-squashed Gaussian actor, and one critic per task.

Four wiring variants cover the proposed architecture and its ablations:

- ``OURS``: one shared dynamics encoder (19 -> 32); each task encoder fuses
  the shared observation with the task observation (-> 32); the shared actor
  consumes the 64-wide concatenation.
- ``ACTOR_ONLY``: the actor is the only shared network; every task owns its
  dynamics encoder and task encoder.
- ``SEPARATE``: a shared dynamics encoder exists, but each task encoder sees
  only the task observation and alone emits the 64-wide actor input.
- ``SINGLE_TASK``: one complete, independent network stack per task.

Critics always consume the raw full observation (shared + task parts) and
share nothing with the actor pathway. All forward passes are deterministic;
sampling draws from an explicit torch.Generator.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import torch
import torch.nn as nn

from .tasks.core import SHARED_OBS_DIM, TaskId

ACTION_DIM = 4
ACTOR_INPUT_DIM = 64


class ArchitectureVariant(enum.Enum):
    OURS = "ours"
    ACTOR_ONLY = "actor_only"
    SEPARATE = "separate"
    SINGLE_TASK = "single_task"


@dataclass
class MlpSpec:
    widths: list[int]
    hidden_activation: str = "relu"
    output_activation: str = "identity"

    def __post_init__(self) -> None:
        if len(self.widths) < 2:
            raise ValueError("an MLP needs at least input and output widths")
        if any(w <= 0 for w in self.widths):
            raise ValueError("layer widths must be positive")


@dataclass
class NetConfig:
    shared_embed: int = 32
    task_embed: int = 32
    encoder_hidden: int = 128
    actor_hidden: int = 256
    critic_hidden: int = 256
    log_std_init: float = math.log(0.2)
    log_std_floor: float = math.log(0.01)
    actor_out_scale: float = 0.01
    # initial actor mean for the thrust channel (tanh-domain); None leaves it 0
    initial_thrust_output: Optional[float] = None


_ACTIVATIONS = {"relu": nn.ReLU, "tanh": nn.Tanh, "identity": nn.Identity}


def _orthogonal_(weight: torch.Tensor, gain: float, generator: torch.Generator) -> None:
    rows, cols = weight.shape
    flat = torch.randn(max(rows, cols), min(rows, cols), generator=generator)
    q, r = torch.linalg.qr(flat)
    q = q * torch.sign(torch.diagonal(r))
    if rows < cols:
        q = q.t()
    with torch.no_grad():
        weight.copy_(gain * q[:rows, :cols])


def build_mlp(spec: MlpSpec, generator: torch.Generator, out_gain: float = 1.0) -> nn.Sequential:
    """Affine stack with orthogonal init: sqrt(2) gain on hidden layers,
    ``out_gain`` on the last."""
    layers: list[nn.Module] = []
    n_affine = len(spec.widths) - 1
    for k in range(n_affine):
        linear = nn.Linear(spec.widths[k], spec.widths[k + 1])
        last = k == n_affine - 1
        _orthogonal_(linear.weight, out_gain if last else math.sqrt(2.0), generator)
        nn.init.zeros_(linear.bias)
        layers.append(linear)
        act = spec.output_activation if last else spec.hidden_activation
        if act != "identity":
            layers.append(_ACTIVATIONS[act]())
    return nn.Sequential(*layers)


def mlp_forward(mlp: nn.Module, x: torch.Tensor) -> torch.Tensor:
    expected = next(m.in_features for m in mlp.modules() if isinstance(m, nn.Linear))
    if x.shape[-1] != expected:
        raise ValueError(f"input width {x.shape[-1]} does not match MLP input {expected}")
    return mlp(x)


def gaussian_log_prob(u: torch.Tensor, mean: torch.Tensor, log_std: torch.Tensor) -> torch.Tensor:
    var_term = ((u - mean) / log_std.exp()) ** 2
    return -0.5 * (var_term + 2.0 * log_std + math.log(2.0 * math.pi)).sum(dim=-1)


def gaussian_entropy(log_std: torch.Tensor) -> torch.Tensor:
    return (log_std + 0.5 * math.log(2.0 * math.pi * math.e)).sum()


def sample_action(
    generator: torch.Generator, mean: torch.Tensor, log_std: torch.Tensor
) -> tuple[torch.Tensor, torch.Tensor]:
    """Diagonal Gaussian draw with its (pre-clip) log density.

    The environment clips the sample to the [-1, 1] command range; the
    density is of the unclipped draw so PPO ratios stay consistent.
    """
    eps = torch.randn(mean.shape, generator=generator, dtype=mean.dtype)
    u = mean + log_std.exp() * eps
    return u, gaussian_log_prob(u, mean, log_std)


class MultiTaskPolicy(nn.Module):
    """Actor-critic parameter sets for a set of tasks under one variant."""

    def __init__(
        self,
        tasks: list[TaskId],
        task_obs_dims: dict[TaskId, int],
        variant: ArchitectureVariant = ArchitectureVariant.OURS,
        cfg: Optional[NetConfig] = None,
        seed: int = 0,
    ):
        super().__init__()
        if not tasks:
            raise ValueError("at least one task required")
        self.tasks = list(tasks)
        self.task_obs_dims = dict(task_obs_dims)
        self.variant = variant
        self.cfg = cfg = cfg or NetConfig()
        gen = torch.Generator().manual_seed(seed)
        h = cfg.encoder_hidden
        actor_in = cfg.shared_embed + cfg.task_embed

        def encoder_spec(in_dim: int, out_dim: int) -> MlpSpec:
            return MlpSpec([in_dim, h, h, out_dim])

        self.shared_encoder: Optional[nn.Module] = None
        self.dyn_encoders: Optional[nn.ModuleDict] = None
        if variant in (ArchitectureVariant.OURS, ArchitectureVariant.SEPARATE):
            self.shared_encoder = build_mlp(encoder_spec(SHARED_OBS_DIM, cfg.shared_embed), gen)
        else:
            self.dyn_encoders = nn.ModuleDict(
                {
                    t.value: build_mlp(encoder_spec(SHARED_OBS_DIM, cfg.shared_embed), gen)
                    for t in self.tasks
                }
            )

        def task_encoder_spec(t: TaskId) -> MlpSpec:
            if variant is ArchitectureVariant.SEPARATE:
                return encoder_spec(self.task_obs_dims[t], actor_in)
            return encoder_spec(SHARED_OBS_DIM + self.task_obs_dims[t], cfg.task_embed)

        self.task_encoders = nn.ModuleDict(
            {t.value: build_mlp(task_encoder_spec(t), gen) for t in self.tasks}
        )

        def build_actor() -> nn.Sequential:
            spec = MlpSpec(
                [actor_in, cfg.actor_hidden, cfg.actor_hidden, ACTION_DIM],
                output_activation="tanh",
            )
            actor = build_mlp(spec, gen, out_gain=cfg.actor_out_scale)
            if cfg.initial_thrust_output is not None:
                final = [m for m in actor.modules() if isinstance(m, nn.Linear)][-1]
                with torch.no_grad():
                    final.bias[0] = math.atanh(cfg.initial_thrust_output)
            return actor

        def log_std_param() -> nn.Parameter:
            return nn.Parameter(torch.full((ACTION_DIM,), cfg.log_std_init))

        if variant is ArchitectureVariant.SINGLE_TASK:
            self.actors = nn.ModuleDict({t.value: build_actor() for t in self.tasks})
            self.actor = None
            self.log_stds = nn.ParameterDict({t.value: log_std_param() for t in self.tasks})
            self.log_std = None
        else:
            self.actor = build_actor()
            self.actors = None
            self.log_std = log_std_param()
            self.log_stds = None

        self.critics = nn.ModuleDict(
            {
                t.value: build_mlp(
                    MlpSpec(
                        [SHARED_OBS_DIM + self.task_obs_dims[t], cfg.critic_hidden, cfg.critic_hidden, 1]
                    ),
                    gen,
                )
                for t in self.tasks
            }
        )

    # ---- wiring ------------------------------------------------------------
    def encode(self, task: TaskId, shared: torch.Tensor, task_obs: torch.Tensor) -> torch.Tensor:
        """Variant-dependent 64-wide actor input."""
        if task.value not in self.task_encoders:
            raise KeyError(f"policy has no parameters for task {task}")
        if shared.shape[-1] != SHARED_OBS_DIM:
            raise ValueError(f"shared observation must have width {SHARED_OBS_DIM}")
        if task_obs.shape[-1] != self.task_obs_dims[task]:
            raise ValueError(
                f"task observation width {task_obs.shape[-1]} does not match "
                f"{self.task_obs_dims[task]} for {task}"
            )
        if self.variant is ArchitectureVariant.SEPARATE:
            return self.task_encoders[task.value](task_obs)
        if self.shared_encoder is not None:
            e_dyn = self.shared_encoder(shared)
        else:
            e_dyn = self.dyn_encoders[task.value](shared)
        e_task = self.task_encoders[task.value](torch.cat([shared, task_obs], dim=-1))
        return torch.cat([e_dyn, e_task], dim=-1)

    def _actor_for(self, task: TaskId) -> nn.Module:
        return self.actors[task.value] if self.actors is not None else self.actor

    def log_std_for(self, task: TaskId) -> torch.Tensor:
        return self.log_stds[task.value] if self.log_stds is not None else self.log_std

    def actor_mean(self, task: TaskId, shared: torch.Tensor, task_obs: torch.Tensor) -> torch.Tensor:
        return self._actor_for(task)(self.encode(task, shared, task_obs))

    def dist_params(
        self, task: TaskId, shared: torch.Tensor, task_obs: torch.Tensor
    ) -> tuple[torch.Tensor, torch.Tensor]:
        return self.actor_mean(task, shared, task_obs), self.log_std_for(task)

    def value(self, task: TaskId, shared: torch.Tensor, task_obs: torch.Tensor) -> torch.Tensor:
        """Scalar value from the task's own critic on the raw full observation."""
        if task.value not in self.critics:
            raise KeyError(f"policy has no critic for task {task}")
        full = torch.cat([shared, task_obs], dim=-1)
        return self.critics[task.value](full).squeeze(-1)

    @torch.no_grad()
    def act(
        self,
        task: TaskId,
        shared: torch.Tensor,
        task_obs: torch.Tensor,
        generator: torch.Generator,
    ) -> tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
        """Sample actions and evaluate values for a rollout step."""
        mean, log_std = self.dist_params(task, shared, task_obs)
        u, log_prob = sample_action(generator, mean, log_std)
        return u, log_prob, self.value(task, shared, task_obs)

    @torch.no_grad()
    def mean_action(self, task: TaskId, shared: torch.Tensor, task_obs: torch.Tensor) -> torch.Tensor:
        return self.actor_mean(task, shared, task_obs)

    def clamp_log_std(self) -> None:
        params = self.log_stds.values() if self.log_stds is not None else [self.log_std]
        with torch.no_grad():
            for p in params:
                p.clamp_(min=self.cfg.log_std_floor)
