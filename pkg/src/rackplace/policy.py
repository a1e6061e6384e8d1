"""Learned rack-type ordering: attention encoder, pointer decoder, and
multi-start REINFORCE training with a shared baseline and leader weighting.

Each rack type becomes a token from its two-float features. The encoder is a
small transformer stack; the decoder autoregressively points at the next
type, conditioning on the mean graph embedding and the last selected type's
embedding. Rollouts are multi-start: one trajectory per rack type, each
forced to begin with a distinct type, so the mean reward over trajectories
of the same instance is a meaningful shared baseline. The single best
trajectory per instance gets its advantage scaled by ``leader_weight``
(1 recovers the plain shared-baseline update). Every rollout's reward is the
negated augmented objective of an actual solver run, so the policy learns
orders that work well with the downstream local search.

Network weights are single precision; per-step softmaxes, log-probabilities,
and rewards are double precision.
"""

from __future__ import annotations

import base64
import csv
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .heuristic import EngineConfig, solve_ordered
from .instgen import GeneratorConfig, generate_instance
from .model import Assignment, ProblemInstance
from .objective import augmented_objective
from .ordering import featurize
from .seeding import child_seed

CHECKPOINT_SCHEMA_VERSION = 1

SAMPLE = "sample"
GREEDY = "greedy"

# Stream offsets under one master training seed.
_INIT_STREAM = 1 << 50
_DECODE_STREAM = (1 << 50) + 1


class NonFiniteGradientError(RuntimeError):
    """A training step produced NaN/Inf gradients; the update was not applied."""


@dataclass
class PolicyConfig:
    """Network hyperparameters (scaled-down attention-model defaults)."""

    d_model: int = 64
    num_layers: int = 3
    num_heads: int = 4
    ff_width: int = 256
    logit_clip: float = 10.0


class EncoderLayer(nn.Module):
    """Multi-head self-attention + feed-forward, residuals and layer norm.

    Built from plain Linear ops so the forward pass is easy to replicate
    outside torch for verification.
    """

    def __init__(self, d_model: int, num_heads: int, ff_width: int):
        super().__init__()
        if d_model % num_heads != 0:
            raise ValueError("d_model must be divisible by num_heads")
        self.num_heads = num_heads
        self.qkv = nn.Linear(d_model, 3 * d_model)
        self.attn_out = nn.Linear(d_model, d_model)
        self.norm1 = nn.LayerNorm(d_model)
        self.ff1 = nn.Linear(d_model, ff_width)
        self.ff2 = nn.Linear(ff_width, d_model)
        self.norm2 = nn.LayerNorm(d_model)

    def forward(self, h: torch.Tensor) -> torch.Tensor:
        b, k, d = h.shape
        head_dim = d // self.num_heads
        q, key, v = self.qkv(h).chunk(3, dim=-1)
        q = q.view(b, k, self.num_heads, head_dim).transpose(1, 2)
        key = key.view(b, k, self.num_heads, head_dim).transpose(1, 2)
        v = v.view(b, k, self.num_heads, head_dim).transpose(1, 2)
        scores = q @ key.transpose(-2, -1) / head_dim**0.5
        z = torch.softmax(scores, dim=-1) @ v
        z = z.transpose(1, 2).reshape(b, k, d)
        h = self.norm1(h + self.attn_out(z))
        return self.norm2(h + self.ff2(torch.relu(self.ff1(h))))


class OrderingPolicy(nn.Module):
    """Encoder-decoder policy over rack-type permutations."""

    def __init__(self, config: PolicyConfig = PolicyConfig()):
        super().__init__()
        self.config = config
        self.embed = nn.Linear(2, config.d_model)
        self.layers = nn.ModuleList(
            EncoderLayer(config.d_model, config.num_heads, config.ff_width)
            for _ in range(config.num_layers)
        )
        self.context_proj = nn.Linear(2 * config.d_model, config.d_model, bias=False)
        self.key_proj = nn.Linear(config.d_model, config.d_model, bias=False)

    def encode(self, features: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        """Per-type embeddings (B, K, D) and their mean (B, D)."""
        if torch.isnan(features).any():
            raise ValueError("features contain NaN")
        for p in self.parameters():
            if torch.isnan(p).any():
                raise ValueError("policy weights contain NaN")
        h = self.embed(features)
        for layer in self.layers:
            h = layer(h)
        return h, h.mean(dim=1)


def encode(features: np.ndarray, policy: OrderingPolicy) -> tuple[np.ndarray, np.ndarray]:
    """Numpy-facing wrapper around :meth:`OrderingPolicy.encode`."""
    feats = torch.as_tensor(np.asarray(features, dtype=np.float32))
    if feats.ndim == 2:
        feats = feats.unsqueeze(0)
        emb, graph = policy.encode(feats)
        return emb[0].detach().numpy(), graph[0].detach().numpy()
    emb, graph = policy.encode(feats)
    return emb.detach().numpy(), graph.detach().numpy()


def _pointer_steps(
    policy: OrderingPolicy,
    features: torch.Tensor,
    n_traj: int,
    mode: str = SAMPLE,
    seed: int = 0,
    forced: torch.Tensor | None = None,
    collect_probs: bool = False,
):
    """Shared decode loop.

    With ``forced`` given (B, N, K), selections are teacher-forced and the
    result is differentiable; otherwise types are sampled or chosen greedily.
    Multi-start (n_traj > 1) requires n_traj == K, forces trajectory j to
    start at type j, and excludes the forced step from the log-probability.
    """
    b, k, _ = features.shape
    multi_start = n_traj > 1
    if multi_start and n_traj != k:
        raise ValueError(f"multi-start needs one trajectory per rack type, got {n_traj} != {k}")

    emb, graph = policy.encode(features)
    keys = policy.key_proj(emb)  # (B, K, D)
    scale = policy.config.d_model**0.5

    visited = torch.zeros(b, n_traj, k, dtype=torch.bool)
    logps = torch.zeros(b, n_traj, dtype=torch.float64)
    perms = torch.zeros(b, n_traj, k, dtype=torch.int64)
    step_probs: list[torch.Tensor] = []
    gen = torch.Generator().manual_seed(seed) if mode == SAMPLE and forced is None else None

    last = None
    start = 0
    if multi_start:
        first = torch.arange(k).expand(b, k)
        if forced is not None and not torch.equal(forced[:, :, 0], first):
            raise ValueError("multi-start trajectories must start at their own type")
        perms[:, :, 0] = first
        visited.scatter_(2, first.unsqueeze(-1), True)
        last = first
        start = 1

    for t in range(start, k):
        if last is None:
            last_emb = torch.zeros(b, n_traj, emb.shape[-1])
        else:
            last_emb = emb.gather(
                1, last.unsqueeze(-1).expand(b, n_traj, emb.shape[-1])
            )
        context = torch.cat(
            [graph.unsqueeze(1).expand(b, n_traj, -1), last_emb], dim=-1
        )
        q = policy.context_proj(context)
        logits = policy.config.logit_clip * torch.tanh(
            q @ keys.transpose(1, 2) / scale
        )
        logits = logits.double().masked_fill(visited, float("-inf"))
        logp = torch.log_softmax(logits, dim=-1)

        if forced is not None:
            chosen = forced[:, :, t]
        elif mode == GREEDY:
            chosen = logp.argmax(dim=-1)
        elif mode == SAMPLE:
            flat = torch.exp(logp.detach()).reshape(b * n_traj, k)
            chosen = torch.multinomial(flat, 1, generator=gen).reshape(b, n_traj)
        else:
            raise ValueError(f"unknown decode mode {mode!r}")

        if collect_probs:
            step_probs.append(torch.exp(logp.detach()))
        logps = logps + logp.gather(2, chosen.unsqueeze(-1)).squeeze(-1)
        perms[:, :, t] = chosen
        visited = visited.scatter(2, chosen.unsqueeze(-1), True)
        last = chosen

    return perms, logps, step_probs


def decode_rollout(
    features: np.ndarray,
    policy: OrderingPolicy,
    n_traj: int,
    mode: str = SAMPLE,
    seed: int = 0,
    collect_probs: bool = False,
):
    """Decode permutations for a batch of instances.

    Returns (permutations (B, N, K), summed log-probs (B, N)) as numpy
    arrays, plus the per-step probability tensors when requested.
    """
    feats = torch.as_tensor(np.asarray(features, dtype=np.float32))
    squeeze = feats.ndim == 2
    if squeeze:
        feats = feats.unsqueeze(0)
    with torch.no_grad():
        perms, logps, probs = _pointer_steps(
            policy, feats, n_traj, mode=mode, seed=seed, collect_probs=collect_probs
        )
    perms_np, logps_np = perms.numpy(), logps.numpy()
    if squeeze:
        perms_np, logps_np = perms_np[0], logps_np[0]
        probs = [p[0] for p in probs]
    if collect_probs:
        return perms_np, logps_np, [p.numpy() for p in probs]
    return perms_np, logps_np


def score_permutations(
    policy: OrderingPolicy,
    features: torch.Tensor,
    permutations: np.ndarray,
    multi_start: bool = True,
) -> torch.Tensor:
    """Differentiable log-probabilities of fixed permutations (B, N)."""
    forced = torch.as_tensor(np.asarray(permutations), dtype=torch.int64)
    n_traj = forced.shape[1] if multi_start else 1
    if not multi_start and forced.shape[1] != 1:
        raise ValueError("single-start scoring expects one trajectory per instance")
    _, logps, _ = _pointer_steps(policy, features, n_traj, forced=forced)
    return logps


def reward(instance: ProblemInstance, assignment: Assignment) -> float:
    """Negated augmented objective: higher is better."""
    return -augmented_objective(instance, assignment)


@dataclass
class RolloutBatch:
    """Sampled trajectories with rewards and the shared per-instance baseline."""

    features: np.ndarray  # (B, K, 2)
    permutations: np.ndarray  # (B, N, K)
    log_probs: np.ndarray  # (B, N), as sampled
    rewards: np.ndarray  # (B, N)
    baselines: np.ndarray  # (B,), mean reward per instance
    multi_start: bool = True

    @classmethod
    def from_rewards(cls, features, permutations, log_probs, rewards, multi_start=True):
        rewards = np.asarray(rewards, dtype=np.float64)
        return cls(
            features=np.asarray(features, dtype=np.float32),
            permutations=np.asarray(permutations, dtype=np.int64),
            log_probs=np.asarray(log_probs),
            rewards=rewards,
            baselines=rewards.mean(axis=1),
            multi_start=multi_start,
        )


def advantages(batch: RolloutBatch, leader_weight: float = 1.0) -> np.ndarray:
    """Baseline-subtracted rewards, with the best trajectory per instance
    scaled by ``leader_weight``."""
    if leader_weight < 1.0:
        raise ValueError("leader_weight must be >= 1")
    adv = batch.rewards - batch.baselines[:, np.newaxis]
    if leader_weight != 1.0:
        leaders = batch.rewards.argmax(axis=1)
        adv[np.arange(adv.shape[0]), leaders] *= leader_weight
    return adv


def policy_gradient_step(
    batch: RolloutBatch,
    policy: OrderingPolicy,
    optimizer: torch.optim.Optimizer,
    leader_weight: float = 1.0,
) -> float:
    """One ascent step on the weighted REINFORCE objective; returns the loss.

    Permutations are re-scored under the current parameters, so the batch
    itself carries no autograd state. Non-finite gradients abort the update.
    """
    feats = torch.as_tensor(batch.features, dtype=torch.float32)
    logps = score_permutations(policy, feats, batch.permutations, batch.multi_start)
    adv = torch.as_tensor(advantages(batch, leader_weight))
    loss = -(adv * logps).mean()
    optimizer.zero_grad()
    loss.backward()
    for name, p in policy.named_parameters():
        if p.grad is not None and not torch.isfinite(p.grad).all():
            optimizer.zero_grad()
            raise NonFiniteGradientError(f"non-finite gradient in {name}")
    optimizer.step()
    return float(loss.item())


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 16
    generator: GeneratorConfig = field(default_factory=GeneratorConfig)
    engine: EngineConfig = field(default_factory=EngineConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    learning_rate: float = 1e-4
    leader_weight: float = 2.0
    seed: int = 0


@dataclass
class EpochRecord:
    epoch: int
    mean_reward: float
    loss: float


def training_instance_seed(master_seed: int, epoch: int, index: int) -> int:
    return child_seed(master_seed, (epoch << 20) | index)


def train(config: TrainConfig) -> tuple[OrderingPolicy, list[EpochRecord]]:
    """Full training loop: fresh instances every epoch, multi-start rollouts
    solved by the local-search engine, one policy update per epoch."""
    if config.batch_size >= 1 << 20:
        raise ValueError("batch size too large for the seed schedule")
    torch.manual_seed(child_seed(config.seed, _INIT_STREAM))
    policy = OrderingPolicy(config.policy)
    optimizer = torch.optim.Adam(policy.parameters(), lr=config.learning_rate)
    k = config.generator.num_rack_types

    records: list[EpochRecord] = []
    for epoch in range(config.epochs):
        instances = []
        for i in range(config.batch_size):
            seed = training_instance_seed(config.seed, epoch, i)
            try:
                instances.append(generate_instance(config.generator, seed))
            except Exception as exc:
                raise RuntimeError(
                    f"instance generation failed at epoch {epoch}, instance {i}"
                ) from exc

        features = np.stack([featurize(inst) for inst in instances])
        perms, logps = decode_rollout(
            features,
            policy,
            n_traj=k,
            mode=SAMPLE,
            seed=child_seed(config.seed, _DECODE_STREAM + epoch),
        )

        rewards = np.zeros((config.batch_size, k))
        for i, inst in enumerate(instances):
            for j in range(k):
                try:
                    assignment, _ = solve_ordered(inst, perms[i, j], config.engine)
                except Exception as exc:
                    raise RuntimeError(
                        f"rollout solve failed at epoch {epoch}, instance {i}, "
                        f"trajectory {j} (order {perms[i, j].tolist()})"
                    ) from exc
                rewards[i, j] = reward(inst, assignment)

        batch = RolloutBatch.from_rewards(features, perms, logps, rewards)
        loss = policy_gradient_step(batch, policy, optimizer, config.leader_weight)
        records.append(EpochRecord(epoch=epoch, mean_reward=float(rewards.mean()), loss=loss))
    return policy, records


def infer_order(
    instance: ProblemInstance,
    policy: OrderingPolicy,
    engine: EngineConfig = EngineConfig(),
) -> tuple[int, ...]:
    """Best order out of |K| greedy multi-start rollouts, each solved by the
    local-search engine. Never worse than the worst candidate by construction."""
    k = instance.num_rack_types
    features = featurize(instance)
    perms, _ = decode_rollout(features, policy, n_traj=k, mode=GREEDY)
    best_order: tuple[int, ...] | None = None
    best_value = np.inf
    for j in range(k):
        order = tuple(int(x) for x in perms[j])
        _, breakdown = solve_ordered(instance, order, engine)
        if breakdown.augmented < best_value:
            best_value = breakdown.augmented
            best_order = order
    return best_order


def write_training_curve(records: list[EpochRecord], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "mean_reward", "loss"])
        for rec in records:
            writer.writerow([rec.epoch, repr(rec.mean_reward), repr(rec.loss)])


def save_checkpoint(
    policy: OrderingPolicy, path: str | Path, metadata: dict | None = None
) -> None:
    """Versioned JSON checkpoint: config, shapes, little-endian float32 data."""
    tensors = {}
    for name, tensor in policy.state_dict().items():
        arr = tensor.detach().numpy().astype("<f4")
        tensors[name] = {
            "shape": list(arr.shape),
            "dtype": "<f4",
            "data": base64.b64encode(arr.tobytes()).decode("ascii"),
        }
    payload = {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "policy_config": asdict(policy.config),
        "tensors": tensors,
        "metadata": metadata or {},
    }
    Path(path).write_text(json.dumps(payload, indent=1) + "\n")


def load_checkpoint(path: str | Path) -> OrderingPolicy:
    payload = json.loads(Path(path).read_text())
    version = payload.get("schema_version")
    if version != CHECKPOINT_SCHEMA_VERSION:
        raise ValueError(
            f"checkpoint schema_version {version!r}, expected {CHECKPOINT_SCHEMA_VERSION}"
        )
    policy = OrderingPolicy(PolicyConfig(**payload["policy_config"]))
    state = {}
    for name, spec in payload["tensors"].items():
        raw = base64.b64decode(spec["data"])
        arr = np.frombuffer(raw, dtype=spec["dtype"]).reshape(spec["shape"]).copy()
        state[name] = torch.as_tensor(arr, dtype=torch.float32)
    policy.load_state_dict(state)
    return policy
