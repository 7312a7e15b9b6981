"""Independent-learner PPO over continuous actions.

Each agent owns a Gaussian policy (mean network plus a learnable
per-dimension log standard deviation), a value network, and an Adam
state; nothing is shared between agents.  Updates use the clipped
surrogate objective with an adaptive KL penalty, clipped value loss and
per-batch advantage normalisation.  Raw (pre-clip) actions carry the
log-probabilities; the environment sees actions clipped to their bounds.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .nn import (
    AdamState,
    Mlp,
    adam_step,
    backward,
    forward,
    load_params,
    params_from_bytes,
    params_to_bytes,
)

LOG_2PI = math.log(2.0 * math.pi)


class TrainingDiverged(RuntimeError):
    """A policy produced non-finite numbers; training cannot continue."""


@dataclass
class PpoConfig:
    learning_rate: float = 1e-4
    clip_param: float = 0.3
    vf_clip_param: float = 10.0
    kl_target: float = 0.01
    discount: float = 0.99
    gae_lambda: float = 1.0
    vf_loss_coeff: float = 1.0
    entropy_coeff: float = 0.0
    train_batch_size: int = 4000
    minibatch_size: int = 128
    sgd_iterations: int = 30

    def __post_init__(self):
        if not 0.0 < self.discount <= 1.0:
            raise ValueError("discount must be in (0, 1]")
        if not 0.0 <= self.gae_lambda <= 1.0:
            raise ValueError("gae_lambda must be in [0, 1]")
        if self.clip_param <= 0.0:
            raise ValueError("clip_param must be positive")


class GaussianPolicy:
    """Mean/value networks plus a state-independent log-std vector."""

    def __init__(
        self,
        obs_dim: int,
        act_dim: int,
        low: np.ndarray | float,
        high: np.ndarray | float,
        rng: np.random.Generator,
        learning_rate: float = 1e-4,
        init_log_std: float = 0.0,
        hidden: tuple[int, ...] = (64, 64),
    ):
        self.mean_net = Mlp(obs_dim, act_dim, rng, hidden)
        self.value_net = Mlp(obs_dim, 1, rng, hidden)
        self.log_std = np.full(act_dim, float(init_log_std))
        self.low = np.broadcast_to(np.asarray(low, dtype=float), (act_dim,)).copy()
        self.high = np.broadcast_to(np.asarray(high, dtype=float), (act_dim,)).copy()
        self.kl_coeff = 0.2
        self.adam = AdamState.for_params(self.parameters(), learning_rate)

    @property
    def obs_dim(self) -> int:
        return self.mean_net.in_dim

    @property
    def act_dim(self) -> int:
        return self.mean_net.out_dim

    def parameters(self) -> list[np.ndarray]:
        return self.mean_net.parameters() + [self.log_std] + self.value_net.parameters()


def gaussian_log_prob(
    raw: np.ndarray, mean: np.ndarray, log_std: np.ndarray
) -> np.ndarray:
    """Diagonal-normal log density of raw actions (vector or batch)."""
    z = (raw - mean) / np.exp(log_std)
    return -0.5 * np.sum(z * z, axis=-1) - np.sum(log_std) - 0.5 * LOG_2PI * log_std.size


def act(
    policy: GaussianPolicy, observation: np.ndarray, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray, float, float]:
    """Sample one step: (bounded env action, raw action, log-prob, value)."""
    mean = forward(policy.mean_net, observation)
    if not np.all(np.isfinite(mean)):
        raise TrainingDiverged("policy mean is not finite")
    raw = mean + np.exp(policy.log_std) * rng.standard_normal(mean.shape)
    env_action = np.clip(raw, policy.low, policy.high)
    log_prob = float(gaussian_log_prob(raw, mean, policy.log_std))
    value = float(forward(policy.value_net, observation)[0])
    return env_action, raw, log_prob, value


def deterministic_action(policy: GaussianPolicy, observation: np.ndarray) -> np.ndarray:
    """The bounded mean action, for post-training evaluation."""
    return np.clip(forward(policy.mean_net, observation), policy.low, policy.high)


def gae(
    rewards: np.ndarray,
    values: np.ndarray,
    bootstrap_value: float,
    discount: float,
    gae_lambda: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Generalised advantage estimates and value targets for one episode.

    With lambda 1 the advantage reduces exactly to the discounted return
    minus the value baseline.  Returns (advantages, return_targets).
    """
    rewards = np.asarray(rewards, dtype=float)
    values = np.asarray(values, dtype=float)
    if rewards.shape != values.shape:
        raise ValueError("rewards and values must align")
    n = rewards.size
    advantages = np.empty(n)
    last = 0.0
    next_value = bootstrap_value
    for t in range(n - 1, -1, -1):
        delta = rewards[t] + discount * next_value - values[t]
        last = delta + discount * gae_lambda * last
        advantages[t] = last
        next_value = values[t]
    return advantages, advantages + values


@dataclass
class Trajectory:
    """One agent's record of one episode (all same length)."""

    observations: list[np.ndarray] = field(default_factory=list)
    raw_actions: list[np.ndarray] = field(default_factory=list)
    log_probs: list[float] = field(default_factory=list)
    rewards: list[float] = field(default_factory=list)
    values: list[float] = field(default_factory=list)
    means: list[np.ndarray] = field(default_factory=list)
    log_stds: list[np.ndarray] = field(default_factory=list)

    def append(self, observation, raw_action, log_prob, reward, value, mean, log_std):
        self.observations.append(np.asarray(observation, dtype=float))
        self.raw_actions.append(np.asarray(raw_action, dtype=float))
        self.log_probs.append(float(log_prob))
        self.rewards.append(float(reward))
        self.values.append(float(value))
        self.means.append(np.asarray(mean, dtype=float))
        self.log_stds.append(np.asarray(log_std, dtype=float))

    def __len__(self) -> int:
        return len(self.rewards)


def _assemble_batch(trajectories: list[Trajectory], config: PpoConfig) -> dict:
    obs = np.concatenate([np.stack(t.observations) for t in trajectories])
    raw = np.concatenate([np.stack(t.raw_actions) for t in trajectories])
    logp = np.concatenate([np.asarray(t.log_probs) for t in trajectories])
    mean_old = np.concatenate([np.stack(t.means) for t in trajectories])
    log_std_old = np.concatenate([np.stack(t.log_stds) for t in trajectories])
    adv_parts, ret_parts = [], []
    for t in trajectories:
        # Complete episodes only, so the terminal bootstrap value is 0.
        a, r = gae(t.rewards, t.values, 0.0, config.discount, config.gae_lambda)
        adv_parts.append(a)
        ret_parts.append(r)
    advantages = np.concatenate(adv_parts)
    returns = np.concatenate(ret_parts)
    advantages = (advantages - advantages.mean()) / max(float(advantages.std()), 1e-8)
    return {
        "observations": obs,
        "raw_actions": raw,
        "log_probs": logp,
        "means": mean_old,
        "log_stds": log_std_old,
        "advantages": advantages,
        "returns": returns,
    }


def ppo_loss(
    policy: GaussianPolicy, batch: dict, config: PpoConfig, kl_coeff: float
) -> tuple[float, list[np.ndarray], dict]:
    """Loss, parameter gradients and statistics for one minibatch.

    The clipped surrogate uses the probability ratio against the stored
    log-probabilities; the value loss is the squared error clamped at
    the clipping parameter; the analytic Gaussian KL against the data-
    collection policy is penalised with `kl_coeff`.
    """
    obs = batch["observations"]
    raw = batch["raw_actions"]
    adv = batch["advantages"]
    ret = batch["returns"]
    logp_old = batch["log_probs"]
    mean_old = batch["means"]
    log_std_old = batch["log_stds"]
    m = obs.shape[0]

    mean = forward(policy.mean_net, obs)
    log_std = policy.log_std
    std = np.exp(log_std)
    z = (raw - mean) / std
    logp = -0.5 * np.sum(z * z, axis=1) - np.sum(log_std) - 0.5 * LOG_2PI * z.shape[1]

    ratio = np.exp(logp - logp_old)
    clipped_ratio = np.clip(ratio, 1.0 - config.clip_param, 1.0 + config.clip_param)
    surr_plain = ratio * adv
    surr_clip = clipped_ratio * adv
    surrogate = np.minimum(surr_plain, surr_clip)
    policy_loss = -float(surrogate.mean())
    plain_active = surr_plain <= surr_clip

    var_old = np.exp(2.0 * log_std_old)
    delta_mean = mean_old - mean
    kl_terms = (
        (log_std - log_std_old)
        + (var_old + delta_mean**2) / (2.0 * std**2)
        - 0.5
    )
    kl_per_sample = kl_terms.sum(axis=1)
    mean_kl = float(kl_per_sample.mean())

    entropy = float(np.sum(log_std) + 0.5 * (1.0 + LOG_2PI) * log_std.size)

    values = forward(policy.value_net, obs)[:, 0]
    vf_err = values - ret
    vf_sq = vf_err**2
    vf_mask = vf_sq <= config.vf_clip_param
    vf_loss = float(np.minimum(vf_sq, config.vf_clip_param).mean())

    loss = (
        policy_loss
        + kl_coeff * mean_kl
        + config.vf_loss_coeff * vf_loss
        - config.entropy_coeff * entropy
    )
    if not np.isfinite(loss):
        raise TrainingDiverged(
            f"non-finite loss (policy {policy_loss}, kl {mean_kl}, value {vf_loss})"
        )

    # Backward pass, hand-derived.
    dloss_dlogp = -(adv * ratio * plain_active) / m
    grad_mean = dloss_dlogp[:, None] * (z / std)
    grad_mean += (kl_coeff / m) * (mean - mean_old) / std**2
    grad_log_std = (dloss_dlogp[:, None] * (z * z - 1.0)).sum(axis=0)
    grad_log_std += (kl_coeff / m) * (1.0 - (var_old + delta_mean**2) / std**2).sum(
        axis=0
    )
    grad_log_std -= config.entropy_coeff * np.ones_like(log_std)
    grad_value_out = (
        config.vf_loss_coeff * 2.0 * vf_err * vf_mask / m
    )[:, None]

    grads = (
        backward(policy.mean_net, obs, grad_mean)
        + [grad_log_std]
        + backward(policy.value_net, obs, grad_value_out)
    )
    stats = {
        "policy_loss": policy_loss,
        "value_loss": vf_loss,
        "mean_kl": mean_kl,
        "entropy": entropy,
        "mean_ratio": float(ratio.mean()),
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > config.clip_param)),
    }
    return loss, grads, stats


def ppo_update(
    policy: GaussianPolicy,
    trajectories: list[Trajectory],
    config: PpoConfig,
    rng: np.random.Generator,
) -> dict:
    """Run the configured SGD epochs over the batch and adapt the KL penalty.

    Returns diagnostics: mean KL, clip fraction and value loss averaged
    over the last epoch, plus the adapted KL coefficient.
    """
    if not trajectories or not any(len(t) for t in trajectories):
        raise ValueError("ppo_update needs at least one non-empty trajectory")
    batch = _assemble_batch(trajectories, config)
    n = batch["returns"].size
    params = policy.parameters()

    last_epoch_stats: list[dict] = []
    for epoch in range(config.sgd_iterations):
        order = rng.permutation(n)
        if epoch == config.sgd_iterations - 1:
            last_epoch_stats = []
        for start in range(0, n, config.minibatch_size):
            pick = order[start:start + config.minibatch_size]
            minibatch = {k: v[pick] for k, v in batch.items()}
            _, grads, stats = ppo_loss(policy, minibatch, config, policy.kl_coeff)
            adam_step(params, grads, policy.adam)
            if epoch == config.sgd_iterations - 1:
                last_epoch_stats.append(stats)

    _, _, final_stats = ppo_loss(policy, batch, config, policy.kl_coeff)
    measured_kl = final_stats["mean_kl"]
    if measured_kl > 2.0 * config.kl_target:
        policy.kl_coeff *= 1.5
    elif measured_kl < 0.5 * config.kl_target:
        policy.kl_coeff *= 0.5

    return {
        "mean_kl": measured_kl,
        "clip_fraction": float(
            np.mean([s["clip_fraction"] for s in last_epoch_stats])
        ),
        "value_loss": float(np.mean([s["value_loss"] for s in last_epoch_stats])),
        "policy_loss": float(np.mean([s["policy_loss"] for s in last_epoch_stats])),
        "kl_coeff": policy.kl_coeff,
        "batch_size": n,
    }


def build_harvester_observation(
    prev_prices: np.ndarray, prev_efforts: np.ndarray, prev_reward: float
) -> np.ndarray:
    """Previous prices, own previous efforts, own previous summed reward."""
    return np.concatenate(
        [np.asarray(prev_prices, dtype=float).ravel(),
         np.asarray(prev_efforts, dtype=float).ravel(),
         [float(prev_reward)]]
    )


def build_policymaker_observation(
    effective_efforts: np.ndarray,
    stocks: np.ndarray,
    budgets: np.ndarray,
    obfuscated_valuations: np.ndarray,
) -> np.ndarray:
    """Current effective efforts (agent-major), stocks, buyer budgets and
    obfuscated valuations (buyer-major)."""
    return np.concatenate(
        [np.asarray(effective_efforts, dtype=float).ravel(),
         np.asarray(stocks, dtype=float).ravel(),
         np.asarray(budgets, dtype=float).ravel(),
         np.asarray(obfuscated_valuations, dtype=float).ravel()]
    )


def save_checkpoint(
    directory: str | Path, policies: dict[str, GaussianPolicy], config_hash: str
) -> None:
    """Write one snapshot per agent plus a manifest describing them."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    manifest = {"config_hash": config_hash, "agents": {}}
    for agent_id, policy in sorted(policies.items()):
        filename = f"{agent_id}.bin"
        (directory / filename).write_bytes(params_to_bytes(policy.parameters()))
        manifest["agents"][agent_id] = {
            "observation_dim": policy.obs_dim,
            "action_dim": policy.act_dim,
            "parameter_count": int(sum(p.size for p in policy.parameters())),
            "file": filename,
        }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2))


def load_checkpoint(
    directory: str | Path, policies: dict[str, GaussianPolicy]
) -> str:
    """Load snapshots into matching policies; returns the stored config hash."""
    directory = Path(directory)
    manifest = json.loads((directory / "manifest.json").read_text())
    for agent_id, policy in policies.items():
        entry = manifest["agents"][agent_id]
        if entry["observation_dim"] != policy.obs_dim:
            raise ValueError(f"{agent_id}: observation size mismatch")
        if entry["action_dim"] != policy.act_dim:
            raise ValueError(f"{agent_id}: action size mismatch")
        data = (directory / entry["file"]).read_bytes()
        params = policy.parameters()
        load_params(params, params_from_bytes(data, params))
    return manifest["config_hash"]
