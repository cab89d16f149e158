"""Proximal policy optimization over the continuous action space.

Each iteration, n_envs rollout workers collect fixed-length 200-step
segments (environments reset internally on episode end) under a shared
snapshot of the policy.  Advantages come from generalized advantage
estimation with per-episode resets, are pooled across workers, and
normalized over the whole iteration batch.  The policy head outputs the
three control means; the standard deviation is a learned state-
independent log-std vector.  Updates run several epochs of shuffled
minibatches on the clipped surrogate plus a value regression term.

Workers are merged in index order from per-worker seeded generators, so
training is a pure function of (config, seed).
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .. import nn
from ..env import GateEnv, PulseSchedule


N_CONTROLS = 3


@dataclass(frozen=True)
class PpoConfig:
    gamma: float = 0.9
    lam: float = 0.95
    clip_eps: float = 0.2
    lr: float = 0.001
    lr_decay: float = 0.0
    horizon: int = 200
    n_envs: int = 8
    epochs_per_iter: int = 10
    minibatch: int = 64
    value_coef: float = 0.5
    entropy_coef: float = 0.0
    log_std_init: float = float(np.log(0.5))
    state_dependent_std: bool = False
    iterations_max: int = 2000
    target_fidelity: float = 0.999
    target_duration: float = 50.0
    stop_on_target: bool = True

    def validate(self) -> None:
        if not 0 < self.lam <= 1:
            raise ValueError(f"lam={self.lam} outside (0, 1]")
        if self.clip_eps <= 0:
            raise ValueError(f"clip_eps={self.clip_eps} must be > 0")
        if not 0 < self.gamma <= 1:
            raise ValueError(f"gamma={self.gamma} outside (0, 1]")
        if self.horizon < 1 or self.n_envs < 1:
            raise ValueError("horizon and n_envs must be >= 1")


@dataclass
class Trajectory:
    """One worker's fixed-length segment of experience.

    next_values[t] is the value estimate of the successor state: zero
    where the episode terminated, and the bootstrap value of the final
    state where it was truncated (including the segment end).
    """

    observations: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    next_values: np.ndarray
    terminated: np.ndarray
    episode_ends: np.ndarray


@dataclass
class IterationStats:
    iteration: int
    episodes: int
    mean_return: float
    mean_final_fidelity: float
    best_fidelity: float
    best_duration: float
    policy_loss: float
    value_loss: float
    entropy: float
    wall_ms: float


@dataclass
class PpoResult:
    policy: nn.MlpParameters
    log_std: np.ndarray
    value: nn.MlpParameters
    stats: list[IterationStats] = field(default_factory=list)
    best_fidelity: float = 0.0
    best_duration: float = float("inf")
    best_schedule: PulseSchedule | None = None


def gae(traj: Trajectory, gamma: float, lam: float):
    """Generalized advantage estimation with per-episode resets.

    Returns raw (un-normalized) advantages and the value-regression
    returns A + V; normalization happens over the pooled iteration batch.
    """
    n = len(traj.rewards)
    if n == 0:
        raise ValueError("empty trajectory")
    deltas = traj.rewards + gamma * traj.next_values - traj.values
    advantages = np.empty(n)
    running = 0.0
    for t in range(n - 1, -1, -1):
        if traj.episode_ends[t]:
            running = 0.0
        running = deltas[t] + gamma * lam * running
        advantages[t] = running
    return advantages, advantages + traj.values


def ppo_loss(
    batch: dict,
    p_policy: nn.MlpParameters,
    log_std: np.ndarray,
    p_value: nn.MlpParameters,
    cfg: PpoConfig,
):
    """Clipped-surrogate + value loss with exact gradients.

    batch holds observations, actions, old log-probs, normalized
    advantages, and returns.  Returns (loss components, gradients for
    the policy net, the log-std vector, and the value net).
    """
    obs = batch["observations"]
    actions = batch["actions"]
    old_logp = batch["log_probs"]
    adv = batch["advantages"]
    returns = batch["returns"]
    n = len(adv)

    out, cache_p = nn.forward(p_policy, obs)
    if cfg.state_dependent_std:
        mean, log_std_b = out[:, :N_CONTROLS], out[:, N_CONTROLS:]
    else:
        mean, log_std_b = out, log_std
    logp, d_mean, d_log_std = nn.gaussian_logprob(mean, log_std_b, actions)
    with np.errstate(over="ignore"):  # overflow is caught explicitly below
        ratio = np.exp(logp - old_logp)
    if not np.all(np.isfinite(ratio)):
        raise ValueError(
            f"non-finite probability ratio (max logp diff "
            f"{np.max(np.abs(logp - old_logp)):.3e}); batch rejected"
        )
    clipped = np.clip(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps)
    surr1 = ratio * adv
    surr2 = clipped * adv
    policy_loss = -float(np.mean(np.minimum(surr1, surr2)))
    # Gradient flows only where the unclipped branch attains the min.
    coeff = np.where(surr1 <= surr2, -adv * ratio / n, 0.0)

    if cfg.state_dependent_std:
        entropy = float(np.mean(np.sum(log_std_b + 0.5 * (1.0 + nn.LOG_2PI), axis=-1)))
        upstream = np.concatenate(
            [coeff[:, None] * d_mean,
             coeff[:, None] * d_log_std - cfg.entropy_coef / n],
            axis=1,
        )
        g_policy = nn.backward(p_policy, cache_p, upstream)
        g_log_std = np.zeros_like(log_std)
    else:
        entropy = float(np.sum(log_std + 0.5 * (1.0 + nn.LOG_2PI)))
        g_policy = nn.backward(p_policy, cache_p, coeff[:, None] * d_mean)
        g_log_std = (coeff[:, None] * d_log_std).sum(axis=0)
        g_log_std -= cfg.entropy_coef * np.ones_like(log_std)

    v, cache_v = nn.forward(p_value, obs)
    v = v[:, 0]
    raw_value_loss, dv = nn.mse_loss(v, returns)
    value_loss = cfg.value_coef * raw_value_loss
    g_value = nn.backward(p_value, cache_v, cfg.value_coef * dv[:, None])

    losses = {
        "policy_loss": policy_loss,
        "value_loss": value_loss,
        "entropy": entropy,
        "total": policy_loss + value_loss - cfg.entropy_coef * entropy,
    }
    return losses, (g_policy, g_log_std, g_value)


class _Worker:
    """Private environment plus seeded action noise for one rollout slot."""

    def __init__(self, env: GateEnv, seed_seq: np.random.SeedSequence, index: int):
        self.env = env
        self.rng = np.random.default_rng(seed_seq)
        self.index = index
        self.obs = env.reset(seed=index)
        self.episode_return = 0.0

    def collect(self, policy, log_std, value_net, cfg: PpoConfig):
        """Roll one fixed-length segment; returns (Trajectory, episode infos)."""
        T = cfg.horizon
        obs_dim = self.env.config.obs_dim
        obs_buf = np.empty((T, obs_dim))
        act_buf = np.empty((T, N_CONTROLS))
        logp_buf = np.empty(T)
        rew_buf = np.empty(T)
        val_buf = np.empty(T)
        next_val_buf = np.empty(T)
        term_buf = np.zeros(T, dtype=bool)
        ends_buf = np.zeros(T, dtype=bool)
        episodes = []
        for t in range(T):
            out, _ = nn.forward(policy, self.obs)
            if cfg.state_dependent_std:
                mean, ls = out[:N_CONTROLS], out[N_CONTROLS:]
            else:
                mean, ls = out, log_std
            action = mean + np.exp(ls) * self.rng.standard_normal(N_CONTROLS)
            logp, _, _ = nn.gaussian_logprob(mean, ls, action)
            v, _ = nn.forward(value_net, self.obs)
            res = self.env.step_continuous(action)
            obs_buf[t] = self.obs
            act_buf[t] = action
            logp_buf[t] = logp
            rew_buf[t] = res.reward
            val_buf[t] = v[0]
            self.episode_return += res.reward
            done = res.terminated or res.truncated
            truncated_here = res.truncated or (t == T - 1 and not res.terminated)
            term_buf[t] = res.terminated
            ends_buf[t] = done or t == T - 1
            if res.terminated:
                next_val_buf[t] = 0.0
            else:
                v_next, _ = nn.forward(value_net, res.observation)
                next_val_buf[t] = v_next[0]
            if done:
                episodes.append(
                    {
                        "return": self.episode_return,
                        "fidelity": res.info["fidelity"],
                        "duration": res.info["gate_duration"],
                        "terminated": res.terminated,
                        "schedule": self.env.export_schedule(),
                    }
                )
                self.obs = self.env.reset(seed=self.index)
                self.episode_return = 0.0
            else:
                self.obs = res.observation
        traj = Trajectory(
            observations=obs_buf,
            actions=act_buf,
            log_probs=logp_buf,
            rewards=rew_buf,
            values=val_buf,
            next_values=next_val_buf,
            terminated=term_buf,
            episode_ends=ends_buf,
        )
        return traj, episodes


def train_ppo(
    env_factory,
    cfg: PpoConfig = PpoConfig(),
    seed: int = 0,
    on_iteration=None,
) -> PpoResult:
    """Iterate rollout collection and clipped-surrogate updates.

    env_factory() must build a fresh continuous-mode environment per
    worker.  Stops at iterations_max, or earlier once some episode
    reaches both the target fidelity and the target duration (when
    stop_on_target is set).
    """
    cfg.validate()
    ss = np.random.SeedSequence(seed)
    policy_seed, value_seed, shuffle_seed, *worker_seeds = ss.spawn(3 + cfg.n_envs)
    probe_env = env_factory()
    obs_dim = probe_env.config.obs_dim
    policy_out = 2 * N_CONTROLS if cfg.state_dependent_std else N_CONTROLS
    policy = nn.init_mlp(obs_dim, policy_out, seed=policy_seed)
    log_std = np.full(N_CONTROLS, cfg.log_std_init)
    value_net = nn.init_mlp(obs_dim, 1, seed=value_seed)
    adam_policy = nn.init_adam(policy, lr=cfg.lr, lr_decay=cfg.lr_decay)
    adam_log_std = nn.init_adam([log_std], lr=cfg.lr, lr_decay=cfg.lr_decay)
    adam_value = nn.init_adam(value_net, lr=cfg.lr, lr_decay=cfg.lr_decay)
    shuffle_rng = np.random.default_rng(shuffle_seed)

    workers = [
        _Worker(env_factory(), wseed, i) for i, wseed in enumerate(worker_seeds)
    ]
    result = PpoResult(policy=policy, log_std=log_std, value=value_net)

    for iteration in range(cfg.iterations_max):
        t0 = time.perf_counter()
        all_traj, all_episodes = [], []
        for worker in workers:
            traj, episodes = worker.collect(policy, log_std, value_net, cfg)
            all_traj.append(traj)
            all_episodes.extend(episodes)

        adv_parts, ret_parts = [], []
        for traj in all_traj:
            adv, ret = gae(traj, cfg.gamma, cfg.lam)
            adv_parts.append(adv)
            ret_parts.append(ret)
        advantages = np.concatenate(adv_parts)
        advantages = (advantages - advantages.mean()) / (advantages.std() + 1e-8)
        pooled = {
            "observations": np.concatenate([t.observations for t in all_traj]),
            "actions": np.concatenate([t.actions for t in all_traj]),
            "log_probs": np.concatenate([t.log_probs for t in all_traj]),
            "advantages": advantages,
            "returns": np.concatenate(ret_parts),
        }

        n = len(advantages)
        loss_acc = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0}
        n_batches = 0
        for _ in range(cfg.epochs_per_iter):
            perm = shuffle_rng.permutation(n)
            for start in range(0, n, cfg.minibatch):
                idx = perm[start:start + cfg.minibatch]
                batch = {k: v[idx] for k, v in pooled.items()}
                losses, (g_p, g_ls, g_v) = ppo_loss(
                    batch, policy, log_std, value_net, cfg
                )
                policy, adam_policy = nn.adam_step(policy, g_p, adam_policy)
                (log_std,), adam_log_std = nn.adam_update(
                    [log_std], [g_ls], adam_log_std
                )
                value_net, adam_value = nn.adam_step(value_net, g_v, adam_value)
                for k in loss_acc:
                    loss_acc[k] += losses[k]
                n_batches += 1

        for ep in all_episodes:
            if ep["fidelity"] > result.best_fidelity:
                result.best_fidelity = ep["fidelity"]
                result.best_duration = ep["duration"]
                result.best_schedule = ep["schedule"]
        successes = [
            ep for ep in all_episodes
            if ep["terminated"] and ep["fidelity"] > cfg.target_fidelity
        ]

        stats = IterationStats(
            iteration=iteration,
            episodes=len(all_episodes),
            mean_return=float(
                np.mean([ep["return"] for ep in all_episodes])
            ) if all_episodes else 0.0,
            mean_final_fidelity=float(
                np.mean([ep["fidelity"] for ep in all_episodes])
            ) if all_episodes else 0.0,
            best_fidelity=result.best_fidelity,
            best_duration=result.best_duration,
            policy_loss=loss_acc["policy_loss"] / max(n_batches, 1),
            value_loss=loss_acc["value_loss"] / max(n_batches, 1),
            entropy=loss_acc["entropy"] / max(n_batches, 1),
            wall_ms=(time.perf_counter() - t0) * 1e3,
        )
        result.stats.append(stats)
        if on_iteration is not None:
            on_iteration(stats)
        if (
            cfg.stop_on_target
            and any(ep["duration"] <= cfg.target_duration for ep in successes)
        ):
            break

    result.policy = policy
    result.log_std = log_std
    result.value = value_net
    return result
