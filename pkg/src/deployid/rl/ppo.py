"""Clipped-surrogate policy-gradient learner over the slot environment.

Diagonal-Gaussian policy and value function as small tanh perceptrons,
generalized advantage estimation, and the standard clipped objective with
entropy bonus.  Gradients are hand-derived (see nets); every update is a
pure function of the rollout buffer and the generator states, so training
runs are reproducible bit for bit.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields

import numpy as np

from ..actuators import ActuationVector
from ..errors import ValidationError
from ..seeding import derive_rng
from .env import EnvSpec, SequenceEnv
from .nets import (Adam, clip_global_norm, mlp_backward, mlp_forward,
                   mlp_init, one_hot_batch)

LOG_2PI = float(np.log(2.0 * np.pi))
CHECKPOINT_FORMAT = "sequence-policy/1"


@dataclass(frozen=True)
class PPOHyperParams:
    n_steps: int = 2048
    batch_size: int = 64
    learning_rate: float = 3e-4
    gamma: float = 0.99
    gae_lambda: float = 0.95
    clip_range: float = 0.2
    ent_coef: float = 0.15
    vf_coef: float = 0.5
    max_grad_norm: float = 0.5
    n_epochs: int = 10

    def __post_init__(self):
        if self.n_steps < 1 or self.batch_size < 1 or self.n_epochs < 1:
            raise ValidationError("n_steps, batch_size and n_epochs must be >= 1")
        if not 0.0 <= self.gamma <= 1.0 or not 0.0 <= self.gae_lambda <= 1.0:
            raise ValidationError("gamma and gae_lambda must lie in [0, 1]")
        if self.learning_rate <= 0.0 or self.clip_range <= 0.0:
            raise ValidationError("learning_rate and clip_range must be positive")


@dataclass
class PolicyParams:
    """Network weights, exploration spread and optimizer state."""

    obs_dim: int
    action_dim: int
    policy_layers: list[np.ndarray]
    log_std: np.ndarray
    value_layers: list[np.ndarray]
    hyper: PPOHyperParams
    optimizer: Adam | None = None

    def all_params(self) -> list[np.ndarray]:
        """Canonical flat ordering shared by the optimizer and gradients."""
        return [*self.policy_layers, self.log_std, *self.value_layers]

    def validate_finite(self) -> None:
        for arr in self.all_params():
            if not np.all(np.isfinite(arr)):
                raise ValidationError("policy parameters contain non-finite values")


@dataclass(frozen=True)
class Transition:
    observation: int
    action: np.ndarray          # raw pre-clamp sample; log_prob refers to it
    reward: float
    done: bool
    truncated: bool
    value: float
    log_prob: float


def init_policy(obs_dim: int, action_dim: int, seed: int = 0,
                hyper: PPOHyperParams | None = None,
                hidden: tuple[int, ...] = (64, 64)) -> PolicyParams:
    """Orthogonally-initialized actor and critic with unit action spread."""
    if obs_dim < 1 or action_dim < 1:
        raise ValidationError("obs_dim and action_dim must be >= 1")
    hyper = hyper if hyper is not None else PPOHyperParams()
    rng = derive_rng(seed, 3001)
    # small output gain keeps early actions near zero; critic head at unit gain
    policy_layers = mlp_init([obs_dim, *hidden, action_dim], rng, out_gain=0.01)
    value_layers = mlp_init([obs_dim, *hidden, 1], rng, out_gain=1.0)
    log_std = np.zeros(action_dim)
    params = PolicyParams(obs_dim=obs_dim, action_dim=action_dim,
                          policy_layers=policy_layers, log_std=log_std,
                          value_layers=value_layers, hyper=hyper)
    params.optimizer = Adam(params.all_params(), lr=hyper.learning_rate, eps=1e-5)
    return params


def policy_mean(params: PolicyParams, obs_batch: np.ndarray) -> np.ndarray:
    out, _ = mlp_forward(params.policy_layers, obs_batch)
    return out


def value_estimate(params: PolicyParams, obs_batch: np.ndarray) -> np.ndarray:
    out, _ = mlp_forward(params.value_layers, obs_batch)
    return out[:, 0]


def _encode(params: PolicyParams, observation: int) -> np.ndarray:
    return one_hot_batch([observation], params.obs_dim)


def gaussian_log_prob(actions: np.ndarray, mean: np.ndarray,
                      log_std: np.ndarray) -> np.ndarray:
    """Diagonal-Gaussian log density of each row."""
    z = (actions - mean) / np.exp(log_std)
    return -0.5 * np.sum(z * z, axis=1) - np.sum(log_std) \
        - 0.5 * actions.shape[1] * LOG_2PI


def policy_sample(params: PolicyParams, observation: int,
                  rng: np.random.Generator) -> tuple[np.ndarray, float]:
    """Draw a raw (pre-clamp) action and its log probability."""
    obs = _encode(params, observation)
    mean = policy_mean(params, obs)[0]
    std = np.exp(params.log_std)
    raw = mean + std * rng.standard_normal(params.action_dim)
    logp = gaussian_log_prob(raw[None, :], mean[None, :], params.log_std)[0]
    return raw, float(logp)


def compute_gae(rollout, gamma: float = 0.99, lam: float = 0.95,
                last_value: float = 0.0) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimates and value targets for one buffer.

    ``rollout`` is a sequence of Transition.  ``last_value`` bootstraps the
    step after the buffer when the final transition did not end its episode.
    Advantages are returned raw; updates normalize them per batch.
    """
    if len(rollout) == 0:
        raise ValidationError("rollout must be non-empty")
    n = len(rollout)
    rewards = np.array([t.reward for t in rollout])
    values = np.array([t.value for t in rollout])
    ended = np.array([t.done or t.truncated for t in rollout], dtype=float)
    advantages = np.zeros(n)
    running = 0.0
    for t in range(n - 1, -1, -1):
        next_value = last_value if t == n - 1 else values[t + 1]
        not_end = 1.0 - ended[t]
        delta = rewards[t] + gamma * next_value * not_end - values[t]
        running = delta + gamma * lam * not_end * running
        advantages[t] = running
    return advantages, advantages + values


def clipped_surrogate(ratio: np.ndarray, advantages: np.ndarray,
                      clip_range: float) -> np.ndarray:
    """Per-sample surrogate min(rho*A, clip(rho)*A)."""
    clipped = np.clip(ratio, 1.0 - clip_range, 1.0 + clip_range)
    return np.minimum(ratio * advantages, clipped * advantages)


def loss_and_grads(params: PolicyParams, obs_batch: np.ndarray,
                   actions: np.ndarray, old_log_prob: np.ndarray,
                   advantages: np.ndarray, returns: np.ndarray):
    """Total clipped loss and its exact gradients over all_params().

    ``advantages`` enter as given (normalization is the caller's choice, see
    ppo_update).  Returns (loss, grads, diagnostics).
    """
    hp = params.hyper
    n = obs_batch.shape[0]
    mean, p_cache = mlp_forward(params.policy_layers, obs_batch)
    values_raw, v_cache = mlp_forward(params.value_layers, obs_batch)
    values = values_raw[:, 0]
    std = np.exp(params.log_std)
    z = (actions - mean) / std
    log_prob = -0.5 * np.sum(z * z, axis=1) - np.sum(params.log_std) \
        - 0.5 * actions.shape[1] * LOG_2PI
    ratio = np.exp(log_prob - old_log_prob)

    unclipped = ratio * advantages
    clipped = np.clip(ratio, 1.0 - hp.clip_range, 1.0 + hp.clip_range) * advantages
    surrogate = np.minimum(unclipped, clipped)
    policy_loss = -float(np.mean(surrogate))
    value_err = values - returns
    value_loss = float(np.mean(value_err * value_err))
    entropy = float(np.sum(params.log_std) +
                    0.5 * params.action_dim * (1.0 + LOG_2PI))
    loss = policy_loss + hp.vf_coef * value_loss - hp.ent_coef * entropy

    # gradient of the surrogate flows only where the unclipped branch is active
    active = (unclipped <= clipped).astype(float)
    dlogp = -(active * ratio * advantages) / n
    dmean = dlogp[:, None] * (z / std)
    dlog_std = np.sum(dlogp[:, None] * (z * z - 1.0), axis=0)
    dlog_std -= hp.ent_coef  # entropy term: dH/dlog_std = 1 per dimension
    dvalues = hp.vf_coef * 2.0 * value_err[:, None] / n

    policy_grads = mlp_backward(params.policy_layers, p_cache, dmean)
    value_grads = mlp_backward(params.value_layers, v_cache, dvalues)
    grads = [*policy_grads, dlog_std, *value_grads]
    diagnostics = {
        "loss": loss,
        "policy_loss": policy_loss,
        "value_loss": value_loss,
        "entropy": entropy,
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > hp.clip_range)),
        "approx_kl": float(np.mean(old_log_prob - log_prob)),
    }
    return loss, grads, diagnostics


def normalize_advantages(advantages: np.ndarray) -> np.ndarray:
    return (advantages - advantages.mean()) / (advantages.std() + 1e-8)


def ppo_update(params: PolicyParams, rollout,
               shuffle_rng: np.random.Generator,
               last_value: float = 0.0) -> dict:
    """One full update pass (epochs x minibatches) over a rollout buffer.

    Advantages are normalized per minibatch.  A non-finite loss aborts the
    remaining minibatches and flags the diagnostics; parameters keep their
    last finite values.
    """
    hp = params.hyper
    if len(rollout) != hp.n_steps:
        raise ValidationError(
            f"buffer holds {len(rollout)} transitions, expected {hp.n_steps}")
    advantages, returns = compute_gae(rollout, hp.gamma, hp.gae_lambda, last_value)
    obs = one_hot_batch([t.observation for t in rollout], params.obs_dim)
    actions = np.stack([t.action for t in rollout])
    old_log_prob = np.array([t.log_prob for t in rollout])

    diag: dict = {"aborted": False, "n_minibatches": 0}
    last: dict = {}
    for _epoch in range(hp.n_epochs):
        order = shuffle_rng.permutation(hp.n_steps)
        for start in range(0, hp.n_steps, hp.batch_size):
            idx = order[start:start + hp.batch_size]
            loss, grads, last = loss_and_grads(
                params, obs[idx], actions[idx], old_log_prob[idx],
                normalize_advantages(advantages[idx]), returns[idx])
            if not np.isfinite(loss):
                diag["aborted"] = True
                diag.update(last)
                return diag
            grads, grad_norm = clip_global_norm(grads, hp.max_grad_norm)
            params.optimizer.step(grads)
            diag["n_minibatches"] += 1
            last["grad_norm"] = grad_norm
    diag.update(last)
    return diag


@dataclass(frozen=True)
class EpisodeRecord:
    update: int
    episode: int
    steps: int
    mean_reward_100: float
    f1: float
    c_gt: float
    c_rw: float
    thruster_util: float
    wheel_util: float


LOG_HEADER = "update,episode,steps,mean_reward_100,f1,c_gt,c_rw,thruster_util,wheel_util"


@dataclass
class TrainingLog:
    rows: list[EpisodeRecord] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def to_csv_text(self) -> str:
        lines = [LOG_HEADER]
        for r in self.rows:
            lines.append(",".join([
                str(r.update), str(r.episode), str(r.steps),
                f"{float(r.mean_reward_100)!r}", f"{float(r.f1)!r}",
                f"{float(r.c_gt)!r}", f"{float(r.c_rw)!r}",
                f"{float(r.thruster_util)!r}", f"{float(r.wheel_util)!r}",
            ]))
        return "\n".join(lines) + "\n"

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(self.to_csv_text())

    def episode_rewards(self) -> np.ndarray:
        return np.array(self.meta.get("episode_rewards", []), dtype=float)


def train(spec: EnvSpec, params: PolicyParams, total_steps: int,
          master_seed: int = 0, env=None,
          progress=None) -> tuple[PolicyParams, TrainingLog]:
    """Alternate rollout collection and updates until total_steps is reached.

    ``env`` defaults to a SequenceEnv over the spec; anything with the same
    reset/step interface works (used by the toy sanity checks).  Completed
    episodes append one log row each; the final partial rollout still counts
    toward step accounting, so the realized total is total_steps rounded up
    to a whole number of buffers.
    """
    hp = params.hyper
    if total_steps < hp.n_steps:
        raise ValidationError(
            f"total_steps {total_steps} is below one rollout of {hp.n_steps}")
    if env is None:
        env = SequenceEnv(spec, master_seed=master_seed)
    action_rng = derive_rng(master_seed, 1)
    shuffle_rng = derive_rng(master_seed, 2)

    log = TrainingLog()
    if hasattr(env, "chance_f1"):
        log.meta["chance_f1"] = env.chance_f1()
    log.meta["hyper"] = {f.name: getattr(hp, f.name) for f in fields(hp)}
    log.meta["total_steps_requested"] = int(total_steps)

    reward_window: list[float] = []
    episode_rewards: list[float] = []
    global_step = 0
    n_updates = 0
    episode_index = -1
    obs = 0
    episode_done = True
    ep_reward = ep_cgt = ep_crw = 0.0
    ep_f1 = 0.0
    ep_thruster: list[float] = []
    ep_wheel: list[float] = []

    while global_step < total_steps:
        rollout: list[Transition] = []
        for _ in range(hp.n_steps):
            if episode_done:
                episode_index += 1
                obs = env.reset(episode_index)
                episode_done = False
                ep_reward = ep_cgt = ep_crw = 0.0
                ep_f1 = 0.0
                ep_thruster, ep_wheel = [], []
            raw, logp = policy_sample(params, obs, action_rng)
            value = float(value_estimate(params, _encode(params, obs))[0])
            next_obs, reward, terminated, truncated, info = env.step(raw)
            rollout.append(Transition(observation=obs, action=raw,
                                      reward=float(reward), done=bool(terminated),
                                      truncated=bool(truncated), value=value,
                                      log_prob=logp))
            global_step += 1
            ep_reward += float(reward)
            ep_f1 = float(info.get("f1", 0.0))
            ep_cgt += float(info.get("c_gt", 0.0))
            ep_crw += float(info.get("c_rw", 0.0))
            ep_thruster.append(float(info.get("thruster_util", 0.0)))
            ep_wheel.append(float(info.get("wheel_util", 0.0)))
            obs = next_obs
            episode_done = terminated or truncated
            if episode_done:
                reward_window.append(ep_reward)
                episode_rewards.append(ep_reward)
                if len(reward_window) > 100:
                    reward_window.pop(0)
                log.rows.append(EpisodeRecord(
                    update=n_updates, episode=episode_index, steps=global_step,
                    mean_reward_100=float(np.mean(reward_window)), f1=ep_f1,
                    c_gt=ep_cgt, c_rw=ep_crw,
                    thruster_util=float(np.mean(ep_thruster)),
                    wheel_util=float(np.mean(ep_wheel))))
        if episode_done:
            last_value = 0.0
        else:
            last_value = float(value_estimate(params, _encode(params, obs))[0])
        diag = ppo_update(params, rollout, shuffle_rng, last_value)
        n_updates += 1
        if progress is not None:
            progress(n_updates, global_step, diag)
        if diag.get("aborted"):
            log.meta["aborted_update"] = n_updates
            break
    log.meta["total_steps"] = int(global_step)
    log.meta["n_updates"] = int(n_updates)
    log.meta["n_episodes"] = int(len(episode_rewards))
    log.meta["episode_rewards"] = [float(r) for r in episode_rewards]
    return params, log


def extract_sequence(params: PolicyParams, spec: EnvSpec) -> list[ActuationVector]:
    """Deterministic open-loop sequence: clamped policy means per slot."""
    n_th = spec.bank.n_thrusters
    sequence = []
    for slot in range(spec.n_slots):
        mean = policy_mean(params, _encode(params, slot))[0]
        sequence.append(ActuationVector.from_flat(mean, n_th))
    return sequence


def save_policy(params: PolicyParams, path) -> None:
    """Versioned checkpoint with hyperparameters and optimizer state."""
    params.validate_finite()
    hp = params.hyper
    payload = {
        "format": CHECKPOINT_FORMAT,
        "obs_dim": params.obs_dim,
        "action_dim": params.action_dim,
        "hyper": {f.name: getattr(hp, f.name) for f in fields(hp)},
        "policy_layers": [a.tolist() for a in params.policy_layers],
        "log_std": params.log_std.tolist(),
        "value_layers": [a.tolist() for a in params.value_layers],
        "adam": {
            "m": [a.tolist() for a in params.optimizer.m],
            "v": [a.tolist() for a in params.optimizer.v],
            "t": params.optimizer.t,
        },
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)
        fh.write("\n")


def load_policy(path) -> PolicyParams:
    with open(path, encoding="utf-8") as fh:
        payload = json.load(fh)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValidationError(
            f"unrecognized checkpoint format {payload.get('format')!r}")
    hyper = PPOHyperParams(**payload["hyper"])
    params = PolicyParams(
        obs_dim=int(payload["obs_dim"]),
        action_dim=int(payload["action_dim"]),
        policy_layers=[np.array(a) for a in payload["policy_layers"]],
        log_std=np.array(payload["log_std"]),
        value_layers=[np.array(a) for a in payload["value_layers"]],
        hyper=hyper, optimizer=None)
    params.optimizer = Adam(params.all_params(), lr=hyper.learning_rate, eps=1e-5)
    params.optimizer.m = [np.array(a) for a in payload["adam"]["m"]]
    params.optimizer.v = [np.array(a) for a in payload["adam"]["v"]]
    params.optimizer.t = int(payload["adam"]["t"])
    params.validate_finite()
    return params
