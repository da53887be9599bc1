"""PPO with a clipped surrogate, GAE and a diagonal Gaussian policy."""
from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np

from .mlp import Adam, Mlp

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class PpoConfig:
    gamma: float = 0.95
    lam: float = 0.95
    lr: float = 2e-4
    minibatch: int = 4096
    epochs: int = 10
    clip: float = 0.2
    vf_coef: float = 0.5
    ent_coef: float = 0.0
    max_grad_norm: float | None = 0.5
    horizon: int = 4096  # phases per update, summed over envs
    n_envs: int = 16
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    log_std_init: float = -1.0
    hidden: tuple = (256, 128)
    normalize_advantages: bool = True

    def __post_init__(self):
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError("gamma must be in (0, 1]")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError("lambda must be in [0, 1]")
        if self.clip <= 0:
            raise ValueError("clip must be positive")
        if self.minibatch <= 0 or self.epochs <= 0 or self.horizon <= 0 or self.n_envs <= 0:
            raise ValueError("minibatch, epochs, horizon and n_envs must be positive")
        object.__setattr__(self, "hidden", tuple(int(h) for h in self.hidden))

    @classmethod
    def from_dict(cls, d):
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise KeyError(f"unknown ppo parameters: {sorted(unknown)}")
        return cls(**d)


def gaussian_logprob(mean, log_std, action):
    """Diagonal Gaussian log-density, summed over the last axis."""
    mean = np.asarray(mean, dtype=float)
    log_std = np.asarray(log_std, dtype=float)
    z = (np.asarray(action, dtype=float) - mean) * np.exp(-log_std)
    return np.sum(-0.5 * z * z - log_std - 0.5 * LOG_2PI, axis=-1)


def gaussian_entropy(log_std):
    return float(np.sum(log_std + 0.5 * (LOG_2PI + 1.0)))


def gae_compute(rewards, values, dones, gamma, lam, last_value=0.0):
    """Generalized advantage estimates and returns.

    ``dones[t]`` marks that the episode ended after step t.  Works on (T,) or (T, n_envs).
    ``last_value`` bootstraps the state after the final step.
    """
    r = np.asarray(rewards, dtype=float)
    v = np.asarray(values, dtype=float)
    d = np.asarray(dones, dtype=float)
    if r.shape != v.shape or r.shape != d.shape:
        raise ValueError("rewards, values and dones must have the same shape")
    adv = np.zeros_like(r)
    next_v = np.broadcast_to(np.asarray(last_value, dtype=float), r.shape[1:]).copy()
    last = np.zeros(r.shape[1:])
    for t in range(r.shape[0] - 1, -1, -1):
        live = 1.0 - d[t]
        delta = r[t] + gamma * next_v * live - v[t]
        last = delta + gamma * lam * live * last
        adv[t] = last
        next_v = v[t]
    return adv, adv + v


def clipped_surrogate(ratio, adv, clip):
    """Per-sample PPO objective min(rho*A, clip(rho)*A) (to be maximised)."""
    ratio = np.asarray(ratio, dtype=float)
    return np.minimum(ratio * adv, np.clip(ratio, 1.0 - clip, 1.0 + clip) * adv)


class GaussianPolicy:
    """Policy mean net, free log-std vector, and a separate value net of the same shape."""

    def __init__(self, obs_dim, act_dim, config: PpoConfig = PpoConfig(), rng=None):
        rng = np.random.default_rng(0) if rng is None else rng
        sizes = [obs_dim, *config.hidden]
        self.pi = Mlp(sizes + [act_dim], rng, out_gain=0.01)
        self.vf = Mlp(sizes + [1], rng, out_gain=1.0)
        self.log_std = np.full(act_dim, float(config.log_std_init))
        self.obs_dim, self.act_dim = obs_dim, act_dim
        self.obs_norm = None  # optional RunningNorm

    def normalize(self, obs):
        return obs if self.obs_norm is None else self.obs_norm(obs)

    def act(self, obs, rng, deterministic=False):
        """Returns (action, logprob, value) for one observation or a batch."""
        x = self.normalize(np.asarray(obs, dtype=float))
        mean = self.pi(x)
        value = self.vf(x)[..., 0]
        if deterministic:
            a = mean.copy()
        else:
            a = mean + np.exp(self.log_std) * rng.standard_normal(mean.shape)
        return a, gaussian_logprob(mean, self.log_std, a), value

    def value(self, obs):
        return self.vf(self.normalize(np.asarray(obs, dtype=float)))[..., 0]

    def parameters(self):
        return self.pi.params + [self.log_std] + self.vf.params

    def state_dict(self):
        d = {}
        for i, p in enumerate(self.pi.params):
            d[f"pi.{i}"] = p
        d["log_std"] = self.log_std
        for i, p in enumerate(self.vf.params):
            d[f"vf.{i}"] = p
        if self.obs_norm is not None:
            d["obs_norm.mean"] = self.obs_norm.mean
            d["obs_norm.var"] = self.obs_norm.var
            d["obs_norm.count"] = np.array([self.obs_norm.count])
        return d

    def load_state_dict(self, d):
        for prefix, net in (("pi", self.pi), ("vf", self.vf)):
            for i, p in enumerate(net.params):
                src = np.asarray(d[f"{prefix}.{i}"])
                if src.shape != p.shape:
                    raise ValueError(f"{prefix}.{i}: checkpoint shape {src.shape} != network shape {p.shape}")
                p[...] = src
        if np.asarray(d["log_std"]).shape != self.log_std.shape:
            raise ValueError("log_std shape mismatch")
        self.log_std[...] = d["log_std"]
        if "obs_norm.mean" in d:
            self.obs_norm = RunningNorm(self.obs_dim)
            self.obs_norm.mean[...] = d["obs_norm.mean"]
            self.obs_norm.var[...] = d["obs_norm.var"]
            self.obs_norm.count = float(np.asarray(d["obs_norm.count"]).ravel()[0])


class RunningNorm:
    """Running mean/variance observation normaliser (parallel-merge update)."""

    def __init__(self, dim, clip=10.0, eps=1e-8):
        self.mean = np.zeros(dim)
        self.var = np.ones(dim)
        self.count = eps
        self.clip = clip
        self.frozen = False

    def update(self, x):
        if self.frozen:
            return
        x = np.atleast_2d(np.asarray(x, dtype=float))
        bm, bv, n = x.mean(axis=0), x.var(axis=0), x.shape[0]
        delta = bm - self.mean
        tot = self.count + n
        self.mean = self.mean + delta * n / tot
        m2 = self.var * self.count + bv * n + delta ** 2 * self.count * n / tot
        self.var = m2 / tot
        self.count = tot

    def __call__(self, x):
        return np.clip((x - self.mean) / np.sqrt(self.var + 1e-8), -self.clip, self.clip)


class RolloutBuffer:
    """Fixed-size storage of (T, n_envs) transitions."""

    def __init__(self, steps, n_envs, obs_dim, act_dim):
        self.steps, self.n_envs = steps, n_envs
        self.obs = np.zeros((steps, n_envs, obs_dim))
        self.actions = np.zeros((steps, n_envs, act_dim))
        self.logp = np.zeros((steps, n_envs))
        self.values = np.zeros((steps, n_envs))
        self.rewards = np.zeros((steps, n_envs))
        self.dones = np.zeros((steps, n_envs))
        self.advantages = None
        self.returns = None
        self.t = 0

    def add(self, obs, action, logp, value, reward, done):
        if self.t >= self.steps:
            raise IndexError("rollout buffer is full")
        t = self.t
        self.obs[t], self.actions[t], self.logp[t] = obs, action, logp
        self.values[t], self.rewards[t], self.dones[t] = value, reward, done
        self.t += 1

    @property
    def full(self):
        return self.t == self.steps

    def finish(self, last_value, gamma, lam):
        self.advantages, self.returns = gae_compute(self.rewards, self.values, self.dones, gamma, lam, last_value)

    def flat(self):
        n = self.steps * self.n_envs
        return (self.obs.reshape(n, -1), self.actions.reshape(n, -1), self.logp.reshape(n),
                self.advantages.reshape(n), self.returns.reshape(n), self.values.reshape(n))


def make_optimizer(policy: GaussianPolicy, config: PpoConfig):
    return Adam(policy.parameters(), config.lr, config.adam_beta1, config.adam_beta2, config.adam_eps)


def ppo_gradients(policy: GaussianPolicy, obs, actions, old_logp, adv, returns, config: PpoConfig):
    """Loss terms and gradients (ordered as policy.parameters()) on one minibatch."""
    x = policy.normalize(obs)
    n = x.shape[0]
    mean, pcache = policy.pi.forward(x)
    vout, vcache = policy.vf.forward(x)
    v = vout[:, 0]
    log_std = policy.log_std
    inv_var = np.exp(-2.0 * log_std)
    diff = actions - mean
    logp = gaussian_logprob(mean, log_std, actions)
    log_ratio = logp - old_logp
    ratio = np.exp(log_ratio)
    surr = clipped_surrogate(ratio, adv, config.clip)
    pg_loss = -float(np.mean(surr))
    # gradient flows only where the unclipped term is the active one
    active = (ratio * adv) <= (np.clip(ratio, 1.0 - config.clip, 1.0 + config.clip) * adv)
    dlogp = -(active * adv * ratio) / n
    g_mean = dlogp[:, None] * diff * inv_var
    g_logstd = np.sum(dlogp[:, None] * (diff * diff * inv_var - 1.0), axis=0)
    entropy = gaussian_entropy(log_std)
    g_logstd = g_logstd - config.ent_coef
    v_err = v - returns
    v_loss = float(np.mean(v_err ** 2))
    g_v = (config.vf_coef * 2.0 * v_err / n)[:, None]
    grads = policy.pi.backward(pcache, g_mean) + [g_logstd] + policy.vf.backward(vcache, g_v)
    stats = {
        "pg_loss": pg_loss,
        "value_loss": v_loss,
        "entropy": entropy,
        "loss": pg_loss + config.vf_coef * v_loss - config.ent_coef * entropy,
        "approx_kl": float(np.mean((ratio - 1.0) - log_ratio)),
        "clip_fraction": float(np.mean(np.abs(ratio - 1.0) > config.clip)),
    }
    return grads, stats


def clip_grad_norm(grads, max_norm):
    total = math.sqrt(sum(float(np.sum(g * g)) for g in grads))
    if max_norm is not None and total > max_norm:
        s = max_norm / (total + 1e-6)
        grads = [g * s for g in grads]
    return grads, total


def ppo_update(buffer: RolloutBuffer, policy: GaussianPolicy, optimizer: Adam, config: PpoConfig, rng):
    """Epochs of shuffled minibatch steps on a finished buffer; returns averaged stats.

    A non-finite loss aborts the update and restores the pre-update parameters."""
    obs, actions, old_logp, adv, returns, _ = buffer.flat()
    n = obs.shape[0]
    if config.normalize_advantages and n > 1:
        adv = (adv - adv.mean()) / (adv.std() + 1e-8)
    backup = [p.copy() for p in policy.parameters()]
    mb = min(config.minibatch, n)
    acc = {}
    count = 0
    for _ in range(config.epochs):
        perm = rng.permutation(n)
        for start in range(0, n, mb):
            idx = perm[start:start + mb]
            grads, stats = ppo_gradients(policy, obs[idx], actions[idx], old_logp[idx], adv[idx], returns[idx], config)
            if not np.isfinite(stats["loss"]) or not all(np.all(np.isfinite(g)) for g in grads):
                for p, b in zip(policy.parameters(), backup):
                    p[...] = b
                stats = dict(stats, aborted=True)
                return stats
            grads, gnorm = clip_grad_norm(grads, config.max_grad_norm)
            optimizer.step(grads)
            stats["grad_norm"] = gnorm
            for k, val in stats.items():
                acc[k] = acc.get(k, 0.0) + val
            count += 1
    out = {k: val / count for k, val in acc.items()}
    out["aborted"] = False
    return out
