"""Rollout collection, curriculum-driven training loop and checkpoints."""
from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np

from .mlp import Mlp
from .ppo import GaussianPolicy, PpoConfig, RolloutBuffer, RunningNorm, make_optimizer, ppo_update

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
LOG_COLUMNS = ["update", "stage", "scenario", "phases", "episodes", "mean_return", "mean_length",
               "mean_distance", "terminations", "clip_fraction", "pg_loss", "value_loss", "entropy",
               "approx_kl", "grad_norm", "aborted"]


@dataclass(frozen=True)
class Stage:
    scenario: str
    updates: int


@dataclass(frozen=True)
class TrainConfig:
    ppo: PpoConfig = PpoConfig()
    curriculum: tuple = (Stage("t_v2", 100),)
    checkpoint_every: int = 10
    eval_every: int = 0  # 0 disables periodic evaluation
    eval_episodes: int = 4
    obs_norm: bool = False
    time_budget: float | None = None  # seconds; stops after the update that crosses it
    budget_clock: str = "wall"  # "wall" or "cpu" (process time, insensitive to machine load)
    seed: int = 0

    def __post_init__(self):
        stages = tuple(s if isinstance(s, Stage) else Stage(**s) if isinstance(s, dict) else Stage(*s)
                       for s in self.curriculum)
        if not stages:
            raise ValueError("curriculum needs at least one stage")
        if self.budget_clock not in ("wall", "cpu"):
            raise ValueError("budget_clock must be 'wall' or 'cpu'")
        object.__setattr__(self, "curriculum", stages)

    @property
    def total_updates(self):
        return sum(s.updates for s in self.curriculum)


def stage_at(curriculum, update):
    """(stage index, Stage) active at 0-based update index."""
    k = 0
    for i, s in enumerate(curriculum):
        k += s.updates
        if update < k:
            return i, s
    return len(curriculum) - 1, curriculum[-1]


# --------------------------------------------------------------------------- checkpoints
def save_checkpoint(path, policy: GaussianPolicy, meta=None):
    header = {
        "version": CHECKPOINT_VERSION,
        "obs_dim": policy.obs_dim,
        "act_dim": policy.act_dim,
        "hidden": policy.pi.sizes[1:-1],
        "shapes": {k: list(np.shape(v)) for k, v in policy.state_dict().items()},
        "meta": meta or {},
    }
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    tmp = str(path) + ".tmp.npz"
    np.savez(tmp, __header__=np.array(json.dumps(header, sort_keys=True)), **policy.state_dict())
    os.replace(tmp, path)


def load_checkpoint(path, obs_dim=None, act_dim=None):
    with np.load(path, allow_pickle=False) as z:
        header = json.loads(str(z["__header__"]))
        if header.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {header.get('version')}")
        if obs_dim is not None and header["obs_dim"] != obs_dim:
            raise ValueError(f"checkpoint expects {header['obs_dim']} observations, environment gives {obs_dim}")
        if act_dim is not None and header["act_dim"] != act_dim:
            raise ValueError(f"checkpoint has {header['act_dim']} actions, environment expects {act_dim}")
        cfg = PpoConfig(hidden=tuple(header["hidden"]))
        policy = GaussianPolicy(header["obs_dim"], header["act_dim"], cfg)
        policy.load_state_dict({k: z[k] for k in z.files if k != "__header__"})
    return policy, header


# --------------------------------------------------------------------------- rollouts
class EnvPool:
    """N environments stepped in lockstep on one thread."""

    def __init__(self, factory, n, scenario, seed):
        self.factory = factory
        ss = np.random.SeedSequence(seed)
        self.seeds = [int(s.generate_state(1)[0]) for s in ss.spawn(n)]
        self.envs = [factory(scenario, s) for s in self.seeds]
        self.scenario = scenario
        self.obs = np.stack([e.reset(seed=s) for e, s in zip(self.envs, self.seeds)])
        self.ep_return = np.zeros(n)
        self.ep_len = np.zeros(n, dtype=int)

    def set_scenario(self, scenario):
        if scenario == self.scenario:
            return
        self.scenario = scenario
        self.envs = [self.factory(scenario, s + 1) for s in self.seeds]
        self.obs = np.stack([e.reset(seed=s + 1) for e, s in zip(self.envs, self.seeds)])
        self.ep_return[:] = 0
        self.ep_len[:] = 0


def collect_rollout(pool: EnvPool, policy: GaussianPolicy, steps, gamma, rng):
    n = len(pool.envs)
    buf = RolloutBuffer(steps, n, policy.obs_dim, policy.act_dim)
    finished = []
    for _ in range(steps):
        if policy.obs_norm is not None:
            policy.obs_norm.update(pool.obs)
        a, logp, v = policy.act(pool.obs, rng)
        rewards = np.zeros(n)
        dones = np.zeros(n)
        next_obs = np.empty_like(pool.obs)
        for i, env in enumerate(pool.envs):
            o, rb, done, info = env.step(a[i])
            r = rb.total
            pool.ep_return[i] += r
            pool.ep_len[i] += 1
            if info["truncated"]:
                r += gamma * float(policy.value(o))  # time-limit bootstrap
            rewards[i] = r
            if done:
                dones[i] = 1.0
                finished.append({"return": pool.ep_return[i], "length": int(pool.ep_len[i]),
                                 "distance": info["distance"], "terminated": info["termination"] is not None})
                pool.ep_return[i] = 0.0
                pool.ep_len[i] = 0
                o = env.reset()
            next_obs[i] = o
        buf.add(pool.obs, a, logp, v, rewards, dones)
        pool.obs = next_obs
    return buf, finished


def evaluate_policy(policy: GaussianPolicy, make_env, episodes, seed=0, deterministic=True, on_step=None):
    """Roll out ``episodes`` episodes; returns a list of per-episode summaries."""
    rng = np.random.default_rng(seed)
    out = []
    for ep in range(episodes):
        env = make_env(ep)
        obs = env.reset(seed=seed * 100003 + ep)
        total, length, info = 0.0, 0, {}
        walked = 0.0
        done = False
        while not done:
            a, _, _ = policy.act(obs, rng, deterministic=deterministic)
            obs, rb, done, info = env.step(a)
            total += rb.total
            length += 1
            if info["termination"] is None:
                walked = max(walked, info["distance"])
            if on_step is not None:
                on_step(ep, env, info)
        out.append({"episode": ep, "return": total, "length": length, "distance": info.get("distance", 0.0),
                    "walked": walked, "termination": info.get("termination"), "goals": env.goals_reached})
    return out


# --------------------------------------------------------------------------- main loop
def default_env_factory(episode_config=None, sim_config=None, model=None, bounds=None):
    from ..env import EpisodeConfig, QuadrupedEnv
    base = episode_config or EpisodeConfig()

    def make(scenario, seed):
        return QuadrupedEnv(replace(base, scenario=scenario, seed=seed), model=model, sim_config=sim_config,
                            bounds=bounds)

    return make


def train_loop(env_factory, config: TrainConfig, out_dir=None, callback=None):
    """Alternate rollouts and PPO updates over the curriculum.

    Writes ``train_log.csv`` and checkpoints under ``out_dir`` when given.
    Returns (policy, list of per-update log rows)."""
    pc = config.ppo
    rng = np.random.default_rng(config.seed)
    steps = max(1, pc.horizon // pc.n_envs)
    first = config.curriculum[0]
    pool = EnvPool(env_factory, pc.n_envs, first.scenario, config.seed)
    env0 = pool.envs[0]
    policy = GaussianPolicy(env0.obs_dim, env0.act_dim, pc, rng)
    if config.obs_norm:
        policy.obs_norm = RunningNorm(env0.obs_dim)
    opt = make_optimizer(policy, pc)
    rows = []
    writer = fh = None
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        fh = open(os.path.join(out_dir, "train_log.csv"), "w", newline="")
        writer = csv.DictWriter(fh, fieldnames=LOG_COLUMNS)
        writer.writeheader()
    clock = time.process_time if config.budget_clock == "cpu" else time.monotonic
    t0 = clock()
    total_phases = 0
    try:
        for u in range(config.total_updates):
            si, stage = stage_at(config.curriculum, u)
            pool.set_scenario(stage.scenario)
            buf, finished = collect_rollout(pool, policy, steps, pc.gamma, rng)
            last_v = policy.value(pool.obs)
            buf.finish(last_v, pc.gamma, pc.lam)
            total_phases += steps * pc.n_envs
            stats = ppo_update(buf, policy, opt, pc, rng)
            row = {
                "update": u + 1, "stage": si, "scenario": stage.scenario, "phases": total_phases,
                "episodes": len(finished),
                "mean_return": _mean([f["return"] for f in finished]),
                "mean_length": _mean([f["length"] for f in finished]),
                "mean_distance": _mean([f["distance"] for f in finished]),
                "terminations": sum(f["terminated"] for f in finished),
            }
            for k in ("clip_fraction", "pg_loss", "value_loss", "entropy", "approx_kl", "grad_norm"):
                row[k] = stats.get(k, float("nan"))
            row["aborted"] = int(bool(stats.get("aborted")))
            rows.append(row)
            if writer is not None:
                writer.writerow({k: _fmt(v) for k, v in row.items()})
                fh.flush()
            log.info("update %d stage %d %s return %.3f len %.1f dist %.2f kl %.4f (%.0fs)", u + 1, si,
                     stage.scenario, row["mean_return"], row["mean_length"], row["mean_distance"],
                     row["approx_kl"], clock() - t0)
            last = u + 1 == config.total_updates
            over = config.time_budget is not None and clock() - t0 >= config.time_budget
            if out_dir is not None and (last or over or (config.checkpoint_every and (u + 1) % config.checkpoint_every == 0)):
                meta = {"update": u + 1, "stage": si, "scenario": stage.scenario, "phases": total_phases}
                save_checkpoint(os.path.join(out_dir, "checkpoints", f"update_{u + 1:05d}.npz"), policy, meta)
                save_checkpoint(os.path.join(out_dir, "checkpoints", "latest.npz"), policy, meta)
            if config.eval_every and (u + 1) % config.eval_every == 0:
                res = evaluate_policy(policy, lambda ep: env_factory(stage.scenario, 10_000 + ep),
                                      config.eval_episodes, seed=config.seed)
                log.info("eval after %d: distance %.2f, terminated %d/%d", u + 1,
                         _mean([r["distance"] for r in res]), sum(r["termination"] is not None for r in res), len(res))
            if callback is not None:
                callback(u, row, policy)
            if over:
                log.info("time budget reached after %d updates", u + 1)
                break
    finally:
        if fh is not None:
            fh.close()
    return policy, rows


def _mean(xs):
    return float(np.mean(xs)) if len(xs) else float("nan")


def _fmt(v):
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(round(v, 10))
    return v
