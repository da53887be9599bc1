"""Run configuration: a TOML file with one table per component.

Grammar (all keys optional; an empty file is the baseline run)::

    seed = 0
    out = "runs/baseline"
    log_level = "INFO"

    [robot]      # RobotModel fields, e.g. base_mass = 18.0
    [sim]        # SimConfig fields, e.g. kp = 300.0
    [action]     # ActionBounds fields, e.g. base_end = [-0.04, 0.08]
    [env]        # EpisodeConfig fields, e.g. scenario = "t_v2"
    [ppo]        # PpoConfig fields, e.g. horizon = 4096
    [train]      # updates (per stage), curriculum = ["t_v2", "t_c5"], checkpoint_every,
                 # eval_every, eval_episodes, obs_norm, time_budget, budget_clock

Unknown tables or keys are rejected with the line they appear on.
"""
from __future__ import annotations

import dataclasses
import re
from dataclasses import dataclass, field, fields

import numpy as np
import tomli
import tomli_w

from ..env import EpisodeConfig
from ..gait import ActionBounds
from ..learn import PpoConfig, Stage, TrainConfig
from ..robot import RobotModel
from ..sim import SimConfig


class ConfigError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line else message)


@dataclass(frozen=True)
class TrainSection:
    updates: int = 100
    curriculum: tuple = ("t_v2",)
    checkpoint_every: int = 10
    eval_every: int = 0
    eval_episodes: int = 4
    obs_norm: bool = False
    time_budget: float | None = None
    budget_clock: str = "wall"

    def __post_init__(self):
        cur = self.curriculum
        if isinstance(cur, str):
            cur = tuple(s for s in cur.split(":") if s)
        object.__setattr__(self, "curriculum", tuple(cur))
        if self.updates <= 0:
            raise ValueError("updates must be positive")
        if not self.curriculum:
            raise ValueError("curriculum must name at least one scenario")


@dataclass(frozen=True)
class RunConfig:
    robot: RobotModel = field(default_factory=RobotModel)
    sim: SimConfig = field(default_factory=SimConfig)
    action: ActionBounds = field(default_factory=ActionBounds)
    env: EpisodeConfig = field(default_factory=EpisodeConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    train: TrainSection = field(default_factory=TrainSection)
    seed: int = 0
    out: str = "runs/default"
    log_level: str = "INFO"

    def train_config(self) -> TrainConfig:
        t = self.train
        stages = tuple(Stage(s, t.updates) for s in t.curriculum)
        return TrainConfig(ppo=self.ppo, curriculum=stages, checkpoint_every=t.checkpoint_every,
                           eval_every=t.eval_every, eval_episodes=t.eval_episodes, obs_norm=t.obs_norm,
                           time_budget=t.time_budget, budget_clock=t.budget_clock, seed=self.seed)


SECTIONS = {
    "robot": RobotModel,
    "sim": SimConfig,
    "action": ActionBounds,
    "env": EpisodeConfig,
    "ppo": PpoConfig,
    "train": TrainSection,
}
TOP_KEYS = ("seed", "out", "log_level")


def _line_of(text, section, key=None):
    """Best-effort line number of ``[section]`` or of ``key`` inside it."""
    lines = text.splitlines()
    in_sec = section is None
    for i, ln in enumerate(lines, 1):
        s = ln.strip()
        m = re.match(r"^\[\s*([A-Za-z0-9_.\-]+)\s*\]", s)
        if m:
            if key is None and m.group(1) == section:
                return i
            in_sec = m.group(1) == section
            continue
        if in_sec and key is not None and re.match(rf"^{re.escape(key)}\s*=", s):
            return i
    return None


def _check_types(cls, values):
    defaults = cls()
    for k, v in values.items():
        ref = getattr(defaults, k)
        if isinstance(ref, bool):
            ok = isinstance(v, bool)
        elif isinstance(ref, (int, float)) and not isinstance(ref, bool):
            ok = isinstance(v, (int, float)) and not isinstance(v, bool)
            if isinstance(ref, int) and not isinstance(ref, bool) and isinstance(v, float):
                ok = False
        elif isinstance(ref, str):
            ok = isinstance(v, str)
        elif isinstance(ref, (tuple, list, np.ndarray)):
            ok = isinstance(v, (list, str))
        else:
            ok = True
        if not ok:
            raise TypeError(f"{k} has the wrong type ({type(v).__name__})")


def _build(cls, values):
    _check_types(cls, values)
    if cls is RobotModel:
        return RobotModel.from_dict(values)
    names = {f.name for f in fields(cls)}
    unknown = set(values) - names
    if unknown:
        raise KeyError(sorted(unknown)[0])
    conv = {k: (tuple(v) if isinstance(v, list) else v) for k, v in values.items()}
    return cls(**conv)


def parse_config(text: str) -> RunConfig:
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as e:
        m = re.search(r"line (\d+)", str(e))
        raise ConfigError(str(e), int(m.group(1)) if m else None) from None
    kw = {}
    for key, val in data.items():
        if key in TOP_KEYS:
            if isinstance(val, dict):
                raise ConfigError(f"'{key}' must be a value, not a table", _line_of(text, key))
            kw[key] = val
            continue
        if key not in SECTIONS:
            raise ConfigError(f"unknown key or table '{key}'", _line_of(text, key) or _line_of(text, None, key))
        if not isinstance(val, dict):
            raise ConfigError(f"'{key}' must be a table", _line_of(text, None, key))
        cls = SECTIONS[key]
        names = {f.name for f in fields(cls)}
        for k in val:
            if k not in names:
                raise ConfigError(f"unknown key '{k}' in [{key}]", _line_of(text, key, k))
        try:
            kw[key] = _build(cls, val)
        except (TypeError, ValueError, KeyError) as e:
            bad = next((k for k in val if k in str(e)), next(iter(val), None))
            raise ConfigError(f"invalid [{key}] value: {e}", _line_of(text, key, bad)) from None
    if "seed" in kw and not isinstance(kw["seed"], int):
        raise ConfigError("seed must be an integer", _line_of(text, None, "seed"))
    return RunConfig(**kw)


def load_config(path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def _plain(v):
    if isinstance(v, np.ndarray):
        return v.tolist()
    if isinstance(v, tuple):
        return [_plain(x) for x in v]
    if isinstance(v, (np.floating, np.integer)):
        return v.item()
    return v


def config_to_dict(cfg: RunConfig) -> dict:
    out = {k: getattr(cfg, k) for k in TOP_KEYS}
    for name in SECTIONS:
        obj = getattr(cfg, name)
        sec = {}
        for f in fields(obj):
            v = getattr(obj, f.name)
            if v is None:
                continue  # TOML has no null; absent means default
            sec[f.name] = _plain(v)
        out[name] = sec
    return out


def serialize_config(cfg: RunConfig) -> str:
    return tomli_w.dumps(config_to_dict(cfg))


def with_overrides(cfg: RunConfig, **sections) -> RunConfig:
    """Replace fields inside sections, e.g. ``with_overrides(cfg, env={"scenario": "rigid"})``."""
    kw = {}
    for name, vals in sections.items():
        if name in TOP_KEYS:
            kw[name] = vals
        else:
            kw[name] = dataclasses.replace(getattr(cfg, name), **vals)
    return dataclasses.replace(cfg, **kw)
