"""Command line: train, eval, replay, calibrate, plot."""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import logging
import math
import os
import sys

import numpy as np

from .config import ConfigError, RunConfig, load_config, parse_config, serialize_config, with_overrides
from .logs import LogError, dumps, read_jsonl, write_jsonl
from .metrics import compute_gait_stats, walk_success_rate

log = logging.getLogger("softterrain")
SCENARIO_CHOICES = ("t_v2", "t_v8", "t_c2", "t_c3", "t_c4", "t_c5", "rigid")


def _load(args) -> RunConfig:
    cfg = load_config(args.config) if getattr(args, "config", None) else RunConfig()
    if getattr(args, "seed", None) is not None:
        cfg = with_overrides(cfg, seed=args.seed)
    if getattr(args, "out", None):
        cfg = with_overrides(cfg, out=args.out)
    return cfg


def _setup_logging(level):
    logging.basicConfig(level=getattr(logging, str(level).upper(), logging.INFO),
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def _factory(cfg: RunConfig, record=False, record_ticks=False):
    from ..env import QuadrupedEnv

    def make(scenario, seed):
        ec = dataclasses.replace(cfg.env, scenario=scenario, seed=seed)
        return QuadrupedEnv(ec, model=cfg.robot, sim_config=cfg.sim, bounds=cfg.action, record=record,
                            record_ticks=record_ticks)

    return make


def run_episodes(policy, cfg: RunConfig, scenario, episodes, seed, tick_dump=False):
    """Deterministic rollouts; returns (episode summaries, phase records, tick records)."""
    from ..learn import evaluate_policy

    make = _factory(cfg, record=True, record_ticks=tick_dump)
    records, ticks = [], []

    def on_step(ep, env, info):
        rec = dict(info["log"])
        rec["episode"] = ep
        records.append(rec)
        if tick_dump:
            for t in info["tick_dump"]:
                t = dict(t)
                t["episode"] = ep
                ticks.append(t)

    eps = evaluate_policy(policy, lambda ep: make(scenario, seed * 1000 + ep), episodes, seed=seed, on_step=on_step)
    return eps, records, ticks


def write_stats(out_dir, records, eps):
    stats = compute_gait_stats(records)
    with open(os.path.join(out_dir, "table1.csv"), "w", newline="") as fh:
        fh.write(stats.to_csv("target"))
    with open(os.path.join(out_dir, "table1_contact.csv"), "w", newline="") as fh:
        fh.write(stats.to_csv("contact"))
    with open(os.path.join(out_dir, "stats_detail.csv"), "w", newline="") as fh:
        fh.write(stats.detail_csv())
    summary = {
        "episodes": len(eps),
        "terminations": sum(e["termination"] is not None for e in eps),
        "walk_4m_rate": walk_success_rate(eps, 4.0) if eps else None,
        "mean_walked": float(np.mean([e["walked"] for e in eps])) if eps else None,
        "per_episode": [{k: e[k] for k in ("episode", "return", "length", "distance", "walked", "termination", "goals")}
                        for e in eps],
    }
    with open(os.path.join(out_dir, "summary.json"), "w") as fh:
        fh.write(json.dumps(summary, indent=1, sort_keys=True) + "\n")
    return stats, summary


# --------------------------------------------------------------------------- commands
def cmd_train(args):
    cfg = _load(args)
    env_kw, train_kw, ppo_kw = {}, {}, {}
    if args.scenario:
        env_kw["scenario"] = args.scenario
        train_kw["curriculum"] = (args.scenario,)
    if args.curriculum:
        train_kw["curriculum"] = tuple(s for s in args.curriculum.split(":") if s)
        bad = [s for s in train_kw["curriculum"] if s not in SCENARIO_CHOICES]
        if bad:
            raise ConfigError(f"unknown scenario in --curriculum: {bad[0]}")
    if args.updates:
        train_kw["updates"] = args.updates
    if args.time_budget:
        train_kw["time_budget"] = args.time_budget
    if args.n_envs:
        ppo_kw["n_envs"] = args.n_envs
    if args.horizon:
        ppo_kw["horizon"] = args.horizon
    try:
        cfg = with_overrides(cfg, env=env_kw, train=train_kw, ppo=ppo_kw)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e)) from None
    _setup_logging(cfg.log_level)
    from ..learn import train_loop

    os.makedirs(cfg.out, exist_ok=True)
    with open(os.path.join(cfg.out, "config.toml"), "w") as fh:
        fh.write(serialize_config(cfg))
    policy, rows = train_loop(_factory(cfg), cfg.train_config(), cfg.out)
    if cfg.train.eval_episodes > 0:
        scen = cfg.train.curriculum[-1]
        eps, records, _ = run_episodes(policy, cfg, scen, cfg.train.eval_episodes, cfg.seed)
        write_jsonl(os.path.join(cfg.out, "episodes.jsonl"), records)
        write_stats(cfg.out, records, eps)
    print(f"trained {len(rows)} updates; outputs in {cfg.out}")
    return 0


def cmd_eval(args):
    cfg = _load(args)
    if args.scenario:
        cfg = with_overrides(cfg, env={"scenario": args.scenario})
    if args.max_phases:
        cfg = with_overrides(cfg, env={"max_phases": args.max_phases})
    _setup_logging(cfg.log_level)
    from ..learn import load_checkpoint

    policy, header = load_checkpoint(args.checkpoint, obs_dim=cfg.env.obs_dim, act_dim=27)
    out = args.out or os.path.join(os.path.dirname(os.path.abspath(args.checkpoint)), "eval")
    os.makedirs(out, exist_ok=True)
    eps, records, ticks = run_episodes(policy, cfg, cfg.env.scenario, args.episodes, cfg.seed, args.tick_dump)
    write_jsonl(os.path.join(out, "episodes.jsonl"), records)
    if args.tick_dump:
        write_jsonl(os.path.join(out, "ticks.jsonl"), ticks)
    stats, summary = write_stats(out, records, eps)
    sys.stdout.write(stats.to_csv("target"))
    print(f"episodes {summary['episodes']}, terminations {summary['terminations']}, "
          f"walked >= 4 m: {summary['walk_4m_rate']:.2f}, mean walked {summary['mean_walked']:.2f} m")
    return 0


TRACE_COLUMNS = ["episode", "phase", "phase_index", "swing_leg", "tick", "phase_angle", "h_b", "reward",
                 "termination"]


def replay_trace(records) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for r in records:
        hs = r.get("tick_heights") or []
        for k, h in enumerate(hs):
            last = k == len(hs) - 1
            ang = (int(r["phase_index"]) + k / 180.0) * math.pi / 2.0
            w.writerow([r["episode"], r["phase"], r["phase_index"], r["swing_leg"], k, repr(round(ang, 12)), repr(h),
                        repr(r["reward"]["total"]) if last else "", (r.get("termination") or "") if last else ""])
    return buf.getvalue()


def episode_returns(records):
    out = {}
    for r in records:
        out[r["episode"]] = out.get(r["episode"], 0.0) + r["reward"]["total"]
    return out


def cmd_replay(args):
    records = read_jsonl(args.log)
    text = replay_trace(records)
    if args.trace:
        with open(args.trace, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    for ep, ret in sorted(episode_returns(records).items()):
        print(f"episode {ep}: return {ret!r}", file=sys.stderr)
    if args.plot == "base-height":
        from .plots import plot_base_height

        img = args.image or os.path.splitext(args.log)[0] + "_base_height.png"
        plot_base_height(records, img)
        print(f"wrote {img}", file=sys.stderr)
    return 0


def cmd_calibrate(args):
    cfg = _load(args)
    from .calibration import measure_sink

    depths = [None] if args.rigid else [d / 100.0 for d in (args.depth or [2, 3, 4, 5])]
    rows = []
    for d in depths:
        rep = measure_sink(d, cfg.robot, cfg.sim, args.settle)
        print(rep.line())
        rows.append(rep)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "calibration.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["depth_cm", "stiffness", "sink_cm", "relative_error"])
            for r in rows:
                w.writerow(["rigid" if r.depth is None else f"{100 * r.depth:g}",
                            "" if r.stiffness is None else f"{r.stiffness:.6f}", f"{100 * r.sink:.6f}",
                            "" if r.depth is None else f"{r.relative_error:.6f}"])
    return 0


def cmd_plot(args):
    from .plots import plot_base_height, plot_training

    out = args.out or "."
    os.makedirs(out, exist_ok=True)
    done = False
    if args.train_log:
        print("wrote", plot_training(args.train_log, os.path.join(out, "training.png")))
        done = True
    if args.episodes:
        print("wrote", plot_base_height(read_jsonl(args.episodes), os.path.join(out, "base_height.png")))
        done = True
    if not done:
        print("nothing to plot: pass --train-log and/or --episodes", file=sys.stderr)
        return 2
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="softterrain", description="Quadruped locomotion on elastic tiled terrain.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out=True):
        sp.add_argument("--config", help="TOML run configuration")
        sp.add_argument("--seed", type=int)
        if out:
            sp.add_argument("--out", help="output directory")

    t = sub.add_parser("train", help="train a policy with PPO")
    common(t)
    t.add_argument("--scenario", choices=SCENARIO_CHOICES)
    t.add_argument("--curriculum", help="stages separated by ':', e.g. t_v2:t_c5")
    t.add_argument("--updates", type=int, help="updates per curriculum stage")
    t.add_argument("--time-budget", type=float, help="wall-clock seconds")
    t.add_argument("--n-envs", type=int)
    t.add_argument("--horizon", type=int, help="phases per update over all envs")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("eval", help="roll out a checkpoint and compute gait statistics")
    common(e)
    e.add_argument("--checkpoint", required=True)
    e.add_argument("--scenario", choices=SCENARIO_CHOICES)
    e.add_argument("--episodes", type=int, default=20)
    e.add_argument("--max-phases", type=int)
    e.add_argument("--tick-dump", action="store_true", help="also write per-tick states to ticks.jsonl")
    e.set_defaults(func=cmd_eval)

    r = sub.add_parser("replay", help="per-tick trace of an episode log")
    r.add_argument("log")
    r.add_argument("--trace", help="write the CSV trace here instead of stdout")
    r.add_argument("--plot", choices=("base-height",))
    r.add_argument("--image", help="image path for --plot")
    r.set_defaults(func=cmd_replay)

    c = sub.add_parser("calibrate", help="check terrain stiffness calibration by standing still")
    common(c)
    c.add_argument("--depth", type=float, nargs="+", help="target sinking depths in cm")
    c.add_argument("--rigid", action="store_true")
    c.add_argument("--settle", type=float, default=3.0, help="standing time in seconds")
    c.set_defaults(func=cmd_calibrate)

    pl = sub.add_parser("plot", help="training curves and base-height figure")
    pl.add_argument("--train-log")
    pl.add_argument("--episodes")
    pl.add_argument("--out")
    pl.set_defaults(func=cmd_plot)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except LogError as e:
        print(f"log error: {e}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
