"""Gait statistics from episode logs: base height and landing heights per terrain condition."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

FOOT_KEYS = ("fl", "fr", "rl", "rr")  # leg index order
TABLE_ROWS = ("sigma(h_b)", "mu(h_b)", "mu(fr)", "mu(fl)", "mu(rr)", "mu(rl)")
SCENARIO_ORDER = ("t_v2", "t_v8", "t_c2", "t_c3", "t_c4", "t_c5", "rigid")
BINS_PER_PHASE = 180


class Welford:
    """Streaming mean and population variance."""

    def __init__(self):
        self.n = 0
        self.mean = 0.0
        self.m2 = 0.0

    def add(self, x):
        self.n += 1
        d = x - self.mean
        self.mean += d / self.n
        self.m2 += d * (x - self.mean)

    @property
    def std(self):
        return math.sqrt(self.m2 / self.n) if self.n else float("nan")


def depth_label(depth):
    return "rigid" if depth is None else str(int(round(depth * 100)))


def condition_labels(scenario, depth):
    """Table columns a sample contributes to."""
    if scenario in ("t_v2", "t_v8"):
        name = "T_" + scenario[2:]
        return [f"{name}^ave", f"{name}^{depth_label(depth)}"]
    if scenario.startswith("t_c"):
        return [f"T_c^{scenario[3:]}"]
    return [scenario]


def _column_key(label):
    head, _, sup = label.partition("^")
    order = {"T_v2": 0, "T_v8": 1, "T_c": 2}.get(head, 3)
    sub = -1 if sup == "ave" else (int(sup) if sup.isdigit() else 99)
    return (order, sub, label)


@dataclass
class Summary:
    mean: float
    std: float
    n: int


@dataclass
class GaitStats:
    """Per condition: base height (cm) and per-foot landing heights (cm)."""

    base_height: dict = field(default_factory=dict)  # label -> Summary
    landing_target: dict = field(default_factory=dict)  # label -> {foot: Summary}
    landing_contact: dict = field(default_factory=dict)
    episodes: int = 0
    terminations: int = 0

    @property
    def conditions(self):
        labels = set(self.base_height) | set(self.landing_target)
        return sorted(labels, key=_column_key)

    def table(self, which="target"):
        """Rows of Table I (cm) as {row: {condition: value}}."""
        land = self.landing_target if which == "target" else self.landing_contact
        out = {r: {} for r in TABLE_ROWS}
        for c in self.conditions:
            hb = self.base_height.get(c)
            out["sigma(h_b)"][c] = hb.std if hb else float("nan")
            out["mu(h_b)"][c] = hb.mean if hb else float("nan")
            for foot in ("fr", "fl", "rr", "rl"):
                s = land.get(c, {}).get(foot)
                out[f"mu({foot})"][c] = s.mean if s else float("nan")
        return out

    def to_csv(self, which="target", digits=2):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = self.conditions
        w.writerow([""] + cols)
        tab = self.table(which)
        for r in TABLE_ROWS:
            w.writerow([r] + [_fmt(tab[r][c], digits) for c in cols])
        return buf.getvalue()

    def detail_csv(self, digits=4):
        """Long format with sigma and sample counts for every statistic."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["condition", "quantity", "mean_cm", "std_cm", "n"])
        for c in self.conditions:
            if c in self.base_height:
                s = self.base_height[c]
                w.writerow([c, "h_b", _fmt(s.mean, digits), _fmt(s.std, digits), s.n])
            for which, table in (("target", self.landing_target), ("contact", self.landing_contact)):
                for foot in FOOT_KEYS:
                    s = table.get(c, {}).get(foot)
                    if s is not None:
                        w.writerow([c, f"{foot}_{which}", _fmt(s.mean, digits), _fmt(s.std, digits), s.n])
        return buf.getvalue()


def _fmt(v, digits):
    return "" if v is None or (isinstance(v, float) and math.isnan(v)) else f"{v:.{digits}f}"


def _collect(records):
    hb = {}
    tgt = {}
    con = {}
    for r in records:
        scen = r.get("scenario", "rigid")
        for c in condition_labels(scen, r.get("base_depth")):
            hb.setdefault(c, []).extend(100.0 * h for h in r.get("tick_heights", []))
        foot = FOOT_KEYS[int(r["swing_leg"])]
        for c in condition_labels(scen, r.get("landing_depth")):
            if r.get("landing_target") is not None:
                tgt.setdefault(c, {}).setdefault(foot, []).append(100.0 * r["landing_target"])
            if r.get("landing_contact") is not None:
                con.setdefault(c, {}).setdefault(foot, []).append(100.0 * r["landing_contact"])
    return hb, tgt, con


def compute_gait_stats(records) -> GaitStats:
    """Two-pass statistics (numpy mean, population std) over logged phases."""
    records = list(records)
    hb, tgt, con = _collect(records)

    def summ(xs):
        a = np.asarray(xs, dtype=float)
        return Summary(float(a.mean()), float(a.std()), int(a.size))

    stats = GaitStats()
    stats.base_height = {c: summ(v) for c, v in hb.items() if v}
    stats.landing_target = {c: {f: summ(v) for f, v in d.items()} for c, d in tgt.items()}
    stats.landing_contact = {c: {f: summ(v) for f, v in d.items()} for c, d in con.items()}
    eps = {(r.get("episode"), r.get("scenario")) for r in records}
    stats.episodes = len(eps)
    stats.terminations = sum(1 for r in records if r.get("termination"))
    return stats


def streaming_gait_stats(records) -> GaitStats:
    """Same statistics from a single Welford pass (cross-check for compute_gait_stats)."""
    hb, tgt, con = {}, {}, {}
    for r in records:
        scen = r.get("scenario", "rigid")
        for c in condition_labels(scen, r.get("base_depth")):
            w = hb.setdefault(c, Welford())
            for h in r.get("tick_heights", []):
                w.add(100.0 * h)
        foot = FOOT_KEYS[int(r["swing_leg"])]
        for c in condition_labels(scen, r.get("landing_depth")):
            if r.get("landing_target") is not None:
                tgt.setdefault(c, {}).setdefault(foot, Welford()).add(100.0 * r["landing_target"])
            if r.get("landing_contact") is not None:
                con.setdefault(c, {}).setdefault(foot, Welford()).add(100.0 * r["landing_contact"])
    stats = GaitStats()
    stats.base_height = {c: Summary(w.mean, w.std, w.n) for c, w in hb.items() if w.n}
    stats.landing_target = {c: {f: Summary(w.mean, w.std, w.n) for f, w in d.items()} for c, d in tgt.items()}
    stats.landing_contact = {c: {f: Summary(w.mean, w.std, w.n) for f, w in d.items()} for c, d in con.items()}
    return stats


def phase_binned_base_height(records, condition=None):
    """Mean scalar base height over one locomotion cycle.

    Returns (angles, heights_m, counts) with 4 * 180 = 720 bins on [0, 2*pi);
    bin ``phase_index * 180 + tick`` collects the tick's height.  Empty bins are NaN.
    ``condition`` optionally restricts to records whose column labels contain it."""
    nb = 4 * BINS_PER_PHASE
    sums = np.zeros(nb)
    counts = np.zeros(nb, dtype=int)
    used = 0
    for r in records:
        if condition is not None and condition not in condition_labels(r.get("scenario", "rigid"), r.get("base_depth")):
            continue
        hs = r.get("tick_heights") or []
        base = int(r["phase_index"]) * BINS_PER_PHASE
        for k, h in enumerate(hs[:BINS_PER_PHASE]):
            sums[base + k] += h
            counts[base + k] += 1
        used += 1
    if used == 0:
        raise ValueError("no episode records with per-tick base heights")
    angles = np.arange(nb) * (2.0 * np.pi / nb)
    with np.errstate(invalid="ignore", divide="ignore"):
        heights = np.where(counts > 0, sums / np.maximum(counts, 1), np.nan)
    return angles, heights, counts


def walk_success_rate(episodes, min_distance=4.0):
    """Fraction of episodes whose base covered ``min_distance`` metres before any termination.

    Each episode dict needs ``walked``: the largest start-to-base distance over phases
    that ended without termination."""
    if not episodes:
        raise ValueError("no episodes")
    return sum(e["walked"] >= min_distance for e in episodes) / len(episodes)
