"""Elastic tiled terrain: a grid of tiles on vertical spring-loaded prismatic joints."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

TILE_SIZE = 0.20
DEPTH_SET = (None, 0.02, 0.03, 0.04, 0.05)  # None = rigid


def calibrate_stiffness(target_depth: float, robot_mass: float = 25.0, g: float = 9.81) -> float:
    """Spring stiffness giving ``target_depth`` of static sink under a quarter
    of the robot's weight."""
    if not target_depth > 0:
        raise ValueError(f"sinking depth must be positive, got {target_depth}")
    return (robot_mass * g / 4.0) / target_depth


def tile_step(z, zd, k, c, m, force, dt):
    """One implicit step of ``m z'' = -k z - c z' - force`` followed by the stop
    at rest height: tiles sink, never rise above z = 0.

    Works elementwise on arrays.  ``force`` is the downward push in newtons.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    z = np.asarray(z, dtype=float)
    zd = np.asarray(zd, dtype=float)
    v = (m * zd - dt * (k * z + force)) / (m + dt * c + dt * dt * k)
    zn = z + dt * v
    above = zn > 0.0
    zn = np.where(above, 0.0, zn)
    v = np.where(above, np.minimum(v, 0.0), v)
    if zn.ndim == 0:
        return float(zn), float(v)
    return zn, v


def tile_energy(z, zd, k, m):
    return 0.5 * m * np.square(zd) + 0.5 * k * np.square(z)


@dataclass
class TerrainLayout:
    """Stripes of constant sinking depth along x.  ``depths[i]`` is None for rigid."""

    starts: list
    depths: list
    stripe_length: float

    def __post_init__(self):
        if len(self.starts) != len(self.depths) or not self.starts:
            raise ValueError("layout needs matching, non-empty starts/depths")
        for a, b in zip(self.starts[:-1], self.starts[1:]):
            if not math.isclose(b - a, self.stripe_length, rel_tol=0, abs_tol=1e-9):
                raise ValueError("stripes must be contiguous and non-overlapping")

    def depth_at(self, x):
        """Depth of the stripe containing x (stripes extend past both ends)."""
        i = int(math.floor((x - self.starts[0]) / self.stripe_length))
        i = min(max(i, 0), len(self.starts) - 1)
        return self.depths[i]

    def stripe_index(self, x):
        i = int(math.floor((x - self.starts[0]) / self.stripe_length))
        return min(max(i, 0), len(self.starts) - 1)

    def to_records(self):
        return [{"stripe": i, "start_x": s, "length": self.stripe_length, "depth": d}
                for i, (s, d) in enumerate(zip(self.starts, self.depths))]

    def to_jsonl(self):
        return "".join(json.dumps(r, sort_keys=True) + "\n" for r in self.to_records())

    @classmethod
    def from_records(cls, records):
        records = sorted(records, key=lambda r: r["start_x"])
        return cls([r["start_x"] for r in records], [r["depth"] for r in records], records[0]["length"])


def build_layout(rng, stripe_length: float, depth_set=DEPTH_SET, total_length: float = 30.0,
                 first_depth=0.02, start_x: float = 0.0) -> TerrainLayout:
    """Random stripe layout.  The first stripe has ``first_depth``; later
    stripes are drawn uniformly from ``depth_set``, resampled once if equal to
    the previous stripe."""
    if not stripe_length > 0:
        raise ValueError("stripe length must be positive")
    depth_set = list(depth_set)
    n = max(1, int(math.ceil(total_length / stripe_length - 1e-9)))
    depths = [first_depth]
    for _ in range(n - 1):
        d = depth_set[rng.integers(len(depth_set))]
        if d == depths[-1] and len(depth_set) > 1:
            d = depth_set[rng.integers(len(depth_set))]
        depths.append(d)
    starts = [start_x + i * stripe_length for i in range(n)]
    return TerrainLayout(starts, depths, stripe_length)


def constant_layout(depth, start_x=0.0, total_length=30.0):
    return TerrainLayout([start_x], [depth], total_length)


@dataclass
class TileGrid:
    """Matrix of tiles; row index runs along x, column index along y."""

    rows: int
    cols: int
    tile_size: float = TILE_SIZE
    x0: float = 0.0
    y0: float = 0.0
    tile_mass: float = 1.0
    z: np.ndarray = None
    zd: np.ndarray = None
    k: np.ndarray = None
    c: np.ndarray = None
    rigid: np.ndarray = None
    depth: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        shape = (self.rows, self.cols)
        if self.z is None:
            self.z = np.zeros(shape)
        if self.zd is None:
            self.zd = np.zeros(shape)
        if self.k is None:
            self.k = np.zeros(shape)
        if self.c is None:
            self.c = np.zeros(shape)
        if self.rigid is None:
            self.rigid = np.ones(shape, dtype=bool)
        if self.depth is None:
            self.depth = np.zeros(shape)
        self.touched = np.zeros(shape, dtype=bool)
        self.touched_list = np.zeros(self.rows * self.cols, dtype=np.int64)
        self.n_touched = np.zeros(1, dtype=np.int64)

    @classmethod
    def flat(cls, length=30.0, width=3.0, center=(0.0, 0.0), tile_size=TILE_SIZE, tile_mass=1.0):
        rows = int(round(length / tile_size))
        cols = int(round(width / tile_size))
        return cls(rows, cols, tile_size, center[0] - rows * tile_size / 2, center[1] - cols * tile_size / 2,
                   tile_mass)

    @property
    def x1(self):
        return self.x0 + self.rows * self.tile_size

    @property
    def y1(self):
        return self.y0 + self.cols * self.tile_size

    def tile_center(self, i, j):
        return (self.x0 + (i + 0.5) * self.tile_size, self.y0 + (j + 0.5) * self.tile_size)

    def tile_of(self, x, y):
        """Index of the tile containing (x, y) or None outside the grid.
        A point on a shared edge belongs to the tile with the smaller index."""
        ux = (x - self.x0) / self.tile_size
        uy = (y - self.y0) / self.tile_size
        if ux < 0 or uy < 0 or ux > self.rows or uy > self.cols:
            return None
        return max(math.ceil(ux) - 1, 0), max(math.ceil(uy) - 1, 0)

    def height_at(self, x, y, return_flag=False):
        """Top surface height under (x, y); the floor beyond the grid is rigid at 0."""
        idx = self.tile_of(x, y)
        h = 0.0 if idx is None else float(self.z[idx])
        return (h, idx is None) if return_flag else h

    def set_tile(self, i, j, depth, robot_mass=25.0, g=9.81):
        if depth is None:
            self.rigid[i, j] = True
            self.k[i, j] = 0.0
            self.c[i, j] = 0.0
            self.depth[i, j] = 0.0
        else:
            k = calibrate_stiffness(depth, robot_mass, g)
            self.rigid[i, j] = False
            self.k[i, j] = k
            self.c[i, j] = 2.0 * math.sqrt(k * self.tile_mass)
            self.depth[i, j] = depth

    def apply_layout(self, layout: TerrainLayout, robot_mass=25.0, g=9.81):
        for i in range(self.rows):
            cx, _ = self.tile_center(i, 0)
            d = layout.depth_at(cx)
            for j in range(self.cols):
                self.set_tile(i, j, d, robot_mass, g)
        self.layout = layout
        return self

    def reset_state(self):
        self.z[:] = 0.0
        self.zd[:] = 0.0
        self.touched[:] = False
        self.n_touched[0] = 0

    def step(self, forces, dt):
        """Advance every non-rigid tile with the given (rows, cols) downward forces."""
        forces = np.asarray(forces, dtype=float)
        m = ~self.rigid
        z, zd = tile_step(self.z[m], self.zd[m], self.k[m], self.c[m], self.tile_mass, forces[m], dt)
        self.z[m] = z
        self.zd[m] = zd

    def copy(self):
        g = TileGrid(self.rows, self.cols, self.tile_size, self.x0, self.y0, self.tile_mass,
                     self.z.copy(), self.zd.copy(), self.k.copy(), self.c.copy(), self.rigid.copy(),
                     self.depth.copy())
        g.touched = self.touched.copy()
        g.touched_list = self.touched_list.copy()
        g.n_touched = self.n_touched.copy()
        if hasattr(self, "layout"):
            g.layout = self.layout
        return g
