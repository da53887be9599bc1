"""Standing-robot experiment that checks a stiffness calibration."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from ..robot import RobotModel
from ..sim import SimConfig, Simulator
from ..terrain import TileGrid, calibrate_stiffness, constant_layout

# base xy that puts every foot inside a single tile (2.5 cm from its centre along x)
STANCE_XY = (0.0, 0.1)


@dataclass
class SinkReport:
    depth: float | None  # target, metres (None = rigid)
    stiffness: float | None
    sink: float  # measured mean depression of the four loaded tiles, metres
    tile_sinks: np.ndarray
    settle_time: float

    @property
    def relative_error(self):
        if not self.depth:
            return float("nan")
        return (self.sink - self.depth) / self.depth

    def line(self):
        if self.depth is None:
            return f"rigid: measured sink {100 * self.sink:.3f} cm"
        return (f"depth {100 * self.depth:g} cm: k = {self.stiffness:.3f} N/m, measured sink "
                f"{100 * self.sink:.3f} cm, error {100 * self.relative_error:+.2f}%")


def measure_sink(depth, model: RobotModel | None = None, config: SimConfig | None = None, settle_time=3.0):
    """Stand in the squat pose on uniform terrain and average the four loaded tiles' depression."""
    model = model or RobotModel()
    config = replace(config or SimConfig(), check_termination=False)
    grid = TileGrid.flat(4.0, 3.0, (0.0, 0.0))  # tile centres at y = 0.0 and 0.2
    grid.apply_layout(constant_layout(depth, grid.x0, 4.0), model.total_mass, config.gravity)
    sim = Simulator(model, grid, config)
    sim.place_squat(STANCE_XY)
    n = int(round(settle_time / config.control_dt))
    sim.run(np.tile(model.squat_angles.reshape(12), (n, 1)))
    tiles = [grid.tile_of(f[0], f[1]) for f in sim.feet_world()]
    sinks = np.array([-grid.z[t] for t in tiles])
    k = None if depth is None else calibrate_stiffness(depth, model.total_mass, config.gravity)
    return SinkReport(depth, k, float(sinks.mean()), sinks, n * config.control_dt)
