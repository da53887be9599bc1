"""Stand the robot on tiles of each calibrated depth and watch it sink.

Run:  python demos/stand_on_soft_tiles.py
"""
from softterrain.harness.calibration import measure_sink
from softterrain.robot import RobotModel

model = RobotModel()
print(f"robot mass {model.total_mass:.2f} kg")
for depth in (0.02, 0.03, 0.04, 0.05):
    r = measure_sink(depth, model)
    # the four feet share the weight, so each tile sinks to its calibrated depth
    print(r.line())
