"""Decode a hand-made action into gait phases and step them through the simulator.

A fixed open-loop action cannot balance the robot: it tips over within a
few phases, which is what the learned policy has to fix.

Run:  python demos/one_phase.py
"""
import numpy as np

from softterrain.env import EpisodeConfig, QuadrupedEnv

env = QuadrupedEnv(EpisodeConfig(scenario="t_c2", seed=0))
obs = env.reset()
print("observation", obs.shape, "goal", env.goal)

a = np.zeros(27)
a[[20, 23]] = 0.5  # raise the middle control points of the swing foot curve
for k in range(8):
    obs, rb, done, info = env.step(a)
    x, y, z = env.sim.get_state().base.translation
    print(f"phase {k}: swing leg {info['swing_leg']}, base ({x:+.3f}, {y:+.3f}, {z:.3f}) m, "
          f"reward {rb.total:+.3f}")
    if done:
        print("terminated:", info["termination"])
        break
