"""Roll out an untrained policy on soft terrain and print per-episode summaries.

Run:  python demos/random_policy_rollout.py
"""
import numpy as np

from softterrain.env import EpisodeConfig, QuadrupedEnv
from softterrain.learn import GaussianPolicy, evaluate_policy

policy = GaussianPolicy(102, 27, rng=np.random.default_rng(0))


def make_env(ep):
    return QuadrupedEnv(EpisodeConfig(scenario="t_v2", max_phases=12, seed=ep))


for row in evaluate_policy(policy, make_env, episodes=3, deterministic=False):
    print(f"episode {row['episode']}: return {row['return']:+.3f} over {row['length']} phases, "
          f"walked {row['walked']:.2f} m, ended by {row['termination']}")
