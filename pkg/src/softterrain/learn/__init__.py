"""From-scratch PPO: networks, updates and the training loop."""
from .mlp import Adam, Mlp, orthogonal
from .ppo import (GaussianPolicy, PpoConfig, RolloutBuffer, RunningNorm, clipped_surrogate, gae_compute,
                  gaussian_entropy, gaussian_logprob, make_optimizer, ppo_gradients, ppo_update)
from .train import (EnvPool, Stage, TrainConfig, collect_rollout, default_env_factory, evaluate_policy,
                    load_checkpoint, save_checkpoint, train_loop)
