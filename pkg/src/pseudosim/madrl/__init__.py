from .env import PseudonymGenEnv
from .mappo import (
    NaNGuardError,
    TrainConfig,
    TrainResult,
    compute_q_hat,
    counterfactual_advantage,
    ppo_update,
    train_mappo,
)
from .baselines import baseline_policy, evaluate_policy
from .nets import CriticNetwork, PolicyNetwork

__all__ = [
    "PseudonymGenEnv",
    "TrainConfig",
    "TrainResult",
    "NaNGuardError",
    "compute_q_hat",
    "counterfactual_advantage",
    "ppo_update",
    "train_mappo",
    "baseline_policy",
    "evaluate_policy",
    "PolicyNetwork",
    "CriticNetwork",
]
