"""From-scratch deep RL: networks, replay, DQN/TD3, and training loops."""

from .dqn import DQNAgent
from .gru import GruEncoder, IdentityEncoder
from .nets import MLP, Adam, TrainingDivergence, hard_update, huber, load_params, save_params, soft_update
from .replay import ReplayBuffer
from .td3 import TD3Agent
from .training import (
    EpisodeRecord,
    LearningCurve,
    Trainer,
    evaluate,
    make_agent,
    make_encoder,
    make_manifest,
    write_manifest,
)

__all__ = [
    "Adam",
    "DQNAgent",
    "EpisodeRecord",
    "GruEncoder",
    "IdentityEncoder",
    "LearningCurve",
    "MLP",
    "ReplayBuffer",
    "TD3Agent",
    "Trainer",
    "TrainingDivergence",
    "evaluate",
    "hard_update",
    "huber",
    "load_params",
    "make_agent",
    "make_encoder",
    "make_manifest",
    "save_params",
    "soft_update",
    "write_manifest",
]
