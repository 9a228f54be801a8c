from .buffer import ReplayBuffer
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .nets import MLP, Adam, soft_update
from .trainer import (
    ActorCritic,
    PolicyBundle,
    TrainConfig,
    TrainingDiverged,
    TrainResult,
    train,
)

__all__ = [
    "ActorCritic",
    "Adam",
    "CheckpointError",
    "MLP",
    "PolicyBundle",
    "ReplayBuffer",
    "TrainConfig",
    "TrainResult",
    "TrainingDiverged",
    "load_checkpoint",
    "save_checkpoint",
    "soft_update",
    "train",
]
