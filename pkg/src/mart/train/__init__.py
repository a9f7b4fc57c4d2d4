"""Configuration, checkpoints and the pretraining loop."""

from mart.train.checkpoint import Checkpoint, load_checkpoint, restore_model, save_checkpoint
from mart.train.config import TrainConfig, format_config, load_config, parse_config
from mart.train.loop import TrainResult, pretrain, prepare_batch, read_loss_log, train_step

__all__ = [
    "Checkpoint", "TrainConfig", "TrainResult", "format_config", "load_checkpoint", "load_config",
    "parse_config", "prepare_batch", "pretrain", "read_loss_log", "restore_model", "save_checkpoint",
    "train_step",
]
