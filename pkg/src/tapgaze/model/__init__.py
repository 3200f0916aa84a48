"""Sequence-to-sequence scanpath model: network, losses, and training."""

from .losses import (
    PRETAP_WINDOW_MS,
    REGION_SOFTNESS_PX,
    LossBreakdown,
    loss_f,
    loss_len,
    loss_sim,
    loss_v,
    total_loss,
)
from .network import (
    CHUNK_OVERLAP_TAPS,
    FixationPrediction,
    LossSwitches,
    ModelConfig,
    ScanpathInference,
    ScanpathModel,
)
from .training import (
    TrainingTrial,
    TrainResult,
    filter_trainable,
    from_simulated,
    loss_history_csv,
    train,
)

__all__ = [
    "CHUNK_OVERLAP_TAPS",
    "PRETAP_WINDOW_MS",
    "REGION_SOFTNESS_PX",
    "FixationPrediction",
    "LossBreakdown",
    "LossSwitches",
    "ModelConfig",
    "ScanpathInference",
    "ScanpathModel",
    "TrainResult",
    "TrainingTrial",
    "filter_trainable",
    "from_simulated",
    "loss_f",
    "loss_len",
    "loss_history_csv",
    "loss_sim",
    "loss_v",
    "total_loss",
    "train",
]
