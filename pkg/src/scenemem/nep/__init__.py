"""Node Edge Predictor: autodiff engine, model, and training."""

from .model import (ModelConfig, Sample, forward, init_params, load_checkpoint, make_batch, predict_memory,
                    samples_from_memory, save_checkpoint)
from .tensor import Tensor
from .train import (NEPScorer, TrainConfig, TrainResult, backward_and_step, bce_loss, class_weights,
                    gradients, groups_from_records, loss_trace_csv, train)

__all__ = [
    "ModelConfig", "Sample", "Tensor", "TrainConfig", "TrainResult", "NEPScorer", "backward_and_step",
    "bce_loss", "class_weights", "forward", "gradients", "groups_from_records", "init_params",
    "load_checkpoint", "loss_trace_csv", "make_batch", "predict_memory", "samples_from_memory",
    "save_checkpoint", "train",
]
