"""
Pre-training: objective, gradients, optimizers.
"""

from pcfgnn.training.gradcheck import GradCheckReport, check_gradients
from pcfgnn.training.optim import Adam, Optimizer, Sgd, make_optimizer
from pcfgnn.training.pretrainer import (
    PretrainResult,
    backward,
    edge_weight,
    loss,
    train,
    write_loss_trace,
)

__all__ = [
    "Adam",
    "GradCheckReport",
    "Optimizer",
    "PretrainResult",
    "Sgd",
    "backward",
    "check_gradients",
    "edge_weight",
    "loss",
    "make_optimizer",
    "train",
    "write_loss_trace",
]
