"""Autodiff engine, velocity networks, optimizer and checkpoints."""

from .autodiff import Tensor, backward
from .checkpoint import IncompatibleCheckpoint, load_checkpoint, save_checkpoint
from .mlp import MLP, EmbeddingMode, TimeEmbedding, VelocityNetwork, default_width, forward, loss_and_grad
from .optim import Adam

__all__ = [
    "Adam",
    "EmbeddingMode",
    "IncompatibleCheckpoint",
    "MLP",
    "Tensor",
    "TimeEmbedding",
    "VelocityNetwork",
    "backward",
    "default_width",
    "forward",
    "load_checkpoint",
    "loss_and_grad",
    "save_checkpoint",
]
