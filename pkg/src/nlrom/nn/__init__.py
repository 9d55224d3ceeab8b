"""Minimal float64 neural-network core with hand-written backward passes."""
from .layers import (Activation, Dense, EdgeFit2d, Layer, LeakyReLU, ReLU, Reshape,
                     ShapeError, TransposedConv2d)
from .losses import loss_relative, loss_squared
from .network import Network, from_bytes, he_init, load_network, save_network, to_bytes
from .optim import Adamax, AdamW, OptimizerConfig
from .train import TrainingDiverged, train

__all__ = [
    "Activation", "Dense", "EdgeFit2d", "Layer", "LeakyReLU", "ReLU", "Reshape",
    "ShapeError", "TransposedConv2d", "loss_relative", "loss_squared", "Network",
    "from_bytes", "he_init", "load_network", "save_network", "to_bytes", "Adamax",
    "AdamW", "OptimizerConfig", "TrainingDiverged", "train",
]
