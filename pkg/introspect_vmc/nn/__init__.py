"""
Minimal neural-network substrate: dense, convolution, concrete-dropout and
LSTM layers, the imitation loss, an adaptive-moment optimizer, finite-difference
gradient verification and a binary checkpoint format.
"""

from .checkpoint import load_checkpoint, save_checkpoint
from .conv import Conv2dLayer
from .gradcheck import gradient_check
from .layers import ConcreteDropoutLayer, DenseLayer, LstmCell, LstmMemory, Module, check_finite
from .losses import LossResult, LossWeights, imitation_loss, mean_squared_error
from .optim import AdamOptimizer

__all__ = [
    "AdamOptimizer",
    "ConcreteDropoutLayer",
    "Conv2dLayer",
    "DenseLayer",
    "LossResult",
    "LossWeights",
    "LstmCell",
    "LstmMemory",
    "Module",
    "check_finite",
    "gradient_check",
    "load_checkpoint",
    "imitation_loss",
    "mean_squared_error",
    "save_checkpoint",
]
