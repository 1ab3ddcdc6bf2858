"""Minimal CNN stack: layers, specs, training, and representation extraction."""

from .layers import (
    BatchNorm,
    Conv2D,
    Dense,
    Flatten,
    MaxPool2D,
    ReLU,
    batchnorm_backward,
    batchnorm_forward,
)
from .network import (
    LayerSpec,
    Network,
    NetworkSpec,
    VGG16_CHANNELS,
    build_standard_cnn,
    build_vgg16,
    infer_shapes,
)
from .training import (
    Adam,
    EpochStats,
    SGDNesterov,
    TrainConfig,
    TrainedModel,
    current_lr,
    evaluate_accuracy,
    softmax_cross_entropy,
    train,
)
from .extraction import (
    analysis_network,
    extract_representations,
    iter_relu_batches,
)

__all__ = [
    "Adam",
    "BatchNorm",
    "Conv2D",
    "Dense",
    "EpochStats",
    "Flatten",
    "LayerSpec",
    "MaxPool2D",
    "Network",
    "NetworkSpec",
    "ReLU",
    "SGDNesterov",
    "TrainConfig",
    "TrainedModel",
    "VGG16_CHANNELS",
    "analysis_network",
    "batchnorm_backward",
    "batchnorm_forward",
    "build_standard_cnn",
    "build_vgg16",
    "current_lr",
    "evaluate_accuracy",
    "extract_representations",
    "infer_shapes",
    "iter_relu_batches",
    "softmax_cross_entropy",
    "train",
]
