"""Network specs, shape checking, and the two study architectures."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import layers as L

LAYER_KINDS = ("conv2d", "relu", "maxpool2d", "dense", "batchnorm", "flatten")


@dataclass(frozen=True)
class LayerSpec:
    """One layer in a declarative network description."""

    kind: str
    in_channels: int = 0
    out_channels: int = 0
    kernel_size: int = 0
    stride: int = 1
    padding: int = 0
    window: int = 0
    in_dim: int = 0
    out_dim: int = 0
    num_features: int = 0

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")

    @staticmethod
    def conv2d(in_channels, out_channels, kernel_size, stride=1, padding=0):
        return LayerSpec("conv2d", in_channels=in_channels,
                         out_channels=out_channels, kernel_size=kernel_size,
                         stride=stride, padding=padding)

    @staticmethod
    def relu():
        return LayerSpec("relu")

    @staticmethod
    def maxpool2d(window, stride):
        return LayerSpec("maxpool2d", window=window, stride=stride)

    @staticmethod
    def dense(in_dim, out_dim):
        return LayerSpec("dense", in_dim=in_dim, out_dim=out_dim)

    @staticmethod
    def batchnorm(num_features):
        return LayerSpec("batchnorm", num_features=num_features)

    @staticmethod
    def flatten():
        return LayerSpec("flatten")


@dataclass(frozen=True)
class NetworkSpec:
    """Input shape plus an ordered layer list; shapes are checked eagerly."""

    input_shape: tuple[int, int, int]  # (C, H, W)
    layers: tuple[LayerSpec, ...]
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        infer_shapes(self)  # raises on inconsistent specs

    def relu_indices(self) -> list[int]:
        """Indices into ``layers`` whose outputs are post-ReLU activations."""
        return [i for i, spec in enumerate(self.layers) if spec.kind == "relu"]


def infer_shapes(spec: NetworkSpec) -> list[tuple]:
    """Output shape (without batch axis) after each layer; validates composition."""
    shape = spec.input_shape
    shapes = []
    for i, ls in enumerate(spec.layers):
        if ls.kind == "conv2d":
            if len(shape) != 3 or shape[0] != ls.in_channels:
                raise ValueError(f"layer {i}: conv2d expects {ls.in_channels} "
                                 f"channels, input is {shape}")
            c, h, w = shape
            ho = (h + 2 * ls.padding - ls.kernel_size) // ls.stride + 1
            wo = (w + 2 * ls.padding - ls.kernel_size) // ls.stride + 1
            if ho < 1 or wo < 1:
                raise ValueError(f"layer {i}: kernel does not fit input {shape}")
            shape = (ls.out_channels, ho, wo)
        elif ls.kind == "maxpool2d":
            if len(shape) != 3:
                raise ValueError(f"layer {i}: maxpool2d needs a 4D activation")
            c, h, w = shape
            shape = (c, (h - ls.window) // ls.stride + 1,
                     (w - ls.window) // ls.stride + 1)
        elif ls.kind == "flatten":
            if len(shape) != 3:
                raise ValueError(f"layer {i}: flatten needs a 4D activation")
            shape = (int(np.prod(shape)),)
        elif ls.kind == "dense":
            if len(shape) != 1 or shape[0] != ls.in_dim:
                raise ValueError(f"layer {i}: dense expects width {ls.in_dim}, "
                                 f"input is {shape}")
            shape = (ls.out_dim,)
        elif ls.kind == "batchnorm":
            feat = shape[0]
            if feat != ls.num_features:
                raise ValueError(f"layer {i}: batchnorm features {ls.num_features} "
                                 f"!= preceding {feat}")
        elif ls.kind == "relu":
            pass
        shapes.append(shape)
    return shapes


class Network:
    """Concrete layer stack built from a spec with a seeded initializer."""

    def __init__(self, spec: NetworkSpec, seed=0, dtype=np.float32):
        self.spec = spec
        self.dtype = dtype
        rng = np.random.default_rng(seed)
        self.layers = []
        for ls in spec.layers:
            if ls.kind == "conv2d":
                self.layers.append(L.Conv2D(ls.in_channels, ls.out_channels,
                                            ls.kernel_size, ls.stride,
                                            ls.padding, rng=rng, dtype=dtype))
            elif ls.kind == "relu":
                self.layers.append(L.ReLU())
            elif ls.kind == "maxpool2d":
                self.layers.append(L.MaxPool2D(ls.window, ls.stride))
            elif ls.kind == "dense":
                self.layers.append(L.Dense(ls.in_dim, ls.out_dim, rng=rng,
                                           dtype=dtype))
            elif ls.kind == "batchnorm":
                self.layers.append(L.BatchNorm(ls.num_features, dtype=dtype))
            elif ls.kind == "flatten":
                self.layers.append(L.Flatten())

    def forward(self, x: np.ndarray, train: bool = False) -> list[np.ndarray]:
        """Run the stack; returns the activation after every layer.

        The last entry is the logits. Element ``i`` corresponds to
        ``spec.layers[i]``.
        """
        if x.shape[1:] != self.spec.input_shape:
            raise ValueError(f"input shape {x.shape[1:]} does not match spec "
                             f"{self.spec.input_shape}")
        x = np.ascontiguousarray(x, dtype=self.dtype)
        acts = []
        for layer in self.layers:
            x = layer.forward(x, train=train)
            acts.append(x)
        return acts

    def backward(self, grad_logits: np.ndarray) -> np.ndarray:
        """Backpropagate from the logits gradient; fills every layer's grads."""
        g = grad_logits
        for layer in reversed(self.layers):
            g = layer.backward(g)
        return g

    def parameters(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """(param, grad) array pairs, updated in place by optimizers."""
        pairs = []
        for layer in self.layers:
            p, g = layer.params(), layer.grads()
            for name in p:
                pairs.append((p[name], g[name]))
        return pairs

    def param_arrays(self) -> dict[str, np.ndarray]:
        """Named parameter and BatchNorm running-stat arrays, checkpoint order."""
        named = {}
        for i, layer in enumerate(self.layers):
            for name, arr in layer.params().items():
                named[f"layer{i:02d}.{name}"] = arr
            if isinstance(layer, L.BatchNorm):
                named[f"layer{i:02d}.running_mean"] = layer.running_mean
                named[f"layer{i:02d}.running_var"] = layer.running_var
        return named

    def astype(self, dtype) -> "Network":
        """Copy of the network with every array cast to ``dtype``."""
        other = Network(self.spec, seed=0, dtype=dtype)
        for mine, theirs in zip(self.layers, other.layers):
            for name, arr in mine.params().items():
                theirs.params()[name][...] = arr.astype(dtype)
            if isinstance(mine, L.BatchNorm):
                theirs.running_mean[...] = mine.running_mean.astype(dtype)
                theirs.running_var[...] = mine.running_var.astype(dtype)
        return other

    def snapshot(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.param_arrays().items()}

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        for k, v in self.param_arrays().items():
            v[...] = snap[k]


def _conv_block(layers, in_c, out_c, kernel, padding, with_bn):
    layers.append(LayerSpec.conv2d(in_c, out_c, kernel, padding=padding))
    if with_bn:
        layers.append(LayerSpec.batchnorm(out_c))
    layers.append(LayerSpec.relu())


def build_standard_cnn(with_batchnorm: bool,
                       bn_on_dense: bool = True) -> NetworkSpec:
    """The MNIST study architecture.

    Four 3x3 convolutions with [16, 32, 64, 128] channels, 2x2 stride-2 max
    pooling after the 2nd and 3rd convolutions, a 100-node hidden dense
    layer, and a 10-node output. ReLU after every hidden layer; optional
    BatchNorm between each linear transform and its ReLU.
    """
    specs = []
    _conv_block(specs, 1, 16, 3, 0, with_batchnorm)
    _conv_block(specs, 16, 32, 3, 0, with_batchnorm)
    specs.append(LayerSpec.maxpool2d(2, 2))
    _conv_block(specs, 32, 64, 3, 0, with_batchnorm)
    specs.append(LayerSpec.maxpool2d(2, 2))
    _conv_block(specs, 64, 128, 3, 0, with_batchnorm)
    specs.append(LayerSpec.flatten())
    specs.append(LayerSpec.dense(128 * 3 * 3, 100))
    if with_batchnorm and bn_on_dense:
        specs.append(LayerSpec.batchnorm(100))
    specs.append(LayerSpec.relu())
    specs.append(LayerSpec.dense(100, 10))
    name = "standard_cnn_bn" if with_batchnorm else "standard_cnn_nbn"
    return NetworkSpec((1, 28, 28), tuple(specs), name)


VGG16_CHANNELS = (64, 64, 128, 128, 256, 256, 256, 512, 512, 512, 512, 512, 512)
_VGG16_POOL_AFTER = frozenset({2, 4, 7, 10, 13})  # 1-based conv positions


def build_vgg16(with_batchnorm: bool, num_classes: int = 10,
                bn_on_dense: bool = True) -> NetworkSpec:
    """VGG-16 for 32x32x3 inputs.

    Thirteen 3x3 same-padded convolutions with the canonical channel
    progression, 2x2 stride-2 max pooling after convolutions 2, 4, 7, 10,
    and 13, then the 4096-4096 dense head.
    """
    specs = []
    in_c = 3
    for pos, out_c in enumerate(VGG16_CHANNELS, start=1):
        _conv_block(specs, in_c, out_c, 3, 1, with_batchnorm)
        if pos in _VGG16_POOL_AFTER:
            specs.append(LayerSpec.maxpool2d(2, 2))
        in_c = out_c
    specs.append(LayerSpec.flatten())
    for in_dim, out_dim in ((512, 4096), (4096, 4096)):
        specs.append(LayerSpec.dense(in_dim, out_dim))
        if with_batchnorm and bn_on_dense:
            specs.append(LayerSpec.batchnorm(out_dim))
        specs.append(LayerSpec.relu())
    specs.append(LayerSpec.dense(4096, num_classes))
    name = "vgg16_bn" if with_batchnorm else "vgg16_nbn"
    return NetworkSpec((3, 32, 32), tuple(specs), name)
