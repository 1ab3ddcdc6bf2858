"""Representational sparsity: the fraction of exactly-zero activations.

Zero means exactly 0.0 by default; values near zero do not count. An
optional threshold is exposed for sensitivity studies but stays at 0 in
every reported run.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .datasets import LabeledDataset
from .nn.extraction import iter_relu_batches
from .tensors import ActTensor4


@dataclass(frozen=True)
class ChannelSparsity:
    """Per-channel zero fraction at one layer; values in [0, 1], length C."""

    layer_index: int
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 1:
            raise ValueError("values must be a vector of per-channel fractions")
        if values.size and (values.min() < 0 or values.max() > 1):
            raise ValueError("sparsity values must lie in [0, 1]")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)


@dataclass(frozen=True)
class LayerSparsity:
    """Single zero fraction over the whole layer tensor."""

    layer_index: int
    value: float

    def __post_init__(self):
        if not 0.0 <= self.value <= 1.0:
            raise ValueError("sparsity value must lie in [0, 1]")


def _zero_mask(data: np.ndarray, threshold: float) -> np.ndarray:
    if threshold == 0.0:
        return data == 0.0
    return np.abs(data) <= threshold


def _require_post_relu(t: ActTensor4):
    if t.source_tag != "post_relu":
        raise ValueError("sparsity is defined on post-ReLU tensors only")


def channel_sparsity(t: ActTensor4, layer_index: int = 0,
                     threshold: float = 0.0) -> ChannelSparsity:
    """Zero fraction of each channel: zeros(c) / (N*H*W)."""
    _require_post_relu(t)
    n, c, h, w = t.dims
    counts = _zero_mask(t.data, threshold).sum(axis=(0, 2, 3))
    return ChannelSparsity(layer_index, counts / (n * h * w))


def layer_sparsity(t: ActTensor4, layer_index: int = 0,
                   threshold: float = 0.0) -> LayerSparsity:
    """Zero fraction of the whole tensor: zeros / (N*C*H*W)."""
    _require_post_relu(t)
    count = int(_zero_mask(t.data, threshold).sum())
    return LayerSparsity(layer_index, count / t.size)


def sparsity_over_layers(model, dataset: LabeledDataset, sample_count: int,
                         seed, layers: list[int] | None = None,
                         batch_size: int = 256, threshold: float = 0.0):
    """Both sparsity metrics at every analyzed ReLU layer of a model.

    Draws ``sample_count`` samples without replacement with a seeded RNG
    (indices sorted, so full coverage is seed-independent), then streams
    eval-mode extraction batches and accumulates exact zero counts. Results
    do not depend on ``batch_size``.

    Returns [(analysis_layer, ChannelSparsity, LayerSparsity), ...] where
    analysis_layer is the 1-based position among the network's ReLU outputs.
    """
    net = model.network if hasattr(model, "network") else model
    relu_indices = net.spec.relu_indices()
    if layers is not None:
        relu_indices = [relu_indices[k - 1] for k in layers]
        ordinals = list(layers)
    else:
        ordinals = list(range(1, len(relu_indices) + 1))

    n = len(dataset)
    if sample_count > n:
        raise ValueError(f"sample_count {sample_count} exceeds dataset size {n}")
    rng = np.random.default_rng(seed)
    idx = np.sort(rng.choice(n, size=sample_count, replace=False))
    images = dataset.images.data[idx]

    zero_counts = {i: None for i in relu_indices}
    totals = {i: 0 for i in relu_indices}
    channel_totals = {}
    for batch in iter_relu_batches(net, images, relu_indices, batch_size):
        for i, act in batch.items():
            counts = _zero_mask(act, threshold).sum(axis=(0, 2, 3))
            if zero_counts[i] is None:
                zero_counts[i] = counts
            else:
                zero_counts[i] += counts
            totals[i] += act.shape[0] * act.shape[2] * act.shape[3]
            channel_totals[i] = act.shape[1]

    results = []
    for ordinal, i in zip(ordinals, relu_indices):
        values = zero_counts[i] / totals[i]
        layer_value = int(zero_counts[i].sum()) / (totals[i] * channel_totals[i])
        results.append((ordinal,
                        ChannelSparsity(ordinal, values),
                        LayerSparsity(ordinal, layer_value)))
    return results
