"""Post-ReLU representation extraction from trained networks.

Extraction always runs in eval mode (BatchNorm normalizes with running
statistics) and in float64, so repeated calls are pure and analysis-grade.
Dense-layer representations are shaped (N, width, 1, 1) so every downstream
metric applies uniformly.
"""

from __future__ import annotations

import numpy as np

from ..tensors import ActTensor4
from .network import Network
from .training import TrainedModel


def _network_of(model) -> Network:
    return model.network if isinstance(model, TrainedModel) else model


def _as_images(samples) -> np.ndarray:
    return samples.data if isinstance(samples, ActTensor4) else np.asarray(samples)


def analysis_network(model) -> Network:
    """Float64 copy of a model's network for analysis passes."""
    return _network_of(model).astype(np.float64)


def _to_4d(act: np.ndarray) -> np.ndarray:
    if act.ndim == 2:
        return act.reshape(act.shape[0], act.shape[1], 1, 1)
    return act


def extract_representations(model, samples, layer_index: int,
                            batch_size: int = 256) -> ActTensor4:
    """Post-ReLU activations at one layer for every sample, order preserved.

    ``layer_index`` indexes the spec's layer list and must name a ReLU.
    """
    net = _network_of(model)
    if not 0 <= layer_index < len(net.spec.layers) \
            or net.spec.layers[layer_index].kind != "relu":
        raise ValueError(f"layer_index {layer_index} is not a ReLU output")
    net64 = net.astype(np.float64)
    images = _as_images(samples)
    chunks = []
    for start in range(0, images.shape[0], batch_size):
        acts = net64.forward(images[start:start + batch_size], train=False)
        chunks.append(_to_4d(acts[layer_index]))
    return ActTensor4(np.concatenate(chunks), "post_relu")


def iter_relu_batches(model, images: np.ndarray, layer_indices: list[int],
                      batch_size: int = 256):
    """Yield {layer_index: 4D post-ReLU batch} per extraction batch.

    Streams one eval-mode float64 forward pass per batch so metric drivers
    never hold a full-layer tensor in memory.
    """
    net64 = analysis_network(model)
    for spec_idx in layer_indices:
        if net64.spec.layers[spec_idx].kind != "relu":
            raise ValueError(f"layer_index {spec_idx} is not a ReLU output")
    images = _as_images(images)
    for start in range(0, images.shape[0], batch_size):
        acts = net64.forward(images[start:start + batch_size], train=False)
        yield {i: _to_4d(acts[i]) for i in layer_indices}
