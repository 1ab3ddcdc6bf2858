"""Shared test utilities: finite differences and small fixture builders."""

import numpy as np
import pytest

from repscope.datasets import LabeledDataset
from repscope.tensors import ActTensor4


def central_diff_param(loss_fn, param: np.ndarray, h: float = 1e-5):
    """Central finite-difference gradient of loss_fn() w.r.t. param.

    ``loss_fn`` must recompute the loss from scratch; ``param`` is modified
    in place and restored.
    """
    grad = np.zeros_like(param)
    flat = param.ravel()
    gflat = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = loss_fn()
        flat[i] = orig - h
        down = loss_fn()
        flat[i] = orig
        gflat[i] = (up - down) / (2 * h)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-4) -> float:
    """Max elementwise difference over the larger array magnitude.

    The scale floor keeps exactly-zero gradients (e.g. a conv bias feeding
    BatchNorm) from turning finite-difference noise into a unit ratio.
    """
    scale = max(np.abs(a).max(), np.abs(b).max(), floor)
    return float(np.abs(a - b).max() / scale)


def random_image_dataset(n, classes=3, hw=10, seed=0, channels=1):
    """Small labeled image set with class-dependent means, for fast tests."""
    rng = np.random.default_rng(seed)
    labels = rng.integers(0, classes, n)
    base = rng.uniform(0.2, 0.8, size=(classes, channels, hw, hw))
    images = np.clip(base[labels] + rng.normal(0, 0.05, (n, channels, hw, hw)),
                     0.0, 1.0)
    return LabeledDataset(ActTensor4(images), labels, classes)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
