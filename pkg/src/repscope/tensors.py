"""Activation tensors and their 2D unfoldings.

All tensors are dense, row-major batches of shape (N, C, H, W): sample,
channel, height, width. Analysis paths use float64; float32 is accepted
for values coming out of training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SOURCE_TAGS = ("raw", "post_relu")
AXIS_TAGS = ("by_channel", "by_sample", "flat")

_ALLOWED_DTYPES = (np.float64, np.float32)


@dataclass(frozen=True)
class ActTensor4:
    """Immutable 4D activation tensor with a provenance tag.

    ``post_relu`` tensors must be elementwise non-negative; every tensor
    must be finite. The backing array is frozen on construction.
    """

    data: np.ndarray
    source_tag: str = "raw"

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data)
        if arr.dtype not in _ALLOWED_DTYPES:
            arr = arr.astype(np.float64)
        if arr.ndim != 4:
            raise ValueError(f"expected 4 dimensions (N, C, H, W), got {arr.ndim}")
        if min(arr.shape) < 1:
            raise ValueError(f"all dimensions must be >= 1, got {arr.shape}")
        if self.source_tag not in SOURCE_TAGS:
            raise ValueError(f"unknown source_tag {self.source_tag!r}")
        if not np.isfinite(arr).all():
            raise ValueError("tensor contains non-finite values")
        if self.source_tag == "post_relu" and arr.min() < 0:
            raise ValueError("post_relu tensor contains negative values")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def dims(self) -> tuple[int, int, int, int]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size


@dataclass(frozen=True)
class RepMatrix:
    """2D representation matrix produced by unfolding or spatial averaging."""

    data: np.ndarray
    axis_tag: str

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data)
        if arr.ndim != 2:
            raise ValueError(f"expected a 2D matrix, got {arr.ndim} dimensions")
        if self.axis_tag not in AXIS_TAGS:
            raise ValueError(f"unknown axis_tag {self.axis_tag!r}")
        if not np.isfinite(arr).all():
            raise ValueError("matrix contains non-finite values")
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]


def unfold_channel(t: ActTensor4) -> RepMatrix:
    """Unfold to (C, N*H*W): row c holds every value of channel c."""
    n, c, h, w = t.dims
    m = np.transpose(t.data, (1, 0, 2, 3)).reshape(c, n * h * w)
    return RepMatrix(m, "by_channel")


def unfold_sample(t: ActTensor4) -> RepMatrix:
    """Unfold to (N, C*H*W): row n holds every value of sample n."""
    n, c, h, w = t.dims
    return RepMatrix(t.data.reshape(n, c * h * w), "by_sample")


def flatten(t: ActTensor4) -> RepMatrix:
    """Unfold to (1, N*C*H*W) in sample-major order."""
    return RepMatrix(t.data.reshape(1, t.size), "flat")


def refold(m: RepMatrix, dims: tuple[int, int, int, int],
           source_tag: str = "raw") -> ActTensor4:
    """Invert an unfolding back to a 4D tensor with the given dims."""
    n, c, h, w = dims
    if m.data.size != n * c * h * w:
        raise ValueError("element count does not match the requested dims")
    if m.axis_tag == "by_sample":
        data = m.data.reshape(n, c, h, w)
    elif m.axis_tag == "by_channel":
        data = np.transpose(m.data.reshape(c, n, h, w), (1, 0, 2, 3))
    elif m.axis_tag == "flat":
        data = m.data.reshape(n, c, h, w)
    else:  # pragma: no cover - RepMatrix validates the tag
        raise ValueError(f"unknown axis_tag {m.axis_tag!r}")
    return ActTensor4(data.copy(), source_tag)
