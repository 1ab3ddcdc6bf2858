"""CNN building blocks with explicit forward/backward passes.

Every layer caches what its backward pass needs when called with
``train=True`` and stays cache-free in eval mode. Parameters live in
``params()`` / ``grads()`` dicts so optimizers can update them in place.
"""

from __future__ import annotations

import numpy as np


def _im2col(x: np.ndarray, kh: int, kw: int, stride: int, padding: int):
    """Rearrange (N,C,H,W) into (C*kh*kw, N*Ho*Wo) patch columns.

    The kernel axis comes first so the whole batch convolves as a single
    GEMM against the (Cout, C*kh*kw) weight matrix.
    """
    n, c, h, w = x.shape
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    hp, wp = x.shape[2], x.shape[3]
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    xt = np.ascontiguousarray(x.transpose(1, 0, 2, 3))  # channel-major
    cols = np.empty((c, kh, kw, n, ho, wo), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, i, j] = xt[:, :, i:i + stride * ho:stride,
                               j:j + stride * wo:stride]
    return cols.reshape(c * kh * kw, n * ho * wo), (ho, wo)


def _col2im(dcols: np.ndarray, x_shape, kh: int, kw: int,
            stride: int, padding: int) -> np.ndarray:
    """Scatter patch-column gradients back onto the input grid."""
    n, c, h, w = x_shape
    hp, wp = h + 2 * padding, w + 2 * padding
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    dcols = dcols.reshape(c, kh, kw, n, ho, wo)
    dxp = np.zeros((n, c, hp, wp), dtype=dcols.dtype)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i:i + stride * ho:stride,
                j:j + stride * wo:stride] += dcols[:, i, j].transpose(1, 0, 2, 3)
    if padding:
        return dxp[:, :, padding:-padding, padding:-padding]
    return dxp


class Conv2D:
    """2D cross-correlation with bias, He-uniform initialized."""

    def __init__(self, in_channels, out_channels, kernel_size, stride=1,
                 padding=0, rng=None, dtype=np.float32):
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kernel_size = kernel_size
        self.stride = stride
        self.padding = padding
        fan_in = in_channels * kernel_size * kernel_size
        limit = np.sqrt(6.0 / fan_in)
        rng = rng or np.random.default_rng()
        self.weight = rng.uniform(
            -limit, limit,
            (out_channels, in_channels, kernel_size, kernel_size),
        ).astype(dtype)
        self.bias = np.zeros(out_channels, dtype=dtype)
        self.dweight = np.zeros_like(self.weight)
        self.dbias = np.zeros_like(self.bias)
        self._cache = None

    def forward(self, x: np.ndarray, train: bool = False) -> np.ndarray:
        if x.shape[1] != self.in_channels:
            raise ValueError(
                f"expected {self.in_channels} input channels, got {x.shape[1]}"
            )
        cols, (ho, wo) = _im2col(x, self.kernel_size, self.kernel_size,
                                 self.stride, self.padding)
        wmat = self.weight.reshape(self.out_channels, -1)
        out = wmat @ cols  # (Cout, N*Ho*Wo)
        out += self.bias[:, None]
        if train:
            self._cache = (x.shape, cols)
        out = out.reshape(self.out_channels, x.shape[0], ho, wo)
        return np.ascontiguousarray(out.transpose(1, 0, 2, 3))

    def backward(self, gout: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise RuntimeError("backward called without a cached forward pass")
        x_shape, cols = self._cache
        n = gout.shape[0]
        g2 = np.ascontiguousarray(gout.transpose(1, 0, 2, 3)).reshape(
            self.out_channels, -1)
        wmat = self.weight.reshape(self.out_channels, -1)
        self.dweight[...] = (g2 @ cols.T).reshape(self.weight.shape)
        self.dbias[...] = g2.sum(axis=1)
        dcols = wmat.T @ g2
        self._cache = None
        return _col2im(dcols, x_shape, self.kernel_size, self.kernel_size,
                       self.stride, self.padding)

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def grads(self):
        return {"weight": self.dweight, "bias": self.dbias}


class ReLU:
    """Elementwise max(x, 0). Negatives map to exact 0.0."""

    def __init__(self):
        self._mask = None

    def forward(self, x, train=False):
        out = np.maximum(x, 0)
        if train:
            self._mask = x > 0
        return out

    def backward(self, gout):
        if self._mask is None:
            raise RuntimeError("backward called without a cached forward pass")
        gin = gout * self._mask
        self._mask = None
        return gin

    def params(self):
        return {}

    def grads(self):
        return {}


class MaxPool2D:
    """Max pooling that records argmax positions for the backward pass."""

    def __init__(self, window, stride):
        self.window = window
        self.stride = stride
        self._cache = None

    def _window_views(self, x, ho, wo):
        win, stride = self.window, self.stride
        return [x[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride]
                for i in range(win) for j in range(win)]

    def forward(self, x, train=False):
        n, c, h, w = x.shape
        win, stride = self.window, self.stride
        ho = (h - win) // stride + 1
        wo = (w - win) // stride + 1
        views = self._window_views(x, ho, wo)
        best = views[0].copy()
        if not train:
            for v in views[1:]:
                np.maximum(best, v, out=best)
            return best
        # Vectorized argmax tournament; ties resolve to the first
        # (row-major) window position, matching a sequential argmax.
        idx = np.zeros((n, c, ho, wo), dtype=np.int8)
        for pos, v in enumerate(views[1:], start=1):
            better = v > best
            idx[better] = pos
            np.maximum(best, v, out=best)
        self._cache = (x.shape, idx)
        return best

    def backward(self, gout):
        if self._cache is None:
            raise RuntimeError("backward called without a cached forward pass")
        (n, c, h, w), idx = self._cache
        win, stride = self.window, self.stride
        ho, wo = idx.shape[2], idx.shape[3]
        self._cache = None
        dx = np.zeros((n, c, h, w), dtype=gout.dtype)
        if stride >= win:
            # Windows never overlap: masked writes route each gradient once.
            for pos, target in enumerate(self._window_views(dx, ho, wo)):
                np.copyto(target, gout, where=idx == pos)
            return dx
        hpos = (np.arange(ho) * stride)[None, None, :, None] + idx // win
        wpos = (np.arange(wo) * stride)[None, None, None, :] + idx % win
        nidx, cidx = np.ogrid[:n, :c]
        np.add.at(dx, (nidx[..., None, None], cidx[..., None, None], hpos, wpos),
                  gout)
        return dx

    def params(self):
        return {}

    def grads(self):
        return {}


class Dense:
    """Fully connected layer on (N, D) inputs."""

    def __init__(self, in_dim, out_dim, rng=None, dtype=np.float32):
        self.in_dim = in_dim
        self.out_dim = out_dim
        limit = np.sqrt(6.0 / in_dim)
        rng = rng or np.random.default_rng()
        self.weight = rng.uniform(-limit, limit, (in_dim, out_dim)).astype(dtype)
        self.bias = np.zeros(out_dim, dtype=dtype)
        self.dweight = np.zeros_like(self.weight)
        self.dbias = np.zeros_like(self.bias)
        self._x = None

    def forward(self, x, train=False):
        if x.shape[1] != self.in_dim:
            raise ValueError(f"expected width {self.in_dim}, got {x.shape[1]}")
        if train:
            self._x = x
        return x @ self.weight + self.bias

    def backward(self, gout):
        if self._x is None:
            raise RuntimeError("backward called without a cached forward pass")
        self.dweight[...] = self._x.T @ gout
        self.dbias[...] = gout.sum(axis=0)
        gin = gout @ self.weight.T
        self._x = None
        return gin

    def params(self):
        return {"weight": self.weight, "bias": self.bias}

    def grads(self):
        return {"weight": self.dweight, "bias": self.dbias}


class Flatten:
    """(N, C, H, W) -> (N, C*H*W) bridge into dense layers."""

    def __init__(self):
        self._shape = None

    def forward(self, x, train=False):
        if train:
            self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, gout):
        if self._shape is None:
            raise RuntimeError("backward called without a cached forward pass")
        shape = self._shape
        self._shape = None
        return gout.reshape(shape)

    def params(self):
        return {}

    def grads(self):
        return {}


class BatchNorm:
    """Per-feature batch normalization for 4D (per-channel) or 2D inputs.

    Train mode normalizes with biased batch statistics over all non-feature
    axes and folds them into the running aggregates as
    ``running <- (1 - momentum) * running + momentum * batch`` (the running
    variance uses the unbiased batch estimate). Eval mode normalizes with
    the running statistics and never updates them.
    """

    def __init__(self, num_features, eps=1e-5, momentum=0.1, dtype=np.float32):
        if eps <= 0:
            raise ValueError("eps must be positive")
        if not 0 < momentum < 1:
            raise ValueError("momentum must lie in (0, 1)")
        self.num_features = num_features
        self.eps = eps
        self.momentum = momentum
        self.gamma = np.ones(num_features, dtype=dtype)
        self.beta = np.zeros(num_features, dtype=dtype)
        self.running_mean = np.zeros(num_features, dtype=dtype)
        self.running_var = np.ones(num_features, dtype=dtype)
        self.dgamma = np.zeros_like(self.gamma)
        self.dbeta = np.zeros_like(self.beta)
        self._cache = None

    def _check(self, x):
        feat = x.shape[1]
        if feat != self.num_features:
            raise ValueError(
                f"feature count mismatch: layer has {self.num_features}, input {feat}"
            )
        if x.ndim == 4:
            return (0, 2, 3), (1, self.num_features, 1, 1)
        if x.ndim == 2:
            return (0,), (1, self.num_features)
        raise ValueError(f"BatchNorm expects 2D or 4D input, got {x.ndim}D")

    @staticmethod
    def _feature_sum(x):
        """Sum over all non-feature axes, trailing axes first (contiguous)."""
        if x.ndim == 4:
            return x.sum(axis=(2, 3)).sum(axis=0)
        return x.sum(axis=0)

    def forward(self, x, train=False):
        axes, bshape = self._check(x)
        gamma = self.gamma.reshape(bshape)
        beta = self.beta.reshape(bshape)
        if not train:
            mean = self.running_mean.reshape(bshape)
            var = self.running_var.reshape(bshape)
            return gamma * (x - mean) / np.sqrt(var + self.eps) + beta
        if x.shape[0] < 2:
            raise ValueError("train-mode BatchNorm needs a batch of at least 2")
        m = x.size // self.num_features
        mean = self._feature_sum(x) / m
        xhat = x - mean.reshape(bshape)
        var = self._feature_sum(xhat * xhat) / m  # biased (1/m)
        inv_std = 1.0 / np.sqrt(var.reshape(bshape) + self.eps)
        xhat *= inv_std
        out = gamma * xhat
        out += beta
        unbiased = var * (m / (m - 1.0))
        self.running_mean[...] = (1 - self.momentum) * self.running_mean \
            + self.momentum * mean.astype(self.running_mean.dtype)
        self.running_var[...] = (1 - self.momentum) * self.running_var \
            + self.momentum * unbiased.astype(self.running_var.dtype)
        self._cache = (xhat, inv_std, axes, bshape, m)
        return out

    def backward(self, gout):
        if self._cache is None:
            raise RuntimeError("backward called without a cached forward pass")
        xhat, inv_std, axes, bshape, m = self._cache
        self._cache = None
        self.dbeta[...] = self._feature_sum(gout)
        self.dgamma[...] = self._feature_sum(gout * xhat)
        dxhat = gout * self.gamma.reshape(bshape)
        # Derivative through the batch mean and variance.
        term = dxhat * m
        term -= self._feature_sum(dxhat).reshape(bshape)
        term -= xhat * self._feature_sum(dxhat * xhat).reshape(bshape)
        term *= inv_std / m
        return term

    def params(self):
        return {"gamma": self.gamma, "beta": self.beta}

    def grads(self):
        return {"gamma": self.dgamma, "beta": self.dbeta}


def batchnorm_forward(x: np.ndarray, state: BatchNorm, train: bool = True):
    """Functional view of ``BatchNorm.forward`` for a standalone state."""
    return state.forward(x, train=train)


def batchnorm_backward(gout: np.ndarray, state: BatchNorm):
    """Gradients (grad_in, grad_gamma, grad_beta) for the cached batch."""
    gin = state.backward(gout)
    return gin, state.dgamma.copy(), state.dbeta.copy()
