"""Layers with explicit forward/backward passes.

Every layer works on batches: images are ``(B, C, H, W)`` and vectors
``(B, N)``. ``forward`` caches what ``backward`` needs, so a layer instance
handles one forward/backward pair at a time.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..tensor import Xoshiro256, glorot_uniform_init


class LayerError(ValueError):
    pass


def same_padding(size: int, kernel: int, stride: int) -> tuple[int, int]:
    """(before, after) padding that makes the output ``ceil(size / stride)``."""
    rem = size % stride
    total = max(kernel - stride, 0) if rem == 0 else max(kernel - rem, 0)
    return total // 2, total - total // 2


def _conv_geometry(h: int, w: int, kernel: int, stride: int, padding: str):
    if padding == "same":
        ph, pw = same_padding(h, kernel, stride), same_padding(w, kernel, stride)
    elif padding == "valid":
        ph = pw = (0, 0)
    else:
        raise LayerError(f"padding must be 'same' or 'valid', got {padding!r}")
    hp, wp = h + sum(ph), w + sum(pw)
    if kernel > hp or kernel > wp:
        raise LayerError(f"kernel {kernel} larger than padded input {hp}x{wp}")
    return ph, pw, (hp - kernel) // stride + 1, (wp - kernel) // stride + 1


def _im2col(x, kernel, stride, ph, pw, ho, wo):
    xp = np.pad(x, ((0, 0), (0, 0), ph, pw))
    win = sliding_window_view(xp, (kernel, kernel), axis=(2, 3))[:, :, ::stride, ::stride][:, :, :ho, :wo]
    # (B, C, ho, wo, k, k) -> (B*ho*wo, C*k*k)
    b, c = x.shape[:2]
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(b * ho * wo, c * kernel * kernel)


def _col2im(cols, shape, kernel, stride, ph, pw, ho, wo):
    b, c, h, w = shape
    cols = cols.reshape(b, ho, wo, c, kernel, kernel)
    out = np.zeros((b, c, h + sum(ph), w + sum(pw)), dtype=cols.dtype)
    for i in range(kernel):
        for j in range(kernel):
            out[:, :, i:i + stride * ho:stride, j:j + stride * wo:stride] += cols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    return out[:, :, ph[0]:ph[0] + h, pw[0]:pw[0] + w]


class Layer:
    kind = "layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.penalty = 0.0

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dy: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def output_shape(self, shape: tuple[int, ...]) -> tuple[int, ...]:
        """Per-sample output shape (no batch axis)."""
        return shape

    def hyper(self) -> dict:
        return {}

    def __repr__(self):
        h = ", ".join(f"{k}={v}" for k, v in self.hyper().items())
        return f"{type(self).__name__}({h})"


class Conv2D(Layer):
    """Cross-correlation with stride and 'same'/'valid' padding."""

    kind = "conv2d"

    def __init__(self, in_channels, out_channels, kernel=4, stride=2, padding="same",
                 rng: Xoshiro256 | None = None, dtype=np.float32):
        super().__init__()
        self.in_channels, self.out_channels = in_channels, out_channels
        self.kernel, self.stride, self.padding = kernel, stride, padding
        rng = Xoshiro256(0) if rng is None else rng
        self.params["W"] = glorot_uniform_init((out_channels, in_channels, kernel, kernel), rng, dtype)
        self.params["b"] = np.zeros(out_channels, dtype=dtype)

    def hyper(self):
        return dict(in_channels=self.in_channels, out_channels=self.out_channels,
                    kernel=self.kernel, stride=self.stride, padding=self.padding)

    def output_shape(self, shape):
        c, h, w = shape
        if c != self.in_channels:
            raise LayerError(f"conv2d expects {self.in_channels} channels, got {c}")
        _, _, ho, wo = _conv_geometry(h, w, self.kernel, self.stride, self.padding)
        return self.out_channels, ho, wo

    def forward(self, x, training=False):
        b, c, h, w = x.shape
        if c != self.in_channels:
            raise LayerError(f"conv2d expects {self.in_channels} channels, got {c}")
        ph, pw, ho, wo = _conv_geometry(h, w, self.kernel, self.stride, self.padding)
        cols = _im2col(x, self.kernel, self.stride, ph, pw, ho, wo)
        wmat = self.params["W"].reshape(self.out_channels, -1)
        y = (cols @ wmat.T + self.params["b"]).reshape(b, ho, wo, self.out_channels)
        self._cache = (x.shape, cols, ph, pw, ho, wo)
        return np.ascontiguousarray(y.transpose(0, 3, 1, 2))

    def backward(self, dy):
        shape, cols, ph, pw, ho, wo = self._cache
        dyr = dy.transpose(0, 2, 3, 1).reshape(-1, self.out_channels)
        wmat = self.params["W"].reshape(self.out_channels, -1)
        self.grads["W"] = (dyr.T @ cols).reshape(self.params["W"].shape)
        self.grads["b"] = dy.sum(axis=(0, 2, 3))
        return _col2im(dyr @ wmat, shape, self.kernel, self.stride, ph, pw, ho, wo)


class Conv2DTranspose(Layer):
    """Adjoint of :class:`Conv2D`; with 'same' padding it upsamples by ``stride``.

    The weight has shape ``(in_channels, out_channels, k, k)``, i.e. the
    weight of the convolution mapping ``out_channels -> in_channels`` whose
    adjoint this layer computes.
    """

    kind = "conv2d_transpose"

    def __init__(self, in_channels, out_channels, kernel=4, stride=2, padding="same",
                 rng: Xoshiro256 | None = None, dtype=np.float32):
        super().__init__()
        self.in_channels, self.out_channels = in_channels, out_channels
        self.kernel, self.stride, self.padding = kernel, stride, padding
        rng = Xoshiro256(0) if rng is None else rng
        self.params["W"] = glorot_uniform_init((in_channels, out_channels, kernel, kernel), rng, dtype)
        self.params["b"] = np.zeros(out_channels, dtype=dtype)

    def hyper(self):
        return dict(in_channels=self.in_channels, out_channels=self.out_channels,
                    kernel=self.kernel, stride=self.stride, padding=self.padding)

    def _out_hw(self, h, w):
        if self.padding == "same":
            return h * self.stride, w * self.stride
        return (h - 1) * self.stride + self.kernel, (w - 1) * self.stride + self.kernel

    def output_shape(self, shape):
        c, h, w = shape
        if c != self.in_channels:
            raise LayerError(f"conv2d_transpose expects {self.in_channels} channels, got {c}")
        return (self.out_channels, *self._out_hw(h, w))

    def forward(self, x, training=False):
        b, c, h, w = x.shape
        if c != self.in_channels:
            raise LayerError(f"conv2d_transpose expects {self.in_channels} channels, got {c}")
        oh, ow = self._out_hw(h, w)
        ph, pw, ho, wo = _conv_geometry(oh, ow, self.kernel, self.stride, self.padding)
        if (ho, wo) != (h, w):
            raise LayerError(f"input {h}x{w} is not the conv image of a {oh}x{ow} output")
        xr = x.transpose(0, 2, 3, 1).reshape(-1, c)
        cols = xr @ self.params["W"].reshape(c, -1)
        y = _col2im(cols, (b, self.out_channels, oh, ow), self.kernel, self.stride, ph, pw, ho, wo)
        self._cache = (x.shape, xr, ph, pw, ho, wo)
        return y + self.params["b"][None, :, None, None]

    def backward(self, dy):
        shape, xr, ph, pw, ho, wo = self._cache
        b, c, h, w = shape
        dcols = _im2col(dy, self.kernel, self.stride, ph, pw, ho, wo)
        wmat = self.params["W"].reshape(c, -1)
        self.grads["W"] = (xr.T @ dcols).reshape(self.params["W"].shape)
        self.grads["b"] = dy.sum(axis=(0, 2, 3))
        dx = (dcols @ wmat.T).reshape(b, h, w, c)
        return np.ascontiguousarray(dx.transpose(0, 3, 1, 2))


class _Pool2D(Layer):
    def __init__(self, size=2):
        super().__init__()
        self.size = size

    def hyper(self):
        return dict(size=self.size)

    def output_shape(self, shape):
        c, h, w = shape
        return c, -(-h // self.size), -(-w // self.size)

    def _blocks(self, x, fill):
        s = self.size
        b, c, h, w = x.shape
        ho, wo = -(-h // s), -(-w // s)
        if (ho * s, wo * s) != (h, w):
            x = np.pad(x, ((0, 0), (0, 0), (0, ho * s - h), (0, wo * s - w)), constant_values=fill)
        blocks = x.reshape(b, c, ho, s, wo, s).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, ho, wo, s * s)
        return blocks, (b, c, h, w, ho, wo)

    def _unblock(self, blocks, geom):
        s = self.size
        b, c, h, w, ho, wo = geom
        x = blocks.reshape(b, c, ho, wo, s, s).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, ho * s, wo * s)
        return np.ascontiguousarray(x[:, :, :h, :w])


class MaxPool2D(_Pool2D):
    """Non-overlapping max pooling; ragged edges are padded with -inf."""

    kind = "maxpool2d"

    def forward(self, x, training=False):
        blocks, geom = self._blocks(x, -np.inf)
        idx = blocks.argmax(axis=-1)
        self._cache = (idx, geom, x.dtype)
        return np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]

    def backward(self, dy):
        idx, geom, dtype = self._cache
        out = np.zeros((*idx.shape, self.size * self.size), dtype=dtype)
        np.put_along_axis(out, idx[..., None], dy[..., None], axis=-1)
        return self._unblock(out, geom)


class AvgPool2D(_Pool2D):
    """Non-overlapping mean pooling; ragged windows average their real cells."""

    kind = "avgpool2d"

    def forward(self, x, training=False):
        blocks, geom = self._blocks(x, 0.0)
        ones, _ = self._blocks(np.ones((1, 1, *x.shape[2:]), dtype=x.dtype), 0.0)
        counts = ones.sum(axis=-1)
        self._cache = (geom, counts, x.dtype)
        return blocks.sum(axis=-1) / counts

    def backward(self, dy):
        geom, counts, dtype = self._cache
        spread = np.repeat((dy / counts)[..., None], self.size * self.size, axis=-1).astype(dtype)
        return self._unblock(spread, geom)


class Upsample2D(Layer):
    """Nearest-neighbour upsampling, optionally cropped to ``out_hw``."""

    kind = "upsample2d"

    def __init__(self, size=2, out_hw: tuple[int, int] | None = None):
        super().__init__()
        self.size = size
        self.out_hw = None if out_hw is None else tuple(out_hw)

    def hyper(self):
        return dict(size=self.size, out_hw=self.out_hw)

    def output_shape(self, shape):
        c, h, w = shape
        return (c, *(self.out_hw or (h * self.size, w * self.size)))

    def forward(self, x, training=False):
        s = self.size
        y = x.repeat(s, axis=2).repeat(s, axis=3)
        self._shape = x.shape
        if self.out_hw is not None:
            y = y[:, :, : self.out_hw[0], : self.out_hw[1]]
        return y

    def backward(self, dy):
        s = self.size
        b, c, h, w = self._shape
        full = np.zeros((b, c, h * s, w * s), dtype=dy.dtype)
        full[:, :, : dy.shape[2], : dy.shape[3]] = dy
        return full.reshape(b, c, h, s, w, s).sum(axis=(3, 5))


class Dense(Layer):
    """Affine map ``y = x W^T + b`` with ``W`` of shape ``(out, in)``."""

    kind = "dense"

    def __init__(self, in_features, out_features, rng: Xoshiro256 | None = None, dtype=np.float32):
        super().__init__()
        self.in_features, self.out_features = in_features, out_features
        rng = Xoshiro256(0) if rng is None else rng
        self.params["W"] = glorot_uniform_init((out_features, in_features), rng, dtype)
        self.params["b"] = np.zeros(out_features, dtype=dtype)

    def hyper(self):
        return dict(in_features=self.in_features, out_features=self.out_features)

    def output_shape(self, shape):
        if shape != (self.in_features,):
            raise LayerError(f"dense expects ({self.in_features},), got {shape}")
        return (self.out_features,)

    def forward(self, x, training=False):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise LayerError(f"dense expects (B, {self.in_features}) input, got {x.shape}")
        self._x = x
        return x @ self.params["W"].T + self.params["b"]

    def backward(self, dy):
        w = self.params["W"]
        gw = self.grads.get("W")
        if gw is None or gw.shape != w.shape or gw.dtype != w.dtype:
            gw = self.grads["W"] = np.empty_like(w)
        # the 8192x8192 case makes reusing the gradient buffer worthwhile
        np.matmul(dy.T, self._x, out=gw)
        self.grads["b"] = dy.sum(axis=0)
        return dy @ w


class Tanh(Layer):
    kind = "tanh"

    def forward(self, x, training=False):
        self._y = np.tanh(x)
        return self._y

    def backward(self, dy):
        return dy * (1.0 - self._y * self._y)


class Sigmoid(Layer):
    kind = "sigmoid"

    def forward(self, x, training=False):
        # split by sign so exp never overflows
        e = np.exp(-np.abs(x))
        self._y = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e)).astype(x.dtype)
        return self._y

    def backward(self, dy):
        return dy * self._y * (1.0 - self._y)


class Softmax(Layer):
    kind = "softmax"

    def __init__(self, axis=-1):
        super().__init__()
        self.axis = axis

    def hyper(self):
        return dict(axis=self.axis)

    def forward(self, x, training=False):
        if not -x.ndim <= self.axis < x.ndim:
            raise LayerError(f"softmax axis {self.axis} invalid for rank {x.ndim}")
        e = np.exp(x - x.max(axis=self.axis, keepdims=True))
        self._y = e / e.sum(axis=self.axis, keepdims=True)
        return self._y

    def backward(self, dy):
        y = self._y
        return y * (dy - (dy * y).sum(axis=self.axis, keepdims=True))


class Dropout(Layer):
    """Inverted dropout: survivors are scaled by ``1 / (1 - p)`` in training."""

    kind = "dropout"

    def __init__(self, p: float, rng: Xoshiro256 | None = None):
        super().__init__()
        if not 0.0 <= p < 1.0:
            raise LayerError(f"dropout probability must be in [0, 1), got {p}")
        self.p = p
        self.rng = Xoshiro256(0) if rng is None else rng

    def hyper(self):
        return dict(p=self.p)

    def forward(self, x, training=False):
        if not training or self.p == 0.0:
            self._mask = None
            return x
        keep = self.rng.random(x.shape) >= self.p
        self._mask = keep.astype(x.dtype) * x.dtype.type(1.0 / (1.0 - self.p))
        return x * self._mask

    def backward(self, dy):
        return dy if self._mask is None else dy * self._mask


class Flatten(Layer):
    kind = "flatten"

    def output_shape(self, shape):
        return (int(np.prod(shape)),)

    def forward(self, x, training=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._shape)


class Reshape(Layer):
    kind = "reshape"

    def __init__(self, shape: tuple[int, ...]):
        super().__init__()
        self.shape = tuple(shape)

    def hyper(self):
        return dict(shape=self.shape)

    def output_shape(self, shape):
        if int(np.prod(shape)) != int(np.prod(self.shape)):
            raise LayerError(f"cannot reshape {shape} to {self.shape}")
        return self.shape

    def forward(self, x, training=False):
        self._shape = x.shape
        return x.reshape(x.shape[0], *self.shape)

    def backward(self, dy):
        return dy.reshape(self._shape)
