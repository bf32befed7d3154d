"""Layer kernels with explicit forward/backward passes.

Tensors are numpy arrays in N x C x H x W layout.  Each layer caches what
its backward pass needs; ``backward`` returns dL/dinput and accumulates
into the ``grad`` of its parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeMismatch


@dataclass
class Parameter:
    name: str
    value: np.ndarray
    grad: np.ndarray = None

    def __post_init__(self):
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        if self.grad.shape != self.value.shape:
            raise ShapeMismatch(f"{self.name}: grad {self.grad.shape} != value {self.value.shape}")

    def zero_grad(self):
        self.grad[...] = 0


def _pair(v):
    if isinstance(v, (tuple, list)):
        return int(v[0]), int(v[1])
    return int(v), int(v)


def conv_output_size(n, k, stride, pad):
    """Floor-mode output extent ``(n + 2*pad - k) // stride + 1``."""
    return (n + 2 * pad - k) // stride + 1


def _conv_shapes(x, w, stride, pad):
    if x.ndim != 4 or w.ndim != 4:
        raise ShapeMismatch(f"conv2d expects 4-D input and weights, got {x.shape}, {w.shape}")
    n, c, h, wd = x.shape
    f, cw, kh, kw = w.shape
    if c != cw:
        raise ShapeMismatch(f"input has {c} channels, weights expect {cw}")
    ho, wo = conv_output_size(h, kh, stride, pad), conv_output_size(wd, kw, stride, pad)
    if ho < 1 or wo < 1 or stride < 1 or pad < 0:
        raise ShapeMismatch(f"conv {kh}x{kw} s{stride} p{pad} does not fit input {h}x{wd}")
    return n, c, h, wd, f, kh, kw, ho, wo


def conv2d_naive(x, w, b, stride=1, pad=0):
    """Reference cross-correlation by explicit loops over output positions."""
    n, c, h, wd, f, kh, kw, ho, wo = _conv_shapes(x, w, stride, pad)
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    out = np.zeros((n, f, ho, wo), dtype=x.dtype)
    for i in range(n):
        for j in range(f):
            for r in range(ho):
                for s in range(wo):
                    acc = 0.0
                    patch = xp[i, :, r * stride:r * stride + kh, s * stride:s * stride + kw]
                    for ch in range(c):
                        for u in range(kh):
                            for v in range(kw):
                                acc += float(patch[ch, u, v]) * float(w[j, ch, u, v])
                    out[i, j, r, s] = acc + float(b[j])
    return out


def im2col(x, kh, kw, stride, pad):
    """Patch matrix of shape (N*Ho*Wo, C*kh*kw), rows ordered (n, ho, wo)."""
    n, c, h, wd = x.shape
    ho, wo = conv_output_size(h, kh, stride, pad), conv_output_size(wd, kw, stride, pad)
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    win = sliding_window_view(xp, (kh, kw), axis=(2, 3))
    win = win[:, :, :stride * (ho - 1) + 1:stride, :stride * (wo - 1) + 1:stride]
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * ho * wo, c * kh * kw)


def col2im(cols, x_shape, kh, kw, stride, pad):
    """Adjoint of ``im2col``: scatter-add patch rows back onto the input grid."""
    n, c, h, wd = x_shape
    ho, wo = conv_output_size(h, kh, stride, pad), conv_output_size(wd, kw, stride, pad)
    cols = cols.reshape(n, ho, wo, c, kh, kw).transpose(0, 3, 4, 5, 1, 2)
    dxp = np.zeros((n, c, h + 2 * pad, wd + 2 * pad), dtype=cols.dtype)
    for u in range(kh):
        for v in range(kw):
            dxp[:, :, u:u + stride * ho:stride, v:v + stride * wo:stride] += cols[:, :, u, v]
    return dxp[:, :, pad:pad + h, pad:pad + wd]


def conv2d_forward(x, w, b, stride=1, pad=0):
    n, c, h, wd, f, kh, kw, ho, wo = _conv_shapes(x, w, stride, pad)
    cols = im2col(x, kh, kw, stride, pad)
    # accumulate in double and round once, so single-precision outputs do not
    # pick up summation error where the products nearly cancel
    acc = np.promote_types(x.dtype, np.float64)
    out = cols.astype(acc) @ w.reshape(f, -1).T.astype(acc) + b
    out = np.ascontiguousarray(out.reshape(n, ho, wo, f).transpose(0, 3, 1, 2), dtype=np.result_type(x, w))
    return out, (x.shape, cols, w, stride, pad)


def conv2d_backward(dout, cache):
    x_shape, cols, w, stride, pad = cache
    f, _, kh, kw = w.shape
    d2 = dout.transpose(0, 2, 3, 1).reshape(-1, f)
    dw = (d2.T @ cols).reshape(w.shape)
    db = d2.sum(axis=0)
    dx = col2im(d2 @ w.reshape(f, -1), x_shape, kh, kw, stride, pad)
    return dx, dw, db


def pool_forward(x, mode, window, stride):
    """Max or average pooling without padding; windows must tile exactly."""
    kh, kw = _pair(window)
    sh, sw = _pair(stride)
    if x.ndim != 4:
        raise ShapeMismatch(f"pool expects N x C x H x W input, got {x.shape}")
    h, w = x.shape[2:]
    if h < kh or w < kw or (h - kh) % sh or (w - kw) % sw:
        raise ShapeMismatch(f"pool {kh}x{kw} s{sh}x{sw} does not tile {h}x{w}")
    ho, wo = (h - kh) // sh + 1, (w - kw) // sw + 1
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
    flat = win.reshape(*win.shape[:4], kh * kw)
    if mode == "max":
        # argmax returns the first maximum: lowest linear index wins ties
        arg = flat.argmax(axis=-1)
        out = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    elif mode == "avg":
        arg = None
        out = flat.mean(axis=-1, dtype=x.dtype)
    else:
        raise ValueError(f"pool mode must be 'max' or 'avg', got {mode!r}")
    assert out.shape[2:] == (ho, wo)
    return np.ascontiguousarray(out), (x.shape, mode, (kh, kw), (sh, sw), arg)


def pool_backward(dout, cache):
    x_shape, mode, (kh, kw), (sh, sw), arg = cache
    n, c, ho, wo = dout.shape
    if mode == "max":
        dwin = np.zeros((n, c, ho, wo, kh * kw), dtype=dout.dtype)
        np.put_along_axis(dwin, arg[..., None], dout[..., None], axis=-1)
    else:
        dwin = np.broadcast_to((dout / dout.dtype.type(kh * kw))[..., None], (n, c, ho, wo, kh * kw))
    dwin = dwin.reshape(n, c, ho, wo, kh, kw)
    dx = np.zeros(x_shape, dtype=dout.dtype)
    for u in range(kh):
        for v in range(kw):
            dx[:, :, u:u + sh * ho:sh, v:v + sw * wo:sw] += dwin[..., u, v]
    return dx


def affine_forward(x, w, b):
    x2 = x.reshape(x.shape[0], -1)
    if x2.shape[1] != w.shape[1] or b.shape != (w.shape[0],):
        raise ShapeMismatch(f"affine: input {x2.shape[1]} features, weights {w.shape}, bias {b.shape}")
    return x2 @ w.T + b, (x.shape, x2, w)


def affine_backward(dout, cache):
    x_shape, x2, w = cache
    return (dout @ w).reshape(x_shape), dout.T @ x2, dout.sum(axis=0)


def relu_forward(x):
    mask = x > 0
    return np.where(mask, x, x.dtype.type(0)), mask


def relu_backward(dout, mask):
    return np.where(mask, dout, dout.dtype.type(0))


def dropout_forward(x, p, train, rng=None):
    """Inverted dropout; identity in eval mode or when ``p == 0``."""
    if not 0.0 <= p < 1.0:
        raise ValueError(f"dropout p must lie in [0, 1), got {p}")
    if not train or p == 0.0:
        return x, None
    keep = rng.random(x.shape) >= p
    scale = (keep / (1.0 - p)).astype(x.dtype)
    return x * scale, scale


def dropout_backward(dout, scale):
    return dout if scale is None else dout * scale


# ---------------------------------------------------------------- layer objects

class Layer:
    kind = None
    params = ()

    def forward(self, x, train=False, rng=None):
        raise NotImplementedError

    def backward(self, dout):
        raise NotImplementedError

    def output_shape(self, shape):
        return shape


class Conv2D(Layer):
    kind = "conv"

    def __init__(self, name, in_channels, filters, kernel, stride=1, pad=0, dtype=np.float32):
        kh, kw = _pair(kernel)
        self.stride, self.pad = int(stride), int(pad)
        self.weight = Parameter(f"{name}.weight", np.zeros((filters, in_channels, kh, kw), dtype))
        self.bias = Parameter(f"{name}.bias", np.zeros(filters, dtype))
        self.params = (self.weight, self.bias)
        self._cache = None

    def forward(self, x, train=False, rng=None):
        out, cache = conv2d_forward(x, self.weight.value, self.bias.value, self.stride, self.pad)
        self._cache = cache if train else None
        return out

    def backward(self, dout):
        dx, dw, db = conv2d_backward(dout, self._cache)
        self.weight.grad += dw
        self.bias.grad += db
        return dx

    def output_shape(self, shape):
        c, h, w = shape
        f, cw, kh, kw = self.weight.value.shape
        if c != cw:
            raise ShapeMismatch(f"conv expects {cw} channels, got {c}")
        return (f, conv_output_size(h, kh, self.stride, self.pad),
                conv_output_size(w, kw, self.stride, self.pad))


class Pool(Layer):
    kind = "pool"

    def __init__(self, mode, window, stride):
        self.mode, self.window, self.stride = mode, _pair(window), _pair(stride)
        self._cache = None

    def forward(self, x, train=False, rng=None):
        out, cache = pool_forward(x, self.mode, self.window, self.stride)
        self._cache = cache if train else None
        return out

    def backward(self, dout):
        return pool_backward(dout, self._cache)

    def output_shape(self, shape):
        c, h, w = shape
        (kh, kw), (sh, sw) = self.window, self.stride
        if h < kh or w < kw or (h - kh) % sh or (w - kw) % sw:
            raise ShapeMismatch(f"pool {kh}x{kw} s{sh}x{sw} does not tile {h}x{w}")
        return (c, (h - kh) // sh + 1, (w - kw) // sw + 1)


class Affine(Layer):
    kind = "affine"

    def __init__(self, name, in_features, out_features, dtype=np.float32):
        self.weight = Parameter(f"{name}.weight", np.zeros((out_features, in_features), dtype))
        self.bias = Parameter(f"{name}.bias", np.zeros(out_features, dtype))
        self.params = (self.weight, self.bias)
        self._cache = None

    def forward(self, x, train=False, rng=None):
        out, cache = affine_forward(x, self.weight.value, self.bias.value)
        self._cache = cache if train else None
        return out

    def backward(self, dout):
        dx, dw, db = affine_backward(dout, self._cache)
        self.weight.grad += dw
        self.bias.grad += db
        return dx

    def output_shape(self, shape):
        features = int(np.prod(shape))
        if features != self.weight.value.shape[1]:
            raise ShapeMismatch(f"affine expects {self.weight.value.shape[1]} features, got {features}")
        return (self.weight.value.shape[0],)


class ReLU(Layer):
    kind = "relu"

    def forward(self, x, train=False, rng=None):
        out, mask = relu_forward(x)
        self._mask = mask if train else None
        return out

    def backward(self, dout):
        return relu_backward(dout, self._mask)


class Dropout(Layer):
    kind = "dropout"

    def __init__(self, p=0.5):
        self.p = float(p)
        self._scale = None

    def forward(self, x, train=False, rng=None):
        out, self._scale = dropout_forward(x, self.p, train, rng)
        return out

    def backward(self, dout):
        return dropout_backward(dout, self._scale)
