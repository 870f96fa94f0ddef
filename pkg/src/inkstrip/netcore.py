"""Dense NCHW layers with hand-written forward/backward passes.

Tensors are plain numpy arrays shaped ``(n, c, h, w)``. The layer set is
exactly what the segmentation network needs: same-padded stride-1 convolution
(3x3 or 1x1), ReLU, 2x2 max pooling, 2x2 stride-2 transposed convolution,
channel concatenation and a class-weighted softmax cross-entropy.

Precision follows the input dtype: float32 for training, float64 for
gradient checks.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

STANDARD = np.float32
WIDE = np.float64


class ShapeError(ValueError):
    pass


@dataclass
class Param:
    value: np.ndarray
    grad: np.ndarray = field(default=None, repr=False)
    rms: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        if self.grad is None:
            self.grad = np.zeros_like(self.value)
        if self.rms is None:
            self.rms = np.zeros_like(self.value)
        if not (self.value.shape == self.grad.shape == self.rms.shape):
            raise ShapeError("value, grad and rms must share a shape")

    def zero_grad(self) -> None:
        self.grad[...] = 0

    def astype(self, dtype) -> "Param":
        return Param(self.value.astype(dtype), self.grad.astype(dtype), self.rms.astype(dtype))


# -- convolution (stride 1, same padding) -------------------------------------

def _padded_channel_major(x: np.ndarray, pad: int) -> tuple[np.ndarray, int, int]:
    n, c, h, w = x.shape
    hp, wp = h + 2 * pad, w + 2 * pad
    xp = np.zeros((c, n, hp, wp), dtype=x.dtype)
    xp[:, :, pad:pad + h, pad:pad + w] = x.transpose(1, 0, 2, 3)
    return xp.reshape(c, n * hp * wp), hp, wp


def conv2d(x: np.ndarray, w: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """Zero-padded ``k x k`` convolution (k odd) preserving spatial size.

    ``y[n,o,i,j] = b[o] + sum_{k,u,v} w[o,k,u,v] * x[n,k,i+u-p,j+v-p]``.
    """
    n, ic, h, wd = x.shape
    oc, wic, k, k2 = w.shape
    if wic != ic:
        raise ShapeError(f"conv2d: input has {ic} channels, kernel expects {wic}")
    if k != k2 or k % 2 == 0:
        raise ShapeError("conv2d: kernel must be square with odd size")
    pad = k // 2
    xf, hp, wp = _padded_channel_major(x, pad)
    # Every output pixel is a fixed flat offset into the padded buffer, so each
    # kernel tap is one matmul over a shifted view; reads never cross samples.
    length = xf.shape[1] - (k - 1) * (wp + 1)
    out = np.zeros((oc, xf.shape[1]), dtype=x.dtype)
    acc = out[:, :length]
    taps = np.ascontiguousarray(w.transpose(2, 3, 0, 1))
    for u in range(k):
        for v in range(k):
            off = u * wp + v
            acc += taps[u, v] @ xf[:, off:off + length]
    y = out.reshape(oc, n, hp, wp)[:, :, :h, :wd].transpose(1, 0, 2, 3)
    y = np.ascontiguousarray(y)
    if b is not None:
        y += b.reshape(1, -1, 1, 1)
    return y


def conv2d_backward(dy: np.ndarray, x: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Returns ``(dx, dw, db)`` for :func:`conv2d`."""
    n, ic, h, wd = x.shape
    oc, _, k, _ = w.shape
    pad = k // 2
    # adjoint of a same-padded stride-1 conv: swap channels, flip taps
    dx = conv2d(dy, w.transpose(1, 0, 2, 3)[:, :, ::-1, ::-1])
    xf, hp, wp = _padded_channel_major(x, pad)
    dyg = np.zeros((oc, n, hp, wp), dtype=dy.dtype)
    dyg[:, :, :h, :wd] = dy.transpose(1, 0, 2, 3)
    dyf = dyg.reshape(oc, -1)
    length = xf.shape[1] - (k - 1) * (wp + 1)
    dyl = dyf[:, :length]
    dw = np.empty((k, k, oc, ic), dtype=w.dtype)
    for u in range(k):
        for v in range(k):
            off = u * wp + v
            dw[u, v] = dyl @ xf[:, off:off + length].T
    return dx, np.ascontiguousarray(dw.transpose(2, 3, 0, 1)), dy.sum(axis=(0, 2, 3))


class Conv2d:
    def __init__(self, weight: Param, bias: Param):
        self.weight, self.bias = weight, bias
        self.x = None

    def params(self) -> list[Param]:
        return [self.weight, self.bias]

    def forward(self, x: np.ndarray) -> np.ndarray:
        self.x = x
        return conv2d(x, self.weight.value, self.bias.value)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        dx, dw, db = conv2d_backward(dy, self.x, self.weight.value)
        self.weight.grad += dw
        self.bias.grad += db
        return dx


# -- transposed convolution (2x2 kernel, stride 2) -----------------------------

def deconv2(x: np.ndarray, w: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """``y[n,o,2i+u,2j+v] = b[o] + sum_k x[n,k,i,j] * w[k,o,u,v]``; doubles h and w."""
    n, ic, h, wd = x.shape
    wic, oc, kh, kw = w.shape
    if wic != ic:
        raise ShapeError(f"deconv2: input has {ic} channels, kernel expects {wic}")
    if (kh, kw) != (2, 2):
        raise ShapeError("deconv2: kernel must be 2x2")
    xc = x.transpose(1, 0, 2, 3).reshape(ic, -1)
    yb = np.empty((oc, n, h, 2, wd, 2), dtype=x.dtype)
    taps = np.ascontiguousarray(w.transpose(2, 3, 1, 0))
    for u in range(2):
        for v in range(2):
            yb[:, :, :, u, :, v] = (taps[u, v] @ xc).reshape(oc, n, h, wd)
    y = np.ascontiguousarray(yb.reshape(oc, n, 2 * h, 2 * wd).transpose(1, 0, 2, 3))
    if b is not None:
        y += b.reshape(1, -1, 1, 1)
    return y


def deconv2_backward(dy: np.ndarray, x: np.ndarray, w: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    n, ic, h, wd = x.shape
    oc = w.shape[1]
    xc = x.transpose(1, 0, 2, 3).reshape(ic, -1)
    dyb = dy.transpose(1, 0, 2, 3).reshape(oc, n, h, 2, wd, 2)
    dxc = np.zeros_like(xc)
    dw = np.empty_like(w)
    taps = np.ascontiguousarray(w.transpose(2, 3, 0, 1))
    for u in range(2):
        for v in range(2):
            g = dyb[:, :, :, u, :, v].reshape(oc, -1)
            dxc += taps[u, v] @ g
            dw[:, :, u, v] = xc @ g.T
    dx = np.ascontiguousarray(dxc.reshape(ic, n, h, wd).transpose(1, 0, 2, 3))
    return dx, dw, dy.sum(axis=(0, 2, 3))


class Deconv2:
    def __init__(self, weight: Param, bias: Param):
        self.weight, self.bias = weight, bias
        self.x = None

    def params(self) -> list[Param]:
        return [self.weight, self.bias]

    def forward(self, x: np.ndarray) -> np.ndarray:
        self.x = x
        return deconv2(x, self.weight.value, self.bias.value)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        dx, dw, db = deconv2_backward(dy, self.x, self.weight.value)
        self.weight.grad += dw
        self.bias.grad += db
        return dx


# -- pointwise / structural ----------------------------------------------------

class ReLU:
    def __init__(self):
        self.on = None

    def params(self) -> list[Param]:
        return []

    def forward(self, x: np.ndarray) -> np.ndarray:
        self.on = x > 0
        return np.where(self.on, x, 0).astype(x.dtype, copy=False)

    def backward(self, dy: np.ndarray) -> np.ndarray:
        return np.where(self.on, dy, 0).astype(dy.dtype, copy=False)


class MaxPool2:
    """2x2 / stride 2 max pooling; ties go to the first cell in row-major order."""

    def __init__(self):
        self.argmax = None
        self.shape = None

    def params(self) -> list[Param]:
        return []

    def forward(self, x: np.ndarray) -> np.ndarray:
        n, c, h, w = x.shape
        if h % 2 or w % 2:
            raise ShapeError(f"maxpool2 needs even spatial dims, got {(h, w)}")
        win = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
        self.argmax = win.argmax(axis=-1)
        self.shape = x.shape
        return np.take_along_axis(win, self.argmax[..., None], axis=-1)[..., 0]

    def backward(self, dy: np.ndarray) -> np.ndarray:
        n, c, h, w = self.shape
        g = np.zeros((n, c, h // 2, w // 2, 4), dtype=dy.dtype)
        np.put_along_axis(g, self.argmax[..., None], dy[..., None], axis=-1)
        return np.ascontiguousarray(
            g.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h, w))


class Concat:
    """Channel concatenation ``[a, b]``; backward splits the gradient."""

    def __init__(self):
        self.split = None

    def params(self) -> list[Param]:
        return []

    def forward(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        if a.shape[0] != b.shape[0] or a.shape[2:] != b.shape[2:]:
            raise ShapeError(f"concat: incompatible shapes {a.shape} and {b.shape}")
        self.split = a.shape[1]
        return np.concatenate([a, b], axis=1)

    def backward(self, dy: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return np.ascontiguousarray(dy[:, :self.split]), np.ascontiguousarray(dy[:, self.split:])


def concat_channels(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return Concat().forward(a, b)


# -- loss ----------------------------------------------------------------------

def weighted_softmax_ce(logits: np.ndarray, labels: np.ndarray, class_weights) -> tuple[float, np.ndarray]:
    """Per-pixel class-weighted cross-entropy averaged over all ``n*h*w`` pixels.

    ``labels`` holds 0 (not-artifact) or 1 (artifact) per pixel. Returns the
    scalar loss and its exact gradient with respect to ``logits``.
    """
    wts = np.asarray(class_weights, dtype=logits.dtype)
    if np.any(wts <= 0):
        raise ValueError(f"class weights must be positive, got {class_weights}")
    n, k, h, w = logits.shape
    if labels.shape != (n, h, w):
        raise ShapeError(f"labels {labels.shape} do not match logits {logits.shape}")
    lab = labels.astype(np.intp)
    z = logits - logits.max(axis=1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=1, keepdims=True))
    logp = z - lse
    picked = np.take_along_axis(logp, lab[:, None], axis=1)[:, 0]
    wy = wts[lab]
    count = n * h * w
    loss = float(-(wy * picked).sum() / count)
    grad = np.exp(logp)
    onehot = np.zeros_like(grad)
    np.put_along_axis(onehot, lab[:, None], 1, axis=1)
    grad = (grad - onehot) * (wy / count)[:, None]
    return loss, grad.astype(logits.dtype, copy=False)


# -- verification ----------------------------------------------------------------

def rel_error(a, b) -> np.ndarray:
    a, b = np.asarray(a, dtype=WIDE), np.asarray(b, dtype=WIDE)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)


def grad_check(layer, inputs: list[np.ndarray], rng: np.random.Generator, eps: float = 1e-5,
               max_entries: int | None = None) -> float:
    """Largest relative error between analytic and central-difference gradients.

    ``layer`` exposes ``forward(*inputs)``, ``backward(dy)`` and ``params()``.
    The checked scalar is ``sum(forward(*inputs) * R)`` for a fixed random
    ``R``. Every input and parameter entry is probed unless ``max_entries``
    caps the count per tensor (then a random subset is used).
    """
    inputs = [np.array(x, dtype=WIDE) for x in inputs]
    for p in layer.params():
        if p.value.dtype != WIDE:
            raise TypeError("grad_check needs wide-precision (float64) parameters")
    y = layer.forward(*inputs)
    proj = rng.standard_normal(np.shape(y))

    def objective() -> float:
        return float(np.sum(np.asarray(layer.forward(*inputs)) * proj))

    for p in layer.params():
        p.zero_grad()
    layer.forward(*inputs)
    dxs = layer.backward(proj if np.ndim(y) else float(proj))
    if not isinstance(dxs, tuple):
        dxs = (dxs,)
    analytic = list(dxs) + [p.grad.copy() for p in layer.params()]
    targets = inputs + [p.value for p in layer.params()]

    worst = 0.0
    for arr, grad in zip(targets, analytic):
        flat = arr.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = rng.choice(flat.size, size=max_entries, replace=False)
        gflat = np.asarray(grad).reshape(-1)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + eps
            fp = objective()
            flat[i] = orig - eps
            fm = objective()
            flat[i] = orig
            num = (fp - fm) / (2 * eps)
            worst = max(worst, float(rel_error(gflat[i], num)))
    return worst


class SoftmaxCELayer:
    """Adapter exposing :func:`weighted_softmax_ce` through the layer protocol."""

    def __init__(self, labels: np.ndarray, class_weights):
        self.labels, self.class_weights = labels, class_weights
        self.dlogits = None

    def params(self) -> list[Param]:
        return []

    def forward(self, logits: np.ndarray) -> float:
        loss, self.dlogits = weighted_softmax_ce(logits, self.labels, self.class_weights)
        return loss

    def backward(self, dloss: float) -> np.ndarray:
        return self.dlogits * dloss
