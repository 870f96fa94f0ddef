"""Two-level U-net for per-pixel artifact / not-artifact prediction.

Channel plan for base width ``C``::

    D1a 1->C, D1b C->C, pool
    D2a C->2C, D2b 2C->2C, pool
    U1deconv 2C->2C (x2), concat D2b -> 4C, U1a 4C->2C, U1b 2C->2C
    U2deconv 2C->C (x2),  concat D1b -> 2C, U2a 2C->C,  U2b C->C
    head 1x1 C->2

3x3 convolutions are followed by ReLU; the transposed convolutions and the
head are linear.
"""
from __future__ import annotations

from collections import OrderedDict

import numpy as np

from . import imgcore
from .netcore import STANDARD, Concat, Conv2d, Deconv2, MaxPool2, Param, ReLU, ShapeError, weighted_softmax_ce

CONV_LAYERS = ("D1a", "D1b", "D2a", "D2b", "U1a", "U1b", "U2a", "U2b")
LAYER_ORDER = ("D1a", "D1b", "D2a", "D2b", "U1deconv", "U1a", "U1b", "U2deconv", "U2a", "U2b", "head")


def layer_shapes(c: int) -> "OrderedDict[str, tuple[int, ...]]":
    """Weight shape per layer: conv ``(out, in, k, k)``, deconv ``(in, out, 2, 2)``."""
    if c < 1:
        raise ValueError("base channel count must be >= 1")
    return OrderedDict([
        ("D1a", (c, 1, 3, 3)),
        ("D1b", (c, c, 3, 3)),
        ("D2a", (2 * c, c, 3, 3)),
        ("D2b", (2 * c, 2 * c, 3, 3)),
        ("U1deconv", (2 * c, 2 * c, 2, 2)),
        ("U1a", (2 * c, 4 * c, 3, 3)),
        ("U1b", (2 * c, 2 * c, 3, 3)),
        ("U2deconv", (2 * c, c, 2, 2)),
        ("U2a", (c, 2 * c, 3, 3)),
        ("U2b", (c, c, 3, 3)),
        ("head", (2, c, 1, 1)),
    ])


def tensor_plan(c: int) -> "OrderedDict[str, tuple[int, ...]]":
    """Name -> shape for every stored tensor, in checkpoint order."""
    plan = OrderedDict()
    for name, shape in layer_shapes(c).items():
        out = shape[1] if name.endswith("deconv") else shape[0]
        plan[f"{name}.weight"] = shape
        plan[f"{name}.bias"] = (out,)
    return plan


def param_count(c: int) -> int:
    return int(sum(np.prod(s) for s in tensor_plan(c).values()))


class UNetParams(OrderedDict):
    """Ordered ``name -> Param`` mapping plus the base channel count."""

    def __init__(self, channels: int, items=()):
        super().__init__(items)
        self.channels = channels

    @property
    def dtype(self):
        return next(iter(self.values())).value.dtype

    def astype(self, dtype) -> "UNetParams":
        return UNetParams(self.channels, ((k, p.astype(dtype)) for k, p in self.items()))

    def copy(self) -> "UNetParams":
        return self.astype(self.dtype)

    def zero_grad(self) -> None:
        for p in self.values():
            p.zero_grad()

    def size(self) -> int:
        return sum(p.value.size for p in self.values())


def init_params(rng: np.random.Generator, c: int = 16, dtype=STANDARD) -> UNetParams:
    """He-normal weights (variance ``2 / fan_in``), zero biases.

    ``fan_in`` is ``in_channels * k * k`` for convolutions and ``in_channels``
    for the stride-2 transposed convolutions (each output pixel sees one tap
    per input channel).
    """
    params = UNetParams(c)
    for name, shape in layer_shapes(c).items():
        if name.endswith("deconv"):
            fan_in, out = shape[0], shape[1]
        else:
            fan_in, out = shape[1] * shape[2] * shape[3], shape[0]
        w = rng.standard_normal(shape) * np.sqrt(2.0 / fan_in)
        params[f"{name}.weight"] = Param(w.astype(dtype))
        params[f"{name}.bias"] = Param(np.zeros(out, dtype=dtype))
    return params


def to_input(images, dtype=STANDARD) -> np.ndarray:
    """uint8 rasters ``(n, h, w)`` or ``(h, w)`` -> ``(n, 1, h, w)`` with ink = 1, background = 0."""
    a = np.asarray(images)
    if a.ndim == 2:
        a = a[None]
    dt = np.dtype(dtype)
    return ((dt.type(255) - a.astype(dt)) / dt.type(255))[:, None]


def mask_to_labels(masks) -> np.ndarray:
    """Mask pixels 0 (artifact) -> label 1; 255 -> label 0."""
    return (np.asarray(masks) == imgcore.BLACK).astype(np.int64)


class UNet:
    def __init__(self, params: UNetParams):
        self.params = params
        c = params.channels
        conv = {n: Conv2d(params[f"{n}.weight"], params[f"{n}.bias"]) for n in CONV_LAYERS + ("head",)}
        self.conv = conv
        self.up1 = Deconv2(params["U1deconv.weight"], params["U1deconv.bias"])
        self.up2 = Deconv2(params["U2deconv.weight"], params["U2deconv.bias"])
        self.act = {n: ReLU() for n in CONV_LAYERS}
        self.pool1, self.pool2 = MaxPool2(), MaxPool2()
        self.cat1, self.cat2 = Concat(), Concat()
        self._c = c

    def _conv_relu(self, name: str, x: np.ndarray) -> np.ndarray:
        return self.act[name].forward(self.conv[name].forward(x))

    def _conv_relu_back(self, name: str, dy: np.ndarray) -> np.ndarray:
        return self.conv[name].backward(self.act[name].backward(dy))

    def forward(self, x: np.ndarray) -> np.ndarray:
        n, ch, h, w = x.shape
        c = self._c
        if ch != 1 or h % 4 or w % 4 or h < 4 or w < 4:
            raise ShapeError(f"expected (n, 1, h, w) with h, w divisible by 4, got {x.shape}")
        x = x.astype(self.params.dtype, copy=False)
        s1 = self._conv_relu("D1b", self._conv_relu("D1a", x))
        s2 = self._conv_relu("D2b", self._conv_relu("D2a", self.pool1.forward(s1)))
        assert s1.shape == (n, c, h, w) and s2.shape == (n, 2 * c, h // 2, w // 2)
        bottom = self.pool2.forward(s2)
        u1 = self.cat1.forward(self.up1.forward(bottom), s2)
        assert u1.shape == (n, 4 * c, h // 2, w // 2)
        u1 = self._conv_relu("U1b", self._conv_relu("U1a", u1))
        u2 = self.cat2.forward(self.up2.forward(u1), s1)
        assert u2.shape == (n, 2 * c, h, w)
        u2 = self._conv_relu("U2b", self._conv_relu("U2a", u2))
        return self.conv["head"].forward(u2)

    def backward(self, dlogits: np.ndarray) -> np.ndarray:
        """Accumulate parameter gradients; returns the gradient w.r.t. the input."""
        g = self.conv["head"].backward(dlogits)
        g = self._conv_relu_back("U2a", self._conv_relu_back("U2b", g))
        g_up2, g_s1 = self.cat2.backward(g)
        g = self.up2.backward(g_up2)
        g = self._conv_relu_back("U1a", self._conv_relu_back("U1b", g))
        g_up1, g_s2 = self.cat1.backward(g)
        g = self.pool2.backward(self.up1.backward(g_up1)) + g_s2
        g = self._conv_relu_back("D2a", self._conv_relu_back("D2b", g))
        g = self.pool1.backward(g) + g_s1
        return self._conv_relu_back("D1a", self._conv_relu_back("D1b", g))

    def loss_and_grad(self, x: np.ndarray, labels: np.ndarray, class_weights) -> float:
        loss, dlogits = weighted_softmax_ce(self.forward(x), labels, class_weights)
        self.backward(dlogits)
        return loss


def forward(params: UNetParams, batch: np.ndarray) -> np.ndarray:
    return UNet(params).forward(batch)


def logits_to_mask(logits: np.ndarray) -> np.ndarray:
    """``(n, 2, h, w)`` logits -> uint8 masks; ties resolve to not-artifact."""
    artifact = logits[:, 1] > logits[:, 0]
    return np.where(artifact, imgcore.BLACK, imgcore.WHITE).astype(np.uint8)


def predict_masks(params: UNetParams, images, batch_size: int = 64) -> np.ndarray:
    imgs = np.asarray(images)
    net = UNet(params)
    out = [logits_to_mask(net.forward(to_input(imgs[i:i + batch_size], params.dtype)))
           for i in range(0, len(imgs), batch_size)]
    return np.concatenate(out) if out else np.empty((0,) + imgs.shape[1:], np.uint8)


def predict_mask(params: UNetParams, image, canvas: tuple[int, int] = (imgcore.CANVAS_H, imgcore.CANVAS_W)) -> np.ndarray:
    img = imgcore.as_image(image)
    if img.shape != tuple(canvas):
        raise ShapeError(f"predict_mask expects a {canvas} raster, got {img.shape}")
    return predict_masks(params, img[None])[0]
