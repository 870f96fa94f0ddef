"""Finite-difference verification of every layer and of the assembled network."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import netcore as nc
from .unet import UNet, init_params

LAYER_TOL = 1e-4
END_TO_END_TOL = 1e-3


@dataclass
class CheckResult:
    name: str
    error: float
    tolerance: float

    @property
    def ok(self) -> bool:
        return bool(np.isfinite(self.error) and self.error <= self.tolerance)


def _param(rng, *shape) -> nc.Param:
    return nc.Param(rng.standard_normal(shape))


def _off_kink(rng, shape, margin: float = 0.1) -> np.ndarray:
    return rng.uniform(margin, 1.0, shape) * rng.choice([-1.0, 1.0], shape)


def _distinct(rng, shape, gap: float = 0.01) -> np.ndarray:
    return rng.permutation(int(np.prod(shape))).reshape(shape) * gap


def end_to_end_error(rng: np.random.Generator, channels: int = 2, shape=(2, 1, 8, 16),
                     n_params: int = 20, eps: float = 1e-5) -> float:
    """Loss gradient of a tiny U-net checked on a random subsample of parameters."""
    params = init_params(rng, channels, dtype=nc.WIDE)
    for name, p in params.items():
        if name.endswith(".bias"):
            p.value[...] = 0.1 * rng.standard_normal(p.value.shape)
    net = UNet(params)
    x = rng.random(shape)
    labels = rng.integers(0, 2, (shape[0],) + shape[2:])
    weights = (0.6, 2.5)
    params.zero_grad()
    net.loss_and_grad(x, labels, weights)
    entries = [(name, i) for name, p in params.items() for i in range(p.value.size)]
    worst = 0.0
    for k in rng.choice(len(entries), size=min(n_params, len(entries)), replace=False):
        name, i = entries[k]
        flat = params[name].value.reshape(-1)
        analytic = params[name].grad.reshape(-1)[i]
        orig = flat[i]
        flat[i] = orig + eps
        lp, _ = nc.weighted_softmax_ce(net.forward(x), labels, weights)
        flat[i] = orig - eps
        lm, _ = nc.weighted_softmax_ce(net.forward(x), labels, weights)
        flat[i] = orig
        worst = max(worst, float(nc.rel_error(analytic, (lp - lm) / (2 * eps))))
    return worst


def run_all(seed: int = 0, eps: float = 1e-5) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    checks = [
        ("conv2d", lambda: nc.grad_check(nc.Conv2d(_param(rng, 3, 2, 3, 3), _param(rng, 3)),
                                         [rng.standard_normal((2, 2, 5, 7))], rng, eps)),
        ("conv2d_1x1", lambda: nc.grad_check(nc.Conv2d(_param(rng, 2, 3, 1, 1), _param(rng, 2)),
                                             [rng.standard_normal((2, 3, 4, 6))], rng, eps)),
        ("relu", lambda: nc.grad_check(nc.ReLU(), [_off_kink(rng, (2, 3, 4, 5))], rng, eps)),
        ("maxpool2", lambda: nc.grad_check(nc.MaxPool2(), [_distinct(rng, (2, 3, 4, 6))], rng, eps)),
        ("deconv2", lambda: nc.grad_check(nc.Deconv2(_param(rng, 2, 3, 2, 2), _param(rng, 3)),
                                          [rng.standard_normal((2, 2, 3, 4))], rng, eps)),
        ("concat", lambda: nc.grad_check(nc.Concat(), [rng.standard_normal((2, 2, 3, 4)),
                                                       rng.standard_normal((2, 3, 3, 4))], rng, eps)),
        ("weighted_softmax_ce", lambda: nc.grad_check(
            nc.SoftmaxCELayer(rng.integers(0, 2, (2, 4, 5)), (0.7, 3.0)),
            [rng.standard_normal((2, 2, 4, 5))], rng, eps)),
    ]
    results = [CheckResult(name, fn(), LAYER_TOL) for name, fn in checks]
    results.append(CheckResult("unet_end_to_end", end_to_end_error(rng, eps=eps), END_TO_END_TOL))
    return results
