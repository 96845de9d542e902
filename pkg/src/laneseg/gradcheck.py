"""Finite-difference verification of every backward pass.

Each check builds a small random problem, computes the analytic gradient
through the backward implementation, and compares against central
differences of the forward pass. Comparisons are meaningful in the default
64-bit mode; the float32 build switch makes the step size unusable.

The relative error is max|a - n| / max(max|a|, max|n|, eps), a global
max-norm ratio that tolerates exact zeros in either gradient.
"""

from dataclasses import dataclass

import numpy as np

from .layers import (
    ConvParams,
    conv2d_backward,
    conv2d_forward,
    maxpool2x2_backward,
    maxpool2x2_forward,
    relu_backward,
    relu_forward,
    softmax2_backward,
    softmax2_forward,
    unpool2x2_backward,
    unpool2x2_forward,
    _windows,
)
from .model import NetworkConfig, backward, build_network, forward
from .tensor import Rng
from .training import mse_loss

DEFAULT_STEP = 1e-5
DEFAULT_THRESHOLD = 1e-4
LAYER_NAMES = ("conv", "relu", "maxpool", "unpool", "softmax_mse", "network")


@dataclass
class CheckResult:
    layer: str
    max_rel_error: float
    threshold: float

    @property
    def passed(self):
        return self.max_rel_error < self.threshold


def numerical_gradient(f, x, step=DEFAULT_STEP):
    """Central-difference gradient of the scalar f() w.r.t. the array x.

    x is perturbed in place one entry at a time and restored; f must read
    the same array object on every call.
    """
    grad = np.zeros_like(x)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + step
        hi = f()
        flat[i] = orig - step
        lo = f()
        flat[i] = orig
        gflat[i] = (hi - lo) / (2.0 * step)
    return grad


def max_rel_error(analytic, numeric):
    scale = max(float(np.max(np.abs(analytic))), float(np.max(np.abs(numeric))), 1e-12)
    return float(np.max(np.abs(analytic - numeric))) / scale


def _f64(a):
    return np.asarray(a, dtype=np.float64)


def _check_conv(rng, step, perturb):
    x = _f64(rng.normal((2, 2, 6, 8)))
    p = ConvParams(weights=_f64(rng.normal((3, 2, 3, 3), 0.5)),
                   bias=_f64(rng.normal((3,), 0.5)), pad=1)
    proj = _f64(rng.normal((2, 3, 6, 8)))

    def loss():
        y, _ = conv2d_forward(x, p)
        return float(np.sum(y * proj))

    _, cache = conv2d_forward(x, p)
    grad_x, grad_w, grad_b = conv2d_backward(proj, cache, p)
    if perturb == "weights":
        grad_w = grad_w * (1.0 + 1e-3)
    err = max(
        max_rel_error(grad_x, numerical_gradient(loss, x, step)),
        max_rel_error(grad_w, numerical_gradient(loss, p.weights, step)),
        max_rel_error(grad_b, numerical_gradient(loss, p.bias, step)),
    )
    return err


def _check_relu(rng, step):
    # Keep inputs away from the kink at 0 so finite differences are valid.
    mag = rng.uniform(0.1, 1.0, (2, 3, 6, 6))
    sign = np.where(rng.uniform(0.0, 1.0, (2, 3, 6, 6)) < 0.5, -1.0, 1.0)
    x = _f64(mag * sign)
    proj = _f64(rng.normal((2, 3, 6, 6)))

    def loss():
        y, _ = relu_forward(x)
        return float(np.sum(y * proj))

    _, cache = relu_forward(x)
    analytic = relu_backward(proj, cache)
    return max_rel_error(analytic, numerical_gradient(loss, x, step))


def _check_maxpool(rng, step):
    x = _f64(rng.uniform(0.0, 1.0, (2, 3, 8, 8)))
    # Widen any near-tied window so the argmax cannot flip under the step.
    win = _windows(x)
    arg = np.argmax(win, axis=-1)[..., None]
    top = np.take_along_axis(win, arg, axis=-1)[..., 0]
    second = np.sort(win, axis=-1)[..., -2]
    bump = np.where(top - second < 1e-3, 0.5, 0.0)
    np.put_along_axis(win, arg, (top + bump)[..., None], axis=-1)
    x = _f64(_from_windows_like(win, x.shape))
    proj = _f64(rng.normal((2, 3, 4, 4)))

    def loss():
        y, _, _ = maxpool2x2_forward(x)
        return float(np.sum(y * proj))

    _, idx, _ = maxpool2x2_forward(x)
    analytic = maxpool2x2_backward(proj, idx)
    return max_rel_error(analytic, numerical_gradient(loss, x, step))


def _from_windows_like(win, shape):
    n, c, h, w = shape
    return (win.reshape(n, c, h // 2, w // 2, 2, 2)
               .transpose(0, 1, 2, 4, 3, 5)
               .reshape(n, c, h, w))


def _check_unpool(rng, step):
    v = _f64(rng.uniform(0.5, 1.5, (2, 3, 4, 4)))
    idx = np.floor(rng.uniform(0.0, 4.0, (2, 3, 4, 4))).astype(np.uint8)
    idx = np.minimum(idx, 3)
    proj = _f64(rng.normal((2, 3, 8, 8)))

    def loss():
        return float(np.sum(unpool2x2_forward(v, idx) * proj))

    analytic = unpool2x2_backward(proj, idx)
    return max_rel_error(analytic, numerical_gradient(loss, v, step))


def _check_softmax_mse(rng, step):
    logits = _f64(rng.normal((2, 2, 4, 4)))
    lane = rng.uniform(0.0, 1.0, (2, 4, 4)) < 0.5
    target = np.stack([1.0 - lane, lane.astype(np.float64)], axis=1).astype(np.float64)

    def loss():
        probs, _ = softmax2_forward(logits)
        value, _ = mse_loss(probs, target)
        return value

    probs, cache = softmax2_forward(logits)
    _, grad_probs = mse_loss(probs, target)
    analytic = softmax2_backward(grad_probs, cache)
    return max_rel_error(analytic, numerical_gradient(loss, logits, step))


def _check_network(rng, step):
    cfg = NetworkConfig(input_dims=(2, 8, 16), encoder_filters=(4, 8))
    net = build_network(cfg, rng.child(1))
    for p in net.convs:
        p.weights = _f64(p.weights)
        p.bias = _f64(p.bias)
    x = _f64(rng.uniform(0.0, 1.0, (2, 2, 8, 16)))
    lane = rng.uniform(0.0, 1.0, (2, 8, 16)) < 0.5
    target = np.stack([1.0 - lane, lane.astype(np.float64)], axis=1).astype(np.float64)

    def loss():
        probs, _ = forward(net, x)
        value, _ = mse_loss(probs, target)
        return value

    probs, caches = forward(net, x)
    _, grad_probs = mse_loss(probs, target)
    grads = backward(net, caches, grad_probs)
    worst = 0.0
    for p, (gw, gb) in zip(net.convs, grads):
        worst = max(worst, max_rel_error(gw, numerical_gradient(loss, p.weights, step)))
        worst = max(worst, max_rel_error(gb, numerical_gradient(loss, p.bias, step)))
    return worst


def run_gradcheck(seed=0, step=DEFAULT_STEP, threshold=DEFAULT_THRESHOLD,
                  perturb=None):
    """Run every layer check plus the composed network; returns CheckResults.

    perturb="weights" deliberately skews one analytic gradient so the
    harness itself can be shown to catch a wrong backward pass.
    """
    rng = Rng(seed)
    checks = [
        CheckResult("conv", _check_conv(rng.child(11), step, perturb), threshold),
        CheckResult("relu", _check_relu(rng.child(12), step), threshold),
        CheckResult("maxpool", _check_maxpool(rng.child(13), step), threshold),
        CheckResult("unpool", _check_unpool(rng.child(14), step), threshold),
        CheckResult("softmax_mse", _check_softmax_mse(rng.child(15), step), threshold),
        CheckResult("network", _check_network(rng.child(16), step), threshold),
    ]
    return checks
