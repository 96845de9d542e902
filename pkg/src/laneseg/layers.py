"""Forward and backward kernels for every layer kind the network uses.

All ops are pure functions: forward passes return their output plus the
cache the matching backward pass needs. Tensors are (n, c, h, w) numpy
arrays; pooling indices are window-local flat positions in {0, 1, 2, 3}
(row-major within each 2x2 window).
"""

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation
from .tensor import pad2d, crop2d


@dataclass
class ConvParams:
    """Weights (c_out, c_in, k, k) and bias (c_out,) of one convolution.

    Stride is fixed at 1; pad = (k - 1) / 2 keeps spatial dims unchanged,
    which requires k odd.
    """

    weights: np.ndarray
    bias: np.ndarray
    pad: int

    def __post_init__(self):
        c_out, c_in, kh, kw = self.weights.shape
        if kh != kw or kh % 2 == 0:
            raise ContractViolation(f"kernel must be square with odd size, got {kh}x{kw}")
        if self.bias.shape != (c_out,):
            raise ContractViolation(
                f"bias length {self.bias.shape} does not match c_out {c_out}")
        if self.pad != (kh - 1) // 2:
            raise ContractViolation(f"pad must be (k-1)/2 = {(kh - 1) // 2}, got {self.pad}")

    @property
    def kernel_size(self):
        return self.weights.shape[2]

    @property
    def c_in(self):
        return self.weights.shape[1]

    @property
    def c_out(self):
        return self.weights.shape[0]


@dataclass
class ConvCache:
    x_padded: np.ndarray
    x_shape: tuple


@dataclass
class ReluCache:
    x: np.ndarray


@dataclass
class PoolCache:
    x_shape: tuple


@dataclass
class SoftmaxCache:
    probs: np.ndarray


def conv2d_forward(x, p):
    """Same-size cross-correlation: y[n,o,i,j] = sum_w(weights * padded x) + bias[o].

    Accumulation order is pinned (c_in outer, then kernel rows, then cols)
    so the output is bitwise-equal to the naive nested-loop reference.
    """
    n, c, h, w = x.shape
    if c != p.c_in:
        raise ContractViolation(
            f"channel axis mismatch: input has {c} channels, conv expects {p.c_in}")
    k = p.kernel_size
    xp = pad2d(x, p.pad)
    y = np.zeros((n, p.c_out, h, w), dtype=x.dtype)
    for ci in range(p.c_in):
        for ki in range(k):
            for kj in range(k):
                y += p.weights[None, :, ci, ki, kj, None, None] \
                    * xp[:, None, ci, ki:ki + h, kj:kj + w]
    y += p.bias[None, :, None, None]
    return y, ConvCache(x_padded=xp, x_shape=x.shape)


def conv2d_backward(grad_y, cache, p):
    """Exact partials of sum(grad_y * y) w.r.t. input, weights, and bias."""
    n, c, h, w = cache.x_shape
    if grad_y.shape != (n, p.c_out, h, w):
        raise ContractViolation(
            f"grad_y shape {grad_y.shape} does not match forward output "
            f"{(n, p.c_out, h, w)}")
    k = p.kernel_size
    xp = cache.x_padded
    grad_b = grad_y.sum(axis=(0, 2, 3))
    grad_w = np.empty_like(p.weights)
    grad_xp = np.zeros_like(xp)
    for ki in range(k):
        for kj in range(k):
            window = xp[:, :, ki:ki + h, kj:kj + w]
            # (c_out, c_in) contraction over batch and space
            grad_w[:, :, ki, kj] = np.tensordot(grad_y, window, axes=([0, 2, 3], [0, 2, 3]))
            spread = np.tensordot(grad_y, p.weights[:, :, ki, kj], axes=([1], [0]))
            grad_xp[:, :, ki:ki + h, kj:kj + w] += spread.transpose(0, 3, 1, 2)
    grad_x = crop2d(grad_xp, p.pad)
    return grad_x, grad_w, grad_b


def relu_forward(x):
    return np.maximum(x, 0), ReluCache(x=x)


def relu_backward(grad_y, cache):
    """Pass gradient where the forward input was positive; 0 at and below 0."""
    if grad_y.shape != cache.x.shape:
        raise ContractViolation(
            f"grad_y shape {grad_y.shape} does not match forward input {cache.x.shape}")
    return grad_y * (cache.x > 0)


def _windows(x):
    """View the spatial dims as (h/2, w/2) windows of 4, row-major in-window."""
    n, c, h, w = x.shape
    return (x.reshape(n, c, h // 2, 2, w // 2, 2)
             .transpose(0, 1, 2, 4, 3, 5)
             .reshape(n, c, h // 2, w // 2, 4))


def _from_windows(win):
    n, c, hh, hw, _ = win.shape
    return (win.reshape(n, c, hh, hw, 2, 2)
               .transpose(0, 1, 2, 4, 3, 5)
               .reshape(n, c, hh * 2, hw * 2))


def maxpool2x2_forward(x):
    """2x2 max pooling with recorded argmax positions.

    Ties break toward the lowest window-local flat index, which makes the
    unpool/pool roundtrip exact.
    """
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ContractViolation(f"spatial dims must be even for 2x2 pooling, got {h}x{w}")
    win = _windows(x)
    idx = np.argmax(win, axis=-1).astype(np.uint8)
    y = np.take_along_axis(win, idx[..., None].astype(np.intp), axis=-1)[..., 0]
    return y, idx, PoolCache(x_shape=x.shape)


def maxpool2x2_backward(grad_y, idx):
    """Route each gradient to its recorded argmax position; zeros elsewhere."""
    if grad_y.shape != idx.shape:
        raise ContractViolation(
            f"grad_y shape {grad_y.shape} does not match indices shape {idx.shape}")
    return _scatter_to_windows(grad_y, idx)


def unpool2x2_forward(y, idx):
    """Place each value at its recorded window position; zeros elsewhere."""
    if y.shape != idx.shape:
        raise ContractViolation(
            f"input shape {y.shape} does not match indices shape {idx.shape}")
    return _scatter_to_windows(y, idx)


def unpool2x2_backward(grad_y, idx):
    """Adjoint of placement: gather the upstream gradient at each recorded index."""
    n, c, h, w = grad_y.shape
    if (n, c, h // 2, w // 2) != idx.shape or h % 2 or w % 2:
        raise ContractViolation(
            f"grad_y shape {grad_y.shape} is not double the indices shape {idx.shape}")
    win = _windows(grad_y)
    return np.take_along_axis(win, idx[..., None].astype(np.intp), axis=-1)[..., 0]


def _scatter_to_windows(values, idx):
    win = np.zeros(values.shape + (4,), dtype=values.dtype)
    np.put_along_axis(win, idx[..., None].astype(np.intp), values[..., None], axis=-1)
    return _from_windows(win)


def softmax2_forward(logits):
    """Per-pixel softmax over the channel axis, stabilized by max subtraction."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    probs = e / e.sum(axis=1, keepdims=True)
    return probs, SoftmaxCache(probs=probs)


def softmax2_backward(grad_probs, cache):
    """Jacobian-vector product of the per-pixel softmax."""
    p = cache.probs
    if grad_probs.shape != p.shape:
        raise ContractViolation(
            f"grad_probs shape {grad_probs.shape} does not match probs {p.shape}")
    inner = (grad_probs * p).sum(axis=1, keepdims=True)
    return p * (grad_probs - inner)
