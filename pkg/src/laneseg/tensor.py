"""Dense rank-4 arrays and the seeded random source everything samples from.

A "tensor" throughout this package is a numpy array of shape
(batch, channels, height, width), row-major, batch outermost. Values are
real and finite; dtype defaults to float64 so gradient checks stay tight.
Set LANESEG_DTYPE=float32 before import for faster training builds.
"""

import os

import numpy as np

from .errors import ContractViolation

REAL_DTYPE = np.float32 if os.environ.get("LANESEG_DTYPE") == "float32" else np.float64


class Rng:
    """Deterministic random source: identical seed, identical stream.

    Not shareable across threads; derive an independent child per purpose
    instead (epoch shuffles, per-sample generation, ...).
    """

    def __init__(self, seed):
        self.seed = int(seed) % (1 << 64)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def normal(self, shape, sigma=1.0):
        return self._gen.normal(0.0, sigma, size=shape).astype(REAL_DTYPE, copy=False)

    def uniform(self, low, high, shape=None):
        return self._gen.uniform(low, high, size=shape)

    def permutation(self, n):
        return self._gen.permutation(n)

    def child(self, offset):
        """Independent Rng for a derived purpose; offset namespaces the stream."""
        return Rng((self.seed + int(offset)) % (1 << 64))


def as_tensor4(a, name="tensor"):
    """Validate and coerce an array-like into a (n, c, h, w) tensor."""
    t = np.asarray(a, dtype=REAL_DTYPE)
    if t.ndim != 4:
        raise ContractViolation(f"{name}: expected 4 dims (n, c, h, w), got shape {t.shape}")
    if min(t.shape) <= 0:
        raise ContractViolation(f"{name}: all dims must be positive, got shape {t.shape}")
    if not np.all(np.isfinite(t)):
        raise ContractViolation(f"{name}: contains non-finite values")
    return t


def pad2d(t, pad):
    """Zero-pad the two spatial dims by `pad` on every side."""
    if pad < 0:
        raise ContractViolation(f"pad must be >= 0, got {pad}")
    if pad == 0:
        return t
    return np.pad(t, ((0, 0), (0, 0), (pad, pad), (pad, pad)))


def crop2d(t, pad):
    """Inverse of pad2d: drop a margin of `pad` from the spatial borders."""
    if pad < 0:
        raise ContractViolation(f"pad must be >= 0, got {pad}")
    if pad == 0:
        return t
    return t[:, :, pad:-pad, pad:-pad]


def sample_gaussian(rng, dims, sigma):
    """Tensor of i.i.d. zero-mean normal samples with standard deviation sigma."""
    if sigma <= 0:
        raise ContractViolation(f"sigma must be > 0, got {sigma}")
    n, c, h, w = dims
    if min(dims) <= 0:
        raise ContractViolation(f"all dims must be positive, got {dims}")
    return rng.normal((n, c, h, w), sigma)


def argmax_channel(t):
    """Per-pixel index of the maximal channel, shape (n, 1, h, w).

    Ties break toward the lowest channel index, so predictions are
    deterministic across platforms.
    """
    if t.shape[1] < 1:
        raise ContractViolation(f"need at least one channel, got shape {t.shape}")
    return np.argmax(t, axis=1, keepdims=True)
