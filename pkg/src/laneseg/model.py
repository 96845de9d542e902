"""Encoder-decoder network assembly, forward/backward passes, persistence.

The network is a stack of encoder blocks [conv, relu, maxpool2x2], the
mirrored stack of decoder blocks [unpool2x2, relu, conv] (block order
configurable, see NetworkConfig.decoder_order), and a classifier head
[conv to num_classes, per-pixel softmax]. Decoder unpooling at depth d
reuses the argmax indices recorded by the encoder pool at depth D-1-d.

Persistence splits a model into a JSON architecture document and a flat
little-endian binary weights file ("LSEG" format, one weights record and
one bias record per convolution, float32 values).
"""

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ConfigurationError,
    ContractViolation,
    ModelFormatError,
    ModelIOError,
    ModelShapeError,
    TruncatedWeightsError,
)
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
)
from .tensor import REAL_DTYPE, as_tensor4

DECODER_ORDERS = ("paper", "conventional")

WEIGHTS_MAGIC = b"LSEG"
WEIGHTS_VERSION = 1
ARCH_FORMAT_VERSION = 1
_HEADER = struct.Struct("<4sIII")
_RECORD = struct.Struct("<IIQ")
ROLE_WEIGHTS = 0
ROLE_BIAS = 1


@dataclass
class NetworkConfig:
    """Architecture description: what to build, independent of the values."""

    input_dims: tuple
    encoder_filters: tuple
    kernel_size: int = 3
    num_classes: int = 2
    decoder_order: str = "paper"

    def __post_init__(self):
        self.input_dims = tuple(int(d) for d in self.input_dims)
        self.encoder_filters = tuple(int(f) for f in self.encoder_filters)
        if len(self.input_dims) != 3 or any(d < 1 for d in self.input_dims):
            raise ConfigurationError(
                f"input_dims must be three positive ints (c, h, w), got {self.input_dims}")
        if not self.encoder_filters or any(f < 1 for f in self.encoder_filters):
            raise ConfigurationError(
                f"encoder_filters must be a non-empty list of positive counts, "
                f"got {self.encoder_filters}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigurationError(
                f"kernel_size must be odd and positive, got {self.kernel_size}")
        if self.num_classes < 2:
            raise ConfigurationError(f"num_classes must be at least 2, got {self.num_classes}")
        if self.decoder_order not in DECODER_ORDERS:
            raise ConfigurationError(
                f"decoder_order must be one of {DECODER_ORDERS}, got {self.decoder_order!r}")
        c, h, w = self.input_dims
        div = 1 << self.depth
        if h % div or w % div:
            raise ConfigurationError(
                f"input spatial dims {h}x{w} must both be divisible by {div} "
                f"(2^{self.depth} for {self.depth} pooling stages)")

    @property
    def depth(self):
        return len(self.encoder_filters)

    def conv_plan(self):
        """(c_in, c_out) per convolution: encoder stack, decoder stack, head.

        The decoder walks the filter list backwards; its last block keeps the
        first filter width, and the head maps that width to num_classes.
        """
        f = self.encoder_filters
        plan = []
        c = self.input_dims[0]
        for out in f:
            plan.append((c, out))
            c = out
        for i in range(self.depth):
            out = f[self.depth - 2 - i] if i < self.depth - 1 else f[0]
            plan.append((c, out))
            c = out
        plan.append((c, self.num_classes))
        return plan

    def to_document(self):
        return {
            "format_version": ARCH_FORMAT_VERSION,
            "input_dims": list(self.input_dims),
            "encoder_filters": list(self.encoder_filters),
            "kernel_size": self.kernel_size,
            "num_classes": self.num_classes,
            "decoder_order": self.decoder_order,
        }

    @classmethod
    def from_document(cls, doc):
        if not isinstance(doc, dict):
            raise ModelFormatError("architecture document must be a JSON object")
        if doc.get("format_version") != ARCH_FORMAT_VERSION:
            raise ModelFormatError(
                f"unsupported architecture format_version {doc.get('format_version')!r}, "
                f"expected {ARCH_FORMAT_VERSION}")
        missing = [k for k in ("input_dims", "encoder_filters", "kernel_size", "num_classes")
                   if k not in doc]
        if missing:
            raise ModelFormatError(f"architecture document missing fields: {missing}")
        return cls(
            input_dims=tuple(doc["input_dims"]),
            encoder_filters=tuple(doc["encoder_filters"]),
            kernel_size=int(doc["kernel_size"]),
            num_classes=int(doc["num_classes"]),
            decoder_order=doc.get("decoder_order", "paper"),
        )


def segnet_lite(input_dims=(3, 160, 320), decoder_order="paper"):
    """Default small architecture: 3 encoder blocks of 8/16/32 filters."""
    return NetworkConfig(input_dims=input_dims, encoder_filters=(8, 16, 32),
                         kernel_size=3, decoder_order=decoder_order)


@dataclass
class Network:
    """A built model: config plus one ConvParams per convolution.

    convs order: encoder convs shallow to deep, decoder convs deep to
    shallow, classifier head last (2*depth + 1 in total).
    """

    config: NetworkConfig
    convs: list

    def __post_init__(self):
        expected = self.config.conv_plan()
        if len(self.convs) != len(expected):
            raise ContractViolation(
                f"network needs {len(expected)} convolutions, got {len(self.convs)}")
        for p, (c_in, c_out) in zip(self.convs, expected):
            if (p.c_in, p.c_out) != (c_in, c_out):
                raise ContractViolation(
                    f"convolution channels {(p.c_in, p.c_out)} do not match "
                    f"plan entry {(c_in, c_out)}")
        _check_mirror_pairing(self.config)

    @property
    def depth(self):
        return self.config.depth

    def encoder_convs(self):
        return self.convs[:self.depth]

    def decoder_convs(self):
        return self.convs[self.depth:2 * self.depth]

    def head_conv(self):
        return self.convs[2 * self.depth]


def _check_mirror_pairing(cfg):
    """Structural check that each decoder unpool can consume its mirror's indices.

    The unpool at decoder depth d receives the output of the previous decoder
    conv; its channel count must equal the encoder pool at depth D-1-d.
    """
    f = cfg.encoder_filters
    d = cfg.depth
    carried = f[d - 1]
    for i in range(d):
        pooled_channels = f[d - 1 - i]
        if carried != pooled_channels:
            raise ConfigurationError(
                f"decoder block {i} carries {carried} channels but the mirrored "
                f"encoder pool {d - 1 - i} recorded {pooled_channels}")
        carried = f[d - 2 - i] if i < d - 1 else f[0]


def num_params(net):
    return sum(p.weights.size + p.bias.size for p in net.convs)


def xavier_sigma(kernel_size, c_in):
    """Zero-mean Gaussian std from variance 1/N with N = fan-in = k*k*c_in."""
    return 1.0 / math.sqrt(kernel_size * kernel_size * c_in)


def build_network(cfg, rng):
    """Allocate and initialize every convolution of the architecture.

    Weights are Gaussian with variance 1/fan-in, rounded to float32 so a
    freshly built model survives a save/load roundtrip bit-for-bit; biases
    start at zero.
    """
    k = cfg.kernel_size
    pad = (k - 1) // 2
    convs = []
    for c_in, c_out in cfg.conv_plan():
        sigma = xavier_sigma(k, c_in)
        w = rng.normal((c_out, c_in, k, k), sigma)
        w = w.astype(np.float32).astype(REAL_DTYPE)
        b = np.zeros(c_out, dtype=REAL_DTYPE)
        convs.append(ConvParams(weights=w, bias=b, pad=pad))
    return Network(config=cfg, convs=convs)


@dataclass
class ForwardCaches:
    """Everything backward() needs, in forward order."""

    net_token: int
    encoder: list = field(default_factory=list)  # (ConvCache, ReluCache, idx)
    decoder: list = field(default_factory=list)  # (stage1_cache, stage2_cache)
    head: tuple = None                           # (ConvCache, SoftmaxCache)


def forward(net, x):
    """Full pass input -> per-pixel class probabilities.

    Returns (probs, caches); probs has shape (n, num_classes, h, w) and sums
    to 1 across channels at every pixel.
    """
    cfg = net.config
    x = as_tensor4(x, "input")
    if x.shape[1:] != cfg.input_dims:
        raise ContractViolation(
            f"input dims {x.shape[1:]} do not match configured {cfg.input_dims}")
    caches = ForwardCaches(net_token=id(net))
    t = x
    for p in net.encoder_convs():
        t, cc = conv2d_forward(t, p)
        t, rc = relu_forward(t)
        t, idx, _ = maxpool2x2_forward(t)
        caches.encoder.append((cc, rc, idx))
    d = net.depth
    for i, p in enumerate(net.decoder_convs()):
        idx = caches.encoder[d - 1 - i][2]
        if t.shape != idx.shape:
            raise ContractViolation(
                f"decoder block {i} carries shape {t.shape} but mirrored encoder "
                f"pool {d - 1 - i} recorded indices of shape {idx.shape}")
        t = unpool2x2_forward(t, idx)
        if cfg.decoder_order == "paper":
            t, rc = relu_forward(t)
            t, cc = conv2d_forward(t, p)
            caches.decoder.append((rc, cc))
        else:
            t, cc = conv2d_forward(t, p)
            t, rc = relu_forward(t)
            caches.decoder.append((cc, rc))
    logits, hc = conv2d_forward(t, net.head_conv())
    probs, sc = softmax2_forward(logits)
    caches.head = (hc, sc)
    return probs, caches


@dataclass
class Gradients:
    """One (weights, bias) gradient pair per convolution, in net.convs order."""

    per_conv: list

    def __iter__(self):
        return iter(self.per_conv)


def backward(net, caches, grad_probs):
    """Exact chain-rule gradients of a scalar loss w.r.t. every parameter.

    grad_probs is the loss gradient at the softmax output from the matching
    forward() call.
    """
    if caches.net_token != id(net):
        raise ContractViolation("caches were produced by a different network")
    hc, sc = caches.head
    if grad_probs.shape != sc.probs.shape:
        raise ContractViolation(
            f"grad_probs shape {grad_probs.shape} does not match forward "
            f"output {sc.probs.shape}")
    d = net.depth
    grads = [None] * len(net.convs)
    g = softmax2_backward(grad_probs, sc)
    g, gw, gb = conv2d_backward(g, hc, net.head_conv())
    grads[2 * d] = (gw, gb)
    for i in reversed(range(d)):
        p = net.convs[d + i]
        idx = caches.encoder[d - 1 - i][2]
        if net.config.decoder_order == "paper":
            rc, cc = caches.decoder[i]
            g, gw, gb = conv2d_backward(g, cc, p)
            g = relu_backward(g, rc)
        else:
            cc, rc = caches.decoder[i]
            g = relu_backward(g, rc)
            g, gw, gb = conv2d_backward(g, cc, p)
        grads[d + i] = (gw, gb)
        g = unpool2x2_backward(g, idx)
    for i in reversed(range(d)):
        cc, rc, idx = caches.encoder[i]
        g = maxpool2x2_backward(g, idx)
        g = relu_backward(g, rc)
        g, gw, gb = conv2d_backward(g, cc, net.convs[i])
        grads[i] = (gw, gb)
    return Gradients(per_conv=grads)


def save_model(net, arch_path, weights_path):
    """Write the architecture JSON and the LSEG weights file.

    Both outputs are byte-deterministic for a given net.
    """
    doc = json.dumps(net.config.to_document(), indent=2) + "\n"
    records = []
    for layer_index, p in enumerate(net.convs):
        for role, arr in ((ROLE_WEIGHTS, p.weights), (ROLE_BIAS, p.bias)):
            records.append(_RECORD.pack(layer_index, role, arr.size))
            records.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    blob = _HEADER.pack(WEIGHTS_MAGIC, WEIGHTS_VERSION, 2 * len(net.convs), 0)
    blob += b"".join(records)
    try:
        with open(arch_path, "w", encoding="utf-8") as fh:
            fh.write(doc)
    except OSError as exc:
        raise ModelIOError(arch_path, exc) from exc
    try:
        with open(weights_path, "wb") as fh:
            fh.write(blob)
    except OSError as exc:
        raise ModelIOError(weights_path, exc) from exc


def load_model(arch_path, weights_path):
    """Rebuild a network from its architecture JSON and LSEG weights file."""
    try:
        with open(arch_path, "r", encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ModelIOError(arch_path, exc) from exc
    try:
        doc = json.loads(text)
    except ValueError as exc:
        raise ModelFormatError(f"architecture file is not valid JSON: {exc}") from exc
    cfg = NetworkConfig.from_document(doc)
    try:
        with open(weights_path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise ModelIOError(weights_path, exc) from exc
    return _network_from_blob(cfg, blob)


def _network_from_blob(cfg, blob):
    if len(blob) < _HEADER.size:
        raise TruncatedWeightsError(
            f"weights file holds {len(blob)} bytes, shorter than the "
            f"{_HEADER.size}-byte header")
    magic, version, record_count, _ = _HEADER.unpack_from(blob, 0)
    if magic != WEIGHTS_MAGIC:
        raise ModelFormatError(f"bad weights magic {magic!r}, expected {WEIGHTS_MAGIC!r}")
    if version != WEIGHTS_VERSION:
        raise ModelFormatError(
            f"unsupported weights version {version}, expected {WEIGHTS_VERSION}")
    plan = cfg.conv_plan()
    if record_count != 2 * len(plan):
        raise ModelShapeError(
            f"weights file declares {record_count} records but the architecture "
            f"needs {2 * len(plan)} ({len(plan)} convolutions)")
    k = cfg.kernel_size
    pad = (k - 1) // 2
    offset = _HEADER.size
    convs = []
    for layer_index, (c_in, c_out) in enumerate(plan):
        tensors = {}
        for role, shape in ((ROLE_WEIGHTS, (c_out, c_in, k, k)), (ROLE_BIAS, (c_out,))):
            if offset + _RECORD.size > len(blob):
                raise TruncatedWeightsError(
                    f"weights file ends inside the record header of layer "
                    f"{layer_index}")
            rec_layer, rec_role, count = _RECORD.unpack_from(blob, offset)
            offset += _RECORD.size
            if rec_layer != layer_index or rec_role != role:
                raise ModelShapeError(
                    f"record for layer {rec_layer} role {rec_role} where layer "
                    f"{layer_index} role {role} was expected")
            expected = int(np.prod(shape))
            if count != expected:
                raise ModelShapeError(
                    f"layer {layer_index} role {role} holds {count} values, "
                    f"architecture needs {expected}")
            nbytes = 4 * expected
            if offset + nbytes > len(blob):
                raise TruncatedWeightsError(
                    f"weights file ends inside the values of layer {layer_index} "
                    f"role {role}")
            flat = np.frombuffer(blob, dtype="<f4", count=expected, offset=offset)
            offset += nbytes
            tensors[role] = flat.reshape(shape).astype(REAL_DTYPE)
        convs.append(ConvParams(weights=tensors[ROLE_WEIGHTS],
                                bias=tensors[ROLE_BIAS], pad=pad))
    if offset != len(blob):
        raise ModelShapeError(
            f"weights file has {len(blob) - offset} trailing bytes after the "
            f"declared records")
    return Network(config=cfg, convs=convs)
