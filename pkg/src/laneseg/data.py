"""Dataset ingestion, resizing, one-hot encoding, splits, batching, and the
synthetic lane generator used for desk-scale runs.

Images are 8-bit RGB (PNG or binary PPM), masks are 8-bit gray (PNG or PGM)
with lane = 255. In memory an image is a (1, 3, h, w) tensor in [0, 1] and a
mask is a (1, 2, h, w) exact one-hot tensor with the lane on channel 1.
"""

import math
import os
from dataclasses import dataclass

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import (
    ChannelCountError,
    ConfigurationError,
    ContractViolation,
    DecodeError,
    MaskValueError,
)
from .tensor import REAL_DTYPE, Rng

# Gray levels further than this from both 0 and 255 are rejected as
# non-binary rather than silently thresholded.
MASK_TOLERANCE = 64

SPLITS = ("train", "val", "test")


@dataclass
class Sample:
    """One training example: image (1,3,h,w) in [0,1], mask (1,2,h,w) one-hot."""

    image: np.ndarray
    mask: np.ndarray
    source_id: str

    def __post_init__(self):
        if self.image.ndim != 4 or self.image.shape[0] != 1 or self.image.shape[1] != 3:
            raise ContractViolation(f"image shape {self.image.shape} is not (1, 3, h, w)")
        if self.mask.shape != (1, 2) + self.image.shape[2:]:
            raise ContractViolation(
                f"mask shape {self.mask.shape} does not pair with image "
                f"{self.image.shape}")
        if self.image.min() < 0 or self.image.max() > 1:
            raise ContractViolation("image values must lie in [0, 1]")
        one_hot = np.isin(self.mask, (0, 1)).all() and (self.mask.sum(axis=1) == 1).all()
        if not one_hot:
            raise ContractViolation("mask must be exactly one-hot at every pixel")


@dataclass
class ManifestEntry:
    image_path: str
    mask_path: str
    split: str


@dataclass
class DatasetManifest:
    entries: list

    def paths_for(self, split):
        return [(e.image_path, e.mask_path) for e in self.entries if e.split == split]


def load_image_rgb(path):
    """Decode an 8-bit RGB image file into a (h, w, 3) uint8 array."""
    arr, mode = _decode(path)
    if mode != "RGB":
        raise ChannelCountError(f"{path}: expected 3-channel RGB, got mode {mode}")
    return arr


def load_mask_gray(path):
    """Decode an 8-bit single-channel mask file into a (h, w) uint8 array."""
    arr, mode = _decode(path)
    if mode != "L":
        raise ChannelCountError(f"{path}: expected single-channel gray, got mode {mode}")
    return arr


def _decode(path):
    try:
        with Image.open(path) as img:
            img.load()
            return np.asarray(img, dtype=np.uint8), img.mode
    except FileNotFoundError as exc:
        raise DecodeError(f"{path}: file not found") from exc
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise DecodeError(f"{path}: cannot decode image ({exc})") from exc


def save_image_rgb(path, pixels):
    """Write a (h, w, 3) uint8 array as PNG (or PPM by extension)."""
    Image.fromarray(np.asarray(pixels, dtype=np.uint8), mode="RGB").save(path)


def save_mask_gray(path, mask):
    """Write a (h, w) uint8 array as PNG (or PGM by extension)."""
    Image.fromarray(np.asarray(mask, dtype=np.uint8), mode="L").save(path)


def image_to_tensor(pixels):
    """(h, w, 3) uint8 -> (1, 3, h, w) float tensor scaled to [0, 1]."""
    t = np.asarray(pixels, dtype=REAL_DTYPE) / 255.0
    return t.transpose(2, 0, 1)[None]


def tensor_to_image(t):
    """(1, 3, h, w) float tensor in [0, 1] -> (h, w, 3) uint8, round-to-nearest."""
    scaled = np.rint(np.clip(t[0], 0.0, 1.0) * 255.0)
    return scaled.astype(np.uint8).transpose(1, 2, 0)


def resize_bilinear(src, target):
    """Resize the spatial dims of a (n, c, h, w) tensor with half-pixel centers.

    Source coordinates are (dst + 0.5) * (src_len / dst_len) - 0.5, clamped
    at the borders, so a same-size resize is the identity.
    """
    n, c, h, w = src.shape
    th, tw = target
    if th < 1 or tw < 1:
        raise ContractViolation(f"target dims must be >= 1, got {target}")
    if (th, tw) == (h, w):
        return src.copy()
    y0, y1, wy = _linear_axis(h, th)
    x0, x1, wx = _linear_axis(w, tw)
    top = src[:, :, y0][:, :, :, x0] * (1 - wx) + src[:, :, y0][:, :, :, x1] * wx
    bot = src[:, :, y1][:, :, :, x0] * (1 - wx) + src[:, :, y1][:, :, :, x1] * wx
    out = top * (1 - wy[:, None]) + bot * wy[:, None]
    return out.astype(src.dtype, copy=False)


def _linear_axis(src_len, dst_len):
    pos = (np.arange(dst_len, dtype=np.float64) + 0.5) * (src_len / dst_len) - 0.5
    lo = np.floor(pos).astype(np.intp)
    frac = pos - lo
    lo_c = np.clip(lo, 0, src_len - 1)
    hi_c = np.clip(lo + 1, 0, src_len - 1)
    return lo_c, hi_c, frac


def resize_nearest(src, target):
    """Nearest-neighbor resize of a (h, w) array; ties pick the lower index."""
    h, w = src.shape
    th, tw = target
    if th < 1 or tw < 1:
        raise ContractViolation(f"target dims must be >= 1, got {target}")
    iy = np.clip(np.floor((np.arange(th) + 0.5) * (h / th)).astype(np.intp), 0, h - 1)
    ix = np.clip(np.floor((np.arange(tw) + 0.5) * (w / tw)).astype(np.intp), 0, w - 1)
    return src[iy[:, None], ix[None, :]]


def one_hot_encode(mask):
    """Binary (h, w) map -> (1, 2, h, w) one-hot tensor, lane on channel 1."""
    m = np.asarray(mask)
    if not np.isin(m, (0, 1)).all():
        raise ContractViolation("mask entries must all be 0 or 1")
    lane = m.astype(REAL_DTYPE)
    return np.stack([1.0 - lane, lane])[None]


def load_sample(image_path, mask_path, target_dims):
    """Read and normalize one image/mask pair to the working resolution.

    The image is scaled to [0,1] and resized bilinearly; the mask is resized
    nearest-neighbor (stays binary) and one-hot encoded with lane = gray
    levels >= 128. Gray levels further than MASK_TOLERANCE from both poles
    are rejected.
    """
    pixels = load_image_rgb(image_path)
    gray = load_mask_gray(mask_path)
    if pixels.shape[:2] != gray.shape:
        raise ContractViolation(
            f"image {pixels.shape[:2]} and mask {gray.shape} dims differ "
            f"({image_path} / {mask_path})")
    off_pole = (gray > MASK_TOLERANCE) & (gray < 255 - MASK_TOLERANCE)
    if off_pole.any():
        bad = int(gray[off_pole][0])
        raise MaskValueError(
            f"{mask_path}: gray level {bad} is further than {MASK_TOLERANCE} "
            f"from both 0 and 255")
    image = resize_bilinear(image_to_tensor(pixels), target_dims)
    image = np.clip(image, 0.0, 1.0)
    lane = (resize_nearest(gray, target_dims) >= 128).astype(np.uint8)
    return Sample(image=image, mask=one_hot_encode(lane), source_id=str(image_path))


def split_dataset(pairs, fractions, seed):
    """Shuffle image/mask pairs and assign contiguous train/val/test blocks.

    Block sizes are round(fraction * total) for val and test; train takes
    the remainder, so counts always sum to the total.
    """
    if len(pairs) < 3:
        raise ConfigurationError(
            f"need at least 3 entries to split, got {len(pairs)}")
    f_train, f_val, f_test = fractions
    if min(fractions) <= 0 or abs(sum(fractions) - 1.0) > 1e-9:
        raise ConfigurationError(
            f"fractions must be positive and sum to 1, got {fractions}")
    order = Rng(seed).permutation(len(pairs))
    n_val = round(f_val * len(pairs))
    n_test = round(f_test * len(pairs))
    n_train = len(pairs) - n_val - n_test
    if n_train < 1:
        raise ConfigurationError(
            f"fractions {fractions} leave no training entries for {len(pairs)} pairs")
    entries = []
    for rank, idx in enumerate(order):
        if rank < n_train:
            split = "train"
        elif rank < n_train + n_val:
            split = "val"
        else:
            split = "test"
        image_path, mask_path = pairs[idx]
        entries.append(ManifestEntry(str(image_path), str(mask_path), split))
    return DatasetManifest(entries=entries)


def write_manifest(manifest, path):
    with open(path, "w", encoding="utf-8") as fh:
        for e in manifest.entries:
            fh.write(f"{e.image_path}\t{e.mask_path}\t{e.split}\n")


def read_manifest(path):
    entries = []
    try:
        with open(path, "r", encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise DecodeError(f"{path}: cannot read manifest ({exc})") from exc
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 3 or parts[2] not in SPLITS:
            raise ConfigurationError(
                f"{path}:{lineno}: manifest lines are image<TAB>mask<TAB>split "
                f"with split in {SPLITS}")
        entries.append(ManifestEntry(parts[0], parts[1], parts[2]))
    return DatasetManifest(entries=entries)


def load_split(manifest, split, target_dims):
    """Load every sample of one split at the working resolution."""
    return [load_sample(img, msk, target_dims) for img, msk in manifest.paths_for(split)]


def lane_bounds(rng, dims):
    """Draw trapezoid parameters: centers, half-widths, and region intensities.

    The trapezoid spans the full image height and is strictly wider at the
    bottom; its mean width keeps the lane between 15% and 45% of all pixels
    even after per-row pixel rounding (up to 1/w per row).
    """
    h, w = dims
    frac = rng.uniform(0.22, 0.38)
    top_share = rng.uniform(0.20, 0.42)
    half_top = frac * w * top_share
    half_bot = frac * w * (1.0 - top_share)
    center_top = w * rng.uniform(0.35, 0.65)
    center_bot = w * rng.uniform(0.35, 0.65)
    return center_top, center_bot, half_top, half_bot


def trapezoid_mask(dims, center_top, center_bot, half_top, half_bot):
    """Exact membership of pixel centers in the trapezoid, as a binary map.

    Row y interpolates center and half-width at t = y / (h - 1); pixel x is
    inside when |x + 0.5 - center| <= half.
    """
    h, w = dims
    t = np.arange(h, dtype=np.float64) / (h - 1)
    center = center_top + (center_bot - center_top) * t
    half = half_top + (half_bot - half_top) * t
    x = np.arange(w, dtype=np.float64) + 0.5
    inside = np.abs(x[None, :] - center[:, None]) <= half[:, None]
    return inside.astype(np.uint8)


def generate_synthetic_lane(rng, dims, name="synthetic"):
    """A lane-like sample: bright trapezoid on a darker textured background.

    The mask is the exact trapezoid membership; intensities keep the lane at
    least 0.2 brighter than the background before noise.
    """
    h, w = dims
    if h < 16 or w < 16:
        raise ContractViolation(f"dims must be at least 16x16, got {dims}")
    center_top, center_bot, half_top, half_bot = lane_bounds(rng, dims)
    lane = trapezoid_mask(dims, center_top, center_bot, half_top, half_bot)

    lane_level = rng.uniform(0.78, 0.90)
    bg_level = rng.uniform(0.25, 0.40)
    phase = rng.uniform(0.0, 2.0 * math.pi)
    xs = np.arange(w, dtype=np.float64)[None, :]
    ys = np.arange(h, dtype=np.float64)[:, None]
    texture = 0.04 * np.sin(2.0 * math.pi * 3.0 * xs / w + phase) \
        + 0.02 * np.sin(2.0 * math.pi * 2.0 * ys / h + phase)
    base = np.where(lane == 1, lane_level, bg_level + texture)

    tint = rng.uniform(-0.02, 0.02, (3, 1, 1))
    image = base[None, :, :] + tint
    noise = rng.normal((3, h, w), 0.02).astype(np.float64, copy=False)
    image = np.clip(image + noise, 0.0, 1.0).astype(REAL_DTYPE)[None]
    return Sample(image=image, mask=one_hot_encode(lane), source_id=name)


def synthetic_dataset(seed, count, dims, salt=0):
    """count deterministic samples; sample i is driven by Rng(seed + salt + i)."""
    return [generate_synthetic_lane(Rng(seed + salt + i), dims,
                                    name=f"synthetic-{salt + i}")
            for i in range(count)]


def batch_iterator(samples, batch_size, seed, epoch):
    """Yield (images, masks) batches in a seeded per-epoch order.

    The permutation is drawn from Rng(seed + epoch); the final batch holds
    the remainder when batch_size does not divide the sample count.
    """
    if batch_size < 1:
        raise ContractViolation(f"batch_size must be >= 1, got {batch_size}")
    order = Rng(int(seed) + int(epoch)).permutation(len(samples))
    for start in range(0, len(samples), batch_size):
        chunk = [samples[i] for i in order[start:start + batch_size]]
        images = np.concatenate([s.image for s in chunk], axis=0)
        masks = np.concatenate([s.mask for s in chunk], axis=0)
        yield images, masks


def write_dataset(samples, root):
    """Materialize samples as images/NAME.png + labels/NAME.png files.

    Returns the list of (image_path, mask_path) pairs in sample order,
    ready for split_dataset + write_manifest.
    """
    images_dir = os.path.join(root, "images")
    labels_dir = os.path.join(root, "labels")
    os.makedirs(images_dir, exist_ok=True)
    os.makedirs(labels_dir, exist_ok=True)
    pairs = []
    for i, s in enumerate(samples):
        name = f"{i:05d}.png"
        image_path = os.path.join(images_dir, name)
        mask_path = os.path.join(labels_dir, name)
        save_image_rgb(image_path, tensor_to_image(s.image))
        save_mask_gray(mask_path, (s.mask[0, 1] * 255).astype(np.uint8))
        pairs.append((image_path, mask_path))
    return pairs
