"""Image/mask ingestion, resizing, splits, batching, and the synthetic
lane generator, checked against independent scalar re-derivations.
"""

import math

import numpy as np
import pytest
from PIL import Image

from laneseg.data import (
    DatasetManifest,
    ManifestEntry,
    Sample,
    batch_iterator,
    generate_synthetic_lane,
    lane_bounds,
    load_sample,
    one_hot_encode,
    read_manifest,
    resize_bilinear,
    resize_nearest,
    save_image_rgb,
    save_mask_gray,
    split_dataset,
    synthetic_dataset,
    tensor_to_image,
    image_to_tensor,
    trapezoid_mask,
    write_dataset,
    write_manifest,
)
from laneseg.errors import (
    ChannelCountError,
    ConfigurationError,
    ContractViolation,
    DecodeError,
    MaskValueError,
)
from laneseg.tensor import REAL_DTYPE, Rng


def write_png(path, array):
    Image.fromarray(array).save(path)
    return str(path)


class TestResizeBilinear:
    def test_row_upsample_uses_half_pixel_centers(self):
        src = np.array([[0.0, 10.0]], dtype=REAL_DTYPE).reshape(1, 1, 1, 2)
        out = resize_bilinear(src, (1, 4))
        assert np.allclose(out[0, 0, 0], [0.0, 2.5, 7.5, 10.0])

    def test_same_size_is_identity(self):
        src = Rng(0).normal((1 * 3 * 4 * 5,)).reshape(1, 3, 4, 5)
        out = resize_bilinear(src, (4, 5))
        assert np.array_equal(out, src)
        assert out is not src

    def test_constant_extends_from_single_pixel(self):
        src = np.full((1, 1, 1, 1), 5.0, dtype=REAL_DTYPE)
        assert np.array_equal(resize_bilinear(src, (2, 2)),
                              np.full((1, 1, 2, 2), 5.0))

    def test_output_stays_within_source_range(self):
        for seed in range(10):
            src = Rng(seed).normal((1 * 2 * 6 * 9,)).reshape(1, 2, 6, 9)
            out = resize_bilinear(src, (11, 4))
            assert out.min() >= src.min() - 1e-12
            assert out.max() <= src.max() + 1e-12


class TestResizeNearest:
    def test_integer_upscale_repeats_pixels(self):
        src = np.array([[1, 2], [3, 4]], dtype=np.uint8)
        out = resize_nearest(src, (4, 4))
        assert np.array_equal(out, [[1, 1, 2, 2], [1, 1, 2, 2],
                                    [3, 3, 4, 4], [3, 3, 4, 4]])

    def test_binary_input_stays_binary(self):
        src = (Rng(1).uniform(0.0, 1.0, (10, 14)) > 0.5).astype(np.uint8) * 255
        out = resize_nearest(src, (7, 5))
        assert set(np.unique(out)) <= {0, 255}


class TestOneHotEncode:
    def test_all_background(self):
        t = one_hot_encode(np.zeros((3, 3), dtype=np.uint8))
        assert np.array_equal(t[0, 0], np.ones((3, 3)))
        assert np.array_equal(t[0, 1], np.zeros((3, 3)))

    def test_all_lane(self):
        t = one_hot_encode(np.ones((2, 2), dtype=np.uint8))
        assert np.array_equal(t[0, 1], np.ones((2, 2)))

    def test_checkerboard_channels_are_complements(self):
        mask = np.indices((4, 4)).sum(axis=0) % 2
        t = one_hot_encode(mask)
        assert np.array_equal(t[0, 0] + t[0, 1], np.ones((4, 4)))
        assert np.array_equal(t[0, 1], mask.astype(REAL_DTYPE))

    def test_non_binary_entries_rejected(self):
        with pytest.raises(ContractViolation):
            one_hot_encode(np.array([[0, 2]], dtype=np.uint8))


class TestLoadSample:
    def make_pair(self, tmp_path, dims=(8, 8), mask_levels=(0, 255)):
        h, w = dims
        rgb = (Rng(0).uniform(0.0, 1.0, (h, w, 3)) * 255).astype(np.uint8)
        mask = np.zeros((h, w), dtype=np.uint8)
        mask[:, : w // 2] = mask_levels[1]
        mask[:, w // 2:] = mask_levels[0]
        image_path = write_png(tmp_path / "img.png", rgb)
        mask_path = write_png(tmp_path / "msk.png", mask)
        return image_path, mask_path, rgb, mask

    def test_poles_map_to_one_hot_channels(self, tmp_path):
        image_path, mask_path, _, mask = self.make_pair(tmp_path)
        sample = load_sample(image_path, mask_path, (8, 8))
        lane = sample.mask[0, 1]
        assert np.array_equal(lane, (mask >= 128).astype(REAL_DTYPE))
        assert np.array_equal(sample.mask[0, 0], 1.0 - lane)

    def test_intensities_scale_to_unit_range(self, tmp_path):
        h, w = 4, 4
        rgb = np.zeros((h, w, 3), dtype=np.uint8)
        rgb[0, 0] = 255
        image_path = write_png(tmp_path / "img.png", rgb)
        mask_path = write_png(tmp_path / "msk.png", np.zeros((h, w), dtype=np.uint8))
        sample = load_sample(image_path, mask_path, (h, w))
        assert sample.image[0, 0, 0, 0] == 1.0
        assert sample.image[0, 0, 1, 1] == 0.0

    def test_target_dims_resize_is_identity_when_equal(self, tmp_path):
        image_path, mask_path, rgb, _ = self.make_pair(tmp_path)
        sample = load_sample(image_path, mask_path, (8, 8))
        assert np.allclose(sample.image[0].transpose(1, 2, 0), rgb / 255.0)

    def test_mid_gray_mask_rejected(self, tmp_path):
        image_path, mask_path, _, _ = self.make_pair(tmp_path,
                                                     mask_levels=(0, 127))
        with pytest.raises(MaskValueError):
            load_sample(image_path, mask_path, (8, 8))

    def test_near_pole_gray_tolerated(self, tmp_path):
        image_path, mask_path, _, _ = self.make_pair(tmp_path,
                                                     mask_levels=(30, 230))
        sample = load_sample(image_path, mask_path, (8, 8))
        assert sample.mask[0, 1].max() == 1.0

    def test_missing_file_is_a_decode_error(self, tmp_path):
        with pytest.raises(DecodeError):
            load_sample(str(tmp_path / "absent.png"),
                        str(tmp_path / "absent2.png"), (8, 8))

    def test_mask_sized_unlike_image_rejected(self, tmp_path):
        image_path, _, _, _ = self.make_pair(tmp_path)
        other = write_png(tmp_path / "small.png",
                          np.zeros((4, 4), dtype=np.uint8))
        with pytest.raises(ContractViolation):
            load_sample(image_path, other, (8, 8))

    def test_gray_image_where_rgb_expected_rejected(self, tmp_path):
        gray = write_png(tmp_path / "gray.png", np.zeros((8, 8), dtype=np.uint8))
        mask = write_png(tmp_path / "msk.png", np.zeros((8, 8), dtype=np.uint8))
        with pytest.raises(ChannelCountError):
            load_sample(gray, mask, (8, 8))


class TestImageTensorRoundtrip:
    def test_uint8_roundtrips_through_tensor(self):
        rgb = (Rng(2).uniform(0.0, 1.0, (6, 7, 3)) * 255).astype(np.uint8)
        assert np.array_equal(tensor_to_image(image_to_tensor(rgb)), rgb)

    def test_png_roundtrip_is_bytewise_faithful(self, tmp_path):
        rgb = (Rng(3).uniform(0.0, 1.0, (5, 9, 3)) * 255).astype(np.uint8)
        path = str(tmp_path / "x.png")
        save_image_rgb(path, rgb)
        again = np.asarray(Image.open(path).convert("RGB"))
        assert np.array_equal(again, rgb)


class TestSplitDataset:
    def pairs(self, n):
        return [(f"img{i}.png", f"msk{i}.png") for i in range(n)]

    def test_ten_entries_split_eight_one_one(self):
        manifest = split_dataset(self.pairs(10), (0.8, 0.1, 0.1), seed=0)
        counts = {s: len(manifest.paths_for(s)) for s in ("train", "val", "test")}
        assert counts == {"train": 8, "val": 1, "test": 1}

    def test_two_thousand_entries_match_published_layout(self):
        manifest = split_dataset(self.pairs(2000), (0.75, 0.1, 0.15), seed=1)
        counts = {s: len(manifest.paths_for(s)) for s in ("train", "val", "test")}
        assert counts == {"train": 1500, "val": 200, "test": 300}

    def test_assignment_is_a_partition(self):
        manifest = split_dataset(self.pairs(37), (0.6, 0.2, 0.2), seed=3)
        seen = []
        for split in ("train", "val", "test"):
            seen.extend(manifest.paths_for(split))
        assert sorted(p[0] for p in seen) == sorted(p[0] for p in self.pairs(37))
        assert len(seen) == 37

    def test_same_seed_reproduces_assignment(self):
        a = split_dataset(self.pairs(20), (0.5, 0.25, 0.25), seed=9)
        b = split_dataset(self.pairs(20), (0.5, 0.25, 0.25), seed=9)
        assert a.entries == b.entries

    def test_fewer_than_three_entries_rejected(self):
        with pytest.raises(ConfigurationError):
            split_dataset(self.pairs(2), (0.8, 0.1, 0.1), seed=0)

    def test_fractions_must_sum_to_one(self):
        with pytest.raises(ConfigurationError):
            split_dataset(self.pairs(10), (0.5, 0.1, 0.1), seed=0)


class TestManifestIO:
    def test_roundtrip(self, tmp_path):
        manifest = DatasetManifest(entries=[
            ManifestEntry("a.png", "b.png", "train"),
            ManifestEntry("c.png", "d.png", "test"),
        ])
        path = str(tmp_path / "manifest.tsv")
        write_manifest(manifest, path)
        again = read_manifest(path)
        assert again.entries == manifest.entries

    def test_unknown_split_rejected(self, tmp_path):
        path = str(tmp_path / "manifest.tsv")
        open(path, "w").write("a.png\tb.png\tholdout\n")
        with pytest.raises(ConfigurationError):
            read_manifest(path)

    def test_malformed_line_rejected(self, tmp_path):
        path = str(tmp_path / "manifest.tsv")
        open(path, "w").write("only-one-field\n")
        with pytest.raises(ConfigurationError):
            read_manifest(path)


def trapezoid_oracle(dims, center_top, center_bot, half_top, half_bot):
    """Scalar per-pixel membership: linear interpolation down the rows."""
    h, w = dims
    out = np.zeros((h, w), dtype=np.uint8)
    for y in range(h):
        t = y / (h - 1)
        center = center_top + (center_bot - center_top) * t
        half = half_top + (half_bot - half_top) * t
        for x in range(w):
            if abs(x + 0.5 - center) <= half:
                out[y, x] = 1
    return out


class TestSyntheticGenerator:
    def test_mask_matches_scalar_membership_oracle(self):
        for seed in range(10):
            rng = Rng(seed)
            dims = (16, 20)
            params = lane_bounds(rng, dims)
            assert np.array_equal(trapezoid_mask(dims, *params),
                                  trapezoid_oracle(dims, *params))

    def test_lane_fraction_stays_in_band(self):
        for dims in ((16, 16), (32, 64), (20, 48)):
            for seed in range(50):
                sample = generate_synthetic_lane(Rng(seed), dims)
                frac = float(sample.mask[0, 1].mean())
                assert 0.15 <= frac <= 0.45, (dims, seed, frac)

    def test_lane_is_brighter_than_background(self):
        # The construction puts the lane >= 0.2 above the background;
        # averaging over all pixels leaves plenty of headroom for noise.
        for seed in range(20):
            sample = generate_synthetic_lane(Rng(seed), (32, 64))
            lane = sample.mask[0, 1].astype(bool)
            gray = sample.image[0].mean(axis=0)
            assert gray[lane].mean() - gray[~lane].mean() >= 0.2

    def test_lane_widens_toward_the_bottom(self):
        for seed in range(20):
            sample = generate_synthetic_lane(Rng(seed), (32, 64))
            rows = sample.mask[0, 1].sum(axis=1)
            assert rows[-1] > rows[0]

    def test_rows_are_contiguous_runs(self):
        sample = generate_synthetic_lane(Rng(4), (32, 64))
        for row in sample.mask[0, 1]:
            on = np.flatnonzero(row)
            if on.size:
                assert on[-1] - on[0] + 1 == on.size

    def test_sample_invariants_hold(self):
        sample = generate_synthetic_lane(Rng(0), (16, 16))
        assert sample.image.shape == (1, 3, 16, 16)
        assert sample.image.min() >= 0.0 and sample.image.max() <= 1.0
        assert np.array_equal(sample.mask.sum(axis=1), np.ones((1, 16, 16)))

    def test_same_seed_reproduces_sample(self):
        a = generate_synthetic_lane(Rng(8), (16, 32))
        b = generate_synthetic_lane(Rng(8), (16, 32))
        assert np.array_equal(a.image, b.image)
        assert np.array_equal(a.mask, b.mask)

    def test_too_small_dims_rejected(self):
        with pytest.raises(ContractViolation):
            generate_synthetic_lane(Rng(0), (8, 8))

    def test_dataset_salt_shifts_the_stream(self):
        plain = synthetic_dataset(0, 2, (16, 16))
        salted = synthetic_dataset(0, 2, (16, 16), salt=100)
        assert not np.array_equal(plain[0].image, salted[0].image)
        # salt + index addresses an absolute position in the stream
        assert np.array_equal(synthetic_dataset(0, 3, (16, 16))[2].image,
                              synthetic_dataset(2, 1, (16, 16))[0].image)


class TestBatchIterator:
    def test_final_batch_holds_the_remainder(self):
        samples = synthetic_dataset(0, 45, (16, 16))
        sizes = [im.shape[0] for im, _ in batch_iterator(samples, 20, 0, 0)]
        assert sizes == [20, 20, 5]

    def test_permutation_changes_between_epochs(self):
        samples = synthetic_dataset(1, 6, (16, 16))
        flat = lambda epoch: np.concatenate(
            [im for im, _ in batch_iterator(samples, 6, 1, epoch)])
        assert not np.array_equal(flat(0), flat(1))

    def test_batches_carry_sample_content_bitwise(self):
        samples = synthetic_dataset(2, 5, (16, 16))
        seen = 0
        for images, masks in batch_iterator(samples, 2, 2, 0):
            assert images.shape[1:] == (3, 16, 16)
            assert masks.shape[1:] == (2, 16, 16)
            for row in range(images.shape[0]):
                matches = [np.array_equal(images[row], s.image[0]) and
                           np.array_equal(masks[row], s.mask[0])
                           for s in samples]
                assert any(matches)
                seen += 1
        assert seen == 5


class TestWriteDataset:
    def test_files_land_in_images_and_labels(self, tmp_path):
        samples = synthetic_dataset(0, 2, (16, 16))
        pairs = write_dataset(samples, str(tmp_path))
        assert len(pairs) == 2
        for image_path, mask_path in pairs:
            assert "images" in image_path and image_path.endswith(".png")
            assert "labels" in mask_path

    def test_masks_roundtrip_exactly(self, tmp_path):
        samples = synthetic_dataset(3, 2, (16, 16))
        pairs = write_dataset(samples, str(tmp_path))
        for sample, (image_path, mask_path) in zip(samples, pairs):
            again = load_sample(image_path, mask_path, (16, 16))
            assert np.array_equal(again.mask, sample.mask)
            assert np.allclose(again.image, sample.image, atol=1.0 / 255.0)
