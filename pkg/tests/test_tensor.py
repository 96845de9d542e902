"""Seeded RNG, tensor coercion, and padding/cropping helpers."""

import numpy as np
import pytest

from laneseg.errors import ContractViolation
from laneseg.tensor import (
    REAL_DTYPE,
    Rng,
    argmax_channel,
    as_tensor4,
    crop2d,
    pad2d,
)


class TestRng:
    def test_same_seed_reproduces_draws(self):
        a = Rng(123).normal((64,))
        b = Rng(123).normal((64,))
        assert np.array_equal(a, b)

    def test_different_seeds_differ(self):
        assert not np.array_equal(Rng(1).normal((64,)), Rng(2).normal((64,)))

    def test_normal_sigma_scales_draws(self):
        base = Rng(5).normal((1000,), sigma=1.0)
        scaled = Rng(5).normal((1000,), sigma=0.5)
        assert np.allclose(scaled, 0.5 * base)

    def test_uniform_respects_bounds(self):
        draws = Rng(9).uniform(2.0, 3.0, (1000,))
        assert draws.min() >= 2.0 and draws.max() < 3.0

    def test_permutation_is_a_permutation(self):
        perm = Rng(4).permutation(50)
        assert sorted(perm.tolist()) == list(range(50))

    def test_child_offsets_are_independent_streams(self):
        root = Rng(10)
        assert np.array_equal(root.child(3).normal((8,)), Rng(13).normal((8,)))
        assert not np.array_equal(root.child(1).normal((8,)),
                                  root.child(2).normal((8,)))

    def test_huge_seed_wraps_instead_of_failing(self):
        assert np.array_equal(Rng(2 ** 70 + 5).normal((4,)),
                              Rng((2 ** 70 + 5) % 2 ** 64).normal((4,)))


class TestAsTensor4:
    def test_coerces_lists_to_real_dtype(self):
        t = as_tensor4([[[[1, 2], [3, 4]]]])
        assert t.dtype == REAL_DTYPE
        assert t.shape == (1, 1, 2, 2)

    def test_rejects_wrong_rank(self):
        with pytest.raises(ContractViolation):
            as_tensor4(np.zeros((2, 3)))

    def test_rejects_non_finite(self):
        bad = np.full((1, 1, 2, 2), np.nan)
        with pytest.raises(ContractViolation):
            as_tensor4(bad)


class TestPadCrop:
    def test_pad_then_crop_roundtrips(self):
        t = Rng(0).normal((24,)).reshape(1, 2, 3, 4)
        assert np.array_equal(crop2d(pad2d(t, 2), 2), t)

    def test_pad_zero_is_identity(self):
        t = Rng(0).normal((4,)).reshape(1, 1, 2, 2)
        assert pad2d(t, 0) is t

    def test_pad_adds_zero_border(self):
        t = np.ones((1, 1, 2, 2), dtype=REAL_DTYPE)
        padded = pad2d(t, 1)
        assert padded.shape == (1, 1, 4, 4)
        assert padded.sum() == t.sum()
        assert padded[0, 0, 0, 0] == 0.0


class TestArgmaxChannel:
    def test_picks_largest_channel(self):
        t = np.zeros((1, 3, 1, 2), dtype=REAL_DTYPE)
        t[0, 2, 0, 0] = 1.0
        t[0, 1, 0, 1] = 1.0
        cls = argmax_channel(t)
        assert cls.shape == (1, 1, 1, 2)
        assert cls[0, 0, 0, 0] == 2 and cls[0, 0, 0, 1] == 1

    def test_tie_breaks_to_lowest_channel(self):
        t = np.ones((1, 2, 1, 1), dtype=REAL_DTYPE)
        assert argmax_channel(t)[0, 0, 0, 0] == 0
