"""Finite-difference verification harness and its self-test hooks."""

import numpy as np
import pytest

from laneseg.gradcheck import (
    DEFAULT_STEP,
    DEFAULT_THRESHOLD,
    LAYER_NAMES,
    max_rel_error,
    numerical_gradient,
    run_gradcheck,
)


class TestNumericalGradient:
    def test_quadratic_has_linear_gradient(self):
        x = np.array([1.0, -2.0, 3.0])
        grad = numerical_gradient(lambda: float(np.sum(x * x)), x, step=1e-5)
        assert np.allclose(grad, 2 * x, atol=1e-8)

    def test_leaves_the_input_unchanged(self):
        x = np.array([0.5, 0.25])
        before = x.copy()
        numerical_gradient(lambda: float(np.sum(x ** 3)), x)
        assert np.array_equal(x, before)


class TestMaxRelError:
    def test_identical_arrays_score_zero(self):
        a = np.array([1.0, 2.0])
        assert max_rel_error(a, a.copy()) == 0.0

    def test_scales_by_the_larger_magnitude(self):
        assert max_rel_error(np.array([1.0]), np.array([1.1])) == pytest.approx(0.1 / 1.1)

    def test_tiny_magnitudes_do_not_explode(self):
        a = np.array([0.0])
        b = np.array([1e-15])
        assert max_rel_error(a, b) < 1e-2


class TestRunGradcheck:
    def test_every_layer_matches_finite_differences(self):
        checks = run_gradcheck(seed=0)
        assert [c.layer for c in checks] == list(LAYER_NAMES)
        for c in checks:
            assert c.passed, f"{c.layer} at {c.max_rel_error}"
            assert c.max_rel_error < DEFAULT_THRESHOLD

    def test_other_seeds_also_pass(self):
        for seed in (1, 2):
            assert all(c.passed for c in run_gradcheck(seed=seed))

    def test_deliberate_weight_skew_is_caught(self):
        checks = {c.layer: c for c in run_gradcheck(seed=0, perturb="weights")}
        assert not checks["conv"].passed

    def test_threshold_is_respected(self):
        loose = run_gradcheck(seed=0, threshold=1.0, perturb="weights")
        assert all(c.passed for c in loose)

    def test_default_step_is_documented_value(self):
        assert DEFAULT_STEP == 1e-5
        assert DEFAULT_THRESHOLD == 1e-4
