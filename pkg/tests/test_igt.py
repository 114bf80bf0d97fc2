"""Tests for the norm-constrained prompt re-weighting of text prototypes.

The closed-form solution scales each class's prompt-agreement vector to
norm gamma; its row softmax yields convex prompt weights whose weighted
prompt sum replaces the plain prompt mean.
"""

import numpy as np
import pytest

from timo.errors import ConfigError
from timo.features import cosine_logits, l2_normalize, text_prototypes
from timo.igt import (
    build_igt_prototypes,
    igt_logits,
    prompt_weights,
    softmax_rows,
    solve_prompt_weights,
    uniform_prompt_weights,
)


class TestSolvePromptWeights:
    """Closed-form maximizer under the norm-gamma constraint."""

    def test_hand_case(self):
        """Unit agreement vector [0.6, 0.8] is returned scaled by gamma."""
        text = np.array([[1.0, 0.0], [0.0, 1.0]])
        proto = np.array([0.6, 0.8])
        r, degenerate = solve_prompt_weights(text, proto, gamma=1.0)
        assert not degenerate
        np.testing.assert_allclose(r, [0.6, 0.8], atol=1e-15)

    def test_norm_equals_gamma(self):
        """The solution always has L2 norm exactly gamma."""
        rng = np.random.default_rng(42)
        for _ in range(200):
            p = int(rng.integers(2, 10))
            d = int(rng.integers(4, 20))
            text = l2_normalize(rng.standard_normal((p, d)))
            proto = l2_normalize(rng.standard_normal(d))
            gamma = float(rng.uniform(0.1, 100.0))
            r, degenerate = solve_prompt_weights(text, proto, gamma)
            assert not degenerate
            np.testing.assert_allclose(np.linalg.norm(r), gamma,
                                       rtol=0, atol=1e-6)

    def test_direction_matches_agreement_vector(self):
        """r is the agreement vector rescaled: cosine(r, F @ w) = 1."""
        rng = np.random.default_rng(42)
        for _ in range(100):
            text = l2_normalize(rng.standard_normal((6, 12)))
            proto = l2_normalize(rng.standard_normal(12))
            r, _ = solve_prompt_weights(text, proto, gamma=7.0)
            v = text @ proto
            cos = r @ v / (np.linalg.norm(r) * np.linalg.norm(v))
            np.testing.assert_allclose(cos, 1.0, rtol=0, atol=1e-12)

    def test_degenerate_fallback_is_uniform(self):
        """A vanishing agreement vector falls back to gamma/sqrt(P)."""
        text = np.array([[1.0, 0.0], [-1.0, 0.0]])
        proto = np.array([0.0, 1.0])
        r, degenerate = solve_prompt_weights(text, proto, gamma=3.0)
        assert degenerate
        np.testing.assert_allclose(r, np.full(2, 3.0 / np.sqrt(2.0)),
                                   atol=1e-15)

    def test_nonpositive_gamma_rejected(self):
        text = np.eye(2)
        for gamma in (0.0, -1.0):
            with pytest.raises(ConfigError, match="gamma"):
                solve_prompt_weights(text, np.array([1.0, 0.0]), gamma)


class TestSoftmaxRows:
    """Row-wise softmax with max subtraction for overflow safety."""

    def test_hand_case(self):
        """softmax([ln 2, 0]) = [2/3, 1/3]."""
        out = softmax_rows(np.array([[np.log(2.0), 0.0]]))
        np.testing.assert_allclose(out, [[2.0 / 3.0, 1.0 / 3.0]],
                                   rtol=0, atol=1e-15)

    def test_rows_sum_to_one_and_are_nonnegative(self):
        rng = np.random.default_rng(42)
        x = rng.standard_normal((500, 7)) * 10.0
        out = softmax_rows(x)
        assert np.all(out >= 0)
        np.testing.assert_allclose(out.sum(axis=1), 1.0, rtol=0, atol=1e-9)

    def test_large_magnitudes_do_not_overflow(self):
        """Rows with entries at +-1e4 stay finite after max subtraction."""
        out = softmax_rows(np.array([[1e4, 0.0, -1e4]]))
        assert np.all(np.isfinite(out))
        np.testing.assert_allclose(out[0, 0], 1.0, rtol=0, atol=1e-12)


class TestPromptWeights:
    """Vectorized per-class weights and their limiting behavior."""

    def test_rows_are_convex_combinations(self):
        rng = np.random.default_rng(42)
        text = l2_normalize(rng.standard_normal((8, 5, 16)))
        protos = l2_normalize(rng.standard_normal((8, 16)))
        w = prompt_weights(text, protos, gamma=10.0)
        assert np.all(w.weights >= 0)
        np.testing.assert_allclose(w.weights.sum(axis=1), 1.0,
                                   rtol=0, atol=1e-9)
        np.testing.assert_allclose(np.linalg.norm(w.raw, axis=1), 10.0,
                                   rtol=0, atol=1e-6)

    def test_small_gamma_limit_is_uniform(self):
        """gamma -> 0 recovers the uniform weights within 1e-4."""
        rng = np.random.default_rng(42)
        text = l2_normalize(rng.standard_normal((5, 4, 12)))
        protos = l2_normalize(rng.standard_normal((5, 12)))
        w = prompt_weights(text, protos, gamma=1e-6)
        np.testing.assert_allclose(w.weights, 0.25, rtol=0, atol=1e-4)

    def test_large_gamma_limit_is_one_hot(self):
        """gamma = 1e4 concentrates all weight on the best prompt."""
        text = np.array([[[1.0, 0.0], [0.6, 0.8]]])
        protos = np.array([[1.0, 0.0]])
        w = prompt_weights(text, protos, gamma=1e4)
        np.testing.assert_allclose(w.weights, [[1.0, 0.0]],
                                   rtol=0, atol=1e-4)
        assert np.all(np.isfinite(w.weights))

    def test_peak_weight_grows_with_gamma(self):
        """Sharper gamma never spreads the weight back out."""
        rng = np.random.default_rng(42)
        text = l2_normalize(rng.standard_normal((6, 5, 10)))
        protos = l2_normalize(rng.standard_normal((6, 10)))
        peaks = [prompt_weights(text, protos, g).weights.max(axis=1)
                 for g in (0.5, 1.0, 2.0, 5.0, 10.0, 50.0, 100.0)]
        for lo, hi in zip(peaks, peaks[1:]):
            assert np.all(hi >= lo - 1e-12)

    def test_degenerate_class_flagged_and_uniform(self):
        text = np.array([[[1.0, 0.0], [-1.0, 0.0]],
                         [[1.0, 0.0], [0.0, 1.0]]])
        protos = np.array([[0.0, 1.0], [1.0, 0.0]])
        w = prompt_weights(text, protos, gamma=5.0)
        np.testing.assert_array_equal(w.degenerate, [True, False])
        np.testing.assert_allclose(w.weights[0], [0.5, 0.5], atol=1e-12)


class TestIgtPrototypes:
    """Weighted prompt combinations and their scoring path."""

    def test_hand_case(self):
        """Weights [2/3, 1/3] over axis prompts give [2/3, 1/3]."""
        text = np.array([[[1.0, 0.0], [0.0, 1.0]]])
        w = uniform_prompt_weights(1, 2)
        w.weights[:] = [[2.0 / 3.0, 1.0 / 3.0]]
        proto = build_igt_prototypes(text, w)
        np.testing.assert_allclose(proto, [[2.0 / 3.0, 1.0 / 3.0]],
                                   atol=1e-15)

    def test_uniform_weights_reproduce_plain_mean(self):
        """Uniform weighting reduces to the ordinary prompt prototype."""
        rng = np.random.default_rng(42)
        text = l2_normalize(rng.standard_normal((4, 3, 8)))
        proto = build_igt_prototypes(text, uniform_prompt_weights(4, 3))
        np.testing.assert_allclose(l2_normalize(proto),
                                   text_prototypes(text).vectors,
                                   rtol=0, atol=1e-12)

    def test_uniform_two_axis_prompts(self):
        """Two orthogonal unit prompts average to the diagonal direction."""
        text = np.array([[[1.0, 0.0], [0.0, 1.0]]])
        proto = build_igt_prototypes(text, uniform_prompt_weights(1, 2))
        inv = 1.0 / np.sqrt(2.0)
        np.testing.assert_allclose(l2_normalize(proto), [[inv, inv]],
                                   atol=1e-15)

    def test_igt_logits_match_cosine_on_normalized_prototypes(self):
        rng = np.random.default_rng(42)
        text = l2_normalize(rng.standard_normal((5, 4, 10)))
        protos = l2_normalize(rng.standard_normal((5, 10)))
        queries = rng.standard_normal((20, 10))
        w = prompt_weights(text, protos, gamma=10.0)
        raw = build_igt_prototypes(text, w)
        np.testing.assert_allclose(
            igt_logits(raw, queries),
            cosine_logits(l2_normalize(raw), queries),
            rtol=0, atol=1e-12)

    def test_small_gamma_scoring_matches_zero_shot(self):
        """gamma = 1e-6 scoring equals the plain prompt-mean logits."""
        rng = np.random.default_rng(42)
        text = l2_normalize(rng.standard_normal((6, 4, 16)))
        protos = l2_normalize(rng.standard_normal((6, 16)))
        queries = rng.standard_normal((50, 16))
        w = prompt_weights(text, protos, gamma=1e-6)
        lhs = igt_logits(build_igt_prototypes(text, w), queries)
        rhs = cosine_logits(text_prototypes(text).vectors, queries)
        np.testing.assert_allclose(lhs, rhs, rtol=0, atol=1e-4)
