"""Tests for normalization, prototype construction, and cosine scoring."""

import numpy as np
import pytest

from timo.errors import DataError
from timo.features import (
    ImageSupportBank,
    QueryBatch,
    TextFeatureBank,
    cosine_logits,
    degenerate_rows,
    image_prototypes,
    l2_normalize,
    text_prototypes,
)


class TestL2Normalize:
    """Row normalization with a guard for (near-)zero rows."""

    def test_hand_case(self):
        """[3, 4] has norm 5, so it normalizes to [0.6, 0.8]."""
        out = l2_normalize(np.array([[3.0, 4.0]]))
        np.testing.assert_allclose(out, [[0.6, 0.8]], rtol=0, atol=1e-15)

    def test_unit_rows_are_fixed_points(self):
        rng = np.random.default_rng(42)
        x = rng.standard_normal((200, 16))
        once = l2_normalize(x)
        np.testing.assert_allclose(l2_normalize(once), once,
                                   rtol=1e-15, atol=1e-15)

    def test_all_rows_unit_norm(self):
        rng = np.random.default_rng(42)
        x = rng.standard_normal((500, 8)) * 10.0 ** rng.integers(
            -3, 4, size=(500, 1))
        norms = np.linalg.norm(l2_normalize(x), axis=-1)
        np.testing.assert_allclose(norms, 1.0, rtol=0, atol=1e-12)

    def test_zero_row_is_left_unscaled(self):
        """Zero rows pass through instead of dividing by zero."""
        x = np.array([[0.0, 0.0], [3.0, 4.0]])
        out = l2_normalize(x)
        np.testing.assert_array_equal(out[0], [0.0, 0.0])
        np.testing.assert_allclose(out[1], [0.6, 0.8], atol=1e-15)

    def test_degenerate_rows_flags(self):
        x = np.array([[0.0, 0.0], [1e-13, 0.0], [1.0, 0.0]])
        np.testing.assert_array_equal(degenerate_rows(x),
                                      [True, True, False])


class TestPrototypes:
    """Per-class prototypes are normalized means of normalized rows."""

    def test_text_prototype_hand_case(self):
        """Mean of [1,0] and [0,1] is [.5,.5]; normalized -> [1,1]/sqrt(2)."""
        text = np.array([[[1.0, 0.0], [0.0, 1.0]]])
        protos = text_prototypes(text)
        inv = 1.0 / np.sqrt(2.0)
        np.testing.assert_allclose(protos.vectors, [[inv, inv]], atol=1e-15)

    def test_image_prototype_matches_manual_mean(self):
        rng = np.random.default_rng(42)
        support = rng.standard_normal((5, 3, 8))
        protos = image_prototypes(l2_normalize(support))
        manual = l2_normalize(l2_normalize(support).mean(axis=1))
        np.testing.assert_allclose(protos.vectors, manual, atol=1e-14)

    def test_bank_constructors_normalize(self):
        rng = np.random.default_rng(42)
        text = TextFeatureBank.from_array(rng.standard_normal((4, 3, 6)))
        images = ImageSupportBank.from_array(rng.standard_normal((4, 2, 6)))
        for rows in (text.features.reshape(-1, 6),
                     images.features.reshape(-1, 6),
                     images.prototypes):
            np.testing.assert_allclose(np.linalg.norm(rows, axis=-1), 1.0,
                                       atol=1e-12)

    def test_empty_axis_rejected(self):
        with pytest.raises(DataError, match="empty axis"):
            TextFeatureBank.from_array(np.zeros((0, 2, 4)))


class TestCosineLogits:
    """Scaled cosine similarity against a prototype matrix."""

    def test_hand_case_scale_one(self):
        """Query [3,4] vs axes e1,e2 at scale 1 gives cosines [0.6, 0.8]."""
        protos = np.eye(2)
        out = cosine_logits(protos, np.array([3.0, 4.0]), scale=1.0)
        assert out.shape == (2,)
        np.testing.assert_allclose(out, [0.6, 0.8], atol=1e-15)

    def test_default_scale_is_100(self):
        protos = np.eye(2)
        out = cosine_logits(protos, np.array([[3.0, 4.0]]))
        np.testing.assert_allclose(out, [[60.0, 80.0]], atol=1e-12)

    def test_1d_query_returns_1d(self):
        protos = np.eye(3)
        assert cosine_logits(protos, np.ones(3)).shape == (3,)
        assert cosine_logits(protos, np.ones((2, 3))).shape == (2, 3)

    def test_argmax_is_scale_invariant(self):
        """Rescaling queries or the scale factor never changes the argmax."""
        rng = np.random.default_rng(42)
        protos = l2_normalize(rng.standard_normal((7, 12)))
        queries = rng.standard_normal((300, 12))
        base = np.argmax(cosine_logits(protos, queries, scale=1.0), axis=1)
        for factor in (1e-3, 5.0, 100.0):
            scaled = np.argmax(
                cosine_logits(protos, queries * factor, scale=1.0), axis=1)
            np.testing.assert_array_equal(scaled, base)
            rescaled = np.argmax(
                cosine_logits(protos, queries, scale=factor), axis=1)
            np.testing.assert_array_equal(rescaled, base)

    def test_query_batch_requires_matching_labels(self):
        with pytest.raises(DataError):
            QueryBatch.from_arrays(np.ones((3, 4)), np.array([0, 1]))
