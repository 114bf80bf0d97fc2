"""Tests for the sklearn-style estimator wrapper.

The estimator must obey the sklearn parameter protocol (get/set/clone)
and reproduce the underlying branch computations exactly.
"""

import numpy as np
import pytest
from sklearn.base import clone

from timo.backends import GdaClassifier
from timo.errors import ConfigError, DataError
from timo.features import l2_normalize
from timo.model import TimoClassifier, zero_shot_logits
from timo.synth import generate_arrays


@pytest.fixture(scope="module")
def small_problem():
    arrays = generate_arrays(classes=5, prompts=3, shots=4, dim=16,
                             noise=0.3, corrupt_fraction=0.0,
                             val_queries=10, test_queries=60, seed=7)
    X = arrays["support"].reshape(-1, 16)
    y = np.repeat(np.arange(5), 4)
    return arrays, X, y


class TestEstimatorProtocol:
    """sklearn parameter handling and fitted-state bookkeeping."""

    def test_get_set_params_roundtrip(self):
        est = TimoClassifier(alpha=0.5, beta=2, backend="cache")
        params = est.get_params()
        assert params["alpha"] == 0.5
        assert params["beta"] == 2
        assert params["backend"] == "cache"
        est.set_params(alpha=2.0)
        assert est.get_params()["alpha"] == 2.0

    def test_clone_preserves_params(self, small_problem):
        arrays, X, y = small_problem
        est = TimoClassifier(text_features=arrays["text"], alpha=0.25,
                             gamma=20.0)
        twin = clone(est)
        assert twin.get_params()["alpha"] == 0.25
        assert twin.get_params()["gamma"] == 20.0
        a = est.fit(X, y).decision_function(arrays["test_x"])
        b = twin.fit(X, y).decision_function(arrays["test_x"])
        np.testing.assert_array_equal(a, b)

    def test_fit_returns_self_and_sets_attributes(self, small_problem):
        arrays, X, y = small_problem
        est = TimoClassifier(text_features=arrays["text"])
        assert est.fit(X, y) is est
        np.testing.assert_array_equal(est.classes_, np.arange(5))
        assert est.n_features_in_ == 16
        assert est.retained_.beta == 3  # beta=None defaults to n_prompts
        assert est.image_prototypes_.shape == (5, 16)
        assert est.text_prototypes_.shape == (5, 16)

    def test_unfitted_raises(self, small_problem):
        arrays, _, _ = small_problem
        est = TimoClassifier(text_features=arrays["text"])
        with pytest.raises(DataError, match="not fitted"):
            est.decision_function(arrays["test_x"])

    def test_missing_text_features_rejected(self, small_problem):
        _, X, y = small_problem
        with pytest.raises(ConfigError, match="text_features"):
            TimoClassifier().fit(X, y)

    def test_unknown_backend_rejected(self, small_problem):
        arrays, X, y = small_problem
        est = TimoClassifier(text_features=arrays["text"], backend="svm")
        with pytest.raises(ConfigError, match="unknown backend"):
            est.fit(X, y)


class TestPredictions:
    """Output shapes, accuracy, and branch equivalences."""

    def test_shapes(self, small_problem):
        arrays, X, y = small_problem
        est = TimoClassifier(text_features=arrays["text"]).fit(X, y)
        logits = est.decision_function(arrays["test_x"])
        assert logits.shape == (60, 5)
        preds = est.predict(arrays["test_x"])
        assert preds.shape == (60,)
        assert set(preds.tolist()) <= set(range(5))

    def test_beats_zero_shot_floor(self, small_problem):
        """On mildly noisy data the fused model classifies well."""
        arrays, X, y = small_problem
        est = TimoClassifier(text_features=arrays["text"]).fit(X, y)
        assert est.score(arrays["test_x"], arrays["test_y"]) >= 0.9

    def test_neutral_settings_reduce_to_fused_baselines(self, small_problem):
        """beta=0 and gamma=None turn both branches off: the decision is
        exactly (GDA on raw support) + alpha * (zero-shot cosine)."""
        arrays, X, y = small_problem
        est = TimoClassifier(text_features=arrays["text"], alpha=0.7,
                             beta=0, gamma=None).fit(X, y)
        got = est.decision_function(arrays["test_x"])

        gda = GdaClassifier(shrinkage=0.5, n_classes=5)
        gda.fit(l2_normalize(X), y)
        want = gda.decision_function(arrays["test_x"]) \
            + 0.7 * zero_shot_logits(arrays["text"], arrays["test_x"])
        np.testing.assert_allclose(got, want, atol=1e-9)

    def test_gamma_none_matches_tiny_gamma(self, small_problem):
        """The uniform prompt mean is the vanishing-gamma limit."""
        arrays, X, y = small_problem
        off = TimoClassifier(text_features=arrays["text"], gamma=None)
        tiny = TimoClassifier(text_features=arrays["text"], gamma=1e-8)
        a = off.fit(X, y).text_logits(arrays["test_x"])
        b = tiny.fit(X, y).text_logits(arrays["test_x"])
        np.testing.assert_allclose(a, b, atol=1e-4)

    def test_cache_mix_scales_image_branch(self, small_problem):
        arrays, X, y = small_problem
        one = TimoClassifier(text_features=arrays["text"], backend="cache",
                             mix=1.0).fit(X, y)
        two = TimoClassifier(text_features=arrays["text"], backend="cache",
                             mix=2.0).fit(X, y)
        np.testing.assert_array_equal(two.image_logits(arrays["test_x"]),
                                      2.0 * one.image_logits(arrays["test_x"]))

    def test_gda_ignores_mix(self, small_problem):
        arrays, X, y = small_problem
        one = TimoClassifier(text_features=arrays["text"], mix=1.0).fit(X, y)
        five = TimoClassifier(text_features=arrays["text"], mix=5.0).fit(X, y)
        np.testing.assert_array_equal(one.image_logits(arrays["test_x"]),
                                      five.image_logits(arrays["test_x"]))

    def test_alpha_interpolates_branches(self, small_problem):
        arrays, X, y = small_problem
        est = TimoClassifier(text_features=arrays["text"], alpha=0.3)
        est.fit(X, y)
        fused = est.decision_function(arrays["test_x"])
        manual = est.image_logits(arrays["test_x"]) \
            + 0.3 * est.text_logits(arrays["test_x"])
        np.testing.assert_array_equal(fused, manual)
