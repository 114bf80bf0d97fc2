"""The fused few-shot classifier, packaged as a sklearn-style estimator."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin

from . import igt as igt_mod
from . import tgi as tgi_mod
from .backends import CacheClassifier, GdaClassifier
from .errors import ConfigError, DataError
from .features import (TextFeatureBank, as_float_array, cosine_logits,
                       l2_normalize, text_prototypes)
from .validation import as_labels, as_matrix, group_by_class


class TimoClassifier(BaseEstimator, ClassifierMixin):
    """Cross-modally guided few-shot classifier over frozen embeddings.

    ``fit(X, y)`` takes support-image embeddings and their class labels;
    the per-class prompt embeddings ride along as the ``text_features``
    constructor parameter (they are side information fixed per dataset,
    like a vocabulary).  Fitting is training-free: it builds class
    prototypes, injects the ``beta`` best prompts per class into the
    image backend's support set (weighted by prompt-prototype cosine),
    and rectifies the text prototypes by a softmax re-weighting of
    prompts sharpened by ``gamma``.  ``decision_function`` returns the
    fused logits ``image_branch + alpha * text_branch``.

    Parameters
    ----------
    text_features : array (n_classes, n_prompts, dim)
        Prompt embeddings per class.
    alpha : float, default 1.0
        Fusion weight of the text branch.
    beta : int or None, default None
        Number of prompt rows injected per class, in [0, 2 * n_prompts];
        None means n_prompts.
    gamma : float or None, default 10.0
        Prompt re-weighting temperature; None selects the uniform prompt
        mean (the plain zero-shot text prototype).
    backend : {"gda", "cache"}, default "gda"
        Image-branch classifier over the augmented support set.
    shrinkage, priors : GDA backend parameters.
    sharpness : cache backend kernel decay.
    mix : float, default 1.0
        Multiplier on the cache branch logits (ignored by the GDA
        backend, whose discriminant already carries its own scale).
    scale : float, default 100.0
        Cosine logit scale of the text branch.
    """

    def __init__(self, text_features=None, alpha: float = 1.0,
                 beta: int | None = None, gamma: float | None = 10.0,
                 backend: str = "gda", shrinkage: float = 0.5,
                 priors=None, sharpness: float = 5.5, mix: float = 1.0,
                 scale: float = 100.0):
        self.text_features = text_features
        self.alpha = alpha
        self.beta = beta
        self.gamma = gamma
        self.backend = backend
        self.shrinkage = shrinkage
        self.priors = priors
        self.sharpness = sharpness
        self.mix = mix
        self.scale = scale

    def _text_bank(self) -> TextFeatureBank:
        if self.text_features is None:
            raise ConfigError("text_features must be provided")
        if isinstance(self.text_features, TextFeatureBank):
            return self.text_features
        return TextFeatureBank.from_array(
            as_float_array(self.text_features, "text_features", ndim=3))

    def fit(self, X, y):
        text = self._text_bank()
        n, p = text.n_classes, text.n_prompts
        X = as_matrix(X, "X", n_cols=text.dim)
        y = as_labels(y, n_rows=X.shape[0], n_classes=n)
        groups = group_by_class(l2_normalize(X), y, n)

        prototypes = l2_normalize(np.stack([g.mean(axis=0) for g in groups]))
        similarity = tgi_mod.prompt_image_similarity(text, prototypes)
        beta = p if self.beta is None else self.beta
        retained = tgi_mod.select_top_beta(similarity, beta)

        if self.backend == "gda":
            model = GdaClassifier(shrinkage=self.shrinkage, priors=self.priors,
                                  n_classes=n)
        elif self.backend == "cache":
            model = CacheClassifier(sharpness=self.sharpness, n_classes=n)
        else:
            raise ConfigError(f"unknown backend {self.backend!r}")
        blocks, labels = _augmented_blocks(groups, text.features, retained)
        model.fit(blocks, labels)

        if self.gamma is None:
            weights = igt_mod.uniform_prompt_weights(n, p)
        else:
            weights = igt_mod.prompt_weights(text, prototypes, self.gamma)
        rectified = igt_mod.build_igt_prototypes(text, weights)

        self.classes_ = np.arange(n)
        self.n_features_in_ = text.dim
        self.image_prototypes_ = prototypes
        self.similarity_ = similarity
        self.retained_ = retained
        self.image_model_ = model
        self.prompt_weights_ = weights
        self.text_prototypes_ = l2_normalize(rectified)
        return self

    def _check_fitted(self):
        if not hasattr(self, "image_model_"):
            raise DataError("TimoClassifier is not fitted")

    def image_logits(self, X) -> np.ndarray:
        """Image-branch logits (cache logits carry the ``mix`` factor)."""
        self._check_fitted()
        logits = self.image_model_.decision_function(X)
        if self.backend == "cache":
            logits = self.mix * logits
        return logits

    def text_logits(self, X) -> np.ndarray:
        """Text-branch logits: scaled cosine against rectified prototypes."""
        self._check_fitted()
        return cosine_logits(self.text_prototypes_, X, self.scale)

    def decision_function(self, X) -> np.ndarray:
        return self.image_logits(X) + self.alpha * self.text_logits(X)

    def predict(self, X) -> np.ndarray:
        logits = np.atleast_2d(self.decision_function(X))
        return self.classes_[np.argmax(logits, axis=1)]


def _augmented_blocks(groups, text_features, retained):
    """Per-class [image rows; weighted prompt rows] stacked class-major."""
    blocks = []
    labels = []
    for c, g in enumerate(groups):
        if retained.beta:
            rows = text_features[c, retained.indices[c]] \
                * retained.weights[c][:, None]
            block = np.concatenate([g, rows], axis=0)
        else:
            block = g
        blocks.append(block)
        labels.append(np.full(block.shape[0], c, dtype=np.int64))
    return np.concatenate(blocks, axis=0), np.concatenate(labels)


def zero_shot_logits(text_features, queries, scale: float = 100.0) -> np.ndarray:
    """Plain prompt-mean cosine logits, no support images involved."""
    return cosine_logits(text_prototypes(text_features), queries, scale)
