"""Text-guided image augmentation.

Each class's prompt embeddings are scored by cosine similarity against
that class's support-image prototype.  The ``beta`` highest-scoring
prompts are then injected into the class's sample block as
similarity-weighted rows, widening a K-shot support set to K + beta
samples per class.  For beta > n_prompts the prompt list is conceptually
duplicated (each prompt twice, identical weight) before selection, so
the strongest beta - n_prompts prompts contribute two copies.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .features import PrototypeSet, TextFeatureBank, as_float_array, l2_normalize


@dataclass
class SimilarityWeights:
    """Cosine similarity of every prompt to its class image prototype.

    ``values`` has shape (n_classes, n_prompts); ``order`` holds prompt
    indices sorted by descending similarity, ties broken by the lower
    original index.
    """

    values: np.ndarray
    order: np.ndarray


@dataclass
class RetainedPrompts:
    """The per-class prompt selection produced by :func:`select_top_beta`.

    ``indices`` and ``weights`` both have shape (n_classes, beta), rows
    in selection order (weights non-increasing along each row).
    """

    indices: np.ndarray
    weights: np.ndarray

    @property
    def beta(self) -> int:
        return self.indices.shape[1]


def _text_array(text_features) -> np.ndarray:
    if isinstance(text_features, TextFeatureBank):
        return text_features.features
    return l2_normalize(as_float_array(text_features, "text features", ndim=3))


def prompt_image_similarity(text_features, prototypes) -> SimilarityWeights:
    """Score each prompt row against its own class's image prototype."""
    text = _text_array(text_features)
    if isinstance(prototypes, PrototypeSet):
        protos = prototypes.vectors
    else:
        protos = l2_normalize(np.asarray(prototypes, dtype=np.float64))
    if protos.shape != (text.shape[0], text.shape[2]):
        raise ConfigError(
            f"prototypes shape {protos.shape} does not match text bank "
            f"{(text.shape[0], text.shape[2])}")
    values = np.einsum("npd,nd->np", text, protos)
    # Stable mergesort on the negated values keeps equal-similarity
    # prompts in original index order.
    order = np.argsort(-values, axis=1, kind="stable")
    return SimilarityWeights(values, order)


def select_top_beta(similarity: SimilarityWeights, beta: int) -> RetainedPrompts:
    """Keep the ``beta`` strongest prompts per class, in selection order.

    ``beta`` may range from 0 (keep nothing) to 2 * n_prompts; above
    n_prompts the top ``beta - n_prompts`` prompts appear twice, the two
    copies adjacent and equally weighted.  Selections are nested: every
    prompt copy retained at ``beta`` is also retained at ``beta + 1``.
    """
    n, p = similarity.values.shape
    if not isinstance(beta, (int, np.integer)) or isinstance(beta, bool):
        raise ConfigError(f"beta must be an integer, got {beta!r}")
    beta = int(beta)
    if beta < 0 or beta > 2 * p:
        raise ConfigError(f"beta must lie in [0, {2 * p}], got {beta}")
    order = similarity.order
    if beta <= p:
        indices = order[:, :beta]
    else:
        extra = beta - p
        # Each of the top `extra` prompts is emitted twice, keeping the
        # copies adjacent; the remaining prompts follow once each.
        doubled = np.empty((n, p + extra), dtype=order.dtype)
        doubled[:, : 2 * extra : 2] = order[:, :extra]
        doubled[:, 1 : 2 * extra : 2] = order[:, :extra]
        doubled[:, 2 * extra :] = order[:, extra:]
        indices = doubled
    weights = np.take_along_axis(similarity.values, indices, axis=1) \
        if beta else np.empty((n, 0))
    return RetainedPrompts(np.ascontiguousarray(indices),
                           np.ascontiguousarray(weights))


def build_tgi_features(image_features, text_features,
                       retained: RetainedPrompts) -> np.ndarray:
    """Concatenate support images with similarity-weighted prompt rows.

    Returns shape (n_classes, n_shots + beta, dim).  Image rows are
    copied through untouched; each retained prompt contributes
    ``weight * prompt_row`` with no re-normalization, so a weight-1
    prompt enters as an exact copy of itself.
    """
    if isinstance(image_features, np.ndarray):
        images = as_float_array(image_features, "support features", ndim=3)
    else:
        images = image_features.features
    text = _text_array(text_features)
    if text.shape[0] != images.shape[0] or text.shape[2] != images.shape[2]:
        raise ConfigError("text and image banks disagree on classes or dim")
    if retained.beta == 0:
        return images.copy()
    rows = np.take_along_axis(text, retained.indices[:, :, None], axis=1)
    weighted = rows * retained.weights[:, :, None]
    return np.concatenate([images, weighted], axis=1)
