"""Feature banks, prototypes and cosine scoring.

Everything downstream works on L2-normalized embedding rows: a text bank
of shape (classes, prompts, dim), an image support bank of shape
(classes, shots, dim) and flat query batches of shape (queries, dim).
Class prototypes are normalized means over the prompt or shot axis, and
classification is scaled cosine similarity against prototype rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .validation import as_float_array, as_labels, as_matrix

# Below this norm a row has no usable direction and is left as-is but flagged.
DEGENERATE_NORM = 1e-12


def l2_normalize(x, axis: int = -1) -> np.ndarray:
    """Scale rows along ``axis`` to unit L2 norm.

    Rows with norm <= 1e-12 cannot be normalized and are returned
    unchanged; use :func:`degenerate_rows` to locate them.
    """
    arr = np.asarray(x, dtype=np.float64)
    norms = np.linalg.norm(arr, axis=axis, keepdims=True)
    safe = np.where(norms > DEGENERATE_NORM, norms, 1.0)
    return arr / safe


def degenerate_rows(x, axis: int = -1) -> np.ndarray:
    """Boolean mask of rows along ``axis`` whose norm is <= 1e-12."""
    arr = np.asarray(x, dtype=np.float64)
    return np.linalg.norm(arr, axis=axis) <= DEGENERATE_NORM


@dataclass
class TextFeatureBank:
    """Per-class prompt embeddings, rows unit-normalized.

    ``features`` has shape (n_classes, n_prompts, dim).  ``degenerate``
    marks prompt rows that arrived with (near-)zero norm.
    """

    features: np.ndarray
    prompt_texts: list[list[str]] | None = None
    degenerate: np.ndarray = field(default=None)  # type: ignore[assignment]

    @classmethod
    def from_array(cls, features, prompt_texts=None) -> "TextFeatureBank":
        arr = as_float_array(features, "text features", ndim=3)
        if min(arr.shape) < 1:
            raise DataError("text features: empty axis")
        flags = degenerate_rows(arr)
        return cls(l2_normalize(arr), prompt_texts, flags)

    @property
    def n_classes(self) -> int:
        return self.features.shape[0]

    @property
    def n_prompts(self) -> int:
        return self.features.shape[1]

    @property
    def dim(self) -> int:
        return self.features.shape[2]


@dataclass
class ImageSupportBank:
    """Per-class support-image embeddings plus their class prototypes.

    ``features`` has shape (n_classes, n_shots, dim); ``prototypes`` is
    the normalized per-class mean, shape (n_classes, dim).
    """

    features: np.ndarray
    prototypes: np.ndarray
    degenerate: np.ndarray

    @classmethod
    def from_array(cls, features) -> "ImageSupportBank":
        arr = as_float_array(features, "support features", ndim=3)
        if min(arr.shape) < 1:
            raise DataError("support features: empty axis")
        protos = image_prototypes(l2_normalize(arr))
        return cls(l2_normalize(arr), protos.vectors, protos.degenerate)

    @property
    def n_classes(self) -> int:
        return self.features.shape[0]

    @property
    def n_shots(self) -> int:
        return self.features.shape[1]

    @property
    def dim(self) -> int:
        return self.features.shape[2]


@dataclass
class QueryBatch:
    """A flat batch of query embeddings with optional true labels."""

    features: np.ndarray
    labels: np.ndarray | None = None
    split: str = ""

    @classmethod
    def from_arrays(cls, features, labels=None, split: str = "",
                    n_classes: int | None = None) -> "QueryBatch":
        arr = as_matrix(features, "query features")
        lab = None
        if labels is not None:
            lab = as_labels(labels, n_rows=arr.shape[0], n_classes=n_classes)
        return cls(l2_normalize(arr), lab, split)

    def __len__(self) -> int:
        return self.features.shape[0]


@dataclass
class PrototypeSet:
    """One unit vector per class; ``degenerate`` marks classes whose mean
    had no direction (the raw mean is kept unnormalized for those)."""

    vectors: np.ndarray
    degenerate: np.ndarray


def _mean_prototypes(features: np.ndarray) -> PrototypeSet:
    means = features.mean(axis=1)
    flags = degenerate_rows(means)
    return PrototypeSet(l2_normalize(means), flags)


def text_prototypes(text_features) -> PrototypeSet:
    """Normalized mean over the prompt axis, one row per class.

    Accepts a (n_classes, n_prompts, dim) array or a TextFeatureBank.
    With a single prompt this reduces to the prompt row itself.
    """
    if isinstance(text_features, TextFeatureBank):
        arr = text_features.features
    else:
        arr = l2_normalize(as_float_array(text_features, "text features", ndim=3))
    return _mean_prototypes(arr)


def image_prototypes(support_features) -> PrototypeSet:
    """Normalized mean over the shot axis, one row per class."""
    if isinstance(support_features, ImageSupportBank):
        return PrototypeSet(support_features.prototypes, support_features.degenerate)
    arr = l2_normalize(as_float_array(support_features, "support features", ndim=3))
    return _mean_prototypes(arr)


def cosine_logits(prototypes, queries, scale: float = 100.0) -> np.ndarray:
    """Scaled cosine similarities of each query against each prototype.

    Returns shape (n_queries, n_classes), or (n_classes,) for a single
    1-D query.  Both sides are defensively re-normalized, so every entry
    lies in [-scale, scale] and the argmax is invariant to ``scale``.
    """
    if isinstance(prototypes, PrototypeSet):
        protos = prototypes.vectors
    else:
        protos = np.asarray(prototypes, dtype=np.float64)
    protos = l2_normalize(as_matrix(protos, "prototypes"))
    single = np.asarray(queries).ndim == 1
    q = l2_normalize(as_matrix(queries, "queries", n_cols=protos.shape[1]))
    logits = scale * (q @ protos.T)
    return logits[0] if single else logits
