"""Image-guided text rectification.

Uniformly averaging a class's prompts treats good and bad prompts alike.
Here each class re-weights its prompts by how well they agree with the
class's support-image prototype: the weight direction is the closed-form
maximizer of ``r . (F_t w_v)`` over the radius-``gamma`` sphere, namely
``r = gamma * v / ||v||`` with ``v = F_t w_v``, and a row-wise softmax
turns it into a convex combination.  ``gamma`` controls how sharply the
combination concentrates on the best-matching prompts.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError
from .features import as_float_array, cosine_logits, l2_normalize
from .tgi import _text_array

# ||F_t w_v|| at or below this has no usable direction.
_DEGENERATE = 1e-12


def solve_prompt_weights(text_features, prototype,
                         gamma: float) -> tuple[np.ndarray, bool]:
    """Closed-form norm-``gamma`` maximizer of prompt agreement for one class.

    ``text_features`` is (n_prompts, dim), ``prototype`` the class's unit
    image prototype.  Returns ``(r, degenerate)`` where ``r`` has L2 norm
    ``gamma``.  When ``F_t @ prototype`` vanishes there is no preferred
    direction; the uniform vector ``gamma / sqrt(P)`` is returned with the
    flag set (its softmax is uniform, reproducing the plain prompt mean).
    """
    if gamma <= 0:
        raise ConfigError(f"gamma must be positive, got {gamma}")
    text = as_float_array(text_features, "text features", ndim=2)
    w = np.asarray(prototype, dtype=np.float64)
    v = text @ w
    norm = np.linalg.norm(v)
    if norm <= _DEGENERATE:
        p = text.shape[0]
        return np.full(p, gamma / np.sqrt(p)), True
    return gamma * v / norm, False


def softmax_rows(x) -> np.ndarray:
    """Row-wise softmax along the last axis, stable via max subtraction."""
    arr = np.asarray(x, dtype=np.float64)
    shifted = arr - arr.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class PromptWeights:
    """Per-class prompt weighting.

    ``raw`` rows have L2 norm gamma (the closed-form solution);
    ``weights`` rows are its softmax, non-negative and summing to 1.
    ``degenerate`` flags classes that fell back to the uniform vector.
    """

    raw: np.ndarray
    weights: np.ndarray
    degenerate: np.ndarray


def prompt_weights(text_features, prototypes, gamma: float) -> PromptWeights:
    """Vectorized :func:`solve_prompt_weights` + softmax over all classes."""
    if gamma <= 0:
        raise ConfigError(f"gamma must be positive, got {gamma}")
    text = _text_array(text_features)
    protos = np.asarray(prototypes, dtype=np.float64)
    v = np.einsum("npd,nd->np", text, protos)
    norms = np.linalg.norm(v, axis=1)
    degenerate = norms <= _DEGENERATE
    p = text.shape[1]
    safe = np.where(degenerate, 1.0, norms)
    raw = gamma * v / safe[:, None]
    if degenerate.any():
        raw[degenerate] = gamma / np.sqrt(p)
    return PromptWeights(raw, softmax_rows(raw), degenerate)


def uniform_prompt_weights(n_classes: int, n_prompts: int) -> PromptWeights:
    """The gamma -> 0 limit: every prompt weighted 1/P."""
    raw = np.zeros((n_classes, n_prompts))
    weights = np.full((n_classes, n_prompts), 1.0 / n_prompts)
    return PromptWeights(raw, weights, np.zeros(n_classes, dtype=bool))


def build_igt_prototypes(text_features, weights) -> np.ndarray:
    """Convex combination of each class's prompts under ``weights``.

    Returns shape (n_classes, dim), unnormalized (each row lies in the
    convex hull of its class's prompt rows).  Rows are unit-normalized
    at scoring time, see :func:`igt_logits`.
    """
    text = _text_array(text_features)
    w = weights.weights if isinstance(weights, PromptWeights) else np.asarray(weights)
    if w.shape != text.shape[:2]:
        raise ConfigError(f"weights shape {w.shape} does not match text bank "
                          f"{text.shape[:2]}")
    return np.einsum("np,npd->nd", w, text)


def igt_logits(igt_prototypes, queries, scale: float = 100.0) -> np.ndarray:
    """Scaled cosine logits against unit-normalized rectified prototypes."""
    return cosine_logits(l2_normalize(igt_prototypes), queries, scale)
