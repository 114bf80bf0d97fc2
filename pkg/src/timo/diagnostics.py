"""Prototype and classifier diagnostics.

Tools for asking *why* a configuration works: counting queries that match
a foreign class prototype more strongly than their own, ranking prompts
by agreement with the image prototypes (and re-scoring prompt halves),
measuring pairwise disagreement of two classifiers (Yule's Q), and a
Kruskal-Wallis rank test over accuracy groups.  The chi-squared tail
probability is evaluated in-package via the regularized incomplete gamma
function, so the module has no statistics dependency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import ConfigError, DataError
from .features import PrototypeSet, l2_normalize
from .tgi import _text_array
from .validation import as_labels, as_matrix


@dataclass
class AnomalyReport:
    """Counts of foreign queries matching each class's prototype.

    In ``relative`` mode a sample of true class j counts against
    prototype i != j when it scores higher on i than on its own class.
    In ``threshold`` mode it counts when its score on i exceeds the
    fixed threshold.
    """

    counts: np.ndarray
    mode: str
    threshold: float | None = None

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def anomalous_matches(prototypes, features_by_class: Sequence[np.ndarray],
                      mode: str = "relative",
                      threshold: float | None = None) -> AnomalyReport:
    """Count cross-class prototype matches, one count vector entry per class."""
    if isinstance(prototypes, PrototypeSet):
        protos = prototypes.vectors
    else:
        protos = np.asarray(prototypes, dtype=np.float64)
    protos = l2_normalize(as_matrix(protos, "prototypes"))
    n = protos.shape[0]
    if len(features_by_class) != n:
        raise DataError(f"{len(features_by_class)} feature groups for "
                        f"{n} prototypes")
    if mode not in ("relative", "threshold"):
        raise ConfigError(f"mode must be 'relative' or 'threshold', got {mode!r}")
    if mode == "threshold" and threshold is None:
        raise ConfigError("threshold mode requires a threshold value")

    counts = np.zeros(n, dtype=np.int64)
    for j, feats in enumerate(features_by_class):
        if len(feats) == 0:
            continue
        sims = l2_normalize(as_matrix(feats, f"class {j} features",
                                      n_cols=protos.shape[1])) @ protos.T
        if mode == "relative":
            hits = sims > sims[:, j][:, None]
        else:
            hits = sims > threshold
        hits[:, j] = False
        counts += hits.sum(axis=0)
    return AnomalyReport(counts, mode, threshold)


@dataclass
class PromptQuality:
    """Per-class prompt ranking by cosine agreement with the image prototype.

    ``order[i]`` lists prompt indices best-first (ties keep the lower
    index first); ``similarity[i, k]`` is the score of prompt
    ``order[i, k]``.
    """

    order: np.ndarray
    similarity: np.ndarray

    @property
    def n_prompts(self) -> int:
        return self.order.shape[1]

    def ranked(self, class_index: int) -> list[tuple[int, float]]:
        return [(int(p), float(s)) for p, s in
                zip(self.order[class_index], self.similarity[class_index])]


def prompt_quality(text_features, image_prototypes) -> PromptQuality:
    """Rank every class's prompts by agreement with its image prototype."""
    text = _text_array(text_features)
    if isinstance(image_prototypes, PrototypeSet):
        protos = image_prototypes.vectors
    else:
        protos = l2_normalize(np.asarray(image_prototypes, dtype=np.float64))
    values = np.einsum("npd,nd->np", text, protos)
    order = np.argsort(-values, axis=1, kind="stable")
    return PromptQuality(order, np.take_along_axis(values, order, axis=1))


def split_prototypes(text_features, quality: PromptQuality,
                     half: str) -> np.ndarray:
    """Prototypes from the best half, worst half, or all prompts.

    The split point is ceil(P/2): with an odd prompt count the best half
    receives the extra prompt.  Selected prompt rows are averaged in
    original index order, so ``half="all"`` reproduces the plain prompt
    mean exactly.
    """
    text = _text_array(text_features)
    n, p, _ = text.shape
    cut = -(-p // 2)
    if half == "best":
        picks = quality.order[:, :cut]
    elif half == "worst":
        if p - cut == 0:
            raise ConfigError("worst half is empty for a single prompt")
        picks = quality.order[:, cut:]
    elif half == "all":
        picks = quality.order
    else:
        raise ConfigError(f"half must be 'best', 'worst' or 'all', got {half!r}")
    picks = np.sort(picks, axis=1)
    chosen = np.take_along_axis(text, picks[:, :, None], axis=1)
    return l2_normalize(chosen.mean(axis=1))


@dataclass
class QStatistic:
    """Yule's Q over the joint correctness of two prediction vectors.

    ``value`` is None (and ``undefined`` True) when the denominator
    ``n11 n00 + n01 n10`` vanishes, e.g. when either classifier is
    perfect on the batch.
    """

    n11: int
    n00: int
    n10: int
    n01: int
    value: float | None
    undefined: bool


def q_statistic(preds_a, preds_b, labels) -> QStatistic:
    """Pairwise agreement statistic of two classifiers on one batch."""
    labels = as_labels(labels)
    a = as_labels(preds_a, n_rows=labels.shape[0])
    b = as_labels(preds_b, n_rows=labels.shape[0])
    if labels.size == 0:
        raise DataError("empty prediction batch")
    ca = a == labels
    cb = b == labels
    n11 = int(np.sum(ca & cb))
    n00 = int(np.sum(~ca & ~cb))
    n10 = int(np.sum(ca & ~cb))
    n01 = int(np.sum(~ca & cb))
    denom = n11 * n00 + n01 * n10
    if denom == 0:
        return QStatistic(n11, n00, n10, n01, None, True)
    return QStatistic(n11, n00, n10, n01,
                      (n11 * n00 - n01 * n10) / denom, False)


def _average_ranks(values: np.ndarray) -> tuple[np.ndarray, float]:
    """Ranks 1..M with ties sharing their average; also the tie term
    sum(t^3 - t) over tie runs."""
    m = values.shape[0]
    order = np.argsort(values, kind="stable")
    ranks = np.empty(m)
    tie_term = 0.0
    i = 0
    sorted_vals = values[order]
    while i < m:
        j = i
        while j + 1 < m and sorted_vals[j + 1] == sorted_vals[i]:
            j += 1
        t = j - i + 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        tie_term += t**3 - t
        i = j + 1
    return ranks, tie_term


def kruskal_wallis_h(groups: Sequence[Sequence[float]]) -> tuple[float, float]:
    """Kruskal-Wallis H with tie correction and chi-squared p-value.

    ``groups`` holds two or more non-empty samples of a scalar metric
    (e.g. per-seed accuracies of different methods).  Returns ``(H, p)``
    with p approximated by the chi-squared tail at ``len(groups) - 1``
    degrees of freedom.
    """
    arrays = [np.asarray(g, dtype=np.float64).ravel() for g in groups]
    if len(arrays) < 2:
        raise ConfigError("kruskal_wallis_h needs at least two groups")
    if any(a.size == 0 for a in arrays):
        raise DataError("empty group")
    pooled = np.concatenate(arrays)
    m = pooled.shape[0]
    ranks, tie_term = _average_ranks(pooled)
    h = 0.0
    start = 0
    for a in arrays:
        r = ranks[start : start + a.size]
        h += a.size * (r.mean() - (m + 1) / 2.0) ** 2
        start += a.size
    h *= 12.0 / (m * (m + 1))
    correction = 1.0 - tie_term / (m**3 - m)
    h = 0.0 if correction <= 0.0 else h / correction
    return h, chi2_sf(h, len(arrays) - 1)


def chi2_sf(x: float, df: int) -> float:
    """Chi-squared survival function P(X > x) at ``df`` degrees of freedom."""
    if df < 1:
        raise ConfigError(f"df must be >= 1, got {df}")
    if x <= 0.0:
        return 1.0
    return regularized_upper_gamma(df / 2.0, x / 2.0)


# Regularized incomplete gamma via the classic power series (x < a + 1)
# and Lentz continued fraction (x >= a + 1); relative accuracy well
# beyond 1e-8 for a <= 100, i.e. df <= 200.
_MAX_ITER = 500
_EPS = 1e-15
_TINY = 1e-300


def regularized_upper_gamma(a: float, x: float) -> float:
    """Q(a, x) = Gamma(a, x) / Gamma(a) for a > 0, x >= 0."""
    if a <= 0:
        raise ConfigError(f"gamma shape must be positive, got {a}")
    if x < 0:
        raise ConfigError(f"gamma argument must be non-negative, got {x}")
    if x == 0.0:
        return 1.0
    if x < a + 1.0:
        return 1.0 - _lower_gamma_series(a, x)
    return _upper_gamma_cf(a, x)


def _log_prefactor(a: float, x: float) -> float:
    return a * math.log(x) - x - math.lgamma(a)


def _lower_gamma_series(a: float, x: float) -> float:
    term = 1.0 / a
    total = term
    n = a
    for _ in range(_MAX_ITER):
        n += 1.0
        term *= x / n
        total += term
        if abs(term) < abs(total) * _EPS:
            break
    return total * math.exp(_log_prefactor(a, x))


def _upper_gamma_cf(a: float, x: float) -> float:
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    f = d
    for i in range(1, _MAX_ITER + 1):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        delta = d * c
        f *= delta
        if abs(delta - 1.0) < _EPS:
            break
    return math.exp(_log_prefactor(a, x)) * f
