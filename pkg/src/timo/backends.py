"""Image-side classifier backends.

Two training-free backends fit on (possibly text-augmented) support
samples and score queries with an N-vector of class logits:

* :class:`CacheClassifier` — a key/value similarity cache.  Keys are the
  normalized samples, values their one-hot labels, and a query scores
  ``exp(-sharpness * (1 - <key, query>))`` summed per class.
* :class:`GdaClassifier` — Gaussian discriminant analysis with a shared
  covariance: per-class means, a pooled within-class covariance shrunk
  toward a scaled identity, and the linear discriminant
  ``mu_i' P q - 0.5 mu_i' P mu_i + log prior_i``.

Both follow the sklearn estimator protocol (``fit(X, y)``,
``decision_function``, ``predict``, ``get_params``).  Labels are class
indices 0..N-1 and every class must appear in ``y``.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
import scipy.linalg
from sklearn.base import BaseEstimator, ClassifierMixin

from .errors import ConfigError, DataError
from .features import l2_normalize
from .validation import as_labels, as_matrix, group_by_class

DEFAULT_SHARPNESS = 5.5
DEFAULT_SHRINKAGE = 0.5
_RIDGE = 1e-6


def stack_class_samples(samples_by_class: Sequence[np.ndarray]):
    """Flatten per-class sample blocks into (X, y), class-major order."""
    if len(samples_by_class) == 0:
        raise DataError("no classes given")
    blocks = []
    labels = []
    dim = None
    for c, block in enumerate(samples_by_class):
        arr = as_matrix(block, f"class {c} samples")
        if arr.shape[0] == 0:
            raise DataError(f"class {c} has no samples")
        if dim is None:
            dim = arr.shape[1]
        elif arr.shape[1] != dim:
            raise DataError(f"class {c} samples have dim {arr.shape[1]}, "
                            f"expected {dim}")
        blocks.append(arr)
        labels.append(np.full(arr.shape[0], c, dtype=np.int64))
    return np.concatenate(blocks, axis=0), np.concatenate(labels)


def _check_fit_inputs(X, y, n_classes):
    X = as_matrix(X, "X")
    y = as_labels(y, n_rows=X.shape[0])
    if n_classes is None:
        n_classes = int(y.max()) + 1 if y.size else 0
    if n_classes < 1:
        raise DataError("at least one class required")
    return X, y, n_classes


class CacheClassifier(BaseEstimator, ClassifierMixin):
    """Key/value similarity cache over normalized support samples.

    Parameters
    ----------
    sharpness : float, default 5.5
        Decay rate of the affinity kernel; larger values concentrate the
        score on the nearest keys.
    n_classes : int or None
        Declared class count; inferred from ``y`` when None.
    """

    def __init__(self, sharpness: float = DEFAULT_SHARPNESS,
                 n_classes: int | None = None):
        self.sharpness = sharpness
        self.n_classes = n_classes

    def fit(self, X, y):
        if self.sharpness <= 0:
            raise ConfigError(f"sharpness must be positive, got {self.sharpness}")
        X, y, n = _check_fit_inputs(X, y, self.n_classes)
        group_by_class(X, y, n)  # every class must be represented
        self.keys_ = l2_normalize(X)
        self.values_ = np.zeros((X.shape[0], n))
        self.values_[np.arange(X.shape[0]), y] = 1.0
        self.classes_ = np.arange(n)
        self.n_features_in_ = X.shape[1]
        return self

    def decision_function(self, X) -> np.ndarray:
        """Per-class cache scores; entries lie in (0, class sample count]."""
        if not hasattr(self, "keys_"):
            raise DataError("CacheClassifier is not fitted")
        single = np.asarray(X).ndim == 1
        q = l2_normalize(as_matrix(X, "queries", n_cols=self.n_features_in_))
        affinity = q @ self.keys_.T
        scores = np.exp(-self.sharpness * (1.0 - affinity)) @ self.values_
        return scores[0] if single else scores

    def predict(self, X) -> np.ndarray:
        logits = np.atleast_2d(self.decision_function(X))
        return self.classes_[np.argmax(logits, axis=1)]


class GdaClassifier(BaseEstimator, ClassifierMixin):
    """Shared-covariance Gaussian discriminant classifier.

    The pooled within-class covariance ``S = (1/M) sum (x - mu)(x - mu)'``
    is shrunk as ``(1 - shrinkage) S + shrinkage (trace(S)/D + 1e-6) I``
    and inverted through a Cholesky factorization.  Class priors default
    to uniform.

    Fitting is bitwise permutation-invariant in the sample order: rows
    are put into a canonical (lexicographic) order per class before any
    accumulation, so float summation order is fixed.
    """

    def __init__(self, shrinkage: float = DEFAULT_SHRINKAGE, priors=None,
                 n_classes: int | None = None):
        self.shrinkage = shrinkage
        self.priors = priors
        self.n_classes = n_classes

    def fit(self, X, y):
        if not 0.0 <= self.shrinkage <= 1.0:
            raise ConfigError(f"shrinkage must lie in [0, 1], got {self.shrinkage}")
        X, y, n = _check_fit_inputs(X, y, self.n_classes)
        if X.shape[0] < 2:
            raise DataError("GDA requires at least 2 samples in total")
        groups = group_by_class(X, y, n)
        d = X.shape[1]

        means = np.empty((n, d))
        scatter = np.zeros((d, d))
        m_total = 0
        for c, block in enumerate(groups):
            # Canonical row order makes the accumulation independent of
            # the order samples arrived in.
            block = block[np.lexsort(block.T[::-1])]
            means[c] = block.mean(axis=0)
            centered = block - means[c]
            scatter += centered.T @ centered
            m_total += block.shape[0]
        cov = scatter / m_total
        target = np.trace(cov) / d + _RIDGE
        shrunk = (1.0 - self.shrinkage) * cov
        shrunk.flat[:: d + 1] += self.shrinkage * target

        try:
            chol = scipy.linalg.cho_factor(shrunk, lower=True)
        except scipy.linalg.LinAlgError as exc:
            raise ConfigError(f"covariance factorization failed: {exc}") from None
        precision = scipy.linalg.cho_solve(chol, np.eye(d))
        precision = (precision + precision.T) / 2.0

        if self.priors is None:
            priors = np.full(n, 1.0 / n)
        else:
            priors = np.asarray(self.priors, dtype=np.float64)
            if priors.shape != (n,) or np.any(priors <= 0):
                raise ConfigError("priors must be N positive reals")
            if abs(priors.sum() - 1.0) > 1e-8:
                raise ConfigError("priors must sum to 1")

        self.means_ = means
        self.covariance_ = shrunk
        self.precision_ = precision
        self.priors_ = priors
        self.classes_ = np.arange(n)
        self.n_features_in_ = d
        # Linear form of the discriminant: logits = q A' - b + log prior.
        self._coef = means @ precision
        self._offset = 0.5 * np.einsum("nd,nd->n", self._coef, means) \
            - np.log(priors)
        return self

    def decision_function(self, X) -> np.ndarray:
        if not hasattr(self, "means_"):
            raise DataError("GdaClassifier is not fitted")
        single = np.asarray(X).ndim == 1
        q = as_matrix(X, "queries", n_cols=self.n_features_in_)
        logits = q @ self._coef.T - self._offset
        return logits[0] if single else logits

    def predict(self, X) -> np.ndarray:
        logits = np.atleast_2d(self.decision_function(X))
        return self.classes_[np.argmax(logits, axis=1)]


_BACKENDS = {"cache": CacheClassifier, "gda": GdaClassifier}


def build_image_classifier(kind: str, samples_by_class: Sequence[np.ndarray],
                           params: dict | None = None):
    """Fit the named backend on per-class sample blocks.

    The returned object scores queries through ``decision_function(q)``,
    yielding one logit per class.
    """
    if kind not in _BACKENDS:
        raise ConfigError(f"unknown backend kind {kind!r}; "
                          f"expected one of {sorted(_BACKENDS)}")
    X, y = stack_class_samples(samples_by_class)
    model = _BACKENDS[kind](**(params or {}), n_classes=len(samples_by_class))
    return model.fit(X, y)
