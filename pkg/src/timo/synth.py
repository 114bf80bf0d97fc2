"""Synthetic embedding dataset generator.

Builds a dataset in the container + manifest format from a single seed:
one unit direction per class, support images and queries as noisy
normalized copies of their class direction, and prompts as noisy copies
of which a fixed fraction per class is replaced by random unit vectors
(deliberately useless prompts, for probing robustness).

Two geometric choices mimic real contrastive embedding spaces.  Class
directions share a common component (pairwise cosine ``class_overlap``,
default 0.85), reproducing the narrow-cone concentration of embedding
vectors that makes neighbouring classes genuinely confusable.  The
``noise`` parameter is dimension-free: a sample is
``normalize(direction + noise * g / sqrt(dim))``, so ``noise`` is the
RMS length of the perturbation relative to the unit signal whatever
``dim`` is.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .container import write_tensor
from .errors import ConfigError
from .features import l2_normalize
from .rng import seed_stream

_DEFAULTS = dict(name="synth", classes=10, prompts=8, shots=4, dim=64,
                 noise=0.3, corrupt_fraction=0.0, class_overlap=0.85,
                 val_queries=200, test_queries=400, seed=0)


@dataclass
class SynthResult:
    """Paths of the manifests written by :func:`generate_dataset`."""

    support_manifest: Path
    validation_manifest: Path
    test_manifest: Path


def class_directions(n: int, dim: int, rng: np.random.Generator,
                     overlap: float = 0.85) -> np.ndarray:
    """N unit direction vectors with pairwise cosine ``overlap``.

    Each direction mixes its own orthonormal basis vector with one
    shared component: ``sqrt(1 - overlap) * e_i + sqrt(overlap) * m``.
    The shared component needs one spare dimension, so dim >= n + 1;
    with dim == n the directions are plain orthonormal (overlap 0), and
    below that random unit vectors are the best we can do.
    """
    if dim >= n + 1 and overlap > 0.0:
        gauss = rng.standard_normal((dim, n + 1))
        q, _ = np.linalg.qr(gauss)
        basis, shared = q.T[:n], q.T[n]
        return np.ascontiguousarray(
            np.sqrt(1.0 - overlap) * basis + np.sqrt(overlap) * shared)
    if dim >= n:
        gauss = rng.standard_normal((dim, n))
        q, _ = np.linalg.qr(gauss)
        if overlap > 0.0:
            warnings.warn(f"dim {dim} < classes + 1: no room for the shared "
                          f"class component, directions are orthonormal")
        return np.ascontiguousarray(q.T)
    warnings.warn(f"dim {dim} < classes {n}: directions cannot be "
                  f"orthogonalized, using random unit vectors")
    return l2_normalize(rng.standard_normal((n, dim)))


def _noisy(directions: np.ndarray, count_per_class: int, noise: float,
           rng: np.random.Generator) -> np.ndarray:
    n, d = directions.shape
    pts = directions[:, None, :] \
        + (noise / np.sqrt(d)) * rng.standard_normal((n, count_per_class, d))
    return l2_normalize(pts)


def _split_counts(total: int, n: int) -> np.ndarray:
    counts = np.full(n, total // n, dtype=np.int64)
    counts[: total % n] += 1
    return counts


def _query_split(directions: np.ndarray, total: int, noise: float,
                 rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    n, d = directions.shape
    counts = _split_counts(total, n)
    feats = []
    labels = []
    for c in range(n):
        feats.append(directions[c]
                     + (noise / np.sqrt(d)) * rng.standard_normal((counts[c], d)))
        labels.append(np.full(counts[c], c, dtype=np.int64))
    features = l2_normalize(np.concatenate(feats, axis=0))
    labels = np.concatenate(labels)
    perm = rng.permutation(total)
    return features[perm], labels[perm]


def generate_arrays(*, classes: int, prompts: int, shots: int, dim: int,
                    noise: float, corrupt_fraction: float,
                    class_overlap: float = 0.85, val_queries: int,
                    test_queries: int, seed: int) -> dict:
    """Generate all arrays in memory; see :func:`generate_dataset` for I/O."""
    if classes < 2:
        raise ConfigError("need at least 2 classes")
    if prompts < 1 or shots < 1 or dim < 1:
        raise ConfigError("prompts, shots and dim must all be >= 1")
    if not 0.0 <= corrupt_fraction <= 1.0:
        raise ConfigError("corrupt_fraction must lie in [0, 1]")
    if not 0.0 <= class_overlap < 1.0:
        raise ConfigError("class_overlap must lie in [0, 1)")
    if noise < 0.0:
        raise ConfigError("noise must be non-negative")
    if val_queries < 1 or test_queries < 1:
        raise ConfigError("query counts must be >= 1 (the container format "
                          "cannot represent an empty split)")

    directions = class_directions(classes, dim,
                                  seed_stream(seed, "class_directions"),
                                  overlap=class_overlap)
    support = _noisy(directions, shots, noise, seed_stream(seed, "support"))
    text = _noisy(directions, prompts, noise, seed_stream(seed, "prompts"))

    n_corrupt = int(round(corrupt_fraction * prompts))
    if n_corrupt:
        rng = seed_stream(seed, "prompt_corruption")
        for c in range(classes):
            picks = rng.choice(prompts, size=n_corrupt, replace=False)
            text[c, picks] = l2_normalize(rng.standard_normal((n_corrupt, dim)))

    val_x, val_y = _query_split(directions, val_queries, noise,
                                seed_stream(seed, "queries/validation"))
    test_x, test_y = _query_split(directions, test_queries, noise,
                                  seed_stream(seed, "queries/test"))
    return dict(directions=directions, text=text, support=support,
                val_x=val_x, val_y=val_y, test_x=test_x, test_y=test_y)


def _write_manifest(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def generate_dataset(out_dir, *, name: str = "synth", classes: int = 10,
                     prompts: int = 8, shots: int = 4, dim: int = 64,
                     noise: float = 0.3, corrupt_fraction: float = 0.0,
                     class_overlap: float = 0.85, val_queries: int = 200,
                     test_queries: int = 400, seed: int = 0) -> SynthResult:
    """Write a complete synthetic dataset (tensors + three manifests)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    arrays = generate_arrays(classes=classes, prompts=prompts, shots=shots,
                             dim=dim, noise=noise,
                             corrupt_fraction=corrupt_fraction,
                             class_overlap=class_overlap,
                             val_queries=val_queries,
                             test_queries=test_queries, seed=seed)
    class_names = [f"class_{c:03d}" for c in range(classes)]

    write_tensor(out / "text.tsr", arrays["text"])
    write_tensor(out / "support.tsr", arrays["support"])
    write_tensor(out / "val.tsr", arrays["val_x"])
    write_tensor(out / "val_labels.tsr", arrays["val_y"].astype(np.float32))
    write_tensor(out / "test.tsr", arrays["test_x"])
    write_tensor(out / "test_labels.tsr", arrays["test_y"].astype(np.float32))

    common = dict(dataset_name=name, class_names=class_names,
                  prompts_per_class=prompts, feature_dim=dim)
    _write_manifest(out / "support.manifest.json", dict(
        common, split="support", shots=shots,
        tensor_paths={"text": "text.tsr", "images": "support.tsr"},
        label_path=None))
    _write_manifest(out / "validation.manifest.json", dict(
        common, split="validation", shots=0,
        tensor_paths={"images": "val.tsr"}, label_path="val_labels.tsr"))
    _write_manifest(out / "test.manifest.json", dict(
        common, split="test", shots=0,
        tensor_paths={"images": "test.tsr"}, label_path="test_labels.tsr"))
    return SynthResult(out / "support.manifest.json",
                       out / "validation.manifest.json",
                       out / "test.manifest.json")
