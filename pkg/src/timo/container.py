"""Binary tensor container and dataset manifests.

This is the on-disk contract between the embedding extractor and the
engine, so the byte layout is fixed and versioned rather than delegated
to an array library.  A file holds exactly one tensor:

====================  ========================================
bytes                 meaning
====================  ========================================
0-3                   magic ``b"TIMO"``
4-7                   format version, uint32 little-endian (=1)
8                     dtype code, uint8 (0 = float32 LE)
9                     rank, uint8 (1, 2 or 3)
10 .. 10+4*rank       dims, uint32 little-endian each
rest                  payload, row-major float32
====================  ========================================

A manifest is a UTF-8 JSON file describing one split of a dataset and
pointing at its tensor files (paths resolved relative to the manifest).

Reads are pure and reentrant; writers assume a single writer per path.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError
from .features import ImageSupportBank, QueryBatch, TextFeatureBank
from .validation import as_labels

MAGIC = b"TIMO"
FORMAT_VERSION = 1
DTYPE_FLOAT32 = 0
_HEADER = struct.Struct("<4sIBB")

SPLITS = ("support", "validation", "test")

_REQUIRED_MANIFEST_KEYS = (
    "dataset_name",
    "class_names",
    "split",
    "shots",
    "prompts_per_class",
    "feature_dim",
    "tensor_paths",
    "label_path",
)
_OPTIONAL_MANIFEST_KEYS = ("prompt_texts", "pad_mask")


def write_tensor(path, array) -> None:
    """Write ``array`` (rank 1-3, converted to float32) to ``path``."""
    arr = np.asarray(array)
    if arr.ndim not in (1, 2, 3):
        raise DataError(f"tensor rank must be 1, 2 or 3, got {arr.ndim}")
    if min(arr.shape) < 1:
        raise DataError("tensor dims must all be >= 1")
    if arr.shape[0] >= 2**32 or any(d >= 2**32 for d in arr.shape):
        raise DataError("tensor dim exceeds uint32 range")
    payload = np.ascontiguousarray(arr, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, DTYPE_FLOAT32, arr.ndim))
        fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
        fh.write(payload.tobytes(order="C"))


def read_tensor(path) -> np.ndarray:
    """Read a tensor file back as a float32 array of its stored shape."""
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise DataError(f"{path}: truncated header")
    magic, version, dtype, rank = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise DataError(f"{path}: bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported format version {version}")
    if dtype != DTYPE_FLOAT32:
        raise DataError(f"{path}: unsupported dtype code {dtype}")
    if rank not in (1, 2, 3):
        raise DataError(f"{path}: invalid rank {rank}")
    dims_end = _HEADER.size + 4 * rank
    if len(data) < dims_end:
        raise DataError(f"{path}: truncated dims")
    dims = struct.unpack_from(f"<{rank}I", data, _HEADER.size)
    if any(d < 1 for d in dims):
        raise DataError(f"{path}: zero-sized dim in {dims}")
    count = int(np.prod(dims, dtype=np.int64))
    expected = dims_end + 4 * count
    if len(data) < expected:
        raise DataError(f"{path}: truncated payload "
                        f"({len(data) - dims_end} of {4 * count} bytes)")
    if len(data) > expected:
        raise DataError(f"{path}: {len(data) - expected} trailing bytes")
    flat = np.frombuffer(data, dtype="<f4", count=count, offset=dims_end)
    return flat.reshape(dims).copy()


@dataclass
class Manifest:
    """Parsed, validated description of one dataset split."""

    dataset_name: str
    class_names: list[str]
    split: str
    shots: int
    prompts_per_class: int
    feature_dim: int
    tensor_paths: dict[str, Path]
    label_path: Path | None
    prompt_texts: list[list[str]] | None = None
    pad_mask: np.ndarray | None = None
    path: Path | None = None

    @property
    def n_classes(self) -> int:
        return len(self.class_names)


def read_manifest(path) -> Manifest:
    """Load and validate a manifest JSON file."""
    path = Path(path)
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise DataError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise DataError(f"{path}: manifest must be a JSON object")
    missing = [k for k in _REQUIRED_MANIFEST_KEYS if k not in raw]
    if missing:
        raise DataError(f"{path}: missing manifest keys {missing}")
    unknown = [k for k in raw
               if k not in _REQUIRED_MANIFEST_KEYS + _OPTIONAL_MANIFEST_KEYS]
    if unknown:
        raise DataError(f"{path}: unknown manifest keys {unknown}")

    split = raw["split"]
    if split not in SPLITS:
        raise DataError(f"{path}: split must be one of {SPLITS}, got {split!r}")
    class_names = raw["class_names"]
    if (not isinstance(class_names, list) or not class_names
            or not all(isinstance(c, str) for c in class_names)):
        raise DataError(f"{path}: class_names must be a non-empty list of strings")
    shots = raw["shots"]
    if not isinstance(shots, int) or shots < 0:
        raise DataError(f"{path}: shots must be an integer >= 0")
    if split == "support" and shots < 1:
        raise DataError(f"{path}: support split requires shots >= 1")
    if split != "support" and shots != 0:
        raise DataError(f"{path}: query splits must declare shots = 0")
    prompts = raw["prompts_per_class"]
    if not isinstance(prompts, int) or prompts < 1:
        raise DataError(f"{path}: prompts_per_class must be an integer >= 1")
    dim = raw["feature_dim"]
    if not isinstance(dim, int) or dim < 1:
        raise DataError(f"{path}: feature_dim must be an integer >= 1")
    tensor_paths = raw["tensor_paths"]
    if not isinstance(tensor_paths, dict) or not tensor_paths:
        raise DataError(f"{path}: tensor_paths must be a non-empty object")

    base = path.parent
    resolved = {role: base / p for role, p in tensor_paths.items()}
    label_path = raw["label_path"]
    label_resolved = base / label_path if label_path else None
    if split == "support":
        for role in ("text", "images"):
            if role not in resolved:
                raise DataError(f"{path}: support split needs tensor role {role!r}")
    else:
        if "images" not in resolved:
            raise DataError(f"{path}: query split needs tensor role 'images'")
        if label_resolved is None:
            raise DataError(f"{path}: query split needs a label_path")

    pad_mask = None
    if raw.get("pad_mask") is not None:
        pad_mask = np.asarray(raw["pad_mask"])
        if pad_mask.shape != (len(class_names), prompts):
            raise DataError(f"{path}: pad_mask shape {pad_mask.shape} does not "
                            f"match (classes, prompts)")
    prompt_texts = raw.get("prompt_texts")
    if prompt_texts is not None:
        if (len(prompt_texts) != len(class_names)
                or any(len(p) != prompts for p in prompt_texts)):
            raise DataError(f"{path}: prompt_texts must be {len(class_names)} lists "
                            f"of {prompts} strings")

    return Manifest(
        dataset_name=str(raw["dataset_name"]),
        class_names=list(class_names),
        split=split,
        shots=shots,
        prompts_per_class=prompts,
        feature_dim=dim,
        tensor_paths=resolved,
        label_path=label_resolved,
        prompt_texts=prompt_texts,
        pad_mask=pad_mask,
        path=path,
    )


def read_labels(path, n_classes: int) -> np.ndarray:
    """Read per-row class indices stored as a rank-1 float32 tensor."""
    arr = read_tensor(path)
    if arr.ndim != 1:
        raise DataError(f"{path}: labels must be a rank-1 tensor")
    return as_labels(arr, n_classes=n_classes)


def load_support(manifest: Manifest) -> tuple[TextFeatureBank, ImageSupportBank]:
    """Load the text and image banks referenced by a support manifest."""
    if manifest.split != "support":
        raise DataError(f"{manifest.path}: expected a support manifest")
    n, p, k, d = (manifest.n_classes, manifest.prompts_per_class,
                  manifest.shots, manifest.feature_dim)
    text = read_tensor(manifest.tensor_paths["text"])
    if text.shape != (n, p, d):
        raise DataError(f"{manifest.tensor_paths['text']}: expected shape "
                        f"{(n, p, d)}, got {text.shape}")
    images = read_tensor(manifest.tensor_paths["images"])
    if images.shape != (n, k, d):
        raise DataError(f"{manifest.tensor_paths['images']}: expected shape "
                        f"{(n, k, d)}, got {images.shape}")
    return (TextFeatureBank.from_array(text, manifest.prompt_texts),
            ImageSupportBank.from_array(images))


def load_queries(manifest: Manifest) -> QueryBatch:
    """Load the query batch referenced by a validation/test manifest."""
    if manifest.split == "support":
        raise DataError(f"{manifest.path}: expected a query manifest")
    arr = read_tensor(manifest.tensor_paths["images"])
    if arr.ndim != 2 or arr.shape[1] != manifest.feature_dim:
        raise DataError(f"{manifest.tensor_paths['images']}: expected shape "
                        f"(queries, {manifest.feature_dim}), got {arr.shape}")
    labels = read_labels(manifest.label_path, manifest.n_classes)
    if labels.shape[0] != arr.shape[0]:
        raise DataError(f"{manifest.label_path}: {labels.shape[0]} labels for "
                        f"{arr.shape[0]} queries")
    return QueryBatch.from_arrays(arr, labels, split=manifest.split,
                                  n_classes=manifest.n_classes)


def _check_consistent(support: Manifest, other: Manifest) -> None:
    if other.class_names != support.class_names:
        raise DataError(f"{other.path}: class_names differ from support manifest")
    if other.feature_dim != support.feature_dim:
        raise DataError(f"{other.path}: feature_dim {other.feature_dim} differs "
                        f"from support manifest {support.feature_dim}")


def load_dataset(support_manifest, *query_manifests):
    """Load a support manifest plus any number of query manifests.

    Returns ``(text_bank, image_bank, [query_batch, ...])``.  Class order
    is exactly the manifest order: row i of every bank belongs to
    ``class_names[i]``.
    """
    support = read_manifest(support_manifest)
    text_bank, image_bank = load_support(support)
    batches = []
    for qpath in query_manifests:
        qman = read_manifest(qpath)
        _check_consistent(support, qman)
        batches.append(load_queries(qman))
    return text_bank, image_bank, batches
