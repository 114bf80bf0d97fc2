"""Extraction pipeline: prompt spec + split list -> container dataset.

A split list is a text file with one image per line::

    images/abyssinian/cat_001.jpg  abyssinian
    images/beagle/dog_004.jpg      beagle

(the last whitespace-separated token is the class name, everything
before it the path, resolved relative to the list file; blank lines and
``#`` comments are ignored).

``extract_images`` samples ``shots`` support images per class with a
seeded stream and splits each class's remaining images into validation
and test halves (first half validation).  One permutation per class,
drawn from the ``support_sampling`` stream, decides both support
membership and the query split, so a run is reproducible from
(split list, shots, seed) alone.

``extract_dataset`` runs both halves with one encoder and writes the
three engine manifests; the engine and this package only communicate
through those files.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .container import write_tensor
from .encoders import make_encoder
from .errors import ExtractError
from .prompts import PromptSpec, load_prompt_spec, pad_prompts


def seed_stream(seed: int, label: str) -> np.random.Generator:
    """Independent RNG stream per (seed, purpose label)."""
    digest = hashlib.sha256(
        f"timo-extractor\x00{label}\x00{seed}".encode("utf-8")).digest()
    return np.random.default_rng(int.from_bytes(digest[:8], "little"))


def read_split_list(path) -> list[tuple[Path, str]]:
    """Parse (image path, class name) pairs; paths resolve to the file."""
    path = Path(path)
    base = path.parent
    entries: list[tuple[Path, str]] = []
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(),
                                  start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.rsplit(None, 1)
        if len(parts) != 2:
            raise ExtractError(f"{path}:{lineno}: expected '<path> <class>', "
                               f"got {line!r}")
        rel, label = parts
        p = Path(rel)
        entries.append((p if p.is_absolute() else base / p, label))
    if not entries:
        raise ExtractError(f"{path}: split list is empty")
    return entries


@dataclass
class TextExtraction:
    """Artifacts of one text-encoding run."""

    tensor_path: Path
    meta_path: Path
    class_names: tuple[str, ...]
    prompts_per_class: int
    feature_dim: int
    prompt_texts: list[list[str]]
    pad_mask: list[list[bool]]


def extract_text(spec: PromptSpec, encoder, out_dir, stem: str = "text"
                 ) -> TextExtraction:
    """Encode every class's padded prompt list into one (N, P, D) tensor."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    texts, mask = pad_prompts(spec)
    width = len(texts[0])
    flat = [prompt for row in texts for prompt in row]
    encoded = encoder.encode_text(flat)
    tensor = encoded.reshape(len(spec.class_names), width, -1)

    tensor_path = out / f"{stem}.tsr"
    write_tensor(tensor_path, tensor)
    meta_path = out / f"{stem}.meta.json"
    _write_json(meta_path, {
        "kind": "text-extraction",
        "dataset_name": spec.dataset_name,
        "encoder": encoder.name,
        "class_names": list(spec.class_names),
        "prompts_per_class": width,
        "feature_dim": int(tensor.shape[2]),
        "tensor": tensor_path.name,
        "prompt_texts": texts,
        "pad_mask": mask,
    })
    return TextExtraction(tensor_path, meta_path, spec.class_names, width,
                          int(tensor.shape[2]), texts, mask)


@dataclass
class ImagesExtraction:
    """Artifacts of one image-encoding run."""

    tensor_paths: dict[str, Path]
    label_paths: dict[str, Path]
    meta_path: Path
    class_names: tuple[str, ...]
    shots: int
    feature_dim: int
    query_counts: dict[str, int]


def _group_by_class(entries, class_names) -> dict[str, list[Path]]:
    groups: dict[str, list[Path]] = {name: [] for name in class_names}
    for p, label in entries:
        if label not in groups:
            raise ExtractError(f"split list names unknown class {label!r}")
        groups[label].append(p)
    empty = [name for name, paths in groups.items() if not paths]
    if empty:
        raise ExtractError(f"classes with no images: {empty}")
    return groups


def extract_images(entries, encoder, shots: int, seed: int, out_dir,
                   class_names=None) -> ImagesExtraction:
    """Sample support shots per class, split the rest into val/test."""
    if shots < 1:
        raise ExtractError(f"shots must be >= 1, got {shots}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if class_names is None:
        class_names = tuple(sorted({label for _, label in entries}))
    groups = _group_by_class(entries, class_names)

    rng = seed_stream(seed, "support_sampling")
    support_paths: list[Path] = []
    val_paths: list[Path] = []
    val_labels: list[int] = []
    test_paths: list[Path] = []
    test_labels: list[int] = []
    for index, name in enumerate(class_names):
        paths = groups[name]
        if len(paths) < shots:
            raise ExtractError(f"class {name!r} has {len(paths)} images, "
                               f"needs {shots}")
        perm = rng.permutation(len(paths))
        support_paths.extend(paths[i] for i in perm[:shots])
        rest = perm[shots:]
        half = (len(rest) + 1) // 2
        val_paths.extend(paths[i] for i in rest[:half])
        val_labels.extend([index] * half)
        test_paths.extend(paths[i] for i in rest[half:])
        test_labels.extend([index] * (len(rest) - half))
    if not val_paths or not test_paths:
        raise ExtractError(
            "not enough images left for validation/test after sampling "
            f"{shots} support shots per class; add images or reduce shots")

    support = encoder.encode_image_files(support_paths)
    support = support.reshape(len(class_names), shots, -1)
    val = encoder.encode_image_files(val_paths)
    test = encoder.encode_image_files(test_paths)

    tensor_paths = {"support": out / "support.tsr", "val": out / "val.tsr",
                    "test": out / "test.tsr"}
    label_paths = {"val": out / "val_labels.tsr",
                   "test": out / "test_labels.tsr"}
    write_tensor(tensor_paths["support"], support)
    write_tensor(tensor_paths["val"], val)
    write_tensor(label_paths["val"], np.asarray(val_labels, dtype=np.float32))
    write_tensor(tensor_paths["test"], test)
    write_tensor(label_paths["test"],
                 np.asarray(test_labels, dtype=np.float32))

    meta_path = out / "images.meta.json"
    _write_json(meta_path, {
        "kind": "image-extraction",
        "encoder": encoder.name,
        "class_names": list(class_names),
        "shots": shots,
        "seed": seed,
        "feature_dim": int(support.shape[2]),
        "tensors": {k: p.name for k, p in tensor_paths.items()},
        "labels": {k: p.name for k, p in label_paths.items()},
        "query_counts": {"val": len(val_paths), "test": len(test_paths)},
    })
    return ImagesExtraction(tensor_paths, label_paths, meta_path,
                            tuple(class_names), shots, int(support.shape[2]),
                            {"val": len(val_paths), "test": len(test_paths)})


def write_engine_manifests(out_dir, dataset_name: str,
                           text: TextExtraction,
                           images: ImagesExtraction) -> dict[str, Path]:
    """Assemble the three manifests the engine loads."""
    if text.class_names != images.class_names:
        raise ExtractError(
            f"text classes {list(text.class_names)} do not match image "
            f"classes {list(images.class_names)}")
    if text.feature_dim != images.feature_dim:
        raise ExtractError(
            f"text dim {text.feature_dim} does not match image dim "
            f"{images.feature_dim}; use one encoder for both")
    out = Path(out_dir)
    common = {
        "dataset_name": dataset_name,
        "class_names": list(text.class_names),
        "prompts_per_class": text.prompts_per_class,
        "feature_dim": text.feature_dim,
    }
    paths = {
        "support": out / "support.manifest.json",
        "validation": out / "validation.manifest.json",
        "test": out / "test.manifest.json",
    }
    _write_json(paths["support"], dict(
        common, split="support", shots=images.shots,
        tensor_paths={"text": text.tensor_path.name,
                      "images": images.tensor_paths["support"].name},
        label_path=None, prompt_texts=text.prompt_texts,
        pad_mask=text.pad_mask))
    _write_json(paths["validation"], dict(
        common, split="validation", shots=0,
        tensor_paths={"images": images.tensor_paths["val"].name},
        label_path=images.label_paths["val"].name))
    _write_json(paths["test"], dict(
        common, split="test", shots=0,
        tensor_paths={"images": images.tensor_paths["test"].name},
        label_path=images.label_paths["test"].name))
    return paths


def extract_dataset(prompt_spec_path, split_list_path, encoder_id: str,
                    shots: int, seed: int, out_dir,
                    dataset_name: str | None = None) -> dict[str, Path]:
    """Full pipeline: encode prompts and images, write engine manifests."""
    spec = load_prompt_spec(prompt_spec_path)
    entries = read_split_list(split_list_path)
    listed = {label for _, label in entries}
    missing = sorted(set(spec.class_names) - listed)
    extra = sorted(listed - set(spec.class_names))
    if missing or extra:
        raise ExtractError(
            f"prompt spec and split list disagree on classes "
            f"(missing from list: {missing}, unknown to spec: {extra})")

    encoder = make_encoder(encoder_id)
    text = extract_text(spec, encoder, out_dir)
    images = extract_images(entries, encoder, shots, seed, out_dir,
                            class_names=spec.class_names)
    return write_engine_manifests(out_dir,
                                  dataset_name or spec.dataset_name,
                                  text, images)


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")
