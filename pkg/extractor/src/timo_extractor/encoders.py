"""Embedding encoders behind one tiny interface.

``make_encoder(encoder_id)`` understands two families:

* ``hash:<dim>`` — a deterministic content-addressed encoder for
  plumbing tests and offline smoke runs: every distinct input maps to a
  reproducible random unit vector.  It carries no semantics.
* anything else — treated as a pretrained contrastive dual-encoder
  checkpoint id and loaded lazily through ``transformers`` (e.g.
  ``openai/clip-vit-base-patch32``).  The heavyweight imports happen on
  first use, so offline workflows never pay for them.

Both expose ``encode_text(list[str])`` and
``encode_image_files(list[Path])`` returning L2-normalized float32
arrays with a shared ``dim``.
"""

from __future__ import annotations

import hashlib
from pathlib import Path

import numpy as np

from .errors import ConfigError, ExtractError


def _normalize_rows(arr: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(arr, axis=-1, keepdims=True)
    if np.any(norms <= 0):
        raise ExtractError("encoder produced a zero embedding")
    return (arr / norms).astype(np.float32)


class HashEncoder:
    """Deterministic unit vectors keyed by content digest (no semantics)."""

    def __init__(self, dim: int):
        if dim < 2:
            raise ConfigError(f"hash encoder dim must be >= 2, got {dim}")
        self.dim = int(dim)

    @property
    def name(self) -> str:
        return f"hash:{self.dim}"

    def _unit(self, domain: bytes, payload: bytes) -> np.ndarray:
        digest = hashlib.sha256(domain + b"\x00" + payload).digest()
        rng = np.random.default_rng(int.from_bytes(digest[:8], "little"))
        return rng.standard_normal(self.dim)

    def encode_text(self, texts) -> np.ndarray:
        rows = [self._unit(b"text", t.encode("utf-8")) for t in texts]
        return _normalize_rows(np.stack(rows))

    def encode_image_files(self, paths) -> np.ndarray:
        rows = [self._unit(b"image", Path(p).read_bytes()) for p in paths]
        return _normalize_rows(np.stack(rows))


class ClipEncoder:
    """Adapter for a pretrained dual encoder; imports are deferred."""

    def __init__(self, checkpoint_id: str, batch_size: int = 32):
        self.checkpoint_id = checkpoint_id
        self.batch_size = int(batch_size)
        self._model = None
        self._processor = None

    @property
    def name(self) -> str:
        return self.checkpoint_id

    def _load(self):
        if self._model is not None:
            return
        try:
            import torch  # noqa: F401
            from transformers import CLIPModel, CLIPProcessor
            self._model = CLIPModel.from_pretrained(self.checkpoint_id).eval()
            self._processor = CLIPProcessor.from_pretrained(self.checkpoint_id)
        except Exception as exc:
            raise ConfigError(
                f"encoder load failure for {self.checkpoint_id!r}: {exc}"
            ) from exc

    def encode_text(self, texts) -> np.ndarray:
        self._load()
        import torch
        chunks = []
        with torch.no_grad():
            for start in range(0, len(texts), self.batch_size):
                batch = self._processor(
                    text=list(texts[start:start + self.batch_size]),
                    return_tensors="pt", padding=True, truncation=True)
                chunks.append(self._model.get_text_features(**batch).numpy())
        return _normalize_rows(np.concatenate(chunks))

    def encode_image_files(self, paths) -> np.ndarray:
        self._load()
        import torch
        from PIL import Image
        chunks = []
        with torch.no_grad():
            for start in range(0, len(paths), self.batch_size):
                images = [Image.open(p).convert("RGB")
                          for p in paths[start:start + self.batch_size]]
                batch = self._processor(images=images, return_tensors="pt")
                chunks.append(self._model.get_image_features(**batch).numpy())
        return _normalize_rows(np.concatenate(chunks))


def make_encoder(encoder_id: str):
    """Build an encoder from its string id (see module docstring)."""
    if not isinstance(encoder_id, str) or not encoder_id:
        raise ConfigError("encoder id must be a non-empty string")
    if encoder_id.startswith("hash:"):
        suffix = encoder_id[len("hash:"):]
        try:
            dim = int(suffix)
        except ValueError:
            raise ConfigError(
                f"hash encoder id must look like 'hash:<dim>', got "
                f"{encoder_id!r}") from None
        return HashEncoder(dim)
    return ClipEncoder(encoder_id)
