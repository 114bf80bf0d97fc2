"""Prompt specifications: per-class prompt lists plus shared templates.

A prompt spec is a JSON object::

    {
      "dataset_name": "pets",                  // optional, defaults to the file stem
      "templates": ["a photo of a {}."],       // optional shared templates
      "prompts": {                             // required, keys are class names
        "abyssinian": ["a cat with ...", ...],
        "beagle": []                           // templates alone are fine
      }
    }

Each class's final prompt list is the templates instantiated with the
class name (underscores become spaces) followed by its own sentences;
every class must end up with at least one prompt.  Classes are ordered
by sorted name so downstream artifacts are reproducible regardless of
JSON key order.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

from .errors import ExtractError


@dataclass(frozen=True)
class PromptSpec:
    """Validated per-class prompt lists in sorted class order."""

    dataset_name: str
    class_names: tuple[str, ...]
    prompts: dict[str, list[str]]

    @property
    def max_prompts(self) -> int:
        return max(len(self.prompts[c]) for c in self.class_names)


def load_prompt_spec(path) -> PromptSpec:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ExtractError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise ExtractError(f"{path}: prompt spec must be a JSON object")
    unknown = sorted(set(raw) - {"dataset_name", "templates", "prompts"})
    if unknown:
        raise ExtractError(f"{path}: unknown prompt spec keys {unknown}")

    templates = raw.get("templates", [])
    if not isinstance(templates, list) \
            or not all(isinstance(t, str) for t in templates):
        raise ExtractError(f"{path}: templates must be a list of strings")
    for t in templates:
        if "{}" not in t:
            raise ExtractError(f"{path}: template {t!r} has no {{}} placeholder")

    per_class = raw.get("prompts")
    if not isinstance(per_class, dict) or not per_class:
        raise ExtractError(f"{path}: prompts must be a non-empty object "
                           "keyed by class name")
    class_names = tuple(sorted(per_class))
    prompts: dict[str, list[str]] = {}
    for name in class_names:
        own = per_class[name]
        if not isinstance(own, list) \
                or not all(isinstance(s, str) for s in own):
            raise ExtractError(f"{path}: prompts for class {name!r} must be "
                               "a list of strings")
        final = [t.format(name.replace("_", " ")) for t in templates] + list(own)
        if not final:
            raise ExtractError(f"{path}: class {name!r} has no prompts")
        prompts[name] = final

    dataset_name = raw.get("dataset_name", path.stem)
    if not isinstance(dataset_name, str) or not dataset_name:
        raise ExtractError(f"{path}: dataset_name must be a non-empty string")
    return PromptSpec(dataset_name, class_names, prompts)


def pad_prompts(spec: PromptSpec) -> tuple[list[list[str]], list[list[bool]]]:
    """Rectangular prompt texts plus a genuine-entry mask.

    Classes with fewer prompts than the widest class repeat their last
    prompt; the mask marks genuine entries True and padded repeats
    False.  Repetition (rather than zero rows) keeps prototype means
    and downstream prompt weights interpretable.
    """
    width = spec.max_prompts
    texts = []
    mask = []
    for name in spec.class_names:
        own = spec.prompts[name]
        texts.append(own + [own[-1]] * (width - len(own)))
        mask.append([True] * len(own) + [False] * (width - len(own)))
    return texts, mask
