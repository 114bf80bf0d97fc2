"""Feature extraction for the timo engine's container + manifest format."""

from .container import read_tensor, write_tensor
from .encoders import ClipEncoder, HashEncoder, make_encoder
from .errors import ConfigError, ExtractError
from .extract import (extract_dataset, extract_images, extract_text,
                      read_split_list, seed_stream, write_engine_manifests)
from .prompts import PromptSpec, load_prompt_spec, pad_prompts

__all__ = [
    "ClipEncoder",
    "ConfigError",
    "ExtractError",
    "HashEncoder",
    "PromptSpec",
    "extract_dataset",
    "extract_images",
    "extract_text",
    "load_prompt_spec",
    "make_encoder",
    "pad_prompts",
    "read_split_list",
    "read_tensor",
    "seed_stream",
    "write_engine_manifests",
    "write_tensor",
]
