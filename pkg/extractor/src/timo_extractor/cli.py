"""Command line front end: ``timo-extract text | images | all``.

Exit codes: 0 success, 1 bad configuration or usage, 2 file system
problems, 3 bad data.  Failures print one JSON object to stderr::

    {"error": {"type": "...", "message": "..."}}
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .encoders import make_encoder
from .errors import ConfigError, ExtractError
from .extract import (TextExtraction, extract_dataset, extract_images,
                      extract_text, read_split_list, write_engine_manifests)
from .prompts import load_prompt_spec

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_IO = 2
EXIT_DATA = 3


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="timo-extract",
        description="Encode prompts and images into tensor containers")
    sub = parser.add_subparsers(dest="command", required=True)

    text = sub.add_parser("text", help="encode class prompts only")
    text.add_argument("--prompts", required=True,
                      help="prompt spec JSON file")
    text.add_argument("--encoder", required=True,
                      help="encoder id, e.g. hash:64 or a model checkpoint")
    text.add_argument("--out-dir", required=True)

    images = sub.add_parser("images", help="encode support/query images only")
    images.add_argument("--split-list", required=True,
                        help="file with one '<path> <class>' line per image")
    images.add_argument("--encoder", required=True)
    images.add_argument("--shots", type=int, required=True,
                        help="support images sampled per class")
    images.add_argument("--seed", type=int, default=0)
    images.add_argument("--out-dir", required=True)
    images.add_argument("--text-meta",
                        help="text.meta.json from a prior 'text' run; when "
                             "given, engine manifests are written too")
    images.add_argument("--dataset-name",
                        help="dataset name for the manifests (with "
                             "--text-meta; defaults to the text run's name)")

    full = sub.add_parser("all", help="text + images + engine manifests")
    full.add_argument("--prompts", required=True)
    full.add_argument("--split-list", required=True)
    full.add_argument("--encoder", required=True)
    full.add_argument("--shots", type=int, required=True)
    full.add_argument("--seed", type=int, default=0)
    full.add_argument("--out-dir", required=True)
    full.add_argument("--dataset-name")
    return parser


def _cmd_text(args) -> dict:
    spec = load_prompt_spec(args.prompts)
    encoder = make_encoder(args.encoder)
    result = extract_text(spec, encoder, args.out_dir)
    return {"tensor": str(result.tensor_path), "meta": str(result.meta_path),
            "classes": len(result.class_names),
            "prompts_per_class": result.prompts_per_class,
            "feature_dim": result.feature_dim}


def _load_text_meta(path) -> tuple[str, TextExtraction]:
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ExtractError(f"{path}: invalid JSON ({exc})") from None
    if not isinstance(raw, dict) or raw.get("kind") != "text-extraction":
        raise ExtractError(f"{path}: not a text extraction metadata file")
    text = TextExtraction(
        tensor_path=path.parent / raw["tensor"], meta_path=path,
        class_names=tuple(raw["class_names"]),
        prompts_per_class=int(raw["prompts_per_class"]),
        feature_dim=int(raw["feature_dim"]),
        prompt_texts=raw["prompt_texts"],
        pad_mask=raw["pad_mask"])
    return str(raw["dataset_name"]), text


def _cmd_images(args) -> dict:
    entries = read_split_list(args.split_list)
    encoder = make_encoder(args.encoder)
    text = dataset_name = None
    if args.text_meta is not None:
        dataset_name, text = _load_text_meta(args.text_meta)
    class_names = text.class_names if text is not None else None
    result = extract_images(entries, encoder, args.shots, args.seed,
                            args.out_dir, class_names=class_names)
    payload = {"meta": str(result.meta_path),
               "classes": len(result.class_names), "shots": result.shots,
               "feature_dim": result.feature_dim,
               "query_counts": result.query_counts}
    if text is not None:
        manifests = write_engine_manifests(
            args.out_dir, args.dataset_name or dataset_name, text, result)
        payload["manifests"] = {k: str(p) for k, p in manifests.items()}
    return payload


def _cmd_all(args) -> dict:
    manifests = extract_dataset(args.prompts, args.split_list, args.encoder,
                                args.shots, args.seed, args.out_dir,
                                dataset_name=args.dataset_name)
    return {"manifests": {k: str(p) for k, p in manifests.items()}}


def _fail(kind: str, message: str, code: int) -> int:
    json.dump({"error": {"type": kind, "message": message}}, sys.stderr)
    sys.stderr.write("\n")
    return code


def main(argv=None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code == 0:
            return EXIT_OK
        return _fail("usage", "invalid command line; see --help", EXIT_CONFIG)
    handler = {"text": _cmd_text, "images": _cmd_images, "all": _cmd_all}
    try:
        payload = handler[args.command](args)
    except ConfigError as exc:
        return _fail("config", str(exc), EXIT_CONFIG)
    except ExtractError as exc:
        return _fail("data", str(exc), EXIT_DATA)
    except OSError as exc:
        return _fail("io", str(exc), EXIT_IO)
    json.dump(payload, sys.stdout, indent=2, sort_keys=True)
    sys.stdout.write("\n")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
