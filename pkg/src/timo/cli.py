"""Command-line interface.

Four subcommands over JSON configs and container files:

* ``timo synth``    — generate a synthetic dataset (tensors + manifests)
* ``timo eval``     — evaluate a configuration, write a JSON report
* ``timo search``   — grid-search hyperparameters, write result + trace CSV
* ``timo diagnose`` — emit anomaly/prompt-quality CSVs and a Q-statistic JSON

Every value can come from a ``--config`` JSON file; command-line flags
override file values, which override built-in defaults.  Exit codes:
0 success, 1 configuration error, 2 I/O failure, 3 malformed data.
Failures print a machine-readable JSON error object to stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

from . import pipeline, synth
from .container import load_dataset, read_manifest
from .errors import ConfigError, DataError, TimoError

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_IO = 2
EXIT_DATA = 3

_SYNTH_KEYS = ("name", "classes", "prompts", "shots", "dim", "noise",
               "corrupt_fraction", "class_overlap", "val_queries",
               "test_queries", "seed", "out_dir")


def _merge_config(path: str | None, overrides: dict, allowed=None) -> dict:
    """Flag > file > default: start from the file, overlay non-None flags."""
    merged: dict = {}
    if path is not None:
        merged.update(pipeline.load_config(path))
    if allowed is not None:
        unknown = sorted(set(merged) - set(allowed))
        if unknown:
            raise ConfigError(f"unknown config keys {unknown}")
    merged.update({k: v for k, v in overrides.items() if v is not None})
    return merged


def _add_run_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON run config file")
    parser.add_argument("--mode", choices=pipeline.MODES)
    parser.add_argument("--support-manifest", dest="support_manifest")
    parser.add_argument("--validation-manifest", dest="validation_manifest")
    parser.add_argument("--test-manifest", dest="test_manifest")
    parser.add_argument("--alpha", type=float)
    parser.add_argument("--beta", type=int)
    parser.add_argument("--gamma", type=float)
    parser.add_argument("--scale", type=float)
    parser.add_argument("--val-fraction", dest="val_fraction", type=float)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--threads", type=int,
                        help="cap on internal search parallelism")
    parser.add_argument("--output", help="report JSON path")
    parser.add_argument("--trace-output", dest="trace_output",
                        help="search trace CSV path")


def _run_config_from_args(args) -> dict:
    overrides = {k: getattr(args, k) for k in (
        "mode", "support_manifest", "validation_manifest", "test_manifest",
        "alpha", "beta", "gamma", "scale", "val_fraction", "seed", "threads",
        "output", "trace_output")}
    base = Path(args.config).parent if args.config else Path(".")
    cfg = _merge_config(args.config, overrides)
    return cfg, base


def _cmd_synth(args) -> int:
    overrides = {k: getattr(args, k) for k in _SYNTH_KEYS}
    cfg = _merge_config(args.config, overrides, allowed=_SYNTH_KEYS)
    out_dir = cfg.pop("out_dir", None)
    if out_dir is None:
        raise ConfigError("synth needs --out-dir")
    result = synth.generate_dataset(out_dir, **cfg)
    print(json.dumps({
        "support_manifest": str(result.support_manifest),
        "validation_manifest": str(result.validation_manifest),
        "test_manifest": str(result.test_manifest),
    }, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_eval(args) -> int:
    cfg, base = _run_config_from_args(args)
    if "test_manifest" not in cfg:
        raise ConfigError("eval needs a test_manifest")
    report = pipeline.run(cfg, base_dir=base)
    if cfg.get("output") is None:
        print(json.dumps(report, indent=2, sort_keys=True))
    else:
        print(json.dumps({"report": str(pipeline.resolve_config(
            cfg, base_dir=base).output)}))
    return EXIT_OK


def _cmd_search(args) -> int:
    cfg, base = _run_config_from_args(args)
    if cfg.get("mode") == "zero-shot":
        raise ConfigError("zero-shot has no hyperparameters to search")
    if cfg.get("validation_manifest") is None:
        raise ConfigError("search needs a validation_manifest")
    report = pipeline.run(cfg, base_dir=base)
    if "search" not in report:
        raise ConfigError("nothing was searched; check the mode")
    out = {"best": report["hyperparameters"], "search": report["search"]}
    print(json.dumps(out, indent=2, sort_keys=True))
    return EXIT_OK


def _cmd_diagnose(args) -> int:
    from . import diagnostics as diag
    from .features import l2_normalize
    from . import tgi as tgi_mod

    cfg, base = _run_config_from_args(args)
    cfg.setdefault("mode", "timo")
    out_dir = Path(args.out_dir) if args.out_dir else Path(".")
    rcfg = pipeline.resolve_config(cfg, base_dir=base)
    if rcfg.test_manifest is None:
        raise ConfigError("diagnose needs a test_manifest (labeled queries)")

    support = read_manifest(rcfg.support_manifest)
    text_bank, image_bank, (test,) = load_dataset(rcfg.support_manifest,
                                                  rcfg.test_manifest)
    n, p = text_bank.n_classes, text_bank.n_prompts
    beta = p if rcfg.beta is None else rcfg.beta
    chosen = dict(alpha=rcfg.alpha, beta=beta,
                  gamma=rcfg.gamma if rcfg.mode != "base" else None,
                  backend_param=(rcfg.shrinkage if rcfg.backend_kind == "gda"
                                 else rcfg.sharpness),
                  mix=rcfg.mix)

    by_class = [test.features[test.labels == c] for c in range(n)]
    raw = diag.anomalous_matches(image_bank.prototypes, by_class)
    similarity = tgi_mod.prompt_image_similarity(text_bank,
                                                 image_bank.prototypes)
    retained = tgi_mod.select_top_beta(similarity, beta)
    refined_means = l2_normalize(tgi_mod.build_tgi_features(
        image_bank.features, text_bank.features, retained).mean(axis=1))
    refined = diag.anomalous_matches(refined_means, by_class)

    out_dir.mkdir(parents=True, exist_ok=True)
    anomaly_path = out_dir / "anomaly.csv"
    with open(anomaly_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["class_index", "class_name", "image_prototype_count",
                    "tgi_refined_count"])
        for c in range(n):
            w.writerow([c, support.class_names[c], int(raw.counts[c]),
                        int(refined.counts[c])])

    quality = diag.prompt_quality(text_bank, image_bank.prototypes)
    quality_path = out_dir / "prompt_quality.csv"
    with open(quality_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["class_index", "class_name", "rank", "prompt_index",
                    "similarity"])
        for c in range(n):
            for rank, (idx, sim) in enumerate(quality.ranked(c)):
                w.writerow([c, support.class_names[c], rank, idx, repr(sim)])

    cache = pipeline._BranchCache(text_bank, image_bank, test.features, rcfg)
    import numpy as np
    preds_img = np.argmax(cache.image_logits(beta, chosen["backend_param"]),
                          axis=1)
    preds_txt = np.argmax(cache.text_logits(chosen["gamma"]), axis=1)
    q = diag.q_statistic(preds_img, preds_txt, test.labels)
    q_path = out_dir / "q_statistic.json"
    with open(q_path, "w", encoding="utf-8") as fh:
        json.dump({
            "pair": ["image_branch", "text_branch"],
            "n11": q.n11, "n00": q.n00, "n10": q.n10, "n01": q.n01,
            "q": q.value, "undefined": q.undefined,
            "anomaly_mode": "relative",
        }, fh, indent=2, sort_keys=True)
        fh.write("\n")

    print(json.dumps({"anomaly": str(anomaly_path),
                      "prompt_quality": str(quality_path),
                      "q_statistic": str(q_path)}, indent=2, sort_keys=True))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="timo",
        description="Training-free few-shot classification over "
                    "precomputed embeddings.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="generate a synthetic dataset")
    p_synth.add_argument("--config", help="JSON config file")
    p_synth.add_argument("--out-dir", dest="out_dir")
    p_synth.add_argument("--name")
    p_synth.add_argument("--classes", type=int)
    p_synth.add_argument("--prompts", type=int)
    p_synth.add_argument("--shots", type=int)
    p_synth.add_argument("--dim", type=int)
    p_synth.add_argument("--noise", type=float)
    p_synth.add_argument("--corrupt-fraction", dest="corrupt_fraction",
                         type=float)
    p_synth.add_argument("--class-overlap", dest="class_overlap", type=float,
                         help="pairwise cosine of class directions")
    p_synth.add_argument("--val-queries", dest="val_queries", type=int)
    p_synth.add_argument("--test-queries", dest="test_queries", type=int)
    p_synth.add_argument("--seed", type=int)
    p_synth.set_defaults(func=_cmd_synth)

    p_eval = sub.add_parser("eval", help="evaluate one configuration")
    _add_run_flags(p_eval)
    p_eval.set_defaults(func=_cmd_eval)

    p_search = sub.add_parser("search", help="grid-search hyperparameters")
    _add_run_flags(p_search)
    p_search.set_defaults(func=_cmd_search)

    p_diag = sub.add_parser("diagnose", help="emit diagnostic reports")
    _add_run_flags(p_diag)
    p_diag.add_argument("--out-dir", dest="out_dir",
                        help="directory for diagnostic files")
    p_diag.set_defaults(func=_cmd_diagnose)
    return parser


def _fail(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": {"type": kind, "message": message}}),
          file=sys.stderr)
    return code


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code == 0:  # --help
            return EXIT_OK
        # argparse prints its usage message itself; mirror the error as
        # JSON and fold usage problems into the config exit code.
        return _fail("usage", "invalid command line", EXIT_CONFIG)
    try:
        return args.func(args)
    except ConfigError as exc:
        return _fail("config", str(exc), EXIT_CONFIG)
    except DataError as exc:
        return _fail("data", str(exc), EXIT_DATA)
    except OSError as exc:
        return _fail("io", str(exc), EXIT_IO)
    except TimoError as exc:  # pragma: no cover - safety net
        return _fail("error", str(exc), EXIT_DATA)


if __name__ == "__main__":
    sys.exit(main())
