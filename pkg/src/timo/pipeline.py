"""End-to-end evaluation pipeline and hyperparameter search.

``run(config)`` drives everything: load banks from manifests, build the
two branches (image backend over the prompt-augmented support set, and
cosine scoring against rectified text prototypes), optionally search the
hyperparameter grid on a validation split, evaluate top-1 accuracy on
the test split and emit a JSON report (plus a CSV search trace).

The search is exhaustive and deterministic.  Changing ``alpha`` only
re-weights the fused sum, so branch logits are cached per ``beta`` (and
backend parameters) and per ``gamma``; the alpha sweep is a single fused
addition per point.  Ties are broken toward the smaller alpha, then
beta, then gamma.  Reruns with the same config and seed are
byte-identical.
"""

from __future__ import annotations

import csv
import hashlib
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import igt as igt_mod
from . import tgi as tgi_mod
from .backends import (DEFAULT_SHARPNESS, DEFAULT_SHRINKAGE, CacheClassifier,
                       GdaClassifier)
from .container import load_dataset, load_queries, read_manifest
from .errors import ConfigError, DataError
from .features import QueryBatch, cosine_logits, l2_normalize, text_prototypes
from .model import _augmented_blocks
from .rng import seed_stream

MODES = ("zero-shot", "base", "tip-mg", "timo", "timo-s")

DEFAULT_ALPHAS = tuple(10.0**k for k in range(-4, 5))
# Fixed-mode prompt-weight temperature.  The search grid spans 5..100;
# a moderate default keeps weight spread over the good prompts instead
# of collapsing onto the single best-matching one.
DEFAULT_GAMMA = 10.0
DEFAULT_SCALE = 100.0


def default_gammas() -> list[float]:
    return [5.0 * k for k in range(1, 21)]


def default_betas(n_prompts: int) -> list[int]:
    return list(range(1, 2 * n_prompts + 1))


def fuse_logits(image_logits, text_logits, alpha: float) -> np.ndarray:
    """``image + alpha * text``, shapes must match exactly."""
    a = np.asarray(image_logits, dtype=np.float64)
    b = np.asarray(text_logits, dtype=np.float64)
    if a.shape != b.shape:
        raise DataError(f"branch logit shapes differ: {a.shape} vs {b.shape}")
    return a + alpha * b


def evaluate_top1(logits, labels) -> tuple[float, list[float | None]]:
    """Overall and per-class top-1 accuracy.

    Argmax ties resolve to the lowest class index (a tie is therefore
    wrong unless the lowest tied index is the true class).  Classes
    absent from ``labels`` get a per-class entry of None.
    """
    logits = np.atleast_2d(np.asarray(logits, dtype=np.float64))
    labels = np.asarray(labels, dtype=np.int64)
    if logits.shape[0] != labels.shape[0]:
        raise DataError(f"{logits.shape[0]} logit rows for "
                        f"{labels.shape[0]} labels")
    if logits.shape[0] == 0:
        raise DataError("empty evaluation batch")
    preds = np.argmax(logits, axis=1)
    correct = preds == labels
    per_class: list[float | None] = []
    for c in range(logits.shape[1]):
        mask = labels == c
        per_class.append(float(correct[mask].mean()) if mask.any() else None)
    return float(correct.mean()), per_class


# ----------------------------------------------------------------------
# Configuration


_BACKEND_KEYS = {"kind", "shrinkage", "priors", "sharpness", "mix"}
_GRID_KEYS = {"alphas", "betas", "gammas", "shrinkages", "sharpnesses", "mixes"}
_CONFIG_KEYS = {
    "mode", "support_manifest", "validation_manifest", "test_manifest",
    "backend", "alpha", "beta", "gamma", "scale", "grid", "val_fraction",
    "seed", "threads", "output", "trace_output",
}


@dataclass
class RunConfig:
    """Validated run configuration (see README for the JSON schema)."""

    mode: str
    support_manifest: Path
    test_manifest: Path | None
    validation_manifest: Path | None
    backend_kind: str
    shrinkage: float
    sharpness: float
    mix: float
    priors: None
    alpha: float
    beta: int | None
    gamma: float | None
    scale: float
    grid: dict
    val_fraction: float
    seed: int
    threads: int
    output: Path | None
    trace_output: Path | None
    raw: dict = field(repr=False, default_factory=dict)


def _require(cond: bool, message: str) -> None:
    if not cond:
        raise ConfigError(message)


def _as_number(value, key: str, *, integer: bool = False):
    ok = isinstance(value, (int, float)) and not isinstance(value, bool)
    _require(ok, f"config key {key!r} must be a number, got {value!r}")
    if integer:
        _require(float(value) == int(value), f"config key {key!r} must be an integer")
        return int(value)
    return float(value)


def load_config(path) -> dict:
    """Read a JSON config file into a plain dict."""
    with open(path, "r", encoding="utf-8") as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: config is not valid JSON ({exc})") from None
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return raw


def resolve_config(raw: dict, base_dir=None) -> RunConfig:
    """Validate a config dict; unknown keys are fatal."""
    unknown = sorted(set(raw) - _CONFIG_KEYS)
    _require(not unknown, f"unknown config keys {unknown}")
    mode = raw.get("mode")
    _require(mode in MODES, f"mode must be one of {list(MODES)}, got {mode!r}")
    _require("support_manifest" in raw, "config needs a support_manifest")

    base = Path(base_dir) if base_dir is not None else Path(".")

    def _path(key):
        val = raw.get(key)
        if val is None:
            return None
        _require(isinstance(val, str), f"config key {key!r} must be a path string")
        p = Path(val)
        return p if p.is_absolute() else base / p

    backend = dict(raw.get("backend") or {})
    unknown_b = sorted(set(backend) - _BACKEND_KEYS)
    _require(not unknown_b, f"unknown backend keys {unknown_b}")
    kind = backend.get("kind", "cache" if mode == "tip-mg" else "gda")
    _require(kind in ("gda", "cache"),
             f"backend kind must be 'gda' or 'cache', got {kind!r}")
    _require(not (mode == "tip-mg" and kind != "cache"),
             "tip-mg mode requires the cache backend")
    shrinkage = _as_number(backend.get("shrinkage", DEFAULT_SHRINKAGE),
                           "backend.shrinkage")
    _require(0.0 <= shrinkage <= 1.0, "backend.shrinkage must lie in [0, 1]")
    sharpness = _as_number(backend.get("sharpness", DEFAULT_SHARPNESS),
                           "backend.sharpness")
    _require(sharpness > 0, "backend.sharpness must be positive")
    mix = _as_number(backend.get("mix", 1.0), "backend.mix")
    _require(mix >= 0, "backend.mix must be non-negative")
    priors = backend.get("priors")
    _require(priors in (None, "uniform"), "backend.priors supports only 'uniform'")

    grid = dict(raw.get("grid") or {})
    unknown_g = sorted(set(grid) - _GRID_KEYS)
    _require(not unknown_g, f"unknown grid keys {unknown_g}")
    for key, val in grid.items():
        _require(isinstance(val, (list, tuple)) and len(val) > 0,
                 f"grid.{key} must be a non-empty list")

    alpha = _as_number(raw.get("alpha", 1.0), "alpha")
    beta = raw.get("beta")
    if beta is not None:
        beta = _as_number(beta, "beta", integer=True)
        _require(beta >= 0, "beta must be >= 0")
    gamma = raw.get("gamma", DEFAULT_GAMMA)
    if gamma is not None:
        gamma = _as_number(gamma, "gamma")
        _require(gamma > 0, "gamma must be positive")
    scale = _as_number(raw.get("scale", DEFAULT_SCALE), "scale")
    _require(scale > 0, "scale must be positive")
    val_fraction = _as_number(raw.get("val_fraction", 1.0), "val_fraction")
    _require(0.0 <= val_fraction <= 1.0, "val_fraction must lie in [0, 1]")
    seed = _as_number(raw.get("seed", 0), "seed", integer=True)
    threads = _as_number(raw.get("threads", 1), "threads", integer=True)
    _require(threads >= 1, "threads must be >= 1")

    return RunConfig(
        mode=mode,
        support_manifest=_path("support_manifest"),
        test_manifest=_path("test_manifest"),
        validation_manifest=_path("validation_manifest"),
        backend_kind=kind,
        shrinkage=shrinkage,
        sharpness=sharpness,
        mix=mix,
        priors=None,
        alpha=alpha,
        beta=beta,
        gamma=gamma,
        scale=scale,
        grid=grid,
        val_fraction=val_fraction,
        seed=seed,
        threads=threads,
        output=_path("output"),
        trace_output=_path("trace_output"),
        raw=dict(raw),
    )


def config_fingerprint(raw: dict) -> str:
    """Stable digest of the raw config for report provenance."""
    canon = json.dumps(raw, sort_keys=True, separators=(",", ":"))
    return "sha256:" + hashlib.sha256(canon.encode("utf-8")).hexdigest()


# ----------------------------------------------------------------------
# Branch computation


class _BranchCache:
    """Branch logits on a fixed query batch, cached per hyperparameter.

    The image branch depends on (beta, shrinkage | sharpness); the text
    branch on gamma alone.  ``mix`` and ``alpha`` are applied at fusion
    time and never invalidate a cache entry.
    """

    def __init__(self, text_bank, image_bank, queries: np.ndarray,
                 cfg: RunConfig):
        self.text = text_bank
        self.images = image_bank
        self.queries = queries
        self.cfg = cfg
        self.similarity = tgi_mod.prompt_image_similarity(
            text_bank, image_bank.prototypes)
        self._groups = [np.ascontiguousarray(image_bank.features[c])
                        for c in range(image_bank.n_classes)]
        self._image: dict[tuple, np.ndarray] = {}
        self._text: dict[object, np.ndarray] = {}

    def image_logits(self, beta: int, param: float) -> np.ndarray:
        """param is shrinkage for gda, sharpness for cache (pre-mix)."""
        key = (beta, param)
        if key not in self._image:
            retained = tgi_mod.select_top_beta(self.similarity, beta)
            X, y = _augmented_blocks(self._groups, self.text.features, retained)
            n = self.images.n_classes
            if self.cfg.backend_kind == "gda":
                model = GdaClassifier(shrinkage=param, n_classes=n).fit(X, y)
            else:
                model = CacheClassifier(sharpness=param, n_classes=n).fit(X, y)
            self._image[key] = model.decision_function(self.queries)
        return self._image[key]

    def text_logits(self, gamma: float | None) -> np.ndarray:
        if gamma not in self._text:
            if gamma is None:
                protos = text_prototypes(self.text).vectors
            else:
                weights = igt_mod.prompt_weights(
                    self.text, self.images.prototypes, gamma)
                protos = l2_normalize(
                    igt_mod.build_igt_prototypes(self.text, weights))
            self._text[gamma] = cosine_logits(protos, self.queries,
                                              self.cfg.scale)
        return self._text[gamma]

    def fused(self, point: dict) -> np.ndarray:
        img = self.image_logits(point["beta"], point["backend_param"])
        txt = self.text_logits(point["gamma"])
        return fuse_logits(point["mix"] * img if self.cfg.backend_kind == "cache"
                           else img, txt, point["alpha"])


def _resolve_mode_grid(cfg: RunConfig, n_prompts: int):
    """Fixed values and searched axes for the configured mode."""
    p = n_prompts
    fixed_beta = p if cfg.beta is None else cfg.beta
    if fixed_beta > 2 * p:
        raise ConfigError(f"beta must lie in [0, {2 * p}], got {fixed_beta}")
    backend_default = (cfg.shrinkage if cfg.backend_kind == "gda"
                       else cfg.sharpness)
    param_key = "shrinkages" if cfg.backend_kind == "gda" else "sharpnesses"

    alphas = [float(a) for a in cfg.grid.get("alphas", DEFAULT_ALPHAS)]
    if cfg.mode == "timo-s":
        betas = [int(b) for b in cfg.grid.get("betas", default_betas(p))]
        gammas = [float(g) for g in cfg.grid.get("gammas", default_gammas())]
    elif cfg.mode == "base":
        betas = [0]
        gammas = [None]
    else:  # timo / tip-mg: alpha-only search at the fixed operating point
        betas = [fixed_beta]
        gammas = [cfg.gamma if cfg.gamma is not None else DEFAULT_GAMMA]
    for b in betas:
        if not 0 <= b <= 2 * p:
            raise ConfigError(f"beta must lie in [0, {2 * p}], got {b}")
    params = [float(v) for v in cfg.grid.get(param_key, [backend_default])]
    mixes = [float(m) for m in cfg.grid.get("mixes", [cfg.mix])] \
        if cfg.backend_kind == "cache" else [cfg.mix]
    return alphas, betas, gammas, params, mixes


@dataclass
class SearchResult:
    """Outcome of an exhaustive grid search on the validation split."""

    best: dict
    val_accuracy: float
    trace: list[dict]
    ties: int
    tie_break: str = "smallest alpha, then beta, then gamma"


def grid_search(cache: _BranchCache, labels: np.ndarray,
                cfg: RunConfig, n_prompts: int) -> SearchResult:
    """Exhaustively score every grid point on the validation batch.

    Points are enumerated in canonical ascending (alpha, beta, gamma)
    order and the first maximum wins, which implements the documented
    tie-break.  Branch fits may be computed by worker threads; the trace
    and the winner never depend on scheduling.
    """
    alphas, betas, gammas, params, mixes = _resolve_mode_grid(cfg, n_prompts)

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            futures = [pool.submit(cache.image_logits, b, prm)
                       for b in betas for prm in params]
            for f in futures:
                f.result()
        for g in gammas:
            cache.text_logits(g)

    trace: list[dict] = []
    best = None
    best_acc = -1.0
    ties = 0
    for alpha in sorted(alphas):
        for beta in sorted(betas):
            for gamma in sorted(gammas, key=lambda g: (g is not None, g or 0.0)):
                for prm in sorted(params):
                    for mix in sorted(mixes):
                        point = dict(alpha=alpha, beta=beta, gamma=gamma,
                                     backend_param=prm, mix=mix)
                        logits = cache.fused(point)
                        acc, _ = evaluate_top1(logits, labels)
                        row = dict(point, accuracy=acc)
                        trace.append(row)
                        if acc > best_acc:
                            best, best_acc, ties = row, acc, 1
                        elif acc == best_acc:
                            ties += 1
    assert best is not None
    return SearchResult(best=dict(best), val_accuracy=best_acc, trace=trace,
                        ties=ties)


# ----------------------------------------------------------------------
# run()


def _subsample(batch: QueryBatch, fraction: float, seed: int) -> QueryBatch:
    if fraction >= 1.0:
        return batch
    keep = int(np.floor(fraction * len(batch)))
    if keep < 1:
        raise DataError("validation split is empty after val_fraction "
                        "subsampling")
    rng = seed_stream(seed, "validation_subsample")
    picks = np.sort(rng.choice(len(batch), size=keep, replace=False))
    return QueryBatch(batch.features[picks], batch.labels[picks], batch.split)


def _float_or_none(x):
    return None if x is None else float(x)


def run(config: dict, base_dir=None) -> dict:
    """Execute one configured run and return the report dict.

    Pure in (config, seed): identical inputs produce identical reports,
    byte for byte once serialized.  Writes the report JSON and, when a
    search ran, the trace CSV, if output paths are configured.
    """
    cfg = resolve_config(config, base_dir=base_dir)
    support = read_manifest(cfg.support_manifest)
    query_paths = [p for p in (cfg.validation_manifest, cfg.test_manifest)
                   if p is not None]
    text_bank, image_bank, batches = load_dataset(cfg.support_manifest,
                                                  *query_paths)
    batch_by_path = dict(zip(query_paths, batches))
    p = text_bank.n_prompts

    validation = None
    if cfg.validation_manifest is not None:
        validation = _subsample(batch_by_path[cfg.validation_manifest],
                                cfg.val_fraction, cfg.seed)

    if cfg.mode == "zero-shot":
        chosen = dict(alpha=None, beta=None, gamma=None, backend_param=None,
                      mix=None)
        search = None
    else:
        fixed_beta = p if cfg.beta is None else cfg.beta
        if fixed_beta > 2 * p:
            raise ConfigError(f"beta must lie in [0, {2 * p}], got {fixed_beta}")
        if cfg.mode == "timo-s" and validation is None:
            raise ConfigError("timo-s searches the full grid and requires a "
                              "validation_manifest")
        if validation is not None:
            vcache = _BranchCache(text_bank, image_bank, validation.features,
                                  cfg)
            search = grid_search(vcache, validation.labels, cfg, p)
            chosen = {k: search.best[k] for k in
                      ("alpha", "beta", "gamma", "backend_param", "mix")}
        else:
            search = None
            chosen = dict(
                alpha=cfg.alpha,
                beta=0 if cfg.mode == "base" else fixed_beta,
                gamma=None if cfg.mode == "base"
                else (cfg.gamma if cfg.gamma is not None else DEFAULT_GAMMA),
                backend_param=(cfg.shrinkage if cfg.backend_kind == "gda"
                               else cfg.sharpness),
                mix=cfg.mix,
            )

    report = {
        "dataset": support.dataset_name,
        "mode": cfg.mode,
        "seed": cfg.seed,
        "config_fingerprint": config_fingerprint(cfg.raw),
        "backend": None if cfg.mode == "zero-shot" else {
            "kind": cfg.backend_kind,
            "priors": "uniform",
        },
        "hyperparameters": {
            "alpha": _float_or_none(chosen["alpha"]),
            "beta": None if chosen["beta"] is None else int(chosen["beta"]),
            "gamma": _float_or_none(chosen["gamma"]),
            "scale": cfg.scale,
            ("shrinkage" if cfg.backend_kind == "gda" else "sharpness"):
                _float_or_none(chosen["backend_param"]),
            "mix": _float_or_none(chosen["mix"]),
        },
        "degenerate_rows": {
            "text": int(text_bank.degenerate.sum()),
            "support": int(image_bank.degenerate.sum()),
        },
    }
    if search is not None:
        report["search"] = {
            "val_accuracy": search.val_accuracy,
            "evaluations": len(search.trace),
            "ties": search.ties,
            "tie_break": search.tie_break,
            "val_queries": len(validation),
        }

    if cfg.test_manifest is not None:
        test = batch_by_path[cfg.test_manifest]
        logits = _final_logits(text_bank, image_bank, test.features, cfg,
                               chosen)
        top1, per_class = evaluate_top1(logits, test.labels)
        preds_img, preds_txt = _branch_predictions(
            text_bank, image_bank, test.features, cfg, chosen)
        report["test"] = {
            "queries": len(test),
            "top1": top1,
            "per_class_top1": per_class,
        }
        report["diagnostics"] = _diagnostics_summary(
            text_bank, image_bank, test, cfg, chosen, preds_img, preds_txt)

    _write_outputs(report, search, cfg)
    return report


def _final_logits(text_bank, image_bank, queries, cfg: RunConfig,
                  chosen: dict) -> np.ndarray:
    if cfg.mode == "zero-shot":
        return cosine_logits(text_prototypes(text_bank), queries, cfg.scale)
    cache = _BranchCache(text_bank, image_bank, queries, cfg)
    return cache.fused(chosen)


def _branch_predictions(text_bank, image_bank, queries, cfg: RunConfig,
                        chosen: dict):
    """Argmax predictions of each branch alone (None for zero-shot mode)."""
    if cfg.mode == "zero-shot":
        return None, None
    cache = _BranchCache(text_bank, image_bank, queries, cfg)
    img = cache.image_logits(chosen["beta"], chosen["backend_param"])
    txt = cache.text_logits(chosen["gamma"])
    return np.argmax(img, axis=1), np.argmax(txt, axis=1)


def _diagnostics_summary(text_bank, image_bank, test: QueryBatch,
                         cfg: RunConfig, chosen: dict, preds_img, preds_txt):
    from .diagnostics import anomalous_matches, q_statistic

    by_class = [test.features[test.labels == c]
                for c in range(image_bank.n_classes)]
    raw = anomalous_matches(image_bank.prototypes, by_class)
    summary = {"anomalous_matches": {"mode": "relative",
                                     "image_prototypes": raw.total}}
    if cfg.mode != "zero-shot":
        similarity = tgi_mod.prompt_image_similarity(text_bank,
                                                     image_bank.prototypes)
        retained = tgi_mod.select_top_beta(similarity, int(chosen["beta"]))
        refined = l2_normalize(tgi_mod.build_tgi_features(
            image_bank.features, text_bank.features, retained).mean(axis=1))
        summary["anomalous_matches"]["tgi_refined_means"] = \
            anomalous_matches(refined, by_class).total
        q = q_statistic(preds_img, preds_txt, test.labels)
        summary["branch_q_statistic"] = {
            "pair": ["image_branch", "text_branch"],
            "n11": q.n11, "n00": q.n00, "n10": q.n10, "n01": q.n01,
            "q": q.value, "undefined": q.undefined,
        }
    return summary


TRACE_COLUMNS = ("alpha", "beta", "gamma", "shrinkage", "sharpness", "mix",
                 "accuracy")


def _trace_rows(search: SearchResult, cfg: RunConfig):
    for row in search.trace:
        out = {c: "" for c in TRACE_COLUMNS}
        out["alpha"] = repr(row["alpha"])
        out["beta"] = str(row["beta"])
        out["gamma"] = "" if row["gamma"] is None else repr(row["gamma"])
        key = "shrinkage" if cfg.backend_kind == "gda" else "sharpness"
        out[key] = repr(row["backend_param"])
        out["mix"] = repr(row["mix"]) if cfg.backend_kind == "cache" else ""
        out["accuracy"] = repr(row["accuracy"])
        yield out


def write_trace_csv(path, search: SearchResult, cfg: RunConfig) -> None:
    """Flat CSV of the search trace (deterministic row order and text)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=TRACE_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in _trace_rows(search, cfg):
            writer.writerow(row)


def write_report(path, report: dict) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(report, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _write_outputs(report: dict, search: SearchResult | None,
                   cfg: RunConfig) -> None:
    trace_path = cfg.trace_output
    if trace_path is None and cfg.output is not None and search is not None:
        trace_path = cfg.output.with_suffix(".trace.csv")
    if search is not None and trace_path is not None:
        trace_path.parent.mkdir(parents=True, exist_ok=True)
        write_trace_csv(trace_path, search, cfg)
        report["search"]["trace_path"] = str(trace_path)
    if cfg.output is not None:
        cfg.output.parent.mkdir(parents=True, exist_ok=True)
        write_report(cfg.output, report)
