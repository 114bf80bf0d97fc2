"""Training-free few-shot classification over precomputed vision-language
embeddings.

The engine consumes per-class prompt embeddings and a handful of support
image embeddings per class, cross-guides the two modalities (prompts are
injected into the image classifier's support set weighted by agreement
with the image prototypes; text prototypes are rectified by re-weighting
prompts toward the support images), and fuses both branches into one
classifier.  No gradients, no training loop.
"""

from .backends import (CacheClassifier, GdaClassifier, build_image_classifier,
                       stack_class_samples)
from .container import (Manifest, load_dataset, read_manifest, read_tensor,
                        write_tensor)
from .diagnostics import (AnomalyReport, PromptQuality, QStatistic,
                          anomalous_matches, chi2_sf, kruskal_wallis_h,
                          prompt_quality, q_statistic, split_prototypes)
from .errors import ConfigError, DataError, TimoError
from .features import (ImageSupportBank, PrototypeSet, QueryBatch,
                       TextFeatureBank, cosine_logits, degenerate_rows,
                       image_prototypes, l2_normalize, text_prototypes)
from .igt import (PromptWeights, build_igt_prototypes, igt_logits,
                  prompt_weights, softmax_rows, solve_prompt_weights,
                  uniform_prompt_weights)
from .model import TimoClassifier, zero_shot_logits
from .pipeline import (SearchResult, evaluate_top1, fuse_logits, run)
from .rng import seed_stream
from .synth import generate_dataset
from .tgi import (RetainedPrompts, SimilarityWeights, build_tgi_features,
                  prompt_image_similarity, select_top_beta)

__version__ = "0.1.0"

__all__ = [
    "AnomalyReport", "CacheClassifier", "ConfigError", "DataError",
    "GdaClassifier", "ImageSupportBank", "Manifest", "PromptQuality",
    "PromptWeights", "PrototypeSet", "QStatistic", "QueryBatch",
    "RetainedPrompts", "SearchResult", "SimilarityWeights",
    "TextFeatureBank", "TimoClassifier", "TimoError", "anomalous_matches",
    "build_igt_prototypes", "build_image_classifier", "build_tgi_features",
    "chi2_sf", "cosine_logits", "degenerate_rows", "evaluate_top1",
    "fuse_logits", "generate_dataset", "igt_logits", "image_prototypes",
    "kruskal_wallis_h", "l2_normalize", "load_dataset",
    "prompt_image_similarity", "prompt_quality", "prompt_weights",
    "q_statistic", "read_manifest", "read_tensor", "run", "seed_stream",
    "select_top_beta", "softmax_rows", "solve_prompt_weights",
    "split_prototypes", "stack_class_samples", "text_prototypes",
    "uniform_prompt_weights", "write_tensor", "zero_shot_logits",
]
