"""Deterministic random streams.

All randomness in the package flows from a single 64-bit seed.  Each
component draws from its own named stream so that, for example, adding
one more validation query never perturbs the support-set draw.  Streams
are derived splitmix-style: the label is hashed into a spawn key for
``numpy.random.SeedSequence``.

Stream labels in use:

========================  =======================================
label                     used for
========================  =======================================
``class_directions``      synthetic class direction vectors
``support``               synthetic support-image noise
``prompts``               synthetic prompt noise
``prompt_corruption``     which prompts are replaced, and by what
``queries/validation``    synthetic validation queries
``queries/test``          synthetic test queries
``validation_subsample``  ``val_fraction`` subsampling in the pipeline
``support_sampling``      shot selection in the extractor
========================  =======================================
"""

from __future__ import annotations

import hashlib

import numpy as np


def seed_stream(seed: int, label: str) -> np.random.Generator:
    """Return an independent generator for ``(seed, label)``.

    The same pair always yields the same stream; distinct labels yield
    statistically independent streams under the same seed.
    """
    key = int.from_bytes(hashlib.sha256(label.encode("utf-8")).digest()[:8], "little")
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(key,)))
