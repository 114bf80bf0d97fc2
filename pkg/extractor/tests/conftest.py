import json
from pathlib import Path

import numpy as np
import pytest
from PIL import Image


@pytest.fixture(scope="session")
def image_tree(tmp_path_factory):
    """A small on-disk dataset: 3 classes x 4 PNGs, split list, prompts.

    Images are random RGB noise; their content only needs to be stable
    and distinct so content-addressed encoders are deterministic.
    """
    root = tmp_path_factory.mktemp("toyset")
    rng = np.random.default_rng(42)
    classes = ["grey_wolf", "lynx", "red_fox"]
    lines = ["# toy dataset", ""]
    for cls in classes:
        (root / "images" / cls).mkdir(parents=True)
        for i in range(4):
            rel = f"images/{cls}/{cls}_{i}.png"
            pixels = rng.integers(0, 256, size=(8, 8, 3), dtype=np.uint8)
            Image.fromarray(pixels).save(root / rel)
            lines.append(f"{rel} {cls}")
    (root / "splits.txt").write_text("\n".join(lines) + "\n",
                                     encoding="utf-8")
    (root / "prompts.json").write_text(json.dumps({
        "dataset_name": "toy-animals",
        "templates": ["a photo of a {}.", "a close-up of a {}."],
        "prompts": {
            "grey_wolf": [],
            "lynx": ["a lynx with tufted ears."],
            "red_fox": [],
        },
    }), encoding="utf-8")
    return {"root": root, "classes": classes,
            "splits": root / "splits.txt",
            "prompts": root / "prompts.json"}
