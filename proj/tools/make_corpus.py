#!/usr/bin/env python3
"""Cut the bundled scikit-image / scikit-learn sample photos into the test corpus.

Training tiles go to tests/data/corpus, whole held-out photos to
tests/data/heldout. Output is deterministic.
"""
import argparse
import os

import numpy as np
from PIL import Image
from skimage import data as skdata
from sklearn.datasets import load_sample_image

TRAIN = [
    "astronaut", "rocket.jpg", "motorcycle_left", "motorcycle_right", "camera",
    "brick", "grass", "gravel", "moon", "china.jpg", "flower.jpg",
]
HELDOUT = ["chelsea", "coffee", "coins"]


def load(name):
    if name in ("china.jpg", "flower.jpg"):
        img = load_sample_image(name)
    else:
        fname = name if "." in name else name + ".png"
        img = Image.open(os.path.join(os.path.dirname(skdata.__file__), fname))
    img = np.asarray(img)
    if img.ndim == 2:
        img = np.stack([img] * 3, axis=-1)
    return img[..., :3].astype(np.uint8)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--out", default=os.path.join(os.path.dirname(__file__), "..", "tests", "data"))
    ap.add_argument("--tile", type=int, default=128)
    args = ap.parse_args()

    corpus = os.path.join(args.out, "corpus")
    heldout = os.path.join(args.out, "heldout")
    os.makedirs(corpus, exist_ok=True)
    os.makedirs(heldout, exist_ok=True)

    count = 0
    for name in TRAIN:
        img = load(name)
        stem = name.split(".")[0]
        h, w = img.shape[:2]
        for ty in range(h // args.tile):
            for tx in range(w // args.tile):
                tile = img[ty * args.tile:(ty + 1) * args.tile, tx * args.tile:(tx + 1) * args.tile]
                Image.fromarray(tile).save(os.path.join(corpus, f"{stem}_{ty}_{tx}.png"), optimize=True)
                count += 1
    for name in HELDOUT:
        Image.fromarray(load(name)).save(os.path.join(heldout, f"{name}.png"), optimize=True)
    print(f"{count} corpus tiles, {len(HELDOUT)} held-out images")


if __name__ == "__main__":
    main()
