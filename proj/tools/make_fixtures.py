#!/usr/bin/env python3
"""Writes the small PNG fixtures used by the image decoding tests."""
import os

import numpy as np
from PIL import Image

out = os.path.join(os.path.dirname(__file__), "..", "tests", "data", "fixtures")
os.makedirs(out, exist_ok=True)

rgb = np.arange(4 * 3 * 3, dtype=np.uint8).reshape(3, 4, 3) * 7
Image.fromarray(rgb, "RGB").save(os.path.join(out, "rgb_4x3.png"))
rgba = np.concatenate([rgb, np.full((3, 4, 1), 128, np.uint8)], axis=-1)
Image.fromarray(rgba, "RGBA").save(os.path.join(out, "rgba_4x3.png"))
Image.fromarray(rgb[..., 0], "L").save(os.path.join(out, "gray_4x3.png"))
Image.fromarray(rgb, "RGB").convert("P", palette=Image.ADAPTIVE, colors=16).save(os.path.join(out, "palette_4x3.png"))
Image.fromarray(rgb[..., 0].astype("<u2") * 257).save(os.path.join(out, "gray16_4x3.png"))
with open(os.path.join(out, "corrupt.png"), "wb") as f:
    f.write(b"\x89PNG\r\n\x1a\n" + b"\x00" * 20)

# Small scene and target mask for the command-line tests.
scene = np.array(Image.open(os.path.join(out, "..", "heldout", "coins.png")).convert("RGB"))[100:140, 100:148]
Image.fromarray(scene, "RGB").save(os.path.join(out, "scene_48x40.png"))
mask = np.zeros((40, 48), np.uint8)
mask[14:26, 18:30] = 255
Image.fromarray(mask, "L").save(os.path.join(out, "mask_48x40.png"))
