"""Grayscale PNG export of scalar fields.

Fixed ramp: the per-image minimum maps to 0 and the maximum to 255, one pixel
per cell in row-major order; the actual value range goes into a sidecar text
file next to the image so renderings stay comparable.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image


def save_grayscale_png(values: np.ndarray, path) -> None:
    path = Path(path)
    arr = np.asarray(values, dtype=np.float64)
    lo, hi = float(arr.min()), float(arr.max())
    if hi > lo:
        scaled = np.round((arr - lo) / (hi - lo) * 255.0)
    else:
        scaled = np.zeros_like(arr)
    Image.fromarray(scaled.astype(np.uint8), mode="L").save(path)
    Path(str(path) + ".txt").write_text(f"min={lo!r}\nmax={hi!r}\n")
