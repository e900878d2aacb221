"""PNG output for (C, H, W) images in [-1, 1]."""
from __future__ import annotations

import io

import numpy as np
from PIL import Image

from .fsutil import atomic_write


def to_uint8(image: np.ndarray) -> np.ndarray:
    """(C, H, W) in [-1, 1] -> (H, W, C) uint8."""
    x = np.clip((np.asarray(image, dtype=np.float64) + 1.0) * 127.5, 0.0, 255.0)
    return np.rint(x).astype(np.uint8).transpose(1, 2, 0)


def from_uint8(arr: np.ndarray) -> np.ndarray:
    return arr.astype(np.float64).transpose(2, 0, 1) / 127.5 - 1.0


def png_bytes(image: np.ndarray, scale: int = 1) -> bytes:
    im = Image.fromarray(to_uint8(image))
    if scale > 1:
        im = im.resize((im.width * scale, im.height * scale), Image.NEAREST)
    buf = io.BytesIO()
    im.save(buf, format="PNG")
    return buf.getvalue()


def save_png(path, image: np.ndarray, scale: int = 1):
    atomic_write(path, png_bytes(image, scale))


def load_png(path) -> np.ndarray:
    with Image.open(path) as im:
        return from_uint8(np.asarray(im.convert("RGB")))


def grid(images, cols: int) -> np.ndarray:
    """Tile equally sized (C, H, W) images row-major; empty cells stay at -1."""
    images = list(images)
    rows = -(-len(images) // cols)
    c, h, w = images[0].shape
    out = -np.ones((c, rows * h, cols * w))
    for k, im in enumerate(images):
        r, q = divmod(k, cols)
        out[:, r * h:(r + 1) * h, q * w:(q + 1) * w] = im
    return out
