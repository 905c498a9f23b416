"""Lossless PNG I/O for ImageBuffer."""

from __future__ import annotations

import io
from pathlib import Path

import numpy as np
from PIL import Image

from .vcm import ImageBuffer


def load_image(path: str | Path) -> ImageBuffer:
    """Load any Pillow-readable image as 8-bit RGB; grayscale (thermal) is replicated to 3 channels."""
    with Image.open(path) as im:
        if im.mode in ("I;16", "I;16B", "I;16L", "I"):
            raise ValueError(f"{path}: 16-bit images must be converted to 8-bit first")
        arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    return ImageBuffer(arr)


def encode_png(image: ImageBuffer) -> bytes:
    buf = io.BytesIO()
    Image.fromarray(np.asarray(image.pixels), mode="RGB").save(buf, format="PNG")
    return buf.getvalue()


def save_png(image: ImageBuffer, path: str | Path) -> None:
    Path(path).write_bytes(encode_png(image))
