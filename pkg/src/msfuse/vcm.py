"""Visual crop & mark: green 1-px outline around a detection, cropped at twice its size."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import Box, InvalidBoxError, Modality
from .pairing import PairedDetection

MARKER_RGB = (0, 255, 0)


class CropError(ValueError):
    def __init__(self, message: str, pair_index: int | None = None):
        super().__init__(message if pair_index is None else f"pair {pair_index}: {message}")
        self.pair_index = pair_index


class ImageBuffer:
    """Immutable 8-bit RGB image, ``pixels`` shaped (height, width, 3)."""

    __slots__ = ("_pixels",)

    def __init__(self, pixels):
        arr = np.asarray(pixels)
        if arr.ndim == 2:
            arr = np.repeat(arr[:, :, None], 3, axis=2)
        if arr.ndim != 3 or arr.shape[2] != 3:
            raise ValueError(f"expected an (H, W, 3) array, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        if arr.dtype != np.uint8:
            if np.any(arr < 0) or np.any(arr > 255):
                raise ValueError("channel values must lie in [0, 255]")
            arr = arr.astype(np.uint8)
        arr = np.array(arr, dtype=np.uint8, order="C", copy=True)
        arr.setflags(write=False)
        self._pixels = arr

    @property
    def pixels(self) -> np.ndarray:
        return self._pixels

    @property
    def width(self) -> int:
        return int(self._pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self._pixels.shape[0])

    def __eq__(self, other):
        if not isinstance(other, ImageBuffer):
            return NotImplemented
        return self._pixels.shape == other._pixels.shape and bool(np.array_equal(self._pixels, other._pixels))

    def __hash__(self):
        return hash((self._pixels.shape, self._pixels.tobytes()))

    def __repr__(self):
        return f"ImageBuffer({self.width}x{self.height})"

    def tobytes(self) -> bytes:
        return self._pixels.tobytes()


@dataclass(frozen=True, eq=False)
class MarkedCrop:
    image: ImageBuffer
    source_box: Box
    crop_region: Box  # integer corners, source-image coordinates
    pair_index: int


def _round_half_up(v: float) -> int:
    return int(math.floor(v + 0.5))


def rasterize(box: Box) -> tuple[int, int, int, int]:
    """Integer pixel corners (half-open) for a real-valued box; at least one pixel wide/high."""
    x1, y1 = _round_half_up(box.x1), _round_half_up(box.y1)
    x2, y2 = _round_half_up(box.x2), _round_half_up(box.y2)
    return x1, y1, max(x2, x1 + 1), max(y2, y1 + 1)


def crop_region_for(box: Box, width: int, height: int) -> tuple[tuple[int, int, int, int], tuple[int, int, int, int]]:
    """Return (unclamped, clamped) crop regions for ``box`` on a width x height image."""
    x1, y1, x2, y2 = rasterize(box)
    w, h = x2 - x1, y2 - y1
    # odd sizes put the extra pixel on the right/bottom
    rx1, ry1 = x1 - w // 2, y1 - h // 2
    rx2, ry2 = rx1 + 2 * w, ry1 + 2 * h
    clamped = (max(rx1, 0), max(ry1, 0), min(rx2, width), min(ry2, height))
    return (rx1, ry1, rx2, ry2), clamped


def marker_mask(box: Box, width: int, height: int) -> np.ndarray:
    """Boolean (height, width) mask of the visible marker perimeter."""
    x1, y1, x2, y2 = rasterize(box)
    mask = np.zeros((height, width), dtype=bool)
    cols = slice(max(x1, 0), min(x2, width))
    rows = slice(max(y1, 0), min(y2, height))
    for y in (y1, y2 - 1):
        if 0 <= y < height:
            mask[y, cols] = True
    for x in (x1, x2 - 1):
        if 0 <= x < width:
            mask[rows, x] = True
    return mask


def crop_and_mark(image: ImageBuffer, box: Box, pair_index: int = 0) -> MarkedCrop:
    try:
        box.check()
    except InvalidBoxError as exc:
        raise CropError(str(exc), pair_index) from None
    W, H = image.width, image.height
    x1, y1, x2, y2 = rasterize(box)
    if x2 <= 0 or y2 <= 0 or x1 >= W or y1 >= H:
        raise CropError(f"box {box.to_list()} lies outside the {W}x{H} image", pair_index)
    _, (cx1, cy1, cx2, cy2) = crop_region_for(box, W, H)
    # marking happens in source coordinates; only the cropped window is copied
    out = np.array(image.pixels[cy1:cy2, cx1:cx2], copy=True)
    mask = marker_mask(box, W, H)[cy1:cy2, cx1:cx2]
    out[mask] = MARKER_RGB
    return MarkedCrop(
        image=ImageBuffer(out),
        source_box=box,
        crop_region=Box(float(cx1), float(cy1), float(cx2), float(cy2)),
        pair_index=pair_index,
    )


def vcm_batch(image: ImageBuffer, pairs: Sequence[PairedDetection], side: Modality) -> list[MarkedCrop]:
    """One marked crop per pair, taken from the ``side`` modality's box, in pair order."""
    ids = {p.image_id for p in pairs}
    if len(ids) > 1:
        raise CropError(f"pairs span several images: {sorted(ids)}")
    return [crop_and_mark(image, p.side(side).box, pair_index=i) for i, p in enumerate(pairs)]
