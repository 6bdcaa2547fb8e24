"""Image decoding and the shared train/eval preprocessing path."""
from __future__ import annotations

import os
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .colorspace import LabImage, RgbImage, normalize_lab, srgb_to_lab
from .errors import DecodeFailure, MissingImage


def load_rgb(path: str | Path, size: tuple[int, int] | None = None) -> RgbImage:
    """Decode an image file to 8-bit RGB, optionally resizing to ``size`` = (H, W).

    Resizing is bilinear and happens in 8-bit sRGB before any color conversion.
    """
    path = Path(path)
    if not path.is_file():
        raise MissingImage(f"image not found: {path}")
    try:
        with Image.open(path) as im:
            im = im.convert("RGB")
            if size is not None and (im.height, im.width) != tuple(size):
                im = im.resize((size[1], size[0]), Image.BILINEAR)
            arr = np.asarray(im, dtype=np.uint8)
    except (UnidentifiedImageError, OSError) as exc:
        raise DecodeFailure(f"cannot decode {path}: {exc}") from exc
    return RgbImage(arr.copy())


def load_lab(path: str | Path, size: tuple[int, int] | None = None) -> LabImage:
    return srgb_to_lab(load_rgb(path, size))


def preprocess(path: str | Path, size: tuple[int, int] | None) -> np.ndarray:
    """File -> resized -> LAB -> normalized (3, H, W) float32 network input."""
    return normalize_lab(load_lab(path, size))


def save_rgb(data: np.ndarray, path: str | Path) -> None:
    Image.fromarray(np.asarray(data, dtype=np.uint8), mode="RGB").save(path)


class ImageStore:
    """Resolves manifest paths and caches preprocessed network inputs.

    A manifest path is used as-is when it exists; otherwise its basename is
    looked up under ``images_dir``.
    """

    def __init__(self, images_dir: str | Path | None, size: tuple[int, int] | None, cache: bool = True):
        self.images_dir = Path(images_dir) if images_dir is not None else None
        self.size = tuple(size) if size is not None else None
        self._cache: dict[str, np.ndarray] | None = {} if cache else None

    def resolve(self, path: str | Path) -> Path:
        p = Path(path)
        if p.is_file() or self.images_dir is None:
            return p
        if not p.is_absolute():
            candidate = self.images_dir / p
            if candidate.is_file():
                return candidate
        return self.images_dir / os.path.basename(str(p))

    def get(self, path: str | Path) -> np.ndarray:
        key = str(path)
        if self._cache is not None and key in self._cache:
            return self._cache[key]
        arr = preprocess(self.resolve(path), self.size)
        if self._cache is not None:
            self._cache[key] = arr
        return arr

    def batch(self, paths) -> np.ndarray:
        return np.stack([self.get(p) for p in paths])
