"""sRGB <-> CIE 1976 L*a*b* (D65) conversion and network input scaling.

All conversion arithmetic runs in float64; LAB planes are stored as float32.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatViolation, IoFailure, ShapeMismatch

# linear sRGB -> XYZ, D65
SRGB_TO_XYZ = np.array(
    [
        [0.4124564, 0.3575761, 0.1804375],
        [0.2126729, 0.7151522, 0.0721750],
        [0.0193339, 0.1191920, 0.9503041],
    ]
)
XYZ_TO_SRGB = np.linalg.inv(SRGB_TO_XYZ)
# reference white is the image of linear (1, 1, 1), so sRGB white lands exactly on L=100, a=b=0
D65_WHITE = SRGB_TO_XYZ.sum(axis=1)

_DELTA = 6.0 / 29.0
LAB_MAGIC = b"LABF"


@dataclass(frozen=True)
class RgbImage:
    """8-bit sRGB image; ``data`` has shape (height, width, 3) and dtype uint8."""

    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 3 or self.data.shape[2] != 3:
            raise ShapeMismatch(f"expected (H, W, 3) pixel array, got {self.data.shape}")
        if self.data.dtype != np.uint8:
            object.__setattr__(self, "data", np.clip(np.rint(self.data), 0, 255).astype(np.uint8))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class LabImage:
    """L*a*b* image; ``data`` has shape (height, width, 3) and dtype float32."""

    data: np.ndarray

    def __post_init__(self):
        if self.data.ndim != 3 or self.data.shape[2] != 3:
            raise ShapeMismatch(f"expected (H, W, 3) pixel array, got {self.data.shape}")
        if self.data.dtype != np.float32:
            object.__setattr__(self, "data", self.data.astype(np.float32))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]


def _srgb_decode(c: np.ndarray) -> np.ndarray:
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def _srgb_encode(c: np.ndarray) -> np.ndarray:
    return np.where(c <= 0.0031308, 12.92 * c, 1.055 * np.power(c, 1.0 / 2.4) - 0.055)


def _lab_f(t: np.ndarray) -> np.ndarray:
    return np.where(t > _DELTA**3, np.cbrt(t), t / (3 * _DELTA**2) + 4.0 / 29.0)


def _lab_f_inv(t: np.ndarray) -> np.ndarray:
    return np.where(t > _DELTA, t**3, 3 * _DELTA**2 * (t - 4.0 / 29.0))


def srgb_to_lab(img: RgbImage) -> LabImage:
    rgb = _srgb_decode(img.data.astype(np.float64) / 255.0)
    xyz = rgb @ SRGB_TO_XYZ.T / D65_WHITE
    f = _lab_f(xyz)
    lab = np.empty_like(f)
    lab[..., 0] = 116.0 * f[..., 1] - 16.0
    lab[..., 1] = 500.0 * (f[..., 0] - f[..., 1])
    lab[..., 2] = 200.0 * (f[..., 1] - f[..., 2])
    return LabImage(lab.astype(np.float32))


def lab_to_srgb(img: LabImage) -> RgbImage:
    lab = img.data.astype(np.float64)
    fy = (lab[..., 0] + 16.0) / 116.0
    fx = fy + lab[..., 1] / 500.0
    fz = fy - lab[..., 2] / 200.0
    xyz = _lab_f_inv(np.stack([fx, fy, fz], axis=-1)) * D65_WHITE
    rgb = np.clip(xyz @ XYZ_TO_SRGB.T, 0.0, 1.0)
    return RgbImage(np.rint(_srgb_encode(rgb) * 255.0).astype(np.uint8))


def normalize_lab(img: LabImage) -> np.ndarray:
    """Return a float32 (3, H, W) array: L/100, a/128, b/128."""
    chw = img.data.transpose(2, 0, 1).astype(np.float32)
    scale = np.array([100.0, 128.0, 128.0], dtype=np.float32)[:, None, None]
    return np.ascontiguousarray(chw / scale)


def write_lab_raw(img: LabImage, path: str | Path) -> None:
    header = LAB_MAGIC + struct.pack("<III", img.width, img.height, 0)
    try:
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(img.data.astype("<f4").tobytes())
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def read_lab_raw(path: str | Path) -> LabImage:
    try:
        raw = Path(path).read_bytes()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    if len(raw) < 16 or raw[:4] != LAB_MAGIC:
        raise FormatViolation(f"{path}: missing LABF header")
    width, height, _ = struct.unpack("<III", raw[4:16])
    expected = 16 + width * height * 3 * 4
    if len(raw) != expected:
        raise FormatViolation(f"{path}: expected {expected} bytes, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<f4", offset=16).reshape(height, width, 3)
    return LabImage(data.astype(np.float32))
