"""Rotation-invariant uniform local binary patterns.

A neighbour sample at or above the centre sets its bit. Patterns with at
most two circular 0/1 transitions get the count of set bits (0..P); all
other patterns share the bucket P + 1. Because the code only depends on
the multiset of bits around the circle, the bit ordering is irrelevant.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import InvalidCode, InvalidShape
from .tensor import CueChannel, CueKind, ImageTensor, as_tensor


@dataclass(frozen=True)
class LbpConfig:
    """Sampling configuration.

    ``sampling="grid"`` takes each neighbour from the pixel nearest to its
    point on the circle (for radius 1 this is the 8-connected ring), which
    keeps codes exactly invariant under monotone intensity changes.
    ``sampling="bilinear"`` interpolates off-grid points the way
    scikit-image does.
    """

    radius: float = 1.0
    neighbors: int = 8
    sampling: str = "grid"

    def __post_init__(self):
        if self.neighbors < 1 or self.neighbors > 64:
            raise ValueError(f"neighbors must be in 1..64, got {self.neighbors}")
        if not self.radius > 0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        if self.sampling not in ("grid", "bilinear"):
            raise ValueError(f"unknown sampling {self.sampling!r}")
        if (self.neighbors, self.radius) != (8, 1.0):
            warnings.warn("LBP settings other than P=8, R=1 are untested", stacklevel=2)

    @property
    def max_code(self) -> int:
        return self.neighbors + 1

    def offsets(self) -> tuple[np.ndarray, np.ndarray]:
        q = np.arange(self.neighbors)
        dy = np.round(-self.radius * np.sin(2 * np.pi * q / self.neighbors), 5)
        dx = np.round(self.radius * np.cos(2 * np.pi * q / self.neighbors), 5)
        if self.sampling == "grid":
            dy, dx = np.rint(dy), np.rint(dx)
        return dy + 0.0, dx + 0.0


def lbp_code_plane(x: np.ndarray, cfg: LbpConfig = LbpConfig()) -> np.ndarray:
    dy, dx = cfg.offsets()
    margin = int(math.ceil(cfg.radius)) + 1
    return kernels.lbp_codes(np.ascontiguousarray(x, dtype=np.float64), dy, dx, cfg.sampling == "bilinear", margin)


def lbp_codes(img, cfg: LbpConfig = LbpConfig()) -> ImageTensor:
    img = as_tensor(img)
    if img.channels != 1:
        raise InvalidShape(f"LBP expects a grayscale image, got {img.channels} channels")
    return ImageTensor(lbp_code_plane(img.plane(0), cfg)[None].astype(np.float32))


def normalize_codes(codes: np.ndarray, neighbors: int = 8) -> np.ndarray:
    codes = np.asarray(codes)
    c = codes.astype(np.float64)
    if np.any(c != np.round(c)) or c.min() < 0 or c.max() > neighbors + 1:
        raise InvalidCode(f"LBP codes must be integers in 0..{neighbors + 1}")
    return c / (neighbors + 2) * 2 - 1


def lbp_normalize(codes, neighbors: int = 8) -> CueChannel:
    """Map codes 0..P+1 onto [-1, 1 - 2/(P+2)] with x / (P+2) * 2 - 1."""
    t = as_tensor(codes)
    return CueChannel(normalize_codes(t.data, neighbors), kind=CueKind.LBP)


def lbp(img, cfg: LbpConfig = LbpConfig()) -> CueChannel:
    return lbp_normalize(lbp_codes(img, cfg), cfg.neighbors)
