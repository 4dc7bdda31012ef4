"""Phase-only reconstruction of a grayscale plane.

The forward transform is unnormalised and the inverse carries the
``1/(H*W)`` factor, so a unit-magnitude spectrum reconstructs to values
bounded by 1 in absolute value. No frequency shift is applied; shifting
would only translate the output.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidShape
from .tensor import CueChannel, CueKind, as_tensor

# Bins below this fraction of the total input mass are treated as exact
# zeros; their phase is then 0 and their unit phasor is 1. Sums that cancel
# exactly in real arithmetic leave residues of a few ulps times the mass.
ZERO_BIN_RTOL = 1e-13


def fft2(x: np.ndarray) -> np.ndarray:
    return np.fft.fft2(np.asarray(x, dtype=np.float64))


def ifft2(spectrum: np.ndarray) -> np.ndarray:
    return np.fft.ifft2(np.asarray(spectrum, dtype=np.complex128))


def unit_phasors(spectrum: np.ndarray, floor: float = 0.0) -> np.ndarray:
    """``exp(i * angle(X))`` with the phase of (near-)zero bins taken as 0."""
    mag = np.abs(spectrum)
    zero = mag <= floor
    safe = np.where(zero, 1.0, mag)
    return np.where(zero, 1.0 + 0.0j, spectrum / safe)


def phase_plane(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    spec = fft2(x)
    floor = ZERO_BIN_RTOL * float(np.abs(x).sum())
    return ifft2(unit_phasors(spec, floor)).real


def phase_channel(img) -> CueChannel:
    img = as_tensor(img)
    if img.channels != 1:
        raise InvalidShape(f"phase channel expects a grayscale image, got {img.channels} channels")
    y = np.clip(phase_plane(img.plane(0)), -1.0, 1.0)
    return CueChannel(y[None], kind=CueKind.PHASE)
