"""Frame -> model-input pipeline shared by training, inference and the CLI."""

from __future__ import annotations

import numpy as np

from .lbp import LbpConfig, lbp, lbp_code_plane, normalize_codes
from .phase import phase_channel, phase_plane
from .tensor import CueChannel, CueKind, ImageTensor, NormalizationSpec, as_tensor, normalize, to_grayscale
from .wavelet import DEFAULT_LEVELS, minmax_rescale, wdf, wdf_plane

CUE_ORDER = (CueKind.WDF, CueKind.LBP, CueKind.PHASE)


def as_rgb(img: ImageTensor) -> ImageTensor:
    """Replicate a grayscale frame to three channels; pass RGB through."""
    img = as_tensor(img)
    if img.channels == 1:
        return ImageTensor(np.repeat(img.data, 3, axis=0))
    return img


def grayscale(img: ImageTensor) -> ImageTensor:
    img = as_tensor(img)
    return img if img.channels == 1 else to_grayscale(img)


def extract_cue(img: ImageTensor, kind, lbp_cfg: LbpConfig = LbpConfig()) -> CueChannel:
    """One cue map from a [0, 1] frame (RGB frames are converted to gray first)."""
    gray = grayscale(img)
    kind = CueKind(kind)
    if kind is CueKind.WDF:
        return wdf(gray)
    if kind is CueKind.LBP:
        return lbp(gray, lbp_cfg)
    return phase_channel(gray)


def cue_stack(gray: np.ndarray, kinds, lbp_cfg: LbpConfig = LbpConfig()) -> np.ndarray:
    """(3, H, W) float32 stack in :data:`CUE_ORDER`; cues not in ``kinds`` stay zero."""
    gray = np.asarray(gray, dtype=np.float64)
    out = np.zeros((3,) + gray.shape, dtype=np.float32)
    kinds = {CueKind(k) for k in kinds}
    if CueKind.WDF in kinds:
        out[0] = minmax_rescale(wdf_plane(gray, DEFAULT_LEVELS))
    if CueKind.LBP in kinds:
        out[1] = normalize_codes(lbp_code_plane(gray, lbp_cfg), lbp_cfg.neighbors)
    if CueKind.PHASE in kinds:
        out[2] = np.clip(phase_plane(gray), -1.0, 1.0)
    return out


def frame_inputs(img: ImageTensor, kinds, norm: NormalizationSpec = NormalizationSpec()):
    """Normalised RGB (3, H, W) and the cue stack for one [0, 1] frame."""
    rgb = as_rgb(img)
    gray = grayscale(rgb).data[0].astype(np.float64)
    return normalize(rgb, norm).data, cue_stack(gray, kinds)
