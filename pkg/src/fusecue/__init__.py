"""Hand-crafted forensic cues fused into the input of a small CNN deepfake detector."""

from . import errors
from .augment import AugmentConfig, augment
from .data import SampleRecord, SynthConfig, generate_synthetic, load_manifest, write_manifest
from .eval import EvalReport, auc, average_auc, delta_vs_baseline, frame_to_video_score
from .features import cue_stack, extract_cue, frame_inputs
from .fusion import (
    FusionBlockParams,
    FusionVariant,
    count_additional_params,
    export_frozen,
    fuse_backward,
    fuse_forward,
    import_frozen,
)
from .kernels import BACKEND
from .lbp import LbpConfig, lbp, lbp_codes, lbp_normalize
from .phase import phase_channel
from .tensor import (
    CueChannel,
    CueKind,
    ImageTensor,
    NormalizationSpec,
    read_image,
    read_tensor,
    to_grayscale,
    write_image,
    write_tensor,
)
from .wavelet import dwt2, idwt2, wdf

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "AugmentConfig",
    "CueChannel",
    "CueKind",
    "EvalReport",
    "FusionBlockParams",
    "FusionVariant",
    "ImageTensor",
    "LbpConfig",
    "NormalizationSpec",
    "SampleRecord",
    "SynthConfig",
    "auc",
    "augment",
    "average_auc",
    "count_additional_params",
    "cue_stack",
    "delta_vs_baseline",
    "dwt2",
    "errors",
    "export_frozen",
    "extract_cue",
    "frame_inputs",
    "frame_to_video_score",
    "fuse_backward",
    "fuse_forward",
    "generate_synthetic",
    "idwt2",
    "import_frozen",
    "lbp",
    "lbp_codes",
    "lbp_normalize",
    "load_manifest",
    "phase_channel",
    "read_image",
    "read_tensor",
    "to_grayscale",
    "wdf",
    "write_image",
    "write_manifest",
    "write_tensor",
]
