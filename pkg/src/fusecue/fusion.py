"""Lightweight fusion block: 1x1 conv (two inputs, no bias) -> BatchNorm -> ReLU.

The block turns two single-channel cue maps into one learned channel that
is appended to RGB. Stream order is fixed: the first weight always
multiplies the WDF map, the second the complementary cue.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np

from ._io import write_text_atomic
from .errors import FormatError, FrozenViolation, InvalidShape, InvalidSpec
from .tensor import CueChannel, CueKind, ImageTensor

FROZEN_FORMAT_VERSION = 1
BN_EPS = 1e-5
BN_MOMENTUM = 0.1  # running = 0.9 * running + 0.1 * batch


class FusionVariant(str, enum.Enum):
    LFWS = "LFWS"  # WDF + phase
    LFWL = "LFWL"  # WDF + LBP

    @classmethod
    def parse(cls, value) -> "FusionVariant":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).upper())
        except ValueError:
            raise InvalidSpec(f"unknown fusion variant {value!r}; expected lfws or lfwl") from None

    @property
    def streams(self) -> tuple[CueKind, CueKind]:
        return (CueKind.WDF, CueKind.PHASE if self is FusionVariant.LFWS else CueKind.LBP)


@dataclass
class FusionBlockParams:
    w: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0]))
    gamma: float = 1.0
    beta: float = 0.0
    running_mean: float = 0.0
    running_var: float = 1.0
    eps: float = BN_EPS
    frozen: bool = False
    variant: FusionVariant = FusionVariant.LFWS
    momentum: float = BN_MOMENTUM

    def __post_init__(self):
        self.w = np.array(self.w, dtype=np.float64).reshape(-1)
        if self.w.shape != (2,):
            raise InvalidSpec(f"the mixer takes exactly 2 weights, got {self.w.size}")
        self.variant = FusionVariant.parse(self.variant)
        for name in ("gamma", "beta", "running_mean", "running_var", "eps"):
            setattr(self, name, float(getattr(self, name)))
        # eps == 0 is allowed for exact identity normalisation in eval mode
        if self.running_var < 0 or self.eps < 0:
            raise InvalidSpec("running_var and eps must be non-negative")
        if not all(math.isfinite(v) for v in (*self.w, self.gamma, self.beta, self.running_mean, self.running_var)):
            raise InvalidSpec("fusion block parameters must be finite")

    @classmethod
    def identity(cls, w=(1.0, 0.0), variant=FusionVariant.LFWS, **kw) -> "FusionBlockParams":
        """Mixer ``w`` followed by a BatchNorm that does nothing (eps = 0)."""
        return cls(w=w, gamma=1.0, beta=0.0, running_mean=0.0, running_var=1.0, eps=0.0, variant=variant, **kw)

    def copy(self) -> "FusionBlockParams":
        return FusionBlockParams(
            self.w.copy(),
            self.gamma,
            self.beta,
            self.running_mean,
            self.running_var,
            self.eps,
            self.frozen,
            self.variant,
            self.momentum,
        )

    def to_dict(self) -> dict:
        return {
            "version": FROZEN_FORMAT_VERSION,
            "variant": self.variant.value,
            "w": [float(v) for v in self.w],
            "gamma": self.gamma,
            "beta": self.beta,
            "running_mean": self.running_mean,
            "running_var": self.running_var,
            "eps": self.eps,
        }


@dataclass
class FusionCache:
    a: np.ndarray
    b: np.ndarray
    xhat: np.ndarray
    pre: np.ndarray
    inv_std: float
    train: bool


def _as_batch(x) -> tuple[np.ndarray, bool]:
    if isinstance(x, ImageTensor):
        if x.channels != 1:
            raise InvalidShape(f"fusion inputs are single channel, got {x.channels}")
        return x.data[0].astype(np.float64)[None], True
    arr = np.asarray(x)
    if arr.ndim == 2:
        return arr[None], True
    if arr.ndim == 4 and arr.shape[1] == 1:
        arr = arr[:, 0]
    if arr.ndim != 3:
        raise InvalidShape(f"fusion inputs must be (H, W) or (N, H, W), got {arr.shape}")
    return arr, False


def forward(a, b, p: FusionBlockParams, train: bool = False, batch_stats=None):
    """Batch forward on arrays shaped (N, H, W). Returns ``(y, cache)``.

    In training mode the normalisation uses the statistics of ``z = w0*a +
    w1*b`` over the whole batch (or ``batch_stats=(mean, var)`` when given)
    and the running statistics are updated in place.
    """
    if a.shape != b.shape:
        raise InvalidShape(f"fusion inputs differ in shape: {a.shape} vs {b.shape}")
    if train and p.frozen:
        raise FrozenViolation("a frozen fusion block cannot run in training mode")
    dtype = np.result_type(a.dtype, b.dtype, np.float32)
    w0, w1 = (dtype.type(v) for v in p.w)
    z = w0 * a + w1 * b
    if train:
        if batch_stats is None:
            mean = float(z.mean(dtype=np.float64))
            var = float(np.mean(np.square(z - mean, dtype=np.float64)))
        else:
            mean, var = (float(v) for v in batch_stats)
        n = z.size
        unbiased = var * n / (n - 1) if n > 1 else var
        p.running_mean = (1 - p.momentum) * p.running_mean + p.momentum * mean
        p.running_var = (1 - p.momentum) * p.running_var + p.momentum * unbiased
    else:
        mean, var = p.running_mean, p.running_var
    if var + p.eps <= 0:
        raise InvalidSpec("normalisation variance is zero; use eps > 0")
    inv_std = 1.0 / math.sqrt(var + p.eps)
    xhat = (z - dtype.type(mean)) * dtype.type(inv_std)
    pre = dtype.type(p.gamma) * xhat + dtype.type(p.beta)
    y = np.maximum(pre, 0)
    return y, FusionCache(a, b, xhat, pre, inv_std, train)


def backward(dy, p: FusionBlockParams, cache: FusionCache) -> dict:
    """Gradients of a scalar loss w.r.t. ``w``, ``gamma``, ``beta`` and both inputs."""
    dpre = np.where(cache.pre > 0, dy, 0)
    dgamma = float(np.sum(dpre * cache.xhat, dtype=np.float64))
    dbeta = float(np.sum(dpre, dtype=np.float64))
    dxhat = dpre * dpre.dtype.type(p.gamma)
    if cache.train:
        n = dxhat.size
        s1 = np.sum(dxhat, dtype=np.float64)
        s2 = np.sum(dxhat * cache.xhat, dtype=np.float64)
        dz = (dxhat - dxhat.dtype.type(s1 / n) - cache.xhat * dxhat.dtype.type(s2 / n)) * dxhat.dtype.type(cache.inv_std)
    else:
        dz = dxhat * dxhat.dtype.type(cache.inv_std)
    dw = np.array(
        [float(np.sum(dz * cache.a, dtype=np.float64)), float(np.sum(dz * cache.b, dtype=np.float64))]
    )
    w0, w1 = (dz.dtype.type(v) for v in p.w)
    return {"w": dw, "gamma": dgamma, "beta": dbeta, "a": dz * w0, "b": dz * w1}


def fuse_forward(a, b, p: FusionBlockParams, mode: str = "eval", batch_stats=None):
    """Fuse two cue maps.

    ``a`` is the WDF stream and ``b`` the complementary cue. Single
    :class:`CueChannel` inputs give a single fused :class:`CueChannel`;
    arrays shaped (N, H, W) give an array.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    a_arr, single = _as_batch(a)
    b_arr, _ = _as_batch(b)
    y, _ = forward(a_arr, b_arr, p, train=mode == "train", batch_stats=batch_stats)
    if single:
        kind = a.kind if isinstance(a, CueChannel) else CueKind.WDF
        return CueChannel(y, kind=kind)
    return y


def fuse_backward(dy, p: FusionBlockParams, cache: FusionCache) -> dict:
    return backward(dy, p, cache)


def params_from_dict(doc: dict) -> FusionBlockParams:
    if not isinstance(doc, dict):
        raise FormatError("frozen block must be a JSON object")
    if doc.get("version") != FROZEN_FORMAT_VERSION:
        raise FormatError(f"unsupported frozen block version {doc.get('version')!r}")
    missing = {"variant", "w", "gamma", "beta", "running_mean", "running_var", "eps"} - doc.keys()
    if missing:
        raise FormatError(f"frozen block lacks {sorted(missing)}")
    w = doc["w"]
    if not isinstance(w, list) or len(w) != 2:
        raise FormatError(f"frozen block must hold exactly 2 mixer weights, got {w!r}")
    try:
        return FusionBlockParams(
            w=[float(v) for v in w],
            gamma=doc["gamma"],
            beta=doc["beta"],
            running_mean=doc["running_mean"],
            running_var=doc["running_var"],
            eps=doc["eps"],
            variant=doc["variant"],
            frozen=True,
        )
    except (InvalidSpec, TypeError, ValueError) as exc:
        raise FormatError(f"invalid frozen block: {exc}") from exc


def dumps_frozen(p: FusionBlockParams) -> str:
    return json.dumps(p.to_dict(), indent=2, sort_keys=True) + "\n"


def export_frozen(p: FusionBlockParams, path) -> None:
    write_text_atomic(path, dumps_frozen(p))


def import_frozen(path) -> FusionBlockParams:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: not JSON ({exc})") from exc
    return params_from_dict(doc)


def param_breakdown(
    first_conv_out: int = 32,
    kernel=(3, 3),
    extra_input_channels: int = 1,
    mixer_inputs: int = 2,
) -> dict[str, int]:
    """Trainable parameters the fused input adds to a 3-channel backbone.

    The extra input channel widens the first (bias-free) convolution by
    ``first_conv_out * kh * kw`` weights; the block itself holds one mixer
    weight per input stream and the BatchNorm scale and shift.
    """
    kh, kw = (kernel, kernel) if isinstance(kernel, int) else kernel
    return {
        "first_conv": extra_input_channels * first_conv_out * kh * kw,
        "mixer": mixer_inputs,
        "bn_affine": 2,
    }


def count_additional_params(
    first_conv_out: int = 32,
    kernel=(3, 3),
    extra_input_channels: int = 1,
    mixer_inputs: int = 2,
) -> int:
    return sum(param_breakdown(first_conv_out, kernel, extra_input_channels, mixer_inputs).values())
