"""Desk-scale detector: optional cue/fusion front end + a small CNN."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .. import fusion
from ..errors import InvalidShape, InvalidSpec
from ..fusion import FusionBlockParams, FusionVariant
from ..tensor import CueKind, ImageTensor, as_tensor
from .layers import (
    BatchNorm2d,
    Conv2d,
    GlobalAvgPool,
    Layer,
    Linear,
    MaxPool2,
    Param,
    ReLU,
    Sequential,
)

DEFAULT_WIDTHS = (16, 32, 64, 64)
# channel order of the cue stack handed to a Detector
CUE_ORDER = (CueKind.WDF, CueKind.LBP, CueKind.PHASE)
CUE_INDEX = {k: i for i, k in enumerate(CUE_ORDER)}


@dataclass(frozen=True)
class InputAssembly:
    """How the backbone input is built from RGB and the cue maps.

    ``rgb`` feeds three channels; ``concat:<cue>`` appends one raw cue map;
    ``fused:<variant>`` appends the output of a fusion block.
    """

    mode: str = "rgb"
    cue: CueKind | None = None
    variant: FusionVariant | None = None

    def __post_init__(self):
        if self.mode == "rgb":
            ok = self.cue is None and self.variant is None
        elif self.mode == "concat":
            ok = self.cue is not None and self.variant is None
            object.__setattr__(self, "cue", CueKind(self.cue))
        elif self.mode == "fused":
            ok = self.variant is not None and self.cue is None
            object.__setattr__(self, "variant", FusionVariant.parse(self.variant))
        else:
            ok = False
        if not ok:
            raise InvalidSpec(f"invalid input assembly {self.mode!r} cue={self.cue} variant={self.variant}")

    @classmethod
    def parse(cls, text: str) -> "InputAssembly":
        mode, _, arg = text.strip().lower().partition(":")
        try:
            if mode == "rgb" and not arg:
                return cls("rgb")
            if mode == "concat":
                return cls("concat", cue=CueKind(arg))
            if mode == "fused":
                return cls("fused", variant=FusionVariant.parse(arg))
        except ValueError:
            pass
        raise InvalidSpec(f"cannot parse assembly {text!r}; expected rgb, concat:<wdf|lbp|phase> or fused:<lfws|lfwl>")

    def __str__(self):
        if self.mode == "concat":
            return f"concat:{self.cue.value}"
        if self.mode == "fused":
            return f"fused:{self.variant.value.lower()}"
        return "rgb"

    @property
    def in_channels(self) -> int:
        return 3 if self.mode == "rgb" else 4

    @property
    def required_cues(self) -> tuple[CueKind, ...]:
        if self.mode == "concat":
            return (self.cue,)
        if self.mode == "fused":
            return self.variant.streams
        return ()


RGB_ONLY = InputAssembly("rgb")


def assemble_input(rgb, cues: dict, assembly: InputAssembly, block: FusionBlockParams | None = None) -> ImageTensor:
    """Stack RGB (already in [-1, 1]) with the extra channel of ``assembly``.

    ``cues`` maps :class:`CueKind` to single-channel tensors. The fused
    channel is computed in eval mode with ``block``.
    """
    rgb = as_tensor(rgb)
    if rgb.channels != 3:
        raise InvalidShape(f"expected 3 RGB channels, got {rgb.channels}")
    if assembly.mode == "rgb":
        return rgb
    if assembly.mode == "concat":
        extra = as_tensor(cues[assembly.cue]).data
    else:
        if block is None:
            raise InvalidSpec("fused assembly needs fusion block parameters")
        ka, kb = assembly.variant.streams
        extra = fusion.fuse_forward(as_tensor(cues[ka]), as_tensor(cues[kb]), block, mode="eval").data
    if extra.shape[1:] != rgb.shape[1:]:
        raise InvalidShape(f"cue {extra.shape[1:]} does not match image {rgb.shape[1:]}")
    return ImageTensor(np.concatenate([rgb.data, extra], axis=0))


class TinyBackbone(Sequential):
    """Four (3x3 conv -> BN -> ReLU -> 2x2 max pool) stages, global average
    pool and a linear head producing one logit."""

    def __init__(self, in_channels=3, widths=DEFAULT_WIDTHS, rng=None, dtype=np.float32):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.in_channels = in_channels
        self.widths = tuple(int(w) for w in widths)
        layers = []
        cin = in_channels
        for i, cout in enumerate(self.widths):
            layers += [
                (f"stage{i}.conv", Conv2d(cin, cout, 3, bias=False, rng=rng, dtype=dtype)),
                (f"stage{i}.bn", BatchNorm2d(cout, dtype=dtype)),
                (f"stage{i}.relu", ReLU()),
                (f"stage{i}.pool", MaxPool2()),
            ]
            cin = cout
        layers += [("gap", GlobalAvgPool()), ("head", Linear(cin, 1, rng=rng, dtype=dtype))]
        super().__init__(layers)

    @property
    def first_conv(self) -> Conv2d:
        return self.layers[0][1]


class FusionLayer(Layer):
    """Adapter exposing a fusion block's weights as trainable ``Param``s."""

    def __init__(self, block: FusionBlockParams, dtype=np.float32):
        self.dtype = dtype
        self.variant = block.variant
        self.eps = block.eps
        self.momentum = block.momentum
        self.frozen = block.frozen
        self.w = Param(np.array(block.w, dtype=dtype))
        self.gamma = Param(np.array([block.gamma], dtype=dtype))
        self.beta = Param(np.array([block.beta], dtype=dtype))
        self.running_mean = np.array([block.running_mean], dtype=np.float64)
        self.running_var = np.array([block.running_var], dtype=np.float64)

    def params(self):
        if self.frozen:
            return {}
        return {"w": self.w, "gamma": self.gamma, "beta": self.beta}

    def all_params(self):
        return {"w": self.w, "gamma": self.gamma, "beta": self.beta}

    def buffers(self):
        return {"running_mean": self.running_mean, "running_var": self.running_var}

    def block(self) -> FusionBlockParams:
        return FusionBlockParams(
            w=self.w.value.astype(np.float64),
            gamma=float(self.gamma.value[0]),
            beta=float(self.beta.value[0]),
            running_mean=float(self.running_mean[0]),
            running_var=float(self.running_var[0]),
            eps=self.eps,
            frozen=self.frozen,
            variant=self.variant,
            momentum=self.momentum,
        )

    def forward(self, a, b, train=False):
        p = self.block()
        y, self._cache = fusion.forward(a, b, p, train=train and not self.frozen)
        self.running_mean[0] = p.running_mean
        self.running_var[0] = p.running_var
        self._block = p
        return y

    def backward(self, dy):
        g = fusion.backward(dy, self._block, self._cache)
        if not self.frozen:
            self.w.grad += g["w"].astype(self.dtype)
            self.gamma.grad += self.dtype(g["gamma"])
            self.beta.grad += self.dtype(g["beta"])
        return g["a"], g["b"]


class Detector:
    """Input assembly + optional fusion block + backbone -> one logit per frame.

    ``forward`` takes normalised RGB ``(N, 3, H, W)`` and a cue stack
    ``(N, 3, H, W)`` in :data:`CUE_ORDER` (unused channels may hold
    anything).
    """

    def __init__(
        self,
        assembly: InputAssembly = RGB_ONLY,
        widths=DEFAULT_WIDTHS,
        seed: int = 1024,
        dtype=np.float32,
        block: FusionBlockParams | None = None,
    ):
        self.assembly = assembly
        self.dtype = np.dtype(dtype).type
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.fusion = None
        if assembly.mode == "fused":
            if block is None:
                bound = 1.0 / math.sqrt(2.0)
                block = FusionBlockParams(w=rng.uniform(-bound, bound, 2), variant=assembly.variant)
            elif block.variant is not assembly.variant:
                raise InvalidSpec(f"block variant {block.variant.value} does not match {assembly}")
            self.fusion = FusionLayer(block, dtype=self.dtype)
        self.backbone = TinyBackbone(assembly.in_channels, widths, rng=rng, dtype=self.dtype)

    @property
    def widths(self):
        return self.backbone.widths

    def named_params(self) -> dict[str, Param]:
        """Trainable parameters, keyed by dotted name."""
        out = {}
        if self.fusion is not None:
            out.update({f"fusion.{k}": p for k, p in self.fusion.params().items()})
        out.update({f"backbone.{k}": p for k, p in self.backbone.params().items()})
        return out

    def state(self) -> dict[str, np.ndarray]:
        """Every tensor needed to restore the model, trainable or not."""
        out = {}
        if self.fusion is not None:
            out.update({f"fusion.{k}": p.value for k, p in self.fusion.all_params().items()})
            out.update({f"fusion.{k}": b for k, b in self.fusion.buffers().items()})
        out.update({f"backbone.{k}": p.value for k, p in self.backbone.params().items()})
        out.update({f"backbone.{k}": b for k, b in self.backbone.buffers().items()})
        return out

    def load_state(self, state: dict[str, np.ndarray]):
        mine = self.state()
        missing = mine.keys() - state.keys()
        if missing:
            raise InvalidShape(f"state lacks {sorted(missing)}")
        for k, dst in mine.items():
            src = np.asarray(state[k])
            if src.size != dst.size:
                raise InvalidShape(f"{k}: expected {dst.shape}, got {src.shape}")
            dst[...] = src.reshape(dst.shape).astype(dst.dtype)

    def count_trainable(self) -> int:
        return sum(p.size for p in self.named_params().values())

    def zero_grad(self):
        for p in self.named_params().values():
            p.grad[...] = 0

    def freeze_fusion(self):
        if self.fusion is not None:
            self.fusion.frozen = True

    def assemble(self, rgb, cues, train=False):
        rgb = rgb.astype(self.dtype, copy=False)
        mode = self.assembly.mode
        if mode == "rgb":
            return rgb
        if mode == "concat":
            extra = cues[:, CUE_INDEX[self.assembly.cue]]
        else:
            ka, kb = self.assembly.variant.streams
            a = cues[:, CUE_INDEX[ka]].astype(self.dtype, copy=False)
            b = cues[:, CUE_INDEX[kb]].astype(self.dtype, copy=False)
            extra = self.fusion.forward(a, b, train=train)
        return np.concatenate([rgb, extra[:, None].astype(self.dtype, copy=False)], axis=1)

    def forward(self, rgb, cues=None, train=False) -> np.ndarray:
        x = self.assemble(rgb, cues, train)
        return self.backbone.forward(x, train)[:, 0]

    def backward(self, dlogits):
        dx = self.backbone.backward(dlogits[:, None].astype(self.dtype))
        if self.fusion is not None and not self.fusion.frozen:
            self.fusion.backward(dx[:, 3])
        return dx

    def predict(self, rgb, cues=None) -> np.ndarray:
        logits = self.forward(rgb, cues, train=False).astype(np.float64)
        return sigmoid(logits)


def sigmoid(x):
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def count_params(layer_or_model) -> int:
    if isinstance(layer_or_model, Detector):
        return layer_or_model.count_trainable()
    return sum(p.size for p in layer_or_model.params().values())


def assembled_param_delta(widths=(32, 64, 64, 64), variant=FusionVariant.LFWS) -> dict[str, int]:
    """Enumerate trainable tensors of a fused detector and an RGB-only one
    with the same backbone widths, and report the per-tensor differences."""
    fused = Detector(InputAssembly("fused", variant=variant), widths=widths, seed=0)
    plain = Detector(RGB_ONLY, widths=widths, seed=0)
    a = {k: p.size for k, p in fused.named_params().items()}
    b = {k: p.size for k, p in plain.named_params().items()}
    return {k: a.get(k, 0) - b.get(k, 0) for k in sorted(a.keys() | b.keys()) if a.get(k, 0) != b.get(k, 0)}
