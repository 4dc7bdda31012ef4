"""Training loop, frame loading and inference.

Runs are deterministic for a fixed seed: the epoch order comes from a
generator seeded with ``seed + epoch``, augmentation draws from a
generator seeded with ``(seed, epoch, sample index)``, and BLAS is pinned
to one thread for the duration of training.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from ..augment import AugmentConfig, augment
from ..data import SampleRecord
from ..errors import DivergenceError, EmptyDataset, InvalidShape
from ..features import frame_inputs
from ..tensor import ImageTensor, read_image
from .checkpoint import save_checkpoint
from .model import Detector
from .optim import AdamConfig, AdamState, adam_step, bce_loss

log = logging.getLogger(__name__)


@dataclass
class FrameSet:
    """Decoded frames in [0, 1] with labels and video ids."""

    frames: np.ndarray  # (N, 3, H, W) float32
    labels: np.ndarray  # (N,) int
    video_ids: list[str]
    datasets: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float32)
        self.labels = np.asarray(self.labels).astype(np.int64)
        if self.frames.ndim != 4 or self.frames.shape[1] != 3:
            raise InvalidShape(f"frames must be (N, 3, H, W), got {self.frames.shape}")
        if len(self.labels) != len(self.frames) or len(self.video_ids) != len(self.frames):
            raise InvalidShape("frames, labels and video ids differ in length")
        if not self.datasets:
            self.datasets = [""] * len(self.frames)

    def __len__(self):
        return len(self.frames)

    def subset(self, idx) -> "FrameSet":
        idx = np.asarray(idx, dtype=np.intp)
        return FrameSet(
            self.frames[idx],
            self.labels[idx],
            [self.video_ids[i] for i in idx],
            [self.datasets[i] for i in idx],
        )

    @classmethod
    def from_records(cls, records: list[SampleRecord]) -> "FrameSet":
        if not records:
            raise EmptyDataset("no frames to load")
        frames = []
        for r in records:
            img = read_image(r.path)
            frames.append(np.repeat(img.data, 3, axis=0) if img.channels == 1 else img.data)
        shapes = {f.shape for f in frames}
        if len(shapes) != 1:
            raise InvalidShape(f"frames differ in size: {sorted(shapes)}")
        return cls(
            np.stack(frames),
            np.array([r.label for r in records]),
            [r.video_id for r in records],
            [r.dataset for r in records],
        )


@dataclass
class TrainConfig:
    epochs: int = 10
    batch: int = 32
    seed: int = 1024
    adam: AdamConfig = field(default_factory=AdamConfig)
    augment: AugmentConfig | None = None
    checkpoint_dir: Path | None = None

    def to_dict(self) -> dict:
        return {
            "epochs": self.epochs,
            "batch": self.batch,
            "seed": self.seed,
            "adam": vars(self.adam).copy(),
            "augment": self.augment.to_dict() if self.augment else None,
        }


def compute_inputs(frames: np.ndarray, kinds, dtype=np.float32):
    """Normalised RGB and cue stacks for a batch of [0, 1] frames."""
    n, _, h, w = frames.shape
    rgb = np.empty((n, 3, h, w), dtype=dtype)
    cues = np.zeros((n, 3, h, w), dtype=dtype)
    for i in range(n):
        rgb[i], cues[i] = frame_inputs(ImageTensor(frames[i]), kinds)
    return rgb, cues


def _augmented_inputs(data: FrameSet, idx, kinds, cfg: TrainConfig, epoch: int, dtype):
    h, w = data.frames.shape[2:]
    rgb = np.empty((len(idx), 3, h, w), dtype=dtype)
    cues = np.zeros((len(idx), 3, h, w), dtype=dtype)
    for j, i in enumerate(idx):
        rng = np.random.default_rng([cfg.seed, epoch, int(i)])
        img = augment(ImageTensor(data.frames[i]), cfg.augment, rng)
        rgb[j], cues[j] = frame_inputs(img, kinds)
    return rgb, cues


def train(model: Detector, data: FrameSet, cfg: TrainConfig = TrainConfig(), on_epoch=None) -> dict:
    """Train ``model`` in place with mini-batch Adam on the BCE loss.

    A checkpoint is written after every epoch when ``cfg.checkpoint_dir``
    is set. Returns a history dict with per-epoch mean losses and the
    checkpoint paths.
    """
    if len(data) == 0:
        raise EmptyDataset("training set is empty")
    kinds = model.assembly.required_cues
    if cfg.augment is None:
        rgb_all, cues_all = compute_inputs(data.frames, kinds, model.dtype)
    state = AdamState()
    history = {"loss": [], "checkpoints": []}
    step = 0
    with threadpool_limits(limits=1):
        for epoch in range(1, cfg.epochs + 1):
            order = np.random.default_rng(cfg.seed + epoch).permutation(len(data))
            losses = []
            for start in range(0, len(order), cfg.batch):
                idx = order[start : start + cfg.batch]
                if len(idx) < 2:
                    # batch statistics need more than one frame
                    continue
                if cfg.augment is None:
                    rgb, cues = rgb_all[idx], cues_all[idx]
                else:
                    rgb, cues = _augmented_inputs(data, idx, kinds, cfg, epoch, model.dtype)
                model.zero_grad()
                logits = model.forward(rgb, cues, train=True)
                loss, dlogits = bce_loss(logits, data.labels[idx])
                step += 1
                if not math.isfinite(loss):
                    raise DivergenceError(step, loss)
                model.backward(dlogits)
                params = model.named_params()
                adam_step(
                    {k: p.value for k, p in params.items()},
                    {k: p.grad for k, p in params.items()},
                    state,
                    cfg.adam,
                )
                losses.append(loss)
            mean_loss = float(np.mean(losses)) if losses else float("nan")
            history["loss"].append(mean_loss)
            log.info("epoch %d/%d loss %.5f", epoch, cfg.epochs, mean_loss)
            if cfg.checkpoint_dir is not None:
                path = save_checkpoint(
                    Path(cfg.checkpoint_dir) / f"epoch_{epoch:03d}",
                    model,
                    state,
                    meta={"epoch": epoch, "loss": mean_loss, "train": cfg.to_dict()},
                )
                history["checkpoints"].append(path)
            if on_epoch is not None:
                on_epoch(epoch, model)
    history["adam"] = state
    return history


def predict(model: Detector, data: FrameSet, batch: int = 64) -> np.ndarray:
    """Fake probabilities for every frame, eval mode, no augmentation."""
    kinds = model.assembly.required_cues
    out = []
    for start in range(0, len(data), batch):
        rgb, cues = compute_inputs(data.frames[start : start + batch], kinds, model.dtype)
        out.append(model.predict(rgb, cues))
    return np.concatenate(out) if out else np.zeros(0)
