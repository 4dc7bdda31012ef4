"""Frame manifests, video-level splits, frame sampling and synthetic forgeries.

A manifest is JSON lines, one :class:`SampleRecord` per line. Relative
frame paths resolve against the manifest's directory.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ._io import atomic_open, write_bytes_atomic
from .errors import InvalidSpec, IoError, LeakageError, ManifestError
from .tensor import ImageTensor, encode_image

SPLITS = ("train", "test")
FRAMES_PER_VIDEO = 32


@dataclass(frozen=True)
class SampleRecord:
    video_id: str
    frame_index: int
    path: str
    label: int
    dataset: str
    split: str

    def __post_init__(self):
        if self.label not in (0, 1):
            raise ManifestError(f"label must be 0 (real) or 1 (fake), got {self.label!r}")
        if self.split not in SPLITS:
            raise ManifestError(f"split must be one of {SPLITS}, got {self.split!r}")
        if not isinstance(self.frame_index, int) or self.frame_index < 0:
            raise ManifestError(f"frame_index must be a non-negative int, got {self.frame_index!r}")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True, ensure_ascii=False)


def check_records(records: list[SampleRecord]) -> None:
    seen = set()
    splits: dict[tuple[str, str], str] = {}
    for r in records:
        key = (r.dataset, r.video_id, r.frame_index)
        if key in seen:
            raise ManifestError(f"duplicate frame {r.frame_index} of video {r.video_id!r} in {r.dataset!r}")
        seen.add(key)
        prev = splits.setdefault((r.dataset, r.video_id), r.split)
        if prev != r.split:
            raise LeakageError(f"video {r.video_id!r} of {r.dataset!r} appears in both train and test")


def parse_manifest(lines, base: Path | None = None) -> list[SampleRecord]:
    records = []
    fields = {"video_id", "frame_index", "path", "label", "dataset", "split"}
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            doc = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"line {lineno}: {exc}") from exc
        if not isinstance(doc, dict) or set(doc) != fields:
            raise ManifestError(f"line {lineno}: expected exactly the fields {sorted(fields)}")
        path = doc["path"]
        if base is not None and not Path(path).is_absolute():
            path = str(base / path)
        try:
            records.append(
                SampleRecord(
                    video_id=str(doc["video_id"]),
                    frame_index=doc["frame_index"],
                    path=path,
                    label=doc["label"],
                    dataset=str(doc["dataset"]),
                    split=doc["split"],
                )
            )
        except ManifestError as exc:
            raise ManifestError(f"line {lineno}: {exc}") from exc
    if not records:
        raise ManifestError("manifest holds no records")
    check_records(records)
    return records


def load_manifest(path) -> list[SampleRecord]:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ManifestError(f"cannot read manifest {path}: {exc}") from exc
    return parse_manifest(text.splitlines(), base=path.parent)


def write_manifest(path, records: list[SampleRecord], relative_to: Path | None = None) -> bytes:
    check_records(records)
    lines = []
    for r in records:
        if relative_to is not None:
            p = Path(r.path)
            if p.is_absolute():
                r = SampleRecord(r.video_id, r.frame_index, p.relative_to(relative_to).as_posix(), r.label, r.dataset, r.split)
        lines.append(r.to_json())
    data = ("\n".join(lines) + "\n").encode("utf-8")
    write_bytes_atomic(path, data)
    return data


def sample_frames(n_frames: int, k: int = FRAMES_PER_VIDEO) -> list[int]:
    """Uniformly spaced frame indices ``floor(j * N / k)``; all frames if N <= k."""
    if n_frames < 0 or k < 1:
        raise ValueError(f"need n_frames >= 0 and k >= 1, got {n_frames}, {k}")
    if n_frames <= k:
        return list(range(n_frames))
    return sorted({j * n_frames // k for j in range(k)})


# ---------------------------------------------------------------------------
# synthetic benchmark


@dataclass(frozen=True)
class SynthConfig:
    """Procedural real/fake videos for desk-scale experiments.

    Fake frames take an interior box of a real frame, shrink it by
    ``resize_factor`` and enlarge it back (bilinear both ways), shift its
    colour and brightness and blend it back through a feathered mask.
    ``contrast`` varies scene contrast per video by a factor in
    ``[1 - contrast, 1 + contrast]``.
    """

    n_videos: int = 16
    frames_per_video: int = 8
    size: int = 32
    region: float = 0.5
    resize_factor: float = 1.5
    feather: float = 3.0
    color_shift: float = 0.03
    luma_shift: float = 0.0
    contrast: float = 0.0
    region_jitter: float = 0.1
    texture: float = 0.05
    noise: float = 0.01
    dataset: str = "synth"
    test_fraction: float = 0.25
    seed: int = 1024

    def __post_init__(self):
        if self.n_videos < 1 or self.frames_per_video < 1:
            raise InvalidSpec("need at least one video and one frame per video")
        if self.size < 8:
            raise InvalidSpec(f"frame size {self.size} is below 8 pixels")
        if not 0 < self.region < 1:
            raise InvalidSpec(f"region must be a fraction in (0, 1), got {self.region}")
        if self.resize_factor <= 1 or float(self.resize_factor).is_integer():
            raise InvalidSpec(f"resize_factor must be a non-integer > 1, got {self.resize_factor}")
        if self.luma_shift < 0 or not 0 <= self.contrast < 1:
            raise InvalidSpec("luma_shift must be >= 0 and contrast in [0, 1)")
        if self.feather < 0:
            raise InvalidSpec(f"feather must be non-negative, got {self.feather}")
        if not 0 <= self.test_fraction <= 1:
            raise InvalidSpec(f"test_fraction must lie in [0, 1], got {self.test_fraction}")

    @classmethod
    def from_dict(cls, d: dict) -> "SynthConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known - {"version"}
        if unknown:
            raise InvalidSpec(f"unknown synth config keys {sorted(unknown)}")
        return cls(**{k: v for k, v in d.items() if k in known})

    def to_dict(self) -> dict:
        return asdict(self)


def resize_bilinear(x: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Half-pixel-centred bilinear resize of a (C, H, W) array."""
    c, h, w = x.shape

    def axis(n_in, n_out):
        pos = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        pos = np.clip(pos, 0, n_in - 1)
        i0 = np.floor(pos).astype(np.intp)
        i1 = np.minimum(i0 + 1, n_in - 1)
        return i0, i1, pos - i0

    y0, y1, fy = axis(h, out_h)
    x0, x1, fx = axis(w, out_w)
    rows = x[:, y0, :] * (1 - fy)[None, :, None] + x[:, y1, :] * fy[None, :, None]
    return rows[:, :, x0] * (1 - fx)[None, None, :] + rows[:, :, x1] * fx[None, None, :]


@dataclass
class _VideoParams:
    tint: np.ndarray
    grad_angle: float
    grad_amp: float
    drift: float
    blobs: np.ndarray
    blobs_next: np.ndarray
    texture: np.ndarray
    box_center: np.ndarray
    color_shift: np.ndarray
    luma_shift: float
    contrast: float


def _video_params(cfg: SynthConfig, rng: np.random.Generator) -> _VideoParams:
    s = cfg.size
    g = max(s // 8, 2)
    jitter = cfg.region_jitter * s
    return _VideoParams(
        tint=rng.uniform(0.3, 0.7, 3),
        grad_angle=rng.uniform(0, 2 * math.pi),
        grad_amp=rng.uniform(0.1, 0.3),
        drift=rng.uniform(-0.05, 0.05),
        blobs=rng.standard_normal((3, g, g)),
        blobs_next=rng.standard_normal((3, g, g)),
        texture=rng.standard_normal((3, s, s)),
        box_center=np.array([s / 2, s / 2]) + rng.uniform(-jitter, jitter, 2),
        color_shift=rng.uniform(-cfg.color_shift, cfg.color_shift, 3),
        luma_shift=rng.choice((-1.0, 1.0)) * rng.uniform(0.5, 1.0) * cfg.luma_shift,
        contrast=rng.uniform(1 - cfg.contrast, 1 + cfg.contrast),
    )


def render_real(cfg: SynthConfig, vp: _VideoParams, t: int) -> np.ndarray:
    """Noise-free scene: smooth gradient + band-limited blobs + fine texture, drifting in ``t``."""
    s = cfg.size
    u = t / max(cfg.frames_per_video - 1, 1)
    yy, xx = np.meshgrid(np.linspace(-1, 1, s), np.linspace(-1, 1, s), indexing="ij")
    ang = vp.grad_angle + vp.drift * t
    grad = vp.grad_amp * (np.cos(ang) * xx + np.sin(ang) * yy)
    blobs = resize_bilinear((1 - u) * vp.blobs + u * vp.blobs_next, s, s)
    detail = grad[None] + 0.08 * blobs + cfg.texture * vp.texture
    img = vp.tint[:, None, None] + vp.contrast * detail
    return np.clip(img, 0.0, 1.0)


def manipulation_mask(cfg: SynthConfig, center: np.ndarray) -> tuple[np.ndarray, tuple[int, int, int, int]]:
    """Feathered box mask (1 in the core, ramping to 0 at the box edge)."""
    s = cfg.size
    r = max(int(round(cfg.region * s)), 4)
    y0 = int(np.clip(round(center[0] - r / 2), 0, s - r))
    x0 = int(np.clip(round(center[1] - r / 2), 0, s - r))
    idx = np.arange(r, dtype=np.float64)
    # distance (in pixels) from the box boundary, measured at pixel centres
    edge = np.minimum(idx + 0.5, r - idx - 0.5)
    ramp = np.ones(r) if cfg.feather == 0 else np.clip(edge / cfg.feather, 0.0, 1.0)
    mask = np.zeros((s, s))
    mask[y0 : y0 + r, x0 : x0 + r] = np.outer(ramp, ramp)
    return mask, (y0, x0, r, r)


def manipulate(cfg: SynthConfig, frame: np.ndarray, vp: _VideoParams) -> tuple[np.ndarray, np.ndarray]:
    mask, (y0, x0, rh, rw) = manipulation_mask(cfg, vp.box_center)
    patch = frame[:, y0 : y0 + rh, x0 : x0 + rw]
    small = resize_bilinear(patch, max(int(round(rh / cfg.resize_factor)), 1), max(int(round(rw / cfg.resize_factor)), 1))
    warped = resize_bilinear(small, rh, rw) + (vp.color_shift + vp.luma_shift)[:, None, None]
    pasted = frame.copy()
    pasted[:, y0 : y0 + rh, x0 : x0 + rw] = warped
    out = mask[None] * pasted + (1 - mask[None]) * frame
    return np.clip(out, 0.0, 1.0), mask


def render_video(cfg: SynthConfig, index: int, fake: bool):
    """Frames of video ``index``; fakes also return the untouched source frames."""
    rng = np.random.default_rng([cfg.seed, index, int(fake)])
    vp = _video_params(cfg, rng)
    frames, sources, masks = [], [], []
    for t in range(cfg.frames_per_video):
        real = render_real(cfg, vp, t)
        if fake:
            out, mask = manipulate(cfg, real, vp)
        else:
            out, mask = real, np.zeros(real.shape[1:])
        # sensor noise lands after any manipulation; the source gets the same draw
        noise = cfg.noise * rng.standard_normal(out.shape)
        frames.append(np.clip(out + noise, 0.0, 1.0))
        sources.append(np.clip(real + noise, 0.0, 1.0))
        masks.append(mask)
    return frames, sources, masks


def generate_synthetic(cfg: SynthConfig, out_dir) -> list[SampleRecord]:
    """Render ``cfg.n_videos`` real and as many fake videos as 8-bit PPM frames
    under ``out_dir`` and write ``out_dir/manifest.jsonl``.
    """
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create {out_dir}: {exc}") from exc
    n_test = int(round(cfg.test_fraction * cfg.n_videos))
    split_rng = np.random.default_rng([cfg.seed, 7919])
    test_ids = set(split_rng.permutation(cfg.n_videos)[:n_test].tolist())
    records = []
    for i in range(cfg.n_videos):
        split = "test" if i in test_ids else "train"
        for fake in (False, True):
            vid = f"{cfg.dataset}-{'fake' if fake else 'real'}-{i:04d}"
            frames, _, _ = render_video(cfg, i, fake)
            for t, fr in enumerate(frames):
                rel = Path("frames") / vid / f"{t:03d}.ppm"
                write_bytes_atomic(out_dir / rel, encode_image(ImageTensor(fr)))
                records.append(SampleRecord(vid, t, rel.as_posix(), int(fake), cfg.dataset, split))
    write_manifest(out_dir / "manifest.jsonl", records)
    with atomic_open(out_dir / "synth_config.json", "w") as fh:
        json.dump({"version": 1, **cfg.to_dict()}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return [
        SampleRecord(r.video_id, r.frame_index, str(out_dir / r.path), r.label, r.dataset, r.split) for r in records
    ]


def manifest_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
