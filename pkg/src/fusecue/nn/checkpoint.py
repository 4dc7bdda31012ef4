"""Checkpoint directories: one FCT1 file per tensor plus ``manifest.json``.

FCT1 files are rank 3, so every tensor is stored flattened as (1, 1, n);
the manifest records the real shape. Optimizer moments are stored the
same way under ``adam/``.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .._io import write_text_atomic
from ..errors import FormatError
from ..fusion import FusionBlockParams
from ..tensor import ImageTensor, read_tensor, write_tensor
from .model import Detector, InputAssembly
from .optim import AdamState

CHECKPOINT_VERSION = 1


def _file_name(key: str) -> str:
    return key.replace("/", "_") + ".fct"


def _write_array(path: Path, arr: np.ndarray):
    flat = np.asarray(arr, dtype=np.float32).reshape(1, 1, -1)
    write_tensor(path, ImageTensor(flat))


def save_checkpoint(path, model: Detector, adam: AdamState | None = None, meta: dict | None = None) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    tensors = {}
    for key, arr in sorted(model.state().items()):
        name = _file_name(key)
        _write_array(path / name, arr)
        tensors[key] = {"file": name, "shape": list(arr.shape)}
    opt = None
    if adam is not None:
        opt = {"step": adam.step, "m": {}, "v": {}, "vmax": {}}
        for which, store in (("m", adam.m), ("v", adam.v), ("vmax", adam.vmax)):
            for key, arr in sorted(store.items()):
                name = f"adam/{which}.{_file_name(key)}"
                (path / "adam").mkdir(exist_ok=True)
                _write_array(path / name, arr)
                opt[which][key] = {"file": name, "shape": list(arr.shape)}
    manifest = {
        "version": CHECKPOINT_VERSION,
        "assembly": str(model.assembly),
        "widths": list(model.widths),
        "dtype": np.dtype(model.dtype).name,
        "seed": model.seed,
        "fusion": model.fusion.block().to_dict() | {"frozen": model.fusion.frozen} if model.fusion is not None else None,
        "tensors": tensors,
        "optimizer": opt,
        "meta": meta or {},
    }
    write_text_atomic(path / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _read_array(path: Path, shape) -> np.ndarray:
    data = read_tensor(path).data.reshape(-1)
    if data.size != int(np.prod(shape)):
        raise FormatError(f"{path}: {data.size} values, manifest says {shape}")
    return data.reshape(shape).copy()


def load_checkpoint(path):
    """Returns ``(model, adam_state_or_None, meta)``."""
    path = Path(path)
    try:
        manifest = json.loads((path / "manifest.json").read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: unreadable checkpoint manifest ({exc})") from exc
    if manifest.get("version") != CHECKPOINT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {manifest.get('version')!r}")
    assembly = InputAssembly.parse(manifest["assembly"])
    block = None
    if manifest.get("fusion"):
        f = dict(manifest["fusion"])
        frozen = bool(f.pop("frozen", False))
        f.pop("version", None)
        block = FusionBlockParams(**f, frozen=frozen)
    model = Detector(assembly, widths=manifest["widths"], seed=manifest["seed"], dtype=manifest["dtype"], block=block)
    state = {k: _read_array(path / v["file"], v["shape"]) for k, v in manifest["tensors"].items()}
    model.load_state(state)
    adam = None
    if manifest.get("optimizer"):
        opt = manifest["optimizer"]
        adam = AdamState(step=opt["step"])
        for which in ("m", "v", "vmax"):
            store = getattr(adam, which)
            for key, v in opt.get(which, {}).items():
                store[key] = _read_array(path / v["file"], v["shape"]).astype(model.dtype)
    return model, adam, manifest.get("meta", {})


def latest_checkpoint(ckpt_dir) -> Path:
    """The highest-numbered ``epoch_###`` directory, or ``ckpt_dir`` itself."""
    ckpt_dir = Path(ckpt_dir)
    if (ckpt_dir / "manifest.json").exists():
        return ckpt_dir
    epochs = sorted(p for p in ckpt_dir.glob("epoch_*") if (p / "manifest.json").exists())
    if not epochs:
        raise FormatError(f"no checkpoint found under {ckpt_dir}")
    return epochs[-1]
