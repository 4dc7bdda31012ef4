"""Command-line entry point: ``fusecue <subcommand> ...``.

Exit codes: 0 success, 1 validation or runtime failure (a JSON error
object goes to stderr), 2 usage error. Logs go to stderr.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import fusion
from ._io import write_text_atomic
from .augment import AugmentConfig, augment
from .data import SynthConfig, generate_synthetic, load_manifest, manifest_hash
from .errors import FusecueError, InvalidSpec
from .eval import EvalReport, auc, frame_to_video_score
from .features import extract_cue, grayscale
from .lbp import lbp, lbp_codes
from .nn.checkpoint import latest_checkpoint, load_checkpoint
from .nn.model import Detector, InputAssembly
from .nn.optim import AdamConfig
from .nn.train import FrameSet, TrainConfig, predict, train
from .phase import phase_channel
from .tensor import CueKind, ImageTensor, read_image, read_tensor, write_image, write_tensor
from .wavelet import wdf

log = logging.getLogger("fusecue")

RUN_CONFIG_VERSION = 1
TRAIN_DEFAULTS = {
    "assembly": "rgb",
    "epochs": 10,
    "batch": 32,
    "seed": 1024,
    "widths": [16, 32, 64, 64],
    "adam": {},
    "augment": {},
    "frozen": None,
}


class UsageError(Exception):
    pass


def _load_json(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise InvalidSpec(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise InvalidSpec(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise InvalidSpec(f"{path} must hold a JSON object")
    return doc


def _versioned(doc: dict, path) -> dict:
    version = doc.get("version", RUN_CONFIG_VERSION)
    if version != RUN_CONFIG_VERSION:
        raise InvalidSpec(f"{path}: unsupported config version {version!r}")
    return {k: v for k, v in doc.items() if k != "version"}


def _require_file(path, what: str) -> Path:
    p = Path(path)
    if not p.exists():
        raise InvalidSpec(f"{what} {p} does not exist")
    return p


def _write_json(path, doc):
    write_text_atomic(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# subcommands


def cmd_synth(args) -> int:
    doc = _versioned(_load_json(args.config), args.config) if args.config else {}
    if args.seed is not None:
        doc["seed"] = args.seed
    cfg = SynthConfig.from_dict(doc)
    records = generate_synthetic(cfg, args.out)
    manifest = Path(args.out) / "manifest.jsonl"
    log.info("wrote %d frames, manifest sha256 %s", len(records), manifest_hash(manifest))
    print(manifest)
    return 0


def cmd_extract(args) -> int:
    img = read_image(_require_file(args.inp, "input image"))
    if args.cue == "lbp" and args.raw_codes:
        out = lbp_codes(grayscale(img))
    else:
        out = extract_cue(img, args.cue)
    write_tensor(args.out, out)
    shape = "x".join(map(str, img.shape))
    log.info("%s cue from %s image -> %s, range [%.4f, %.4f]", args.cue, shape, args.out, out.data.min(), out.data.max())
    return 0


def _cue_pair(args, variant: fusion.FusionVariant):
    if args.inp:
        gray = grayscale(read_image(_require_file(args.inp, "input image")))
        makers = {CueKind.WDF: wdf, CueKind.LBP: lbp, CueKind.PHASE: phase_channel}
        return tuple(makers[k](gray) for k in variant.streams)
    return tuple(read_tensor(_require_file(p, "cue tensor")) for p in args.cues)


def cmd_fuse(args) -> int:
    block = fusion.import_frozen(_require_file(args.frozen, "frozen block"))
    variant = fusion.FusionVariant.parse(args.variant)
    if block.variant is not variant:
        raise InvalidSpec(f"block is {block.variant.value}, but --variant asks for {variant.value}")
    a, b = _cue_pair(args, variant)
    out = fusion.fuse_forward(a, b, block, mode="eval")
    write_tensor(args.out, out)
    return 0


def cmd_augment(args) -> int:
    cfg = AugmentConfig.from_dict(_versioned(_load_json(args.config), args.config)) if args.config else AugmentConfig()
    img = read_image(_require_file(args.inp, "input image"))
    if img.channels == 1:
        img = ImageTensor(np.repeat(img.data, 3, axis=0))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i in range(args.n_samples):
        sample = augment(img, cfg, np.random.default_rng([args.seed, i]))
        write_image(out_dir / f"sample_{i:04d}.ppm", sample)
    log.info("wrote %d augmented samples to %s", args.n_samples, out_dir)
    return 0


def _train_settings(args) -> dict:
    settings = dict(TRAIN_DEFAULTS)
    if args.config:
        settings.update(_versioned(_load_json(args.config), args.config))
    for key in ("assembly", "epochs", "batch", "seed", "data", "out", "frozen"):
        value = getattr(args, key)
        if value is not None:
            settings[key] = value
    if args.lr is not None:
        settings["adam"] = dict(settings.get("adam") or {}, lr=args.lr)
    if args.no_augment:
        settings["augment"] = None
    if args.widths:
        settings["widths"] = args.widths
    for key in ("data", "out"):
        if not settings.get(key):
            raise InvalidSpec(f"missing '{key}' (flag --{key} or config key)")
    unknown = set(settings) - set(TRAIN_DEFAULTS) - {"data", "out"}
    if unknown:
        raise InvalidSpec(f"unknown run config keys {sorted(unknown)}")
    return settings


def cmd_train(args) -> int:
    if args.threads not in (None, 1):
        log.warning("training is single-threaded by contract; ignoring --threads %d", args.threads)
    s = _train_settings(args)
    manifest = _require_file(s["data"], "manifest")
    records = [r for r in load_manifest(manifest) if r.split == "train"]
    data = FrameSet.from_records(records)
    assembly = InputAssembly.parse(s["assembly"])
    block = None
    if s["frozen"]:
        block = fusion.import_frozen(_require_file(s["frozen"], "frozen block"))
        if assembly.mode != "fused":
            raise InvalidSpec("--frozen needs a fused assembly")
    model = Detector(assembly, widths=tuple(s["widths"]), seed=s["seed"], block=block)
    cfg = TrainConfig(
        epochs=int(s["epochs"]),
        batch=int(s["batch"]),
        seed=int(s["seed"]),
        adam=AdamConfig(**(s["adam"] or {})),
        augment=AugmentConfig.from_dict(s["augment"]) if s["augment"] is not None else None,
        checkpoint_dir=Path(s["out"]),
    )
    log.info("training %s on %d frames from %s", assembly, len(data), manifest)
    hist = train(model, data, cfg)
    run = {"version": RUN_CONFIG_VERSION, **s, "data": str(s["data"]), "out": str(s["out"])}
    run["manifest_sha256"] = manifest_hash(manifest)
    run["final_loss"] = hist["loss"][-1]
    _write_json(Path(s["out"]) / "run_config.json", run)
    print(hist["checkpoints"][-1])
    return 0


def _fixture_report(path) -> EvalReport:
    doc = _load_json(path)
    per, video = {}, {}
    for name, d in sorted(doc.get("datasets", {}).items()):
        per[name] = auc(d["scores"], d["labels"])
        if "video_ids" in d:
            _, vs, vl = frame_to_video_score(d["video_ids"], d["scores"], d["labels"])
            video[name] = auc(vs, vl)
    if not per:
        raise InvalidSpec(f"{path}: no datasets in score fixture")
    return EvalReport(per, video_level=video)


def cmd_eval(args) -> int:
    if args.scores:
        report = _fixture_report(_require_file(args.scores, "score fixture"))
        config = {"scores": str(args.scores)}
    else:
        if not args.ckpt or not args.manifests:
            raise UsageError("eval needs --ckpt and --manifests, or --scores")
        ckpt = latest_checkpoint(_require_file(args.ckpt, "checkpoint"))
        model, _, meta = load_checkpoint(ckpt)
        per, video = {}, {}
        for m in args.manifests:
            records = load_manifest(_require_file(m, "manifest"))
            if args.split != "all":
                records = [r for r in records if r.split == args.split]
            data = FrameSet.from_records(records)
            with threadpool_limits(limits=1):
                scores = predict(model, data)
            for name in sorted(set(data.datasets)):
                sel = [i for i, d in enumerate(data.datasets) if d == name]
                per[name] = auc(scores[sel], data.labels[sel])
                _, vs, vl = frame_to_video_score([data.video_ids[i] for i in sel], scores[sel], data.labels[sel])
                video[name] = auc(vs, vl)
        report = EvalReport(per, video_level=video)
        config = {
            "checkpoint": str(ckpt),
            "assembly": str(model.assembly),
            "manifests": [str(m) for m in args.manifests],
            "split": args.split,
            "train": meta.get("train", {}),
        }
    if args.baseline_report:
        base = EvalReport.from_dict(_load_json(_require_file(args.baseline_report, "baseline report")))
        report.baseline_name = args.baseline_name or base.config.get("assembly") or str(args.baseline_report)
        report.baseline_avg = base.avg_auc
    report.config = config
    if args.out:
        write_text_atomic(args.out, report.to_json())
    print(report.format_table())
    return 0


def cmd_export_frozen(args) -> int:
    model, _, _ = load_checkpoint(latest_checkpoint(_require_file(args.ckpt, "checkpoint")))
    if model.fusion is None:
        raise InvalidSpec(f"checkpoint assembly {model.assembly} has no fusion block")
    fusion.export_frozen(model.fusion.block(), args.out)
    print(args.out)
    return 0


def cmd_paramcount(args) -> int:
    kw = dict(
        first_conv_out=args.first_conv_out,
        kernel=(args.kernel, args.kernel),
        extra_input_channels=args.extra_channels,
        mixer_inputs=args.mixer_inputs,
    )
    parts = fusion.param_breakdown(**kw)
    total = fusion.count_additional_params(**kw)
    if args.json:
        print(json.dumps({"total": total, **parts}, sort_keys=True))
    else:
        print(total)
        print(f"{parts['first_conv']} + {parts['mixer']} + {parts['bn_affine']}  (first conv + mixer + BN affine)")
    return 0


# ---------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(json.dumps({"error": "UsageError", "message": message}), file=sys.stderr)
        raise SystemExit(2)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="fusecue", description=__doc__.splitlines()[0])
    p.add_argument("--log-level", default="INFO", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("synth", help="render a synthetic real/fake benchmark")
    s.add_argument("--config", help="SynthConfig JSON")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("extract", help="compute one cue map from an image")
    s.add_argument("--cue", required=True, choices=[k.value for k in CueKind])
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--raw-codes", action="store_true", help="LBP: write codes 0..9 instead of normalised values")
    s.set_defaults(func=cmd_extract)

    s = sub.add_parser("fuse", help="apply a frozen fusion block")
    s.add_argument("--variant", required=True, choices=["lfws", "lfwl"])
    s.add_argument("--frozen", required=True)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--in", dest="inp", help="image; both cues are computed from it")
    g.add_argument("--cues", nargs=2, metavar=("WDF", "OTHER"), help="two precomputed cue tensors")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_fuse)

    s = sub.add_parser("augment", help="write augmented samples of one frame")
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=1024)
    s.add_argument("--n-samples", type=int, default=8)
    s.add_argument("--config", help="AugmentConfig JSON")
    s.set_defaults(func=cmd_augment)

    s = sub.add_parser("train", help="train a detector")
    s.add_argument("--config", help="run config JSON; flags override it")
    s.add_argument("--assembly")
    s.add_argument("--epochs", type=int)
    s.add_argument("--batch", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--lr", type=float)
    s.add_argument("--widths", type=int, nargs=4)
    s.add_argument("--data")
    s.add_argument("--out")
    s.add_argument("--frozen", help="frozen fusion block to attach (fused assemblies)")
    s.add_argument("--no-augment", action="store_true")
    s.add_argument("--threads", type=int)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("eval", help="score manifests and write an AUC report")
    s.add_argument("--ckpt")
    s.add_argument("--manifests", nargs="+")
    s.add_argument("--split", default="test", choices=["train", "test", "all"])
    s.add_argument("--scores", help="JSON fixture of precomputed scores instead of a checkpoint")
    s.add_argument("--baseline-report")
    s.add_argument("--baseline-name")
    s.add_argument("--out")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("export-frozen", help="export a trained fusion block as frozen JSON")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_export_frozen)

    s = sub.add_parser("paramcount", help="extra trainable parameters of the fused input")
    s.add_argument("--first-conv-out", type=int, default=32)
    s.add_argument("--kernel", type=int, default=3)
    s.add_argument("--extra-channels", type=int, default=1)
    s.add_argument("--mixer-inputs", type=int, default=2)
    s.add_argument("--json", action="store_true")
    s.set_defaults(func=cmd_paramcount)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level, stream=sys.stderr, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(json.dumps({"error": "UsageError", "message": str(exc)}), file=sys.stderr)
        return 2
    except (FusecueError, ValueError, OSError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
