"""Command line entry point.

Subcommands: prepare, stats, synth, train, eval, generate, gradcheck.
Exit codes: 0 success, 1 usage error, 2 data/check error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import TrainConfig
from .corpus import (
    ANET_PRESET,
    FLICKR_PRESET,
    ImportConfig,
    ObjectClassSet,
    Vocabulary,
    build_vocabulary,
    corpus_stats,
    derive_object_classes,
    import_release,
    load_annotations,
    serialize_annotations,
)
from .data import load_split, prepare_split
from .decoder import get_preset, load_checkpoint
from .errors import ConfigError, DataError, GroundcapError
from .evaluation import evaluate_split, generate_captions
from .gradcheck import DEFAULT_STEP, DEFAULT_THRESHOLD, finite_diff_check
from .overlays import render_overlays
from .synthetic import SyntheticSpec, make_synthetic
from .training import train as run_training


class UsageError(Exception):
    pass


class Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------- commands

def _corpus_preset(name: str) -> dict:
    if name == "anet":
        return ANET_PRESET
    if name == "flickr":
        return FLICKR_PRESET
    raise ConfigError(f"unknown corpus preset {name!r} (anet, flickr)")


def cmd_prepare(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    preset = _corpus_preset(args.corpus_preset) if args.corpus_preset else {}
    min_count = args.min_count or preset.get("min_count", 3)
    max_len = args.max_len or preset.get("max_len", 20)
    threshold = args.class_threshold or preset.get("class_threshold", 50)

    if args.import_file:
        config = (ImportConfig.from_json(Path(args.import_config).read_text(encoding="utf-8"))
                  if args.import_config else ImportConfig())
        release = json.loads(Path(args.import_file).read_text(encoding="utf-8"))
        result = import_release(release, config)
        vocab_source = result.segments
        class_source = result.segments
        imported = out / "imported.jsonl"
        imported.write_text(serialize_annotations(result.segments), encoding="utf-8")
        print(f"imported {len(result.segments)} segments "
              f"({len(result.warnings)} mention warnings) -> {imported}")
    else:
        if not args.train:
            raise UsageError("prepare needs --train (with --val) or --import")
        train_result = load_annotations(args.train)
        val_result = load_annotations(args.val) if args.val else None
        vocab_source = train_result.segments
        class_source = list(train_result.segments)
        if val_result:
            class_source += val_result.segments
        for name, res in (("train", train_result), ("val", val_result)):
            if res and res.warnings:
                print(f"{name}: {len(res.warnings)} mention warnings")

    vocab = build_vocabulary(vocab_source, min_count, max_len)
    classes = derive_object_classes(class_source, threshold)
    (out / "vocab.json").write_text(vocab.to_json() + "\n", encoding="utf-8")
    (out / "classes.json").write_text(classes.to_json() + "\n", encoding="utf-8")
    print(f"vocabulary: {len(vocab)} tokens (min_count={min_count}, max_len={max_len})")
    print(f"object classes: {classes.num_classes} (threshold={threshold})")
    return 0


def cmd_stats(args) -> int:
    segments = []
    for path in args.annotations:
        segments.extend(load_annotations(path).segments)
    stats = corpus_stats(segments)

    def fmt(x, digits=2):
        return "n/a" if x is None else f"{x:.{digits}f}"

    rows = [
        ("segments", str(stats.segment_count)),
        ("boxes", str(stats.box_count)),
        ("boxes/segment mean", fmt(stats.boxes_per_segment_mean)),
        ("boxes/segment std", fmt(stats.boxes_per_segment_std)),
        ("labels/box mean", fmt(stats.labels_per_box_mean)),
        ("multi-instance fraction", fmt(stats.multi_instance_fraction, 3)),
    ]
    if args.class_threshold:
        classes = derive_object_classes(segments, args.class_threshold)
        rows.append((f"object classes (threshold {args.class_threshold})",
                     str(classes.num_classes)))
    width = max(len(r[0]) for r in rows)
    for name, value in rows:
        print(f"{name:<{width}}  {value}")
    if args.top_classes:
        ranked = sorted(stats.class_histogram.items(), key=lambda kv: (-kv[1], kv[0]))
        print("top classes:", ", ".join(f"{w}({c})" for w, c in ranked[: args.top_classes]))
    return 0


def cmd_synth(args) -> int:
    spec = SyntheticSpec(
        num_classes=args.classes,
        frames=args.frames,
        regions_per_frame=args.regions_per_frame,
        distractors=args.distractors,
        cluster_separation=args.separation,
        region_dim=args.region_dim,
        temporal_dim=args.temporal_dim,
        num_train=args.train,
        num_val=args.val,
        seed=args.seed,
    )
    data = make_synthetic(spec, args.out)
    print(f"wrote {spec.num_train} train / {spec.num_val} val segments under {args.out}")
    print(f"classes: {', '.join(data.class_names)}")
    return 0


def cmd_train(args) -> int:
    config = TrainConfig.from_json_file(args.config)
    if args.out:
        config.out_dir = args.out
    result = run_training(config)
    print(f"selected epoch {result.best_epoch} (val CIDEr {result.best_cider:.4f})")
    print(f"checkpoints: {result.best_checkpoint} (best), {result.last_checkpoint} (last)")
    print(f"log: {result.log_path}")
    return 0


def _load_eval_inputs(args):
    ckpt_path = Path(args.checkpoint)
    model, manifest = load_checkpoint(ckpt_path)
    model.eval()
    vocab_path = Path(args.vocab) if args.vocab else ckpt_path.parent / "vocab.json"
    classes_path = Path(args.classes) if args.classes else ckpt_path.parent / "classes.json"
    if not vocab_path.exists() or not classes_path.exists():
        raise DataError(f"vocab/classes files not found next to {ckpt_path}; "
                        "pass --vocab and --classes")
    vocab = Vocabulary.from_json(vocab_path.read_text(encoding="utf-8"))
    classes = ObjectClassSet.from_json(classes_path.read_text(encoding="utf-8"))
    if manifest.get("vocab_hash") and manifest["vocab_hash"] != vocab.content_hash():
        raise DataError("vocabulary file does not match the checkpoint's vocab hash")
    if manifest.get("class_hash") and manifest["class_hash"] != classes.content_hash():
        raise DataError("class file does not match the checkpoint's class hash")
    examples = prepare_split(
        load_split(args.annotations, args.features, vocab, classes), vocab
    )
    return model, manifest, vocab, classes, examples


def cmd_eval(args) -> int:
    model, manifest, vocab, classes, examples = _load_eval_inputs(args)
    if args.preset:
        preset = get_preset(args.preset)
        lam = preset.lambdas
        print(f"preset {preset.name}: lambda_alpha={lam.alpha} "
              f"lambda_beta={lam.beta} lambda_c={lam.c}")
        import torch
        with torch.no_grad():
            _, breakdown = model.compute_losses(examples, lam)
        print("losses: " + " ".join(f"{k}={v:.4f}" for k, v in breakdown.as_dict().items()))
    report = evaluate_split(
        model, examples, vocab, classes,
        gt_grounding=args.gt_grounding,
        mode=args.mode, beam_width=args.beam_width,
    )
    print(report.format_table(per_class=args.per_class))
    if args.report:
        Path(args.report).write_text(report.to_json() + "\n", encoding="utf-8")
        print(f"report written to {args.report}")
    return 0


def cmd_generate(args) -> int:
    model, manifest, vocab, classes, examples = _load_eval_inputs(args)
    captions = generate_captions(
        model, examples, vocab,
        mode=args.mode, beam_width=args.beam_width, max_len=args.max_len,
    )
    lines = []
    for ex, cap in zip(examples, captions):
        lines.append(json.dumps({"segment_id": cap.segment_id,
                                 "caption": cap.tokens}))
        if args.overlays:
            render_overlays(cap.tokens, cap.steps, ex.regions, args.overlays, cap.segment_id)
    text = "\n".join(lines) + ("\n" if lines else "")
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"wrote {len(lines)} captions to {args.out}")
    else:
        sys.stdout.write(text)
    if args.overlays:
        print(f"overlays written under {args.overlays}")
    return 0


def cmd_gradcheck(args) -> int:
    preset_names = args.presets.split(",") if args.presets else None
    report = finite_diff_check(seed=args.seed, step=args.step,
                               threshold=args.threshold, preset_names=preset_names)
    print(report.summary())
    return 0 if report.passed else 2


# ---------------------------------------------------------------- parser

def build_parser() -> Parser:
    parser = Parser(prog="groundcap",
                    description="Grounded captioning toolkit: data prep, training, "
                                "generation, and grounding evaluation.")
    sub = parser.add_subparsers(dest="command", parser_class=Parser)

    p = sub.add_parser("prepare", help="build vocabulary and object classes")
    p.add_argument("--train", help="canonical train annotations (JSONL)")
    p.add_argument("--val", help="canonical val annotations (JSONL)")
    p.add_argument("--import", dest="import_file",
                   help="public release file to convert to canonical format")
    p.add_argument("--import-config", help="field-mapping config for --import")
    p.add_argument("--corpus-preset", choices=["anet", "flickr"])
    p.add_argument("--min-count", type=int)
    p.add_argument("--max-len", type=int)
    p.add_argument("--class-threshold", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("stats", help="dataset statistics for annotation files")
    p.add_argument("annotations", nargs="+")
    p.add_argument("--class-threshold", type=int)
    p.add_argument("--top-classes", type=int, default=0)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("synth", help="generate a synthetic planted-correlation corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", type=int, default=8)
    p.add_argument("--frames", type=int, default=3)
    p.add_argument("--regions-per-frame", type=int, default=5)
    p.add_argument("--distractors", type=int, default=4)
    p.add_argument("--separation", type=float, default=4.0)
    p.add_argument("--region-dim", type=int, default=64)
    p.add_argument("--temporal-dim", type=int, default=32)
    p.add_argument("--train", type=int, default=500)
    p.add_argument("--val", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="train from a JSON config file")
    p.add_argument("--config", required=True)
    p.add_argument("--out", help="override the config's output directory")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="metrics on a split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--vocab")
    p.add_argument("--classes")
    p.add_argument("--preset", help="supervision preset for loss reporting")
    p.add_argument("--gt-grounding", action="store_true",
                   help="also compute Attn./Grd./Cls. on GT sentences")
    p.add_argument("--per-class", action="store_true")
    p.add_argument("--mode", choices=["greedy", "beam"], default="greedy")
    p.add_argument("--beam-width", type=int, default=1)
    p.add_argument("--report", help="write the JSON report here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("generate", help="decode captions (optionally with overlays)")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--annotations", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--vocab")
    p.add_argument("--classes")
    p.add_argument("--mode", choices=["greedy", "beam"], default="greedy")
    p.add_argument("--beam-width", type=int, default=1)
    p.add_argument("--max-len", type=int)
    p.add_argument("--out", help="write captions JSONL here (default: stdout)")
    p.add_argument("--overlays", help="write PNG overlays + sidecars under this directory")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("gradcheck", help="finite-difference gradient verification")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--step", type=float, default=DEFAULT_STEP)
    p.add_argument("--threshold", type=float, default=DEFAULT_THRESHOLD)
    p.add_argument("--presets", help="comma-separated preset names (default: all)")
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if not getattr(args, "command", None):
            parser.print_usage(sys.stderr)
            return 1
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DataError, GroundcapError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
