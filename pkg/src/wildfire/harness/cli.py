"""Command-line entry point.

Subcommands: train, evaluate, params, augment, synth, transfer, reconcile,
report. Exit codes: 0 success; 2 for usage or configuration problems; 1 for
runtime failures (I/O, malformed artifacts, irreconcilable inputs).
"""

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .. import metrics, nn, zoo
from ..data import augment as aug
from ..data import decode_image, encode_ppm, synth_dataset, write_png
from ..errors import ConfigError, ValidationError, WildfireError
from . import report as report_mod
from . import train as train_mod
from . import transfer as transfer_mod
from .config import config_digest, load_config


def _parse_hw(text: str) -> tuple[int, int]:
    try:
        h, w = text.lower().split("x")
        h, w = int(h), int(w)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected HxW (e.g. 320x240), got {text!r}")
    if h < 1 or w < 1:
        raise argparse.ArgumentTypeError(f"sizes must be >= 1, got {text!r}")
    return h, w


def _parse_seeds(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip() != ""]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated ints, got {text!r}")


def _parse_ops(text: str) -> list:
    """Op list like rotate=5,translate=2:-1,scale=1.1,brightness=0.1,noise=0.02."""
    ops = []
    for part in text.split(","):
        kind, sep, value = part.partition("=")
        kind = kind.strip()
        if not sep or not value:
            raise ConfigError(f"op {part!r} is not of the form kind=value")
        try:
            if kind == "rotate":
                ops.append(aug.rotate(float(value)))
            elif kind == "translate":
                dx, _, dy = value.partition(":")
                ops.append(aug.translate(float(dx), float(dy)))
            elif kind == "scale":
                ops.append(aug.scale(float(value)))
            elif kind == "brightness":
                ops.append(aug.brightness(float(value)))
            elif kind == "noise":
                ops.append(aug.gaussian_noise(float(value)))
            else:
                raise ConfigError(
                    f"unknown op {kind!r}; expected rotate/translate/scale/"
                    f"brightness/noise"
                )
        except ValueError as exc:
            raise ConfigError(f"bad value in op {part!r}: {exc}") from exc
    if not ops:
        raise ConfigError("--ops needs at least one operation")
    return ops


def _rate(value) -> str:
    return "-" if value is None else format(value * 100.0, ".2f")


def _cmd_train(args) -> int:
    config = load_config(args.config)
    out_dir = args.out
    if out_dir is None:
        out_dir = Path("runs") / f"{config.model_id}-{config_digest(config)[:8]}"
    artifacts = train_mod.run(config, out_dir)
    print(f"run complete: {artifacts.out_dir}")
    if artifacts.curve:
        last = artifacts.curve[-1]
        val = "-" if last["val_acc"] is None else format(last["val_acc"], ".4f")
        print(f"epochs {last['epoch']}  train_acc {last['train_acc']:.4f}  "
              f"val_acc {val}")
    for split in ("train", "val", "test"):
        if split in artifacts.final_metrics:
            cm, ms = artifacts.final_metrics[split]
            print(f"{split}: tp={cm.tp} fp={cm.fp} fn={cm.fn} tn={cm.tn} "
                  f"accuracy={_rate(ms.accuracy)}")
    return 0


def _cmd_evaluate(args) -> int:
    cm, ms = train_mod.evaluate_checkpoint(args.checkpoint, args.data, args.split,
                                           batch_size=args.batch_size)
    print(f"tp={cm.tp} fp={cm.fp} fn={cm.fn} tn={cm.tn}")
    print(f"accuracy={_rate(ms.accuracy)} precision={_rate(ms.precision)} "
          f"recall={_rate(ms.recall)} f1={_rate(ms.f1)} fpr={_rate(ms.fpr)} "
          f"fnr={_rate(ms.fnr)}")
    return 0


def _cmd_params(args) -> int:
    shape = (3, *args.input) if args.input else None
    count = nn.count_params(zoo.build(args.model, shape))
    print(f"total {count.total:,}")
    print(f"trainable {count.trainable:,}")
    print(f"frozen {count.frozen:,}")
    return 0


def _cmd_augment(args) -> int:
    in_dir = Path(args.in_dir)
    out_dir = Path(args.out)
    ops = _parse_ops(args.ops)
    files = sorted(p for p in in_dir.iterdir()
                   if p.suffix.lower() in (".png", ".ppm"))
    if not files:
        raise ValidationError(f"no .png/.ppm images in {in_dir}")
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, path in enumerate(files):
        img = decode_image(path.read_bytes())
        for j, op in enumerate(ops):
            seed = int(np.random.SeedSequence(entropy=args.seed,
                                              spawn_key=(i, j)).generate_state(1)[0])
            img = aug.apply_augment(img, op, seed=seed)
        target = out_dir / path.name
        if path.suffix.lower() == ".ppm":
            target.write_bytes(encode_ppm(img))
        else:
            write_png(target, img)
    print(f"augmented {len(files)} images -> {out_dir}")
    return 0


def _cmd_synth(args) -> int:
    manifest = synth_dataset(args.out, args.per_class, image_size=args.size,
                             seed=args.seed)
    for split in ("train", "val", "test"):
        counts = manifest.counts(split)
        print(f"{split}: fire={counts.get('fire', 0)} "
              f"non_fire={counts.get('non_fire', 0)}")
    return 0


def _cmd_transfer(args) -> int:
    def load_json(path):
        if path is None:
            return None
        try:
            return json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc

    result = transfer_mod.transfer_experiment(
        load_json(args.source), load_json(args.target), args.seeds, out_dir=args.out
    )
    print(result.to_text(), end="")
    return 0


def _cmd_reconcile(args) -> int:
    reported = {}
    for key, value in (("accuracy", args.acc), ("precision", args.prec),
                       ("recall", args.rec)):
        if value is not None:
            reported[key] = value
    if not reported:
        raise ConfigError("reconcile needs at least one of --acc/--prec/--rec")
    cm = metrics.reconcile(args.tp, (args.pos, args.neg), reported)
    print(f"fp={cm.fp} fn={cm.fn} tn={cm.tn}")
    return 0


def _cmd_report(args) -> int:
    if args.reconcile == bool(args.runs):
        raise ConfigError("report needs exactly one of --runs or --reconcile")
    result = (report_mod.reconcile_report() if args.reconcile
              else report_mod.build_report(args.runs))
    print(result.csv if args.format == "csv" else result.text, end="")
    return 0


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="wildfire",
        description="Train, evaluate, and reconcile the six benchmark "
                    "fire-detection architectures.",
    )
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("train", help="train one experiment from a JSON config")
    p.add_argument("--config", required=True, help="JSON experiment config")
    p.add_argument("--out", default=None, help="run directory (default runs/<id>-<digest>)")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("evaluate", help="evaluate a checkpoint on one dataset split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True, help="dataset directory or manifest file")
    p.add_argument("--split", required=True, choices=("train", "val", "test"))
    p.add_argument("--batch-size", type=int, default=32)
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("params", help="parameter counts for one architecture")
    p.add_argument("--model", required=True, choices=zoo.MODEL_IDS)
    p.add_argument("--input", type=_parse_hw, default=None, metavar="HxW")
    p.set_defaults(func=_cmd_params)

    p = sub.add_parser("augment", help="apply a fixed op sequence to a directory of images")
    p.add_argument("--in", dest="in_dir", required=True, metavar="DIR")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--ops", required=True,
                   help="e.g. rotate=5,translate=2:-1,scale=1.1,brightness=0.1,noise=0.02")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_augment)

    p = sub.add_parser("synth", help="render a labeled synthetic dataset")
    p.add_argument("--out", required=True, metavar="DIR")
    p.add_argument("--per-class", type=int, required=True)
    p.add_argument("--size", type=_parse_hw, default=(64, 48), metavar="HxW")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("transfer", help="pretrain-vs-scratch comparison over seeds")
    p.add_argument("--source", default=None, help="source-task JSON config")
    p.add_argument("--target", default=None, help="target-task JSON config")
    p.add_argument("--seeds", type=_parse_seeds, default=[0, 1, 2, 3, 4])
    p.add_argument("--out", default=None, help="directory for checkpoints and reports")
    p.set_defaults(func=_cmd_transfer)

    p = sub.add_parser("reconcile",
                       help="recover a confusion matrix from reported percentages")
    p.add_argument("--tp", type=int, required=True)
    p.add_argument("--pos", type=int, required=True)
    p.add_argument("--neg", type=int, required=True)
    p.add_argument("--acc", type=float, default=None)
    p.add_argument("--prec", type=float, default=None)
    p.add_argument("--rec", type=float, default=None)
    p.set_defaults(func=_cmd_reconcile)

    p = sub.add_parser("report", help="comparison tables over finished runs")
    p.add_argument("--runs", nargs="+", default=None, metavar="DIR")
    p.add_argument("--reconcile", action="store_true",
                   help="tabulate the published figures' recovered confusion matrices")
    p.add_argument("--format", choices=("text", "csv"), default="text")
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv=None) -> int:
    parser = _build_parser()
    if argv is None:
        argv = sys.argv[1:]
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not hasattr(args, "func"):
        parser.print_usage(sys.stderr)
        return 2
    try:
        return args.func(args)
    except (ConfigError, ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (WildfireError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
