"""Command-line entry point: ``brainmri <command> ...``.

Failures print one line, ``<ErrorCode>: <message>``, on stderr and exit
nonzero.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .dataset import CLASS_NAMES, PLANES, extract_slice, rescale_unit
from .errors import BadInput, BrainMRIError
from .model import checkpoint_load, predict
from .phantom import write_phantom_corpus
from .prepare import prepare_dataset, volume_to_sample
from .training import TrainConfig, evaluate_checkpoint, run_training
from .volume_io import atomic_write, decode_png, export_png, load_volume, reorient_canonical

logger = logging.getLogger("brainmri")

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.exit(2, f"UsageError: {message}\n")


def cmd_phantom(args):
    paths = write_phantom_corpus(args.out, args.per_class, args.dims, args.seed)
    logger.info("wrote %d phantom volumes under %s", len(paths), args.out)


def cmd_prepare(args):
    m = prepare_dataset(args.input, args.out, args.size, args.train_fraction, args.seed)
    logger.info("manifest: %d train / %d test entries", len(m.split("train")), len(m.split("test")))


def cmd_train(args):
    overrides = {
        "preset": args.preset, "lr": args.lr, "weight_decay": args.weight_decay,
        "momentum": args.momentum, "batch_size": args.batch, "iterations": args.iters,
        "eval_every": args.eval_every, "seed": args.seed, "manifest": args.manifest,
        "checkpoint": args.checkpoint, "curves": args.curves,
    }
    cfg = TrainConfig.from_json(args.config, **overrides)
    if not cfg.manifest or not cfg.checkpoint:
        raise BadInput("train needs --manifest and --checkpoint (flags or config file)")
    run_training(cfg, resume=args.resume)


def cmd_eval(args):
    report = evaluate_checkpoint(args.checkpoint, args.manifest, args.split)
    text = json.dumps(report, indent=2, sort_keys=True) + "\n"
    if args.report:
        atomic_write(args.report, text.encode("utf-8"))
    sys.stdout.write(text)


def _load_input_image(path, size):
    data = Path(path).read_bytes()
    if data.startswith(PNG_MAGIC):
        pixels = decode_png(data)
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise BadInput(f"{path}: expected a 3-channel PNG")
        if pixels.shape[:2] != (size, size):
            raise BadInput(f"{path}: PNG is {pixels.shape[1]}x{pixels.shape[0]}, network expects {size}x{size}")
        return pixels.transpose(2, 0, 1).astype(np.float32) / np.float32(255.0)
    try:
        volume = load_volume(path)
    except BrainMRIError as exc:
        raise BadInput(f"{path}: neither a PNG nor a readable volume ({exc})") from None
    return volume_to_sample(volume, size)[0]


def cmd_predict(args):
    net = checkpoint_load(args.checkpoint).network()
    image = _load_input_image(args.image, net.spec.input_shape[-1])
    class_id, scores = predict(net, image)
    print(json.dumps({
        "class_id": class_id,
        "class_name": CLASS_NAMES[class_id],
        "scores": [float(s) for s in scores],
    }))


def cmd_convert(args):
    volume = reorient_canonical(load_volume(args.input))
    plane = extract_slice(volume, args.plane, args.index)
    atomic_write(args.out, export_png(rescale_unit(plane)))


def build_parser():
    parser = _Parser(prog="brainmri", description="Brain MRI five-class CNN/SVM pipeline")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("phantom", help="write a synthetic five-class volume corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--per-class", type=int, default=10)
    p.add_argument("--dims", type=int, default=64)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_phantom)

    p = sub.add_parser("prepare", help="volumes -> PNG samples + balanced manifest")
    p.add_argument("--input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--size", type=int, default=224)
    p.add_argument("--train-fraction", type=float, default=0.7)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("train", help="train the network; writes checkpoint and curves CSV")
    p.add_argument("--config", help="JSON file of TrainConfig fields; flags override it")
    p.add_argument("--manifest")
    p.add_argument("--preset", choices=("desk", "canonical"))
    p.add_argument("--lr", type=float)
    p.add_argument("--weight-decay", type=float)
    p.add_argument("--momentum", type=float)
    p.add_argument("--batch", type=int)
    p.add_argument("--iters", type=int)
    p.add_argument("--eval-every", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--checkpoint")
    p.add_argument("--curves")
    p.add_argument("--resume", action="store_true", help="continue from --checkpoint")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="metrics report for one manifest split")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--split", default="test", choices=("train", "test"))
    p.add_argument("--report")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="classify one PNG sample or volume")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("convert", help="export one slice of a volume as PNG")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--plane", required=True, choices=PLANES)
    p.add_argument("--index", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_convert)
    return parser


def _fail(code, exc):
    print(f"{code}: {' '.join(str(exc).split())}", file=sys.stderr)


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        args.func(args)
    except BrainMRIError as exc:
        _fail(exc.code, exc)
        return 1
    except (OSError, ValueError) as exc:
        _fail(type(exc).__name__, exc)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
