"""Iteration-based training loop, curve logging and evaluation."""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .augment import AugmentConfig, augment_image, center_crop, sample_rng
from .dataset import Manifest
from .errors import EmptySplit
from .metrics import confusion_from_pairs, evaluation_report
from .model import (
    build_network,
    checkpoint_load,
    checkpoint_save,
    restore_optimizer,
    rng_from_state,
    spec_preset,
    train_step,
)
from .nn import SGD, hinge_loss
from .volume_io import atomic_write, decode_png

logger = logging.getLogger(__name__)

# stream keys for sample_rng; fixed so runs are reproducible
STREAM_ORDER = 1
STREAM_AUGMENT = 2
STREAM_DROPOUT = 3

CURVE_HEADER = ("iteration", "train_loss", "test_loss", "test_accuracy")


@dataclass
class TrainConfig:
    preset: str = "desk"
    lr: float = 0.001
    weight_decay: float = 0.0005
    momentum: float = 0.9
    batch_size: int = 32
    iterations: int = 2000
    eval_every: int = 500
    seed: int = 0
    margin: float = 1.0
    augment: dict | None = None
    manifest: str | None = None
    checkpoint: str | None = None
    curves: str | None = None

    def __post_init__(self):
        if self.iterations < 0 or self.batch_size < 1 or self.eval_every < 1:
            raise ValueError("iterations must be >= 0, batch_size and eval_every >= 1")
        if self.iterations and self.eval_every > self.iterations:
            raise ValueError(f"eval_every={self.eval_every} exceeds iterations={self.iterations}")

    @classmethod
    def from_json(cls, path, **overrides):
        data = json.loads(Path(path).read_text()) if path else {}
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys {sorted(unknown)}")
        data.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**data)

    def augment_config(self, input_size):
        if self.augment is None:
            return AugmentConfig.for_input(input_size)
        return AugmentConfig.from_dict(self.augment)

    def to_dict(self):
        return asdict(self)


def new_dropout_rng(seed):
    return sample_rng(seed, STREAM_DROPOUT)


class Trainer:
    """Minibatch SGD over an in-memory image array.

    Data order is an endless sequence of seeded per-epoch permutations, so
    the batch for any iteration is a pure function of ``(seed, iteration)``;
    augmentation streams are keyed by ``(seed, iteration, slot)``.  The only
    carried random state is the dropout stream.
    """

    def __init__(self, net, images, labels, *, batch_size=32, seed=0, augment=None,
                 opt=None, lr=0.001, weight_decay=0.0005, momentum=0.9, margin=1.0,
                 dropout_rng=None, iteration=0):
        self.net = net
        self.images = images
        self.labels = np.asarray(labels, dtype=np.intp)
        self.batch_size = batch_size
        self.seed = seed
        self.augment = augment or AugmentConfig.for_input(net.spec.input_shape[-1])
        self.opt = opt or SGD(net.params, lr, weight_decay, momentum)
        self.margin = margin
        self.dropout_rng = dropout_rng or new_dropout_rng(seed)
        self.iteration = iteration
        self._perms = {}

    def _order(self, epoch):
        if epoch not in self._perms:
            self._perms = {epoch: sample_rng(self.seed, STREAM_ORDER, epoch).permutation(len(self.labels))}
        return self._perms[epoch]

    def batch_indices(self, iteration):
        n = len(self.labels)
        start = iteration * self.batch_size
        return np.array([self._order(p // n)[p % n] for p in range(start, start + self.batch_size)])

    def batch(self, iteration):
        idx = self.batch_indices(iteration)
        images = np.stack([
            augment_image(self.images[i], self.augment, sample_rng(self.seed, STREAM_AUGMENT, iteration, slot))
            for slot, i in enumerate(idx)
        ]).astype(self.net.dtype)
        return images, self.labels[idx]

    def step(self):
        x, y = self.batch(self.iteration)
        loss = train_step(self.net, x, y, self.opt, self.dropout_rng, self.margin)
        self.iteration += 1
        return loss


def eval_images(images, input_size):
    return np.stack([center_crop(img, (input_size, input_size)) for img in images])


def evaluate(net, images, labels, margin=1.0, batch_size=64):
    """Eval-mode hinge loss, accuracy and predictions on center-cropped images."""
    if len(labels) == 0:
        raise EmptySplit("nothing to evaluate")
    x = eval_images(images, net.spec.input_shape[-1])
    scores = net.scores(x, batch_size)
    labels = np.asarray(labels)
    loss, _ = hinge_loss(scores.astype(np.float64), labels, margin)
    pred = scores.argmax(axis=1)
    return loss, float(np.mean(pred == labels)), pred


def load_split(manifest_path, split):
    """Images (N x 3 x H x W float32 in [0, 1]) and labels of one manifest split."""
    manifest_path = Path(manifest_path)
    entries = Manifest.load(manifest_path).split(split)
    images, labels = [], []
    for e in entries:
        pixels = decode_png((manifest_path.parent / e.path).read_bytes())
        if pixels.ndim != 3 or pixels.shape[2] != 3:
            raise ValueError(f"{e.path}: expected an RGB sample image")
        images.append(pixels.transpose(2, 0, 1).astype(np.float32) / np.float32(255.0))
        labels.append(e.class_id)
    if not images:
        return np.zeros((0, 3, 1, 1), np.float32), np.zeros(0, np.intp)
    return np.stack(images), np.asarray(labels, dtype=np.intp)


def _fmt(v):
    return "" if v is None else repr(float(v))


def curves_csv(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CURVE_HEADER)
    for row in rows:
        writer.writerow([row[0]] + [_fmt(v) for v in row[1:]])
    return buf.getvalue()


def read_curves(path):
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != CURVE_HEADER:
            raise ValueError(f"unexpected curves header {header}")
        for it, tr, te, acc in reader:
            rows.append((int(it), float(tr), float(te) if te else None, float(acc) if acc else None))
    return rows


def run_training(cfg, resume=False):
    """Train per ``cfg``; writes the checkpoint and curves CSV, returns curve rows."""
    spec = spec_preset(cfg.preset)
    size = spec.input_shape[-1]
    train_x, train_y = load_split(cfg.manifest, "train")
    if len(train_y) == 0:
        raise EmptySplit("manifest has no train entries")
    test_x, test_y = load_split(cfg.manifest, "test")
    augment = cfg.augment_config(size)
    logger.info("training preset=%s lr=%s weight_decay=%s momentum=%s batch=%d iterations=%d seed=%d",
                cfg.preset, cfg.lr, cfg.weight_decay, cfg.momentum, cfg.batch_size, cfg.iterations, cfg.seed)

    rows = []
    if resume:
        ckpt = checkpoint_load(cfg.checkpoint)
        if ckpt.spec != spec:
            raise ValueError("checkpoint network does not match the configured preset")
        net = ckpt.network()
        opt = restore_optimizer(ckpt, net, cfg.lr, cfg.weight_decay, cfg.momentum)
        dropout_rng = rng_from_state(ckpt.rng_state)
        start = ckpt.iteration
        if cfg.curves and Path(cfg.curves).exists():
            rows = [r for r in read_curves(cfg.curves) if r[0] <= start]
    else:
        net = build_network(spec, cfg.seed)
        opt = SGD(net.params, cfg.lr, cfg.weight_decay, cfg.momentum)
        dropout_rng = new_dropout_rng(cfg.seed)
        start = 0

    trainer = Trainer(net, train_x, train_y, batch_size=cfg.batch_size, seed=cfg.seed, augment=augment,
                      opt=opt, margin=cfg.margin, dropout_rng=dropout_rng, iteration=start)

    def save():
        if cfg.checkpoint:
            checkpoint_save(cfg.checkpoint, net, opt, trainer.dropout_rng, trainer.iteration)
        if cfg.curves:
            atomic_write(cfg.curves, curves_csv(rows).encode("utf-8"))

    while trainer.iteration < cfg.iterations:
        loss = trainer.step()
        it = trainer.iteration
        test_loss = test_acc = None
        if (it % cfg.eval_every == 0 or it == cfg.iterations) and len(test_y):
            test_loss, test_acc, _ = evaluate(net, test_x, test_y, cfg.margin)
            logger.info("iteration %d train_loss %.4f test_loss %.4f test_accuracy %.4f",
                        it, loss, test_loss, test_acc)
        rows.append((it, loss, test_loss, test_acc))
        if test_acc is not None:
            save()
    save()
    return rows


def evaluate_checkpoint(checkpoint, manifest, split="test"):
    """Metrics report dict for one manifest split."""
    net = checkpoint_load(checkpoint).network()
    images, labels = load_split(manifest, split)
    if len(labels) == 0:
        raise EmptySplit(f"split {split!r} is empty")
    _, _, pred = evaluate(net, images, labels)
    report = evaluation_report(confusion_from_pairs(zip(labels.tolist(), pred.tolist())))
    report["split"] = split
    return report
