"""Declarative network spec, the sequential network, and checkpoints."""

from __future__ import annotations

import io
import json
import math
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .augment import sample_rng
from .dataset import NUM_CLASSES
from .errors import (
    BadMagic,
    NonFiniteLoss,
    ShapeMismatch,
    SpecInvalid,
    Truncated,
    UnknownPreset,
    VersionMismatch,
)
from .nn import SGD, Affine, Conv2D, Dropout, Pool, ReLU, hinge_loss
from .volume_io import atomic_write

CANONICAL_FC_WIDTH = 4096
LAYER_KINDS = ("conv", "pool", "affine", "relu", "dropout", "classifier")


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    filters: int | None = None
    kernel: int | None = None
    stride: int | None = None
    pad: int | None = None
    mode: str | None = None
    window: int | None = None
    width: int | None = None
    p: float | None = None

    def to_dict(self):
        return {k: v for k, v in asdict(self).items() if v is not None}


@dataclass(frozen=True)
class NetworkSpec:
    name: str
    input_shape: tuple
    layers: tuple
    num_classes: int = NUM_CLASSES
    # subtracted from [0, 1] inputs before the first layer
    input_mean: float = 0.5

    def to_dict(self):
        return {
            "name": self.name,
            "input_shape": list(self.input_shape),
            "num_classes": self.num_classes,
            "input_mean": self.input_mean,
            "layers": [layer.to_dict() for layer in self.layers],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["name"], tuple(d["input_shape"]),
                   tuple(LayerSpec(**layer) for layer in d["layers"]),
                   d.get("num_classes", NUM_CLASSES), d.get("input_mean", 0.5))

    @property
    def kinds(self):
        return [layer.kind for layer in self.layers]


def _conv(filters, kernel, stride, pad):
    return LayerSpec("conv", filters=filters, kernel=kernel, stride=stride, pad=pad)


def _topology(input_size, widths, fc_width, name):
    c1, c2, c3, c4, c5, c6, c7 = widths
    relu = LayerSpec("relu")
    layers = [
        _conv(c1, 7, 4, 3), relu,
        _conv(c2, 3, 1, 1), relu,
        _conv(c3, 3, 1, 1), relu,
        LayerSpec("pool", mode="avg", window=2, stride=2),
        _conv(c4, 3, 1, 1), relu,
        _conv(c5, 3, 1, 1), relu,
        LayerSpec("pool", mode="max", window=2, stride=2),
        _conv(c6, 3, 1, 1), relu,
        LayerSpec("pool", mode="max", window=2, stride=2),
        _conv(c7, 3, 1, 1), relu,
        LayerSpec("affine", width=fc_width), relu,
        LayerSpec("affine", width=fc_width), relu,
        LayerSpec("affine", width=fc_width), relu,
        LayerSpec("dropout", p=0.5),
        LayerSpec("classifier", width=NUM_CLASSES),
    ]
    return NetworkSpec(name, (3, input_size, input_size), tuple(layers))


_CANONICAL_WIDTHS = (64, 96, 128, 192, 256, 256, 256)


def spec_preset(name):
    """``canonical`` (3x224x224, FC 4096) or ``desk`` (3x64x64, widths / 8, FC 256)."""
    if name == "canonical":
        return _topology(224, _CANONICAL_WIDTHS, CANONICAL_FC_WIDTH, "canonical")
    if name == "desk":
        return _topology(64, tuple(w // 8 for w in _CANONICAL_WIDTHS), 256, "desk")
    raise UnknownPreset(f"unknown preset {name!r}; choose 'canonical' or 'desk'")


def _shape_after(layer, shape):
    if layer.kind == "conv":
        c, h, w = shape
        ho = (h + 2 * layer.pad - layer.kernel) // layer.stride + 1
        wo = (w + 2 * layer.pad - layer.kernel) // layer.stride + 1
        if ho < 1 or wo < 1:
            raise ValueError(f"conv {layer.kernel}x{layer.kernel} does not fit {h}x{w}")
        return (layer.filters, ho, wo)
    if layer.kind == "pool":
        c, h, w = shape
        k, s = layer.window, layer.stride
        if h < k or w < k or (h - k) % s or (w - k) % s:
            raise ValueError(f"pool {k}/{s} does not tile {h}x{w}")
        return (c, (h - k) // s + 1, (w - k) // s + 1)
    if layer.kind in ("affine", "classifier"):
        return (layer.width,)
    return shape


def structural_violations(spec, fc_width=CANONICAL_FC_WIDTH):
    """Map of violated clause name -> description; empty when the spec conforms.

    ``fc_width=None`` skips the hidden-width clause (used for the desk preset).
    """
    bad = {}
    layers = list(spec.layers)
    kinds = [layer.kind for layer in layers]
    unknown = sorted({k for k in kinds if k not in LAYER_KINDS})
    if unknown:
        bad["layer_kinds"] = f"unknown layer kinds {unknown}"
        return bad
    convs = [i for i, k in enumerate(kinds) if k == "conv"]
    fcs = [i for i, k in enumerate(kinds) if k == "affine"]
    pools = [(i, layers[i].mode) for i, k in enumerate(kinds) if k == "pool"]
    drops = [i for i, k in enumerate(kinds) if k == "dropout"]

    if len(convs) != 7:
        bad["seven_conv_layers"] = f"expected 7 conv layers, found {len(convs)}"
    if len(fcs) != 3:
        bad["three_fc_layers"] = f"expected 3 hidden affine layers, found {len(fcs)}"
    if fc_width is not None and any(layers[i].width != fc_width for i in fcs):
        bad["fc_width"] = f"hidden affine widths {[layers[i].width for i in fcs]} != {fc_width}"
    if convs and fcs and max(convs) > min(fcs):
        bad["fc_after_conv7"] = "a conv layer follows a fully connected layer"

    def after_relu_of(learning_idx):
        # position right after the layer's ReLU
        j = learning_idx + 1
        return j + 1 if j < len(kinds) and kinds[j] == "relu" else None

    missing_relu = [i for i in convs + fcs if i + 1 >= len(kinds) or kinds[i + 1] != "relu"]
    if missing_relu:
        bad["relu_after_learning_layers"] = f"no ReLU after layers at positions {missing_relu}"

    avg = [i for i, m in pools if m == "avg"]
    if len(convs) >= 3 and not (len(avg) == 1 and avg[0] == after_relu_of(convs[2])):
        bad["avg_pool_after_conv3"] = f"avg pools at {avg}, expected one right after conv3"
    mx = [i for i, m in pools if m == "max"]
    if len(convs) >= 6:
        want = [after_relu_of(convs[4]), after_relu_of(convs[5])]
        if mx != want:
            bad["max_pools_after_conv5_conv6"] = f"max pools at {mx}, expected {want}"
    if any(m not in ("avg", "max") for _, m in pools):
        bad["pool_modes"] = "pool mode must be avg or max"
    if len(fcs) >= 3 and drops != [after_relu_of(fcs[2])]:
        bad["dropout_after_fc3"] = f"dropout at {drops}, expected one right after the third FC"
    for i in drops:
        p = layers[i].p
        if p is None or not 0.0 <= p < 1.0:
            bad["dropout_p"] = f"dropout p={p} outside [0, 1)"

    heads = [i for i, k in enumerate(kinds) if k == "classifier"]
    if heads != [len(kinds) - 1] or layers[-1].width != spec.num_classes or spec.num_classes != NUM_CLASSES:
        bad["five_way_classifier"] = (f"expected a single final classifier of width {NUM_CLASSES}, "
                                      f"found {[layers[i].width for i in heads]}")

    for i in convs:
        c = layers[i]
        if not all(v is not None and v > 0 for v in (c.filters, c.kernel, c.stride)) or c.pad is None or c.pad < 0:
            bad["conv_params"] = f"conv at {i} has invalid parameters"
    for i, _ in pools:
        if not (layers[i].window and layers[i].stride and layers[i].window > 0 and layers[i].stride > 0):
            bad["pool_params"] = f"pool at {i} has invalid parameters"
    if "conv_params" not in bad and "pool_params" not in bad:
        shape = tuple(spec.input_shape)
        try:
            if len(shape) != 3 or shape[0] != 3:
                raise ValueError(f"input shape {shape} is not 3 x H x W")
            for layer in layers:
                shape = _shape_after(layer, shape)
        except (ValueError, TypeError) as exc:
            bad["shapes_chain"] = str(exc)
    return bad


def validate_spec(spec):
    width = None if spec.name == "desk" else CANONICAL_FC_WIDTH
    bad = structural_violations(spec, width)
    if bad:
        raise SpecInvalid("; ".join(f"{k}: {v}" for k, v in bad.items()))


class Network:
    """Sequential stack materialized from a ``NetworkSpec``."""

    def __init__(self, spec, dtype=np.float32):
        validate_spec(spec)
        self.spec = spec
        self.dtype = np.dtype(dtype)
        self.layers = []
        shape = tuple(spec.input_shape)
        n_conv = n_fc = 0
        for ls in spec.layers:
            if ls.kind == "conv":
                n_conv += 1
                layer = Conv2D(f"conv{n_conv}", shape[0], ls.filters, ls.kernel, ls.stride, ls.pad, self.dtype)
            elif ls.kind == "pool":
                layer = Pool(ls.mode, ls.window, ls.stride)
            elif ls.kind == "affine":
                n_fc += 1
                layer = Affine(f"fc{n_fc}", int(np.prod(shape)), ls.width, self.dtype)
            elif ls.kind == "classifier":
                layer = Affine("classifier", int(np.prod(shape)), ls.width, self.dtype)
            elif ls.kind == "relu":
                layer = ReLU()
            else:
                layer = Dropout(ls.p)
            shape = layer.output_shape(shape)
            self.layers.append(layer)

    @property
    def params(self):
        return [p for layer in self.layers for p in layer.params]

    def initialize(self, seed):
        """He-normal weights (std sqrt(2 / fan_in)), zero biases."""
        rng = sample_rng(seed)
        for p in self.params:
            if p.name.endswith(".bias"):
                p.value[...] = 0
            else:
                fan_in = int(np.prod(p.value.shape[1:]))
                p.value[...] = (rng.standard_normal(p.value.shape) * math.sqrt(2.0 / fan_in)).astype(self.dtype)
            p.zero_grad()
        return self

    def forward(self, x, train=False, rng=None):
        x = np.asarray(x)
        if x.ndim != 4 or tuple(x.shape[1:]) != tuple(self.spec.input_shape):
            raise ShapeMismatch(f"expected N x {self.spec.input_shape}, got {x.shape}")
        out = x.astype(self.dtype, copy=False) - self.dtype.type(self.spec.input_mean)
        for layer in self.layers:
            out = layer.forward(out, train, rng)
        return out

    def backward(self, dscores):
        grad = dscores
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def zero_grad(self):
        for p in self.params:
            p.zero_grad()

    def scores(self, x, batch_size=64):
        """Eval-mode scores computed in fixed-size chunks."""
        x = np.asarray(x)
        chunks = [self.forward(x[i:i + batch_size]) for i in range(0, len(x), batch_size)]
        return np.concatenate(chunks) if chunks else np.zeros((0, self.spec.num_classes), self.dtype)

    def state(self):
        return {p.name: p.value for p in self.params}

    def load_state(self, state):
        for p in self.params:
            if state[p.name].shape != p.value.shape:
                raise ShapeMismatch(f"{p.name}: stored {state[p.name].shape} != {p.value.shape}")
            p.value[...] = state[p.name]

    def astype(self, dtype):
        other = Network(self.spec, dtype)
        other.load_state({k: v.astype(dtype) for k, v in self.state().items()})
        return other


def build_network(spec, seed, dtype=np.float32):
    return Network(spec, dtype).initialize(seed)


def forward(net, batch, mode="eval", rng=None):
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
    return net.forward(batch, train=(mode == "train"), rng=rng)


def train_step(net, batch, labels, opt, rng, margin=1.0):
    """Forward (train mode), hinge loss, backward, SGD update; returns the pre-update loss."""
    scores = net.forward(batch, train=True, rng=rng)
    loss, dscores = hinge_loss(scores, labels, margin)
    if not math.isfinite(loss):
        raise NonFiniteLoss(f"loss became {loss}; score range [{scores.min()}, {scores.max()}]")
    net.zero_grad()
    net.backward(dscores)
    opt.step()
    return loss


def predict(net, image):
    """Class id (lowest id wins ties) and the eval-mode score vector."""
    scores = net.forward(np.asarray(image)[None])[0]
    return int(np.argmax(scores)), scores


# ---------------------------------------------------------------- checkpoints

MAGIC = b"NBADCKPT"
FORMAT_VERSION = 1


@dataclass
class Checkpoint:
    spec: NetworkSpec
    params: dict
    velocities: dict = field(default_factory=dict)
    rng_state: bytes = b""
    iteration: int = 0

    def network(self, dtype=np.float32):
        net = Network(self.spec, dtype)
        net.load_state({k: v.astype(dtype) for k, v in self.params.items()})
        return net


def _write_tensors(buf, tensors):
    buf.write(struct.pack("<Q", len(tensors)))
    for name, arr in tensors.items():
        raw = name.encode("utf-8")
        buf.write(struct.pack("<Q", len(raw)) + raw)
        arr = np.asarray(arr, dtype="<f4")
        buf.write(struct.pack("<Q", arr.ndim))
        buf.write(struct.pack(f"<{arr.ndim}Q", *arr.shape))
        buf.write(arr.tobytes(order="C"))


def encode_checkpoint(ckpt):
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(struct.pack("<I", FORMAT_VERSION))
    spec = json.dumps(ckpt.spec.to_dict(), sort_keys=True).encode("utf-8")
    buf.write(struct.pack("<Q", len(spec)) + spec)
    _write_tensors(buf, ckpt.params)
    _write_tensors(buf, ckpt.velocities)
    buf.write(struct.pack("<Q", len(ckpt.rng_state)) + ckpt.rng_state)
    buf.write(struct.pack("<Q", ckpt.iteration))
    return buf.getvalue()


class _Reader:
    def __init__(self, data):
        self.data, self.pos = data, 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise Truncated(f"checkpoint ends at byte {len(self.data)}, needed {self.pos + n}")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u64(self):
        return struct.unpack("<Q", self.take(8))[0]

    def blob(self):
        return self.take(self.u64())

    def tensors(self):
        out = {}
        for _ in range(self.u64()):
            name = self.blob().decode("utf-8")
            rank = self.u64()
            shape = struct.unpack(f"<{rank}Q", self.take(8 * rank))
            n = int(np.prod(shape)) if rank else 1
            out[name] = np.frombuffer(self.take(4 * n), dtype="<f4").astype(np.float32).reshape(shape)
        return out


def decode_checkpoint(data):
    r = _Reader(bytes(data))
    if r.take(len(MAGIC)) != MAGIC:
        raise BadMagic("not a checkpoint file (bad magic)")
    version = struct.unpack("<I", r.take(4))[0]
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"checkpoint format version {version}, expected {FORMAT_VERSION}")
    spec = NetworkSpec.from_dict(json.loads(r.blob().decode("utf-8")))
    return Checkpoint(spec, r.tensors(), r.tensors(), bytes(r.blob()), r.u64())


def rng_state_bytes(rng):
    return json.dumps(rng.bit_generator.state, sort_keys=True).encode("utf-8")


def rng_from_state(blob):
    rng = np.random.Generator(np.random.PCG64())
    rng.bit_generator.state = json.loads(blob.decode("utf-8"))
    return rng


def checkpoint_save(path, net, opt=None, rng=None, iteration=0):
    """Atomically write a checkpoint (temp file + rename)."""
    ckpt = Checkpoint(
        net.spec,
        net.state(),
        dict(opt.velocity) if opt is not None else {},
        rng_state_bytes(rng) if rng is not None else b"",
        int(iteration),
    )
    atomic_write(path, encode_checkpoint(ckpt))
    return ckpt


def checkpoint_load(path):
    return decode_checkpoint(Path(path).read_bytes())


def restore_optimizer(ckpt, net, lr, weight_decay, momentum):
    opt = SGD(net.params, lr, weight_decay, momentum)
    for name, v in ckpt.velocities.items():
        opt.velocity[name][...] = v
    return opt
