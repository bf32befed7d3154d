"""Randomized finite-difference cases shared by the unit and acceptance suites.

Each case wraps one layer as the scalar ``sum(forward(x) * R)`` for a fixed
random upstream ``R`` and checks dL/dx plus every parameter gradient.
"""

import numpy as np

from brainmri.augment import sample_rng
from brainmri.model import build_network, spec_preset
from brainmri.nn import Affine, Conv2D, Dropout, Pool, ReLU, finite_diff_check, hinge_loss

LAYER_KINDS = ("conv", "pool_max", "pool_avg", "affine", "relu", "dropout", "hinge")

# central-difference step per precision; single needs a larger step so the
# difference is not swamped by float32 rounding of the forward pass.  Layers
# are piecewise linear, so the step adds no truncation error as long as it
# stays clear of kinks (KINK_GAP > 2 * step)
EPS = {np.float64: 1e-5, np.float32: 5e-2}
TOL = {np.float64: 1e-6, np.float32: 1e-4}
KINK_GAP = 0.25
MAX_COORDS = 120


def _coords(size, rng):
    if size <= MAX_COORDS:
        return None
    return rng.choice(size, MAX_COORDS, replace=False).tolist()


def _separated(rng, shape, dtype, gap=KINK_GAP):
    """Distinct values at least ``gap`` apart, so max-pool winners never tie under perturbation."""
    n = int(np.prod(shape))
    return ((rng.permutation(n) - n / 2) * gap).reshape(shape).astype(dtype)


def _away_from_zero(rng, shape, dtype):
    return (rng.choice([-1.0, 1.0], shape) * rng.uniform(KINK_GAP, 2.0, shape)).astype(dtype)


def _draw(rng, shape, dtype):
    """Signed normals in double precision; same-sign magnitudes in single.

    With mixed signs some gradient entries are cancellation residues far
    below float32 resolution, where a relative error is meaningless.
    """
    if dtype == np.float64:
        return rng.standard_normal(shape).astype(dtype)
    return rng.uniform(0.5, 1.5, shape).astype(dtype)


def build_case(kind, dtype, rng, forced=None):
    """Return ``(description, layer, x)`` for one randomized shape."""
    forced = forced or {}
    n = int(rng.integers(1, 4))
    if kind == "conv":
        c, f = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        kh, kw = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        stride = forced.get("stride", int(rng.integers(1, 3)))
        pad = forced.get("pad", int(rng.integers(0, 3)))
        h = int(rng.integers(max(kh - 2 * pad, 1), 8)) + 1
        w = int(rng.integers(max(kw - 2 * pad, 1), 8)) + 2
        layer = Conv2D("conv", c, f, (kh, kw), stride, pad, dtype)
        layer.weight.value[...] = _draw(rng, layer.weight.value.shape, dtype)
        layer.bias.value[...] = _draw(rng, f, dtype)
        x = _draw(rng, (n, c, h, w), dtype)
        desc = f"conv x{x.shape} k{kh}x{kw} f{f} s{stride} p{pad}"
    elif kind in ("pool_max", "pool_avg"):
        c = int(rng.integers(1, 4))
        kh, kw = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        sh, sw = int(rng.integers(1, 3)), int(rng.integers(1, 3))
        ho, wo = int(rng.integers(1, 4)), int(rng.integers(1, 5))
        shape = (n, c, kh + sh * (ho - 1), kw + sw * (wo - 1))
        mode = kind[5:]
        layer = Pool(mode, (kh, kw), (sh, sw))
        x = _separated(rng, shape, dtype) if mode == "max" else _draw(rng, shape, dtype)
        desc = f"{mode} pool x{shape} w{kh}x{kw} s{sh}x{sw}"
    elif kind == "affine":
        shape = (n, int(rng.integers(1, 4)), int(rng.integers(1, 4)), int(rng.integers(1, 4)))
        out = int(rng.integers(1, 7))
        layer = Affine("fc", int(np.prod(shape[1:])), out, dtype)
        layer.weight.value[...] = _draw(rng, layer.weight.value.shape, dtype)
        layer.bias.value[...] = _draw(rng, out, dtype)
        x = _draw(rng, shape, dtype)
        desc = f"affine x{shape} -> {out}"
    elif kind == "relu":
        shape = (n, int(rng.integers(1, 4)), int(rng.integers(1, 6)), int(rng.integers(1, 6)))
        layer = ReLU()
        x = _away_from_zero(rng, shape, dtype)
        desc = f"relu x{shape}"
    elif kind == "dropout":
        shape = (n, int(rng.integers(1, 40)))
        layer = Dropout(float(rng.uniform(0.0, 0.9)))
        x = _draw(rng, shape, dtype)
        desc = f"dropout p={layer.p:.3f} x{shape}"
    elif kind == "hinge":
        k = int(rng.integers(2, 7))
        layer = None
        x = (rng.standard_normal((n, k)) * 2).astype(dtype)
        desc = f"hinge scores{x.shape}"
    else:
        raise ValueError(kind)
    return desc, layer, x


def check_case(kind, dtype, rng, forced=None):
    """Worst relative error over input and parameter gradients for one random case."""
    dtype = np.dtype(dtype).type
    desc, layer, x = build_case(kind, dtype, rng, forced)
    eps = EPS[dtype]
    if kind == "hinge":
        labels = rng.integers(0, x.shape[1], x.shape[0])
        # keep every margin clear of the kink by more than the step
        margins = x - x[np.arange(len(x)), labels][:, None] + 1.0
        x[np.abs(margins) < KINK_GAP] += dtype(2 * KINK_GAP)
        _, analytic = hinge_loss(x, labels)

        def fn(_):
            return hinge_loss(x, labels)[0]

        return desc, finite_diff_check(fn, x, analytic, eps, _coords(x.size, rng))

    mask_seed = int(rng.integers(2**31))
    out_shape = layer.forward(x, train=True, rng=sample_rng(mask_seed)).shape
    upstream = _draw(rng, out_shape, np.float64 if dtype == np.float64 else np.float32).astype(np.float64)

    def fn(_):
        out = layer.forward(x, train=True, rng=sample_rng(mask_seed))
        return float(np.sum(out.astype(np.float64) * upstream))

    for p in layer.params:
        p.zero_grad()
    layer.forward(x, train=True, rng=sample_rng(mask_seed))
    dx = layer.backward(upstream.astype(dtype))
    analytic = [(x, dx)] + [(p.value, p.grad.copy()) for p in layer.params]
    worst = 0.0
    for target, grad in analytic:
        worst = max(worst, finite_diff_check(fn, target, grad, eps, _coords(target.size, rng)))
    return desc, worst


def _signature(net, scores, labels):
    """Which ReLUs fire, which max-pool inputs win and which margins are violated."""
    parts = []
    for layer in net.layers:
        if isinstance(layer, ReLU):
            parts.append(layer._mask.tobytes())
        elif isinstance(layer, Pool) and layer.mode == "max":
            parts.append(layer._cache[-1].tobytes())
    margins = scores - scores[np.arange(len(labels)), labels][:, None] + 1.0
    parts.append((margins > 0).tobytes())
    return b"".join(parts)


def network_check(rng, dtype=np.float64, coords_per_tensor=6, eps=None):
    """Whole desk network with the hinge loss as the scalar output.

    Only coordinates where the step leaves every ReLU, max-pool winner and
    hinge violation unchanged are probed: across a kink the function is not
    differentiable on the stencil, so central differences are no oracle there.
    """
    dtype = np.dtype(dtype).type
    eps = EPS[dtype] if eps is None else eps
    seed = int(rng.integers(2**31))
    n = int(rng.integers(1, 4))
    net = build_network(spec_preset("desk"), seed).astype(dtype)
    x = rng.random((n, *net.spec.input_shape)).astype(dtype)
    labels = rng.integers(0, 5, n)
    mask_seed = int(rng.integers(2**31))

    def run():
        scores = net.forward(x, train=True, rng=sample_rng(mask_seed))
        return scores, hinge_loss(scores, labels)[0]

    def fn(_):
        return run()[1]

    net.zero_grad()
    scores, _ = run()
    base = _signature(net, scores, labels)
    _, dscores = hinge_loss(scores, labels)
    dx = net.backward(dscores)
    targets = [("input", x, dx)] + [(p.name, p.value, p.grad.copy()) for p in net.params]
    worst, skipped, checked = 0.0, 0, 0
    for _, target, grad in targets:
        flat = target.reshape(-1)
        chosen = []
        for i in rng.permutation(flat.size)[:coords_per_tensor * 4]:
            orig = flat[i]
            smooth = True
            for step in (eps, -eps):
                flat[i] = orig + dtype(step)
                scores, _ = run()
                smooth = smooth and _signature(net, scores, labels) == base
            flat[i] = orig
            if smooth:
                chosen.append(int(i))
                if len(chosen) == coords_per_tensor:
                    break
            else:
                skipped += 1
        if chosen:
            checked += len(chosen)
            worst = max(worst, finite_diff_check(fn, target, grad, eps, chosen))
    desc = f"desk network N={n} seed={seed}: {checked} coordinates, {skipped} kink-crossing probes skipped"
    return desc, worst, checked
