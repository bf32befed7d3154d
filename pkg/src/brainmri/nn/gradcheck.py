import numpy as np


def relative_error(analytic, numeric):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return np.abs(analytic - numeric) / denom


def numeric_grad(fn, x, eps=1e-5, indices=None):
    """Central differences of scalar ``fn`` w.r.t. ``x`` (perturbed in place).

    The step actually taken is ``x[i]+eps - (x[i]-eps)`` as stored, which
    matters in single precision.
    """
    flat = x.reshape(-1)
    if indices is None:
        indices = range(flat.size)
    out = {}
    for i in indices:
        orig = flat[i]
        flat[i] = orig + eps
        hi_x = flat[i]
        f_hi = float(fn(x))
        flat[i] = orig - eps
        lo_x = flat[i]
        f_lo = float(fn(x))
        flat[i] = orig
        out[i] = (f_hi - f_lo) / (float(hi_x) - float(lo_x))
    return out


def finite_diff_check(fn, x, analytic, eps=1e-5, indices=None):
    """Worst relative error between ``analytic`` and central differences.

    The denominator is ``max(|a|, |n|, 1e-8)``.  ``indices`` restricts the
    check to a subset of flat coordinates.
    """
    numeric = numeric_grad(fn, x, eps, indices)
    idx = np.fromiter(numeric, dtype=np.intp)
    if idx.size == 0:
        return 0.0
    a = np.asarray(analytic).reshape(-1)[idx]
    n = np.fromiter(numeric.values(), dtype=np.float64)
    return float(relative_error(a, n).max())
