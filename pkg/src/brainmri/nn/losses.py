import numpy as np

from ..errors import LabelOutOfRange


def hinge_loss(scores, labels, margin=1.0):
    """Weston-Watkins multiclass hinge loss averaged over the batch.

    Per sample: ``sum_{j != y} max(0, s_j - s_y + margin)``.  Returns
    ``(loss, dscores)``; the gradient is ``+1/N`` at each violating class
    and ``-count/N`` at the true class.
    """
    scores = np.asarray(scores)
    labels = np.asarray(labels, dtype=np.intp)
    n, k = scores.shape
    if labels.shape != (n,):
        raise LabelOutOfRange(f"expected {n} labels, got shape {labels.shape}")
    if n and (labels.min() < 0 or labels.max() >= k):
        raise LabelOutOfRange(f"labels must lie in [0, {k})")
    rows = np.arange(n)
    margins = scores - scores[rows, labels][:, None] + scores.dtype.type(margin)
    margins[rows, labels] = 0
    violating = margins > 0
    loss = float(np.sum(np.where(violating, margins, 0), dtype=np.float64)) / n
    grad = violating.astype(scores.dtype)
    grad[rows, labels] = -violating.sum(axis=1)
    return loss, grad / scores.dtype.type(n)
