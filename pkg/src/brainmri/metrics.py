"""Confusion-matrix accuracy and macro one-vs-rest sensitivity/specificity.

Ratios are formed with ``fractions.Fraction`` and converted to float once,
so results are exactly the correctly rounded rational values.
"""

from __future__ import annotations

from fractions import Fraction

import numpy as np

from .dataset import CLASS_NAMES, NUM_CLASSES
from .errors import ClassOutOfRange, EmptyMatrix


def confusion_from_pairs(pairs, num_classes=NUM_CLASSES):
    """Rows are true classes, columns predicted classes."""
    cm = np.zeros((num_classes, num_classes), dtype=np.int64)
    for true, pred in pairs:
        if not (0 <= true < num_classes and 0 <= pred < num_classes):
            raise ClassOutOfRange(f"pair ({true}, {pred}) outside [0, {num_classes})")
        cm[true, pred] += 1
    return cm


def _check(cm):
    cm = np.asarray(cm, dtype=np.int64)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1] or (cm < 0).any():
        raise ValueError(f"confusion matrix must be square and non-negative, got shape {cm.shape}")
    if cm.sum() == 0:
        raise EmptyMatrix("confusion matrix has no counts")
    return cm


def accuracy_of(cm):
    cm = _check(cm)
    return float(Fraction(int(np.trace(cm)), int(cm.sum())))


def per_class_rates(cm):
    """List of ``(sensitivity, specificity)`` Fractions; None where undefined."""
    cm = _check(cm)
    total = int(cm.sum())
    rates = []
    for c in range(cm.shape[0]):
        tp = int(cm[c, c])
        fn = int(cm[c, :].sum()) - tp
        fp = int(cm[:, c].sum()) - tp
        tn = total - tp - fn - fp
        sens = Fraction(tp, tp + fn) if tp + fn else None
        spec = Fraction(tn, tn + fp) if tn + fp else None
        rates.append((sens, spec))
    return rates


def _mean(values):
    values = [v for v in values if v is not None]
    return sum(values, Fraction(0)) / len(values) if values else None


def macro_sens_spec(cm):
    """Unweighted means over classes; classes with a zero denominator are skipped."""
    rates = per_class_rates(cm)
    sens = _mean(s for s, _ in rates)
    spec = _mean(p for _, p in rates)
    return (None if sens is None else float(sens), None if spec is None else float(spec))


def evaluation_report(cm, class_names=CLASS_NAMES):
    cm = _check(cm)
    sens, spec = macro_sens_spec(cm)
    rates = per_class_rates(cm)
    return {
        "accuracy": accuracy_of(cm),
        "sensitivity_macro": sens,
        "specificity_macro": spec,
        "averaging": "macro one-vs-rest; classes with empty denominators excluded",
        "confusion": cm.tolist(),
        "per_class": [
            {
                "class_id": c,
                "class_name": class_names[c],
                "sensitivity": None if s is None else float(s),
                "specificity": None if p is None else float(p),
            }
            for c, (s, p) in enumerate(rates)
        ],
        "n_samples": int(cm.sum()),
    }
