"""scikit-learn wrappers: volume -> sample transformer and the CNN/SVM classifier."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted, column_or_1d

from .augment import AugmentConfig
from .dataset import DEFAULT_THRESHOLD, NUM_CLASSES
from .errors import LabelOutOfRange, ShapeMismatch
from .model import build_network, spec_preset
from .prepare import volume_to_sample
from .training import Trainer, eval_images, evaluate


class VolumeSampler(TransformerMixin, BaseEstimator):
    """Turn ``Volume`` objects into 3 x H x W axial/coronal/sagittal samples.

    Stateless: ``fit`` only validates parameters.
    """

    def __init__(self, out_size=224, threshold_fraction=DEFAULT_THRESHOLD):
        self.out_size = out_size
        self.threshold_fraction = threshold_fraction

    def fit(self, X, y=None):
        if not 0.0 < self.threshold_fraction < 1.0:
            raise ValueError(f"threshold_fraction must lie in (0, 1), got {self.threshold_fraction}")
        self.n_features_in_ = 1
        return self

    def transform(self, X):
        check_is_fitted(self, "n_features_in_")
        return np.stack([volume_to_sample(v, self.out_size, self.threshold_fraction)[0] for v in X])

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.requires_fit = False
        return tags


class CNNSVMClassifier(ClassifierMixin, BaseEstimator):
    """Seven-conv / three-FC network trained end to end under a multiclass hinge loss.

    ``X`` is an ``N x 3 x H x W`` array of images in [0, 1] at least as
    large as the preset input; ``y`` holds class ids 0..4.
    """

    def __init__(self, preset="desk", learning_rate=0.001, weight_decay=0.0005, momentum=0.9,
                 batch_size=32, n_iter=2000, margin=1.0, augment=True, random_state=0):
        self.preset = preset
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.momentum = momentum
        self.batch_size = batch_size
        self.n_iter = n_iter
        self.margin = margin
        self.augment = augment
        self.random_state = random_state

    def _validate_X(self, X):
        X = check_array(X, allow_nd=True, dtype=np.float32, ensure_min_features=1)
        size = self.network_.spec.input_shape[-1] if hasattr(self, "network_") else spec_preset(self.preset).input_shape[-1]
        if X.ndim != 4 or X.shape[1] != 3 or min(X.shape[2:]) < size:
            raise ShapeMismatch(f"expected N x 3 x H x W with H, W >= {size}, got {X.shape}")
        return X

    def fit(self, X, y):
        X = self._validate_X(X)
        y = column_or_1d(np.asarray(y), warn=True).astype(np.intp)
        if len(y) != len(X):
            raise ShapeMismatch(f"{len(X)} images but {len(y)} labels")
        if y.min() < 0 or y.max() >= NUM_CLASSES:
            raise LabelOutOfRange(f"labels must be class ids 0..{NUM_CLASSES - 1}")
        spec = spec_preset(self.preset)
        size = spec.input_shape[-1]
        net = build_network(spec, self.random_state)
        augment = AugmentConfig(crop_size=(size, size), base_size=min(X.shape[2:]),
                                enabled=bool(self.augment))
        trainer = Trainer(net, X, y, batch_size=self.batch_size, seed=self.random_state,
                          augment=augment, lr=self.learning_rate, weight_decay=self.weight_decay,
                          momentum=self.momentum, margin=self.margin)
        self.loss_curve_ = [trainer.step() for _ in range(self.n_iter)]
        self.network_ = net
        self.classes_ = np.arange(NUM_CLASSES)
        self.n_iter_ = self.n_iter
        return self

    def decision_function(self, X):
        check_is_fitted(self, "network_")
        X = self._validate_X(X)
        return self.network_.scores(eval_images(X, self.network_.spec.input_shape[-1]))

    def predict(self, X):
        check_is_fitted(self, "network_")
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]

    def hinge_loss(self, X, y):
        check_is_fitted(self, "network_")
        return evaluate(self.network_, self._validate_X(X), np.asarray(y), self.margin)[0]
