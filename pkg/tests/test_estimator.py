import numpy as np
import pytest
from sklearn.base import clone
from sklearn.pipeline import make_pipeline

from brainmri.errors import LabelOutOfRange, ShapeMismatch
from brainmri.estimator import CNNSVMClassifier, VolumeSampler
from brainmri.phantom import generate_phantom


@pytest.fixture(scope="module")
def volumes():
    vols, labels = [], []
    for c in range(5):
        for k in range(2):
            vols.append(generate_phantom(c, k, 32, seed=11)[0])
            labels.append(c)
    return vols, np.array(labels)


def test_get_params_and_clone():
    clf = CNNSVMClassifier(n_iter=3, learning_rate=0.01, random_state=4)
    params = clf.get_params()
    assert params["n_iter"] == 3 and params["learning_rate"] == 0.01 and params["preset"] == "desk"
    twin = clone(clf)
    assert twin.get_params() == params
    assert not hasattr(twin, "network_")
    clf.set_params(batch_size=8)
    assert clf.batch_size == 8


def test_sampler_shapes(volumes):
    vols, _ = volumes
    X = VolumeSampler(out_size=64).fit_transform(vols)
    assert X.shape == (10, 3, 64, 64) and X.dtype == np.float32
    assert X.min() >= 0 and X.max() <= 1
    with pytest.raises(ValueError):
        VolumeSampler(threshold_fraction=1.5).fit(vols)


def test_pipeline_fit_predict(volumes):
    vols, y = volumes
    pipe = make_pipeline(VolumeSampler(out_size=64), CNNSVMClassifier(n_iter=3, batch_size=4, random_state=1))
    pipe.fit(vols, y)
    clf = pipe[-1]
    assert list(clf.classes_) == [0, 1, 2, 3, 4]
    assert len(clf.loss_curve_) == 3
    pred = pipe.predict(vols)
    assert pred.shape == (10,) and set(pred) <= set(range(5))
    scores = clf.decision_function(pipe[0].transform(vols))
    np.testing.assert_array_equal(pred, scores.argmax(axis=1))
    assert 0.0 <= pipe.score(vols, y) <= 1.0


def test_fit_is_deterministic(volumes):
    vols, y = volumes
    X = VolumeSampler(out_size=64).fit_transform(vols)
    a = CNNSVMClassifier(n_iter=2, batch_size=4, random_state=3).fit(X, y)
    b = CNNSVMClassifier(n_iter=2, batch_size=4, random_state=3).fit(X, y)
    assert a.loss_curve_ == b.loss_curve_
    assert a.decision_function(X).tobytes() == b.decision_function(X).tobytes()
    assert a.hinge_loss(X, y) >= 0


def test_input_validation(volumes):
    clf = CNNSVMClassifier(n_iter=1)
    with pytest.raises(ShapeMismatch):
        clf.fit(np.zeros((2, 3, 32, 32)), [0, 1])
    with pytest.raises(ShapeMismatch):
        clf.fit(np.zeros((2, 3, 64, 64)), [0, 1, 2])
    with pytest.raises(LabelOutOfRange):
        clf.fit(np.zeros((2, 3, 64, 64)), [0, 7])
    with pytest.raises(ValueError):
        clf.fit(np.full((2, 3, 64, 64), np.nan), [0, 1])
    from sklearn.exceptions import NotFittedError
    with pytest.raises(NotFittedError):
        CNNSVMClassifier().predict(np.zeros((1, 3, 64, 64)))
