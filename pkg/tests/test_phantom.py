import numpy as np
import pytest

from brainmri.phantom import generate_phantom, write_phantom_corpus


def test_phantom_is_deterministic():
    a, info_a = generate_phantom(1, 3, 32, seed=7)
    b, info_b = generate_phantom(1, 3, 32, seed=7)
    assert a == b and info_a == info_b
    c, _ = generate_phantom(1, 4, 32, seed=7)
    assert a != c


def test_corpus_layout_and_bytes(tmp_path):
    first = write_phantom_corpus(tmp_path / "a", per_class=2, dims=32, seed=1)
    second = write_phantom_corpus(tmp_path / "b", per_class=2, dims=32, seed=1)
    assert len(first) == 10
    dirs = sorted({p.parent.name for p in first})
    assert dirs == ["0_healthy", "1_hgg", "2_lgg", "3_alzheimer", "4_ms"]
    for p, q in zip(first, second):
        assert p.read_bytes() == q.read_bytes()


def test_background_is_zero_and_type():
    v, _ = generate_phantom(0, 0, 32)
    assert v.element_type == "int16"
    assert v.data[0, 0, 0] == 0 and v.data[-1, -1, -1] == 0


def test_class_geometry():
    _, hgg = generate_phantom(1, 0, 64)
    _, lgg = generate_phantom(2, 0, 64)
    _, ms = generate_phantom(4, 0, 64)
    assert 0.15 * 64 <= hgg["lesions"][0]["radius"] <= 0.25 * 64
    assert 0.05 * 64 <= lgg["lesions"][0]["radius"] <= 0.10 * 64
    assert lgg["lesions"][0]["gain"] == pytest.approx(0.6 * hgg["lesions"][0]["gain"])
    assert 5 <= len(ms["lesions"]) <= 9
    assert generate_phantom(3, 0, 64)[1]["ventricle_radius"] == 2 * generate_phantom(0, 0, 64)[1]["ventricle_radius"]


def _ball_mean(volume, center, radius):
    grid = np.indices(volume.dims)
    d = np.sqrt(sum((g - c) ** 2 for g, c in zip(grid, center)))
    return volume.data[d <= radius].mean()


def test_class_intensity_ordering():
    for k in range(3):
        v1, i1 = generate_phantom(1, k, 64)
        v2, i2 = generate_phantom(2, k, 64)
        blob1, blob2 = i1["lesions"][0], i2["lesions"][0]
        assert _ball_mean(v1, blob1["center"], blob1["radius"] * 0.7) > _ball_mean(v2, blob2["center"], blob2["radius"] * 0.7)
        v3, i3 = generate_phantom(3, k, 64)
        v0, i0 = generate_phantom(0, k, 64)
        r = i0["ventricle_radius"] * 1.5
        assert _ball_mean(v3, i3["center"], r) < _ball_mean(v0, i0["center"], r)


def test_phantom_validation():
    with pytest.raises(ValueError):
        generate_phantom(5, 0)
    with pytest.raises(ValueError):
        generate_phantom(0, 0, dims=16)
