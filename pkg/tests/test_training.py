import json
import logging

import numpy as np
import pytest

from brainmri.augment import AugmentConfig
from brainmri.errors import EmptyClass, EmptySplit
from brainmri.model import build_network, checkpoint_load, encode_checkpoint, spec_preset
from brainmri.phantom import write_phantom_corpus
from brainmri.prepare import class_id_for_dir, prepare_dataset
from brainmri.training import (
    CURVE_HEADER,
    TrainConfig,
    Trainer,
    evaluate_checkpoint,
    read_curves,
    run_training,
)


@pytest.fixture(scope="module")
def small_corpus(tmp_path_factory):
    root = tmp_path_factory.mktemp("corpus")
    write_phantom_corpus(root / "volumes", per_class=4, dims=32, seed=3)
    manifest = prepare_dataset(root / "volumes", root / "samples", size=64, seed=3)
    return root, manifest


def small_cfg(root, name, **kw):
    base = dict(manifest=str(root / "samples" / "manifest.jsonl"), batch_size=4, iterations=6,
                eval_every=3, seed=1, checkpoint=str(root / f"{name}.ckpt"), curves=str(root / f"{name}.csv"))
    base.update(kw)
    return TrainConfig(**base)


def test_class_dir_names():
    assert class_id_for_dir("3") == 3
    assert class_id_for_dir("3_alzheimer") == 3
    assert class_id_for_dir("MS") == 4
    assert class_id_for_dir("7_other") is None
    assert class_id_for_dir("misc") is None


def test_prepare_outputs(small_corpus):
    root, manifest = small_corpus
    assert manifest.counts() == {c: 4 for c in range(5)}
    assert manifest.counts("train") == {c: 2 for c in range(5)}
    for e in manifest.entries:
        assert (root / "samples" / e.path).exists()
        assert e.source_volume.endswith(".nii") and len(e.plane_indices) == 3


def test_prepare_is_byte_identical(small_corpus, tmp_path):
    root, _ = small_corpus
    prepare_dataset(root / "volumes", tmp_path / "again", size=64, seed=3)
    assert (tmp_path / "again" / "manifest.jsonl").read_bytes() == (root / "samples" / "manifest.jsonl").read_bytes()


def test_prepare_skips_corrupt_volume(tmp_path, caplog):
    write_phantom_corpus(tmp_path / "v", per_class=2, dims=32, seed=0)
    (tmp_path / "v" / "2_lgg" / "phantom_001.nii").write_bytes(b"garbage" * 100)
    with caplog.at_level(logging.WARNING):
        m = prepare_dataset(tmp_path / "v", tmp_path / "s", size=32)
    assert any("phantom_001.nii" in r.message for r in caplog.records)
    assert len(m) == 5  # balanced down to the one remaining lgg sample


def test_prepare_fails_when_class_empty(tmp_path):
    write_phantom_corpus(tmp_path / "v", per_class=1, dims=32, seed=0)
    (tmp_path / "v" / "4_ms" / "phantom_000.nii").write_bytes(b"not a volume")
    with pytest.raises(EmptyClass):
        prepare_dataset(tmp_path / "v", tmp_path / "s", size=32)


def test_config_validation_and_json(tmp_path):
    with pytest.raises(ValueError):
        TrainConfig(iterations=10, eval_every=20)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"lr": 0.01, "iterations": 40, "eval_every": 10}))
    cfg = TrainConfig.from_json(path, lr=None, seed=5)
    assert cfg.lr == 0.01 and cfg.seed == 5 and cfg.iterations == 40
    path.write_text(json.dumps({"learning_rate": 1}))
    with pytest.raises(ValueError):
        TrainConfig.from_json(path)


def test_trainer_batches_are_pure_in_iteration(rng):
    net = build_network(spec_preset("desk"), 0)
    images = rng.random((10, 3, 64, 64)).astype(np.float32)
    t1 = Trainer(net, images, np.arange(10) % 5, batch_size=4, seed=2)
    t2 = Trainer(net, images, np.arange(10) % 5, batch_size=4, seed=2)
    for it in (0, 1, 2, 7, 3):
        a, b = t1.batch(it), t2.batch(it)
        assert a[0].tobytes() == b[0].tobytes() and np.array_equal(a[1], b[1])
    # each epoch visits every sample once
    seen = np.concatenate([t1.batch_indices(i) for i in range(5)])
    assert sorted(seen[:10]) == list(range(10)) and sorted(seen[10:]) == list(range(10))


def test_training_curves_and_determinism(small_corpus, caplog):
    root, _ = small_corpus
    with caplog.at_level(logging.INFO):
        rows = run_training(small_cfg(root, "a"))
    assert any("lr=0.001" in r.message and "weight_decay=0.0005" in r.message for r in caplog.records)
    assert [r[0] for r in rows] == [1, 2, 3, 4, 5, 6]
    assert [r[0] for r in rows if r[3] is not None] == [3, 6]
    assert (root / "a.csv").read_text().splitlines()[0] == ",".join(CURVE_HEADER)
    assert read_curves(root / "a.csv") == rows
    run_training(small_cfg(root, "b"))
    assert (root / "a.csv").read_bytes() == (root / "b.csv").read_bytes()
    assert (root / "a.ckpt").read_bytes() == (root / "b.ckpt").read_bytes()


def test_final_iteration_is_evaluated(small_corpus):
    root, _ = small_corpus
    rows = run_training(small_cfg(root, "odd", iterations=5, eval_every=2))
    assert [r[0] for r in rows if r[3] is not None] == [2, 4, 5]


def test_resume_matches_uninterrupted(small_corpus):
    root, _ = small_corpus
    run_training(small_cfg(root, "full"))
    run_training(small_cfg(root, "part", iterations=3))
    run_training(small_cfg(root, "part"), resume=True)
    assert (root / "full.ckpt").read_bytes() == (root / "part.ckpt").read_bytes()
    assert (root / "full.csv").read_bytes() == (root / "part.csv").read_bytes()


def test_zero_iterations_writes_fresh_network(small_corpus):
    root, _ = small_corpus
    cfg = small_cfg(root, "zero", iterations=0)
    assert run_training(cfg) == []
    ckpt = checkpoint_load(cfg.checkpoint)
    fresh = build_network(spec_preset("desk"), cfg.seed)
    assert all(np.array_equal(ckpt.params[p.name], p.value) for p in fresh.params)
    assert ckpt.iteration == 0
    assert (root / "zero.csv").read_text() == ",".join(CURVE_HEADER) + "\n"


def test_evaluate_checkpoint_report(small_corpus):
    root, _ = small_corpus
    cfg = small_cfg(root, "rep")
    run_training(cfg)
    a = evaluate_checkpoint(cfg.checkpoint, cfg.manifest, "test")
    b = evaluate_checkpoint(cfg.checkpoint, cfg.manifest, "test")
    assert a == b
    assert a["n_samples"] == 10 and np.array(a["confusion"]).shape == (5, 5)


def test_empty_split(tmp_path, small_corpus):
    root, manifest = small_corpus
    only_train = [e for e in manifest.entries if e.split == "train"]
    text = "".join(json.dumps(e.__dict__, sort_keys=True) + "\n" for e in only_train)
    path = root / "samples" / "train_only.jsonl"
    path.write_text(text)
    run_training(small_cfg(root, "t"))
    with pytest.raises(EmptySplit):
        evaluate_checkpoint(root / "t.ckpt", path, "test")


def test_augment_config_from_train_config():
    cfg = TrainConfig(augment=AugmentConfig.for_input(64, mirror_v_prob=0.0).to_dict())
    assert cfg.augment_config(64).mirror_v_prob == 0.0
    assert TrainConfig().augment_config(64) == AugmentConfig.for_input(64)
