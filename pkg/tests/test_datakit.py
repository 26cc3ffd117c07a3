import gzip
import json

import numpy as np
import pytest

from tnvqml.circuits import CircuitSpec, EncodingMap, build_trainable_mpo, pauli_string
from tnvqml.coeffs import sparse_pauli_coefficient_mps
from tnvqml.datakit import (
    SYNTHETIC,
    Dataset,
    DatasetUnavailable,
    circuit_outputs,
    fit_pca,
    fmnist_kernel_task,
    fmnist_mps_task,
    kernel_target_spec,
    load_idx,
    load_images,
    md5sum,
    preprocess_fmnist,
    random_target_mps,
    regenerate,
    relabel_with_circuit,
    relabel_with_mps,
    step_dataset,
    step_function,
    synthetic_images,
    verify_fmnist,
    write_idx,
)
from tnvqml.learn import EncodingCircuit, feature_map


# step task ------------------------------------------------------------------------


def test_step_function_values():
    assert step_function(0.5) == 0.5
    assert step_function(0.0) == -0.5
    assert step_function(-1.0) == -0.5


def test_step_dataset_split():
    d = step_dataset(500, seed=3)
    assert d.train_idx.size == 400 and d.test_idx.size == 100
    assert np.intersect1d(d.train_idx, d.test_idx).size == 0
    assert np.union1d(d.train_idx, d.test_idx).size == 500
    np.testing.assert_allclose(d.inputs[:, 0], np.linspace(-np.pi, np.pi, 500))
    x, y = d.train()
    assert x.ndim == 1 and np.all(y == step_function(x))


def test_step_dataset_deterministic():
    a, b = step_dataset(seed=1), step_dataset(seed=1)
    assert a.train_idx.tobytes() == b.train_idx.tobytes()
    assert not np.array_equal(a.train_idx, step_dataset(seed=2).train_idx)


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.zeros(3), np.zeros(2), [0], [1])
    with pytest.raises(ValueError):
        Dataset(np.zeros(2), [0.0, np.nan], [0], [1])
    with pytest.raises(ValueError):
        Dataset(np.zeros(2), np.zeros(2), [0, 1], [1])


def test_dataset_is_read_only():
    d = step_dataset(20, n_train=10)
    with pytest.raises(ValueError):
        d.targets[0] = 1.0


def test_dataset_csv_export(tmp_path):
    d = step_dataset(10, n_train=6)
    side = d.to_csv(tmp_path / "step.csv")
    lines = (tmp_path / "step.csv").read_text().splitlines()
    assert lines[0] == "x0,y,split" and len(lines) == 11
    assert sum(line.endswith(",train") for line in lines) == 6
    assert json.loads(side.read_text())["provenance"]["generator"] == "step"


# IDX files ------------------------------------------------------------------------


def test_idx_round_trip(tmp_path):
    imgs = np.arange(16, dtype=np.uint8).reshape(4, 2, 2)
    write_idx(tmp_path / "a.idx", imgs)
    raw = (tmp_path / "a.idx").read_bytes()
    assert raw[:4] == bytes([0, 0, 8, 3])
    assert raw[4:16] == bytes([0, 0, 0, 4, 0, 0, 0, 2, 0, 0, 0, 2])
    np.testing.assert_array_equal(load_idx(tmp_path / "a.idx"), imgs)
    write_idx(tmp_path / "l.idx.gz", np.array([1, 2, 3], dtype=np.uint8))
    np.testing.assert_array_equal(load_idx(tmp_path / "l.idx.gz"), [1, 2, 3])


@pytest.mark.parametrize(
    "payload,msg",
    [
        (bytes(4) + bytes(8), "magic"),
        (b"\x00\x00", "truncated header"),
        (bytes([0, 0, 8, 3, 0, 0, 0, 4]), "truncated dimension"),
        (bytes([0, 0, 8, 1, 0, 0, 0, 5, 1, 2]), "truncated payload"),
        (bytes([0, 0, 8, 1, 0, 0, 0, 1, 1, 2]), "trailing"),
        (bytes([0, 0, 8, 3]) + bytes([255] * 12), "overflow"),
    ],
)
def test_idx_validation(tmp_path, payload, msg):
    p = tmp_path / "bad.idx"
    p.write_bytes(payload)
    with pytest.raises(ValueError, match=msg):
        load_idx(p)


def test_idx_missing_file(tmp_path):
    with pytest.raises(DatasetUnavailable):
        load_idx(tmp_path / "nope.idx")


def test_verify_fmnist_reports_missing_and_bad(tmp_path):
    with pytest.raises(DatasetUnavailable, match="missing"):
        verify_fmnist(tmp_path)
    from tnvqml.datakit import FMNIST_FILES

    for name in FMNIST_FILES.values():
        with gzip.open(tmp_path / name, "wb") as fh:
            fh.write(b"not the data")
    with pytest.raises(DatasetUnavailable, match="checksum"):
        verify_fmnist(tmp_path)
    assert len(md5sum(tmp_path / name)) == 32


def test_load_images_synthetic_fallback(monkeypatch):
    monkeypatch.delenv("FMNIST_DIR", raising=False)
    imgs, prov = load_images(None, seed=0, n_synthetic=50)
    assert imgs.shape == (50, 28, 28) and imgs.dtype == np.uint8
    assert prov["source"] == SYNTHETIC
    np.testing.assert_array_equal(imgs, synthetic_images(50, 0))


# PCA -------------------------------------------------------------------------------


def test_pca_line_captures_variance(rng):
    t = rng.normal(size=200)
    x = np.stack([t, 2 * t + 1], axis=1)
    pca = fit_pca(x, 1)
    assert pca.explained_variance[0] / np.var(x, axis=0, ddof=1).sum() >= 0.99999


def test_pca_orthonormal_and_descending(rng):
    x = rng.normal(size=(100, 8)) @ rng.normal(size=(8, 8))
    pca = fit_pca(x, 5)
    np.testing.assert_allclose(pca.components.T @ pca.components, np.eye(5), atol=1e-10)
    assert np.all(np.diff(pca.explained_variance) <= 0)


def test_pca_reconstruction_bound(rng):
    x = rng.normal(size=(300, 6)) * np.array([5, 3, 2, 1, 0.5, 0.1])
    full = fit_pca(x, 6)
    pca = fit_pca(x, 3)
    err = np.sum((pca.inverse_transform(pca.transform(x)) - x) ** 2) / (x.shape[0] - 1)
    assert err <= full.explained_variance[3:].sum() * (1 + 1e-10)


def test_pca_rejects_bad_n(rng):
    with pytest.raises(ValueError):
        fit_pca(rng.normal(size=(5, 3)), 4)


def test_preprocess_fits_on_train_only():
    raw = synthetic_images(200, seed=1)
    pre = preprocess_fmnist(raw, 4, seed=0, n_train=60, n_test=20)
    assert pre.inputs.shape == (80, 4)
    np.testing.assert_allclose(pre.inputs[pre.train_idx].mean(axis=0), 0, atol=1e-12)
    picked = raw[pre.provenance["picked"]].reshape(80, -1) / 255.0
    np.testing.assert_allclose(pre.pca.mean, picked[:60].mean(axis=0))
    assert picked.min() >= 0 and picked.max() <= 1


# relabeling ---------------------------------------------------------------------------


def test_relabel_constant_target(rng):
    c = sparse_pauli_coefficient_mps([(0, 0, 0)], [1 / 8])
    d = relabel_with_mps(rng.normal(size=(10, 3)), c)
    np.testing.assert_allclose(d.raw_targets, 1.0)
    np.testing.assert_allclose(d.targets, 1.0)


def test_relabel_mps_matches_dense(rng):
    target = random_target_mps(3, 3, seed=4)
    x = rng.uniform(-2, 2, (30, 3))
    d = relabel_with_mps(x, target)
    vec = target.to_dense()
    raw = np.array([vec @ feature_map(EncodingMap.elementwise(3), xi).to_dense() for xi in x])
    np.testing.assert_allclose(d.raw_targets, raw, atol=1e-12)
    assert np.abs(d.targets).max() == pytest.approx(1.0)
    assert d.scale == pytest.approx(np.abs(raw).max())


def test_relabel_mps_dimension_mismatch(rng):
    with pytest.raises(ValueError):
        relabel_with_mps(rng.normal(size=(5, 2)), random_target_mps(3))


def test_circuit_zero_parameters():
    spec = CircuitSpec(3, (0, 1), np.zeros(9), EncodingMap.elementwise(3), "ZII")
    # H twice cancels at x = 0, the CNOT staircase leaves |000>
    assert circuit_outputs(spec, np.zeros((1, 3)))[0] == pytest.approx(1.0)


def test_circuit_outputs_match_dense_oracle(rng):
    spec = kernel_target_spec(3, layers=2, seed=1)
    x = rng.uniform(-1, 1, (5, 3))
    psi = EncodingCircuit("iqp").states(x)
    w = build_trainable_mpo(3, 2, spec.block_theta(1)).to_dense()
    out = psi @ w.T
    ref = np.real(np.einsum("bi,ij,bj->b", out.conj(), pauli_string("ZII"), out))
    np.testing.assert_allclose(circuit_outputs(spec, x), ref, atol=1e-12)


def test_kernel_target_parameter_count():
    assert kernel_target_spec(3).n_params == 90
    assert kernel_target_spec(3).observable == "ZII"


def test_relabel_circuit_std_normalization(rng):
    x = rng.uniform(-1, 1, (40, 3))
    d = relabel_with_circuit(x, kernel_target_spec(3, seed=2), np.arange(30), np.arange(30, 40))
    assert np.std(d.train()[1]) == pytest.approx(1.0, abs=1e-10)


def test_relabel_circuit_shape_check(rng):
    with pytest.raises(ValueError):
        relabel_with_circuit(rng.normal(size=(4, 2)), kernel_target_spec(3), [0], [1])


# tasks and provenance --------------------------------------------------------------------


def test_fmnist_tasks_regenerate_bit_exact(monkeypatch):
    monkeypatch.delenv("FMNIST_DIR", raising=False)
    for d in (fmnist_mps_task(3, seed=1), fmnist_kernel_task(3, seed=1), step_dataset(seed=5)):
        r = regenerate(json.loads(json.dumps(d.provenance)))
        assert r.inputs.tobytes() == d.inputs.tobytes()
        assert r.targets.tobytes() == d.targets.tobytes()
        assert r.train_idx.tobytes() == d.train_idx.tobytes()


def test_fmnist_task_sizes(monkeypatch):
    monkeypatch.delenv("FMNIST_DIR", raising=False)
    d = fmnist_mps_task(4, seed=0)
    assert d.inputs.shape == (600, 4)
    assert d.train_idx.size == 500 and d.test_idx.size == 100
    assert d.provenance["images"]["source"] == SYNTHETIC


def test_regenerate_unknown():
    with pytest.raises(ValueError):
        regenerate({"generator": "mystery"})
