"""Datasets: step function, IDX ingestion, PCA, and relabeling with target models."""

from __future__ import annotations

import csv
import gzip
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .circuits import dense
from .circuits.encoding import EncodingMap
from .circuits.spec import CircuitSpec
from .coeffs import CoefficientMps
from .learn import EncodingCircuit, cmps_eval_batch, feature_batch, init_cmps

# layer counts of the circuit relabeling the kernel task, per n
KERNEL_TARGET_LAYERS = {3: 10, 4: 7, 5: 6, 6: 5, 7: 4, 8: 4, 9: 3}
# per-block layer counts of VQML models on the MPS-relabeled task, per n
FMNIST_VQML_LAYERS = {3: 2, 4: 3, 5: 3, 6: 3, 7: 4, 8: 4, 9: 4}

FMNIST_FILES = {
    "train_images": "train-images-idx3-ubyte.gz",
    "train_labels": "train-labels-idx1-ubyte.gz",
    "test_images": "t10k-images-idx3-ubyte.gz",
    "test_labels": "t10k-labels-idx1-ubyte.gz",
}
FMNIST_MD5 = {
    "train-images-idx3-ubyte.gz": "8d4fb7e6c68d591d4c3dfef9ec88bf0d",
    "train-labels-idx1-ubyte.gz": "25c81989df183df01b3e8a0aad5dffbe",
    "t10k-images-idx3-ubyte.gz": "bef4ecab320f06d8554ea6380940ec79",
    "t10k-labels-idx1-ubyte.gz": "bb300cfdad3c16e7a12a480ee83cd310",
}

IDX_IMAGES = 0x00000803
IDX_LABELS = 0x00000801


class DatasetUnavailable(FileNotFoundError):
    """Requested data files are missing or fail verification."""


@dataclass(frozen=True, eq=False)
class Dataset:
    """Inputs, targets, a disjoint train/test split and a provenance record."""

    inputs: np.ndarray
    targets: np.ndarray
    train_idx: np.ndarray
    test_idx: np.ndarray
    provenance: dict = field(default_factory=dict)
    scale: float = 1.0

    def __post_init__(self):
        x = np.asarray(self.inputs, dtype=float)
        if x.ndim == 1:
            x = x[:, None]
        y = np.asarray(self.targets, dtype=float).reshape(-1)
        tr = np.asarray(self.train_idx, dtype=np.int64)
        te = np.asarray(self.test_idx, dtype=np.int64)
        if x.shape[0] != y.size:
            raise ValueError("inputs and targets differ in length")
        if not np.all(np.isfinite(y)):
            raise ValueError("targets must be finite")
        if np.intersect1d(tr, te).size:
            raise ValueError("train and test splits overlap")
        for name, v in (("inputs", x), ("targets", y), ("train_idx", tr), ("test_idx", te)):
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @property
    def raw_targets(self) -> np.ndarray:
        """Targets before normalization (``targets * scale``)."""
        return self.targets * self.scale

    def train(self) -> tuple[np.ndarray, np.ndarray]:
        return self._take(self.train_idx)

    def test(self) -> tuple[np.ndarray, np.ndarray]:
        return self._take(self.test_idx)

    def _take(self, idx) -> tuple[np.ndarray, np.ndarray]:
        x = self.inputs[idx]
        return (x[:, 0] if x.shape[1] == 1 else x), self.targets[idx]

    def to_csv(self, path) -> Path:
        """Write ``x0..x{d-1}, y, split`` rows and a JSON provenance sidecar; returns the sidecar path."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        split = np.full(self.targets.size, "", dtype=object)
        split[self.train_idx] = "train"
        split[self.test_idx] = "test"
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow([f"x{i}" for i in range(self.inputs.shape[1])] + ["y", "split"])
            for row, y, s in zip(self.inputs, self.targets, split):
                w.writerow([repr(float(v)) for v in row] + [repr(float(y)), s])
        side = path.with_suffix(".json")
        side.write_text(json.dumps({"provenance": self.provenance, "scale": self.scale}, indent=2, sort_keys=True))
        return side


def _split(m: int, n_train: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    if not 0 < n_train <= m:
        raise ValueError(f"cannot take {n_train} training points out of {m}")
    perm = rng.permutation(m)
    return np.sort(perm[:n_train]), np.sort(perm[n_train:])


# ---------------------------------------------------------------------------
# step function


def step_function(x) -> np.ndarray:
    """``1/2`` for ``x > 0``, ``-1/2`` otherwise."""
    return np.where(np.asarray(x, dtype=float) > 0, 0.5, -0.5)


def step_dataset(m: int = 500, seed: int = 0, n_train: int = 400) -> Dataset:
    """``m`` points linearly spaced on ``[-pi, pi]`` with a seeded train/test split."""
    x = np.linspace(-np.pi, np.pi, m)
    tr, te = _split(m, n_train, np.random.default_rng(seed))
    prov = {"generator": "step", "m": m, "seed": seed, "n_train": n_train}
    return Dataset(x, step_function(x), tr, te, prov)


# ---------------------------------------------------------------------------
# IDX files


def _open(path: Path):
    return gzip.open(path, "rb") if path.suffix == ".gz" else path.open("rb")


def load_idx(path) -> np.ndarray:
    """Read an unsigned-byte IDX file (images ``0x803`` or labels ``0x801``)."""
    path = Path(path)
    if not path.exists():
        raise DatasetUnavailable(f"missing IDX file {path}")
    with _open(path) as fh:
        data = fh.read()
    if len(data) < 4:
        raise ValueError(f"{path}: truncated header")
    magic = int.from_bytes(data[:4], "big")
    if magic not in (IDX_IMAGES, IDX_LABELS):
        raise ValueError(f"{path}: bad IDX magic number 0x{magic:08x}")
    ndim = magic & 0xFF
    head = 4 + 4 * ndim
    if len(data) < head:
        raise ValueError(f"{path}: truncated dimension fields")
    dims = [int.from_bytes(data[4 + 4 * i : 8 + 4 * i], "big") for i in range(ndim)]
    size = 1
    for d in dims:
        size *= d
        if size > 1 << 34:
            raise ValueError(f"{path}: dimension overflow {dims}")
    if len(data) - head < size:
        raise ValueError(f"{path}: truncated payload ({len(data) - head} of {size} bytes)")
    if len(data) - head > size:
        raise ValueError(f"{path}: {len(data) - head - size} trailing bytes")
    return np.frombuffer(data, dtype=np.uint8, count=size, offset=head).reshape(dims).copy()


def write_idx(path, array: np.ndarray) -> None:
    """Write an unsigned-byte IDX file (gzip-compressed when the name ends in ``.gz``)."""
    a = np.asarray(array)
    if a.dtype != np.uint8:
        raise ValueError("IDX writer supports uint8 data only")
    magic = 0x00000800 | a.ndim
    payload = magic.to_bytes(4, "big") + b"".join(int(d).to_bytes(4, "big") for d in a.shape) + a.tobytes()
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "wb") as fh:
        fh.write(payload)


def md5sum(path) -> str:
    h = hashlib.md5()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def verify_fmnist(directory) -> dict[str, Path]:
    """Check the four f-MNIST archives in ``directory`` against known MD5 sums.

    The data are never downloaded or bundled; files must be supplied locally.
    """
    directory = Path(directory)
    out = {}
    for key, name in FMNIST_FILES.items():
        p = directory / name
        if not p.exists():
            raise DatasetUnavailable(f"missing {p}")
        if md5sum(p) != FMNIST_MD5[name]:
            raise DatasetUnavailable(f"checksum mismatch for {p}")
        out[key] = p
    return out


def synthetic_images(n_images: int, seed: int = 0, side: int = 28) -> np.ndarray:
    """Deterministic uint8 images with low-dimensional structure, an f-MNIST stand-in.

    Each image is a random mix of a few smooth templates plus pixel noise.
    """
    rng = np.random.default_rng(seed)
    yy, xx = np.mgrid[0:side, 0:side] / (side - 1)
    templates = np.stack(
        [
            np.exp(-((xx - cx) ** 2 + (yy - cy) ** 2) / (2 * w**2))
            for cx, cy, w in rng.uniform([0.2, 0.2, 0.1], [0.8, 0.8, 0.35], size=(12, 3))
        ]
    )
    mix = rng.dirichlet(np.full(12, 0.5), size=n_images)
    img = np.einsum("nt,tij->nij", mix, templates)
    img = img / img.max(axis=(1, 2), keepdims=True)
    img = img + 0.05 * rng.normal(size=img.shape)
    return np.clip(np.rint(255 * img), 0, 255).astype(np.uint8)


SYNTHETIC = "synthetic"


def load_images(source: str | os.PathLike | None = None, seed: int = 0, n_synthetic: int = 2000) -> tuple[np.ndarray, dict]:
    """Training images from an f-MNIST directory, or the synthetic stand-in.

    ``source`` defaults to the ``FMNIST_DIR`` environment variable. The
    synthetic images are used when ``source`` is :data:`SYNTHETIC` or no
    directory is configured; the provenance records which one was used.
    """
    directory = os.environ.get("FMNIST_DIR") if source is None else source
    if directory and directory != SYNTHETIC:
        files = verify_fmnist(directory)
        return load_idx(files["train_images"]), {"source": "fmnist", "path": str(directory)}
    return synthetic_images(n_synthetic, seed), {"source": SYNTHETIC, "seed": seed, "n_images": n_synthetic}


# ---------------------------------------------------------------------------
# PCA


@dataclass(frozen=True, eq=False)
class PcaModel:
    """Mean, orthonormal principal directions (columns) and explained variances."""

    mean: np.ndarray
    components: np.ndarray
    explained_variance: np.ndarray

    def transform(self, x: np.ndarray) -> np.ndarray:
        return (np.asarray(x, dtype=float) - self.mean) @ self.components

    def inverse_transform(self, z: np.ndarray) -> np.ndarray:
        return np.asarray(z, dtype=float) @ self.components.T + self.mean


def fit_pca(x: np.ndarray, n: int) -> PcaModel:
    """Top-``n`` principal components by SVD of the centered data."""
    x = np.asarray(x, dtype=float)
    if not 1 <= n <= min(x.shape):
        raise ValueError(f"cannot extract {n} components from data of shape {x.shape}")
    mean = x.mean(axis=0)
    _, s, vh = np.linalg.svd(x - mean, full_matrices=False)
    var = s**2 / max(x.shape[0] - 1, 1)
    return PcaModel(mean, vh[:n].T.copy(), var[:n].copy())


@dataclass(frozen=True, eq=False)
class Preprocessed:
    inputs: np.ndarray
    pca: PcaModel
    train_idx: np.ndarray
    test_idx: np.ndarray
    provenance: dict


def preprocess_fmnist(raw: np.ndarray, n: int, seed: int = 0, n_train: int = 500, n_test: int = 100) -> Preprocessed:
    """Sample ``n_train + n_test`` images, scale pixels to ``[0, 1]`` and project on ``n`` components.

    The PCA (including its centering) is fitted on the training split only.
    """
    raw = np.asarray(raw)
    flat = raw.reshape(raw.shape[0], -1).astype(float) / 255.0
    m = n_train + n_test
    if m > flat.shape[0]:
        raise ValueError(f"need {m} images, have {flat.shape[0]}")
    rng = np.random.default_rng(seed)
    pick = rng.choice(flat.shape[0], size=m, replace=False)
    x = flat[pick]
    tr, te = np.arange(n_train), np.arange(n_train, m)
    pca = fit_pca(x[tr], n)
    prov = {"pca": "fit on train split", "n": n, "seed": seed, "n_train": n_train, "n_test": n_test,
            "picked": pick.tolist()}
    return Preprocessed(pca.transform(x), pca, tr, te, prov)


# ---------------------------------------------------------------------------
# relabeling


def random_target_mps(n: int, chi: int = 3, seed: int = 0) -> CoefficientMps:
    """Random ``chi``-bond coefficient MPS used as a labeling target."""
    return init_cmps(n, chi, seed=seed)


def relabel_with_mps(
    inputs: np.ndarray,
    target: CoefficientMps,
    enc: EncodingMap | None = None,
    train_idx=None,
    test_idx=None,
    provenance: dict | None = None,
) -> Dataset:
    """Targets ``(C . T(x_i)) / K`` with ``K = max_i |C . T(x_i)|`` over all inputs."""
    x = np.asarray(inputs, dtype=float)
    x = x[:, None] if x.ndim == 1 else x
    enc = enc or EncodingMap.elementwise(x.shape[1])
    if enc.input_dim != x.shape[1] or target.n_sites != enc.n:
        raise ValueError(f"input dimension {x.shape[1]} does not match a {target.n_sites}-site target")
    raw = cmps_eval_batch(target, feature_batch(enc, x))
    k = float(np.abs(raw).max())
    if k == 0:
        raise ZeroDivisionError("target MPS vanishes on every input")
    tr = np.arange(x.shape[0]) if train_idx is None else train_idx
    te = np.array([], dtype=np.int64) if test_idx is None else test_idx
    prov = dict(provenance or {})
    prov.update({"labels": "mps", "target_origin": target.origin, "encoding": enc.to_dict()})
    return Dataset(x, raw / k, tr, te, prov, k)


def kernel_target_spec(n_q: int, layers: int | None = None, seed: int = 0) -> CircuitSpec:
    """Labeling circuit of the kernel task: the encoding circuit then ``L`` HEA layers, observable ``Z`` on qubit 0."""
    layers = KERNEL_TARGET_LAYERS.get(n_q, 3) if layers is None else layers
    theta = np.random.default_rng(seed).uniform(0.0, 2.0 * np.pi, 3 * n_q * layers)
    return CircuitSpec(n_q, (0, layers), theta, EncodingMap.elementwise(n_q), "Z" + "I" * (n_q - 1), seed=seed)


def circuit_outputs(spec: CircuitSpec, inputs: np.ndarray, circuit: EncodingCircuit = EncodingCircuit("iqp")) -> np.ndarray:
    """``<psi|O|psi>`` with ``psi = W S(x)|0>``; ``S`` is ``circuit``, ``W`` the last block of ``spec``."""
    if spec.layers[0] != 0 or spec.n_reuploads != 1:
        raise ValueError("target circuit must be a parallel spec with an empty first block")
    n = spec.n_q
    if n > dense.MAX_STATEVECTOR_QUBITS:
        raise dense.SizeLimitError(f"statevector limited to {dense.MAX_STATEVECTOR_QUBITS} qubits, got {n}")
    psi = circuit.states(inputs).reshape((-1,) + (2,) * n)
    psi = dense.apply_ops_state(psi, spec.block_ops(1, noisy=False))
    return np.real(dense._pauli_expectation_states(psi, spec.observable))


def relabel_with_circuit(
    inputs: np.ndarray,
    spec: CircuitSpec,
    train_idx,
    test_idx,
    circuit: EncodingCircuit = EncodingCircuit("iqp"),
    provenance: dict | None = None,
) -> Dataset:
    """Targets ``f(x_i) / k`` with ``k`` the standard deviation of the raw training targets."""
    x = np.asarray(inputs, dtype=float)
    if x.ndim != 2 or x.shape[1] != spec.n_q:
        raise ValueError(f"inputs must have {spec.n_q} columns")
    raw = circuit_outputs(spec, x, circuit)
    k = float(np.std(raw[np.asarray(train_idx)]))
    if k == 0:
        raise ZeroDivisionError("raw training targets are constant")
    prov = dict(provenance or {})
    prov.update({"labels": "circuit", "circuit": circuit.kind, "repetitions": circuit.repetitions,
                 "spec": spec.to_dict()})
    return Dataset(x, raw / k, train_idx, test_idx, prov, k)


def fmnist_mps_task(n: int, seed: int = 0, source=None, chi: int = 3) -> Dataset:
    """PCA-reduced images relabeled by a random ``chi = 3`` MPS (elementwise encoding)."""
    raw, src = load_images(source, seed)
    pre = preprocess_fmnist(raw, n, seed)
    target = random_target_mps(n, chi, seed)
    prov = {"generator": "fmnist_mps", "n": n, "seed": seed, "chi": chi, "images": src, **pre.provenance}
    return relabel_with_mps(pre.inputs, target, None, pre.train_idx, pre.test_idx, prov)


def fmnist_kernel_task(n: int, seed: int = 0, source=None, layers: int | None = None) -> Dataset:
    """PCA-reduced images relabeled by the IQP-then-HEA circuit."""
    raw, src = load_images(source, seed)
    pre = preprocess_fmnist(raw, n, seed)
    spec = kernel_target_spec(n, layers, seed)
    prov = {"generator": "fmnist_kernel", "n": n, "seed": seed, "images": src, **pre.provenance}
    return relabel_with_circuit(pre.inputs, spec, pre.train_idx, pre.test_idx, provenance=prov)


def regenerate(provenance: dict, source=None) -> Dataset:
    """Rebuild a dataset from its provenance record (``source`` overrides the image directory)."""
    gen = provenance.get("generator")
    if gen == "step":
        return step_dataset(provenance["m"], provenance["seed"], provenance["n_train"])
    if gen in ("fmnist_mps", "fmnist_kernel"):
        images = provenance["images"]
        if images["source"] == SYNTHETIC:
            source = SYNTHETIC
        else:
            source = source or images["path"]
        builder = fmnist_mps_task if gen == "fmnist_mps" else fmnist_kernel_task
        return builder(provenance["n"], provenance["seed"], source)
    raise ValueError(f"unknown generator {gen!r}")
