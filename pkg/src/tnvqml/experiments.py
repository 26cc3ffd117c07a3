"""Study runners shared by the command line and the acceptance suite."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .analysis import (
    function_distance,
    gram_matrix,
    page_curve,
    renyi2_from_values,
    summarize,
)
from .circuits.encoding import EncodingMap
from .circuits.spec import CircuitSpec
from .coeffs import CoefficientMps, folded_size, to_coefficient_mps
from .datakit import (
    FMNIST_VQML_LAYERS,
    fmnist_kernel_task,
    fmnist_mps_task,
    step_dataset,
)
from .learn import (
    EncodingCircuit,
    TrainConfig,
    cmps_eval_batch,
    feature_batch,
    init_cmps,
    kernel_ridge,
    predict,
    product_kernel_matrix,
    quantum_kernel_matrix,
    train_cmps,
    train_vqml,
)
from .tensor_core import RANK_TOL, Mps, mps_singular_spectrum


class ResourceLimit(RuntimeError):
    """A requested size exceeds a configured cap."""


@dataclass(frozen=True)
class ModelPoint:
    """One random circuit: ``n_q`` qubits, per-block layer counts, noise rate and seed."""

    n_q: int
    layers: tuple[int, ...]
    gamma: float = 0.0
    seed: int = 0

    @property
    def n_sites(self) -> int:
        return self.n_q * (len(self.layers) - 1)

    def spec(self) -> CircuitSpec:
        # the coefficients do not depend on the pre-processing functions
        return CircuitSpec.random(
            self.n_q, self.layers, seed=self.seed, encoding=EncodingMap.naive(self.n_sites), gamma=self.gamma
        )

    def describe(self) -> dict:
        d = asdict(self)
        d["layers"] = list(self.layers)
        d["N"] = self.n_sites
        return d


def parallel_points(ns: Iterable[int], layers: Iterable, gammas: Iterable[float], seeds: Iterable[int]) -> list[ModelPoint]:
    """Simple parallel models; an integer layer entry means ``L1 = L2 = L``."""
    out = []
    for n in ns:
        for lay in layers:
            lt = (int(lay), int(lay)) if np.isscalar(lay) else tuple(int(v) for v in lay)
            for g in gammas:
                out.extend(ModelPoint(int(n), lt, float(g), int(s)) for s in seeds)
    return out


def reuploading_points(n_q: int, reps: int, block_layers: Iterable[int], gammas, seeds) -> list[ModelPoint]:
    """Re-uploading models with ``reps`` encoding layers and equal trainable blocks."""
    return [
        ModelPoint(n_q, (int(b),) * (reps + 1), float(g), int(s))
        for b in block_layers
        for g in gammas
        for s in seeds
    ]


def _map(fn: Callable, items: Sequence, jobs: int) -> list:
    """Ordered map, in worker processes when ``jobs > 1``."""
    if jobs <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def _check_size(p: ModelPoint, max_sites: int) -> None:
    n = folded_size(p.spec())
    if n > max_sites:
        raise ResourceLimit(f"model folds to {n} sites; the configured cap is {max_sites}")


# ---------------------------------------------------------------------------
# entanglement and truncation


def coefficient_for(p: ModelPoint) -> CoefficientMps:
    return to_coefficient_mps(p.spec())


def entropy_task(p: ModelPoint) -> dict:
    """Rényi-2 profile and exact maximal bond dimension of one model."""
    spectra = mps_singular_spectrum(coefficient_for(p).mps)
    s2 = [renyi2_from_values(s) for s in spectra.values]
    return {**p.describe(), "S2": s2, "S2max": max(s2), "max_rank": spectra.max_rank(RANK_TOL)}


def truncation_task(args: tuple[ModelPoint, tuple[int, ...], bool]) -> dict:
    p, ds, normalize = args
    c = coefficient_for(p)
    m = c.mps.scaled(1.0 / c.norm) if normalize and c.norm > 0 else c.mps
    spectrum = mps_singular_spectrum(m)
    eps = {int(d): float(sum(np.sum(s[d:] ** 2) for s in spectrum.values)) for d in ds}
    return {**p.describe(), "epsilon": eps, "max_rank": spectrum.max_rank(RANK_TOL)}


def _group_key(r: dict) -> tuple:
    return (r["N"], r["n_q"], tuple(r["layers"]), r["gamma"])


def run_entropy(points: Sequence[ModelPoint], jobs: int = 1, experiment_id: str = "entropy", max_sites: int = 12):
    """Per-seed profiles plus per-configuration means with 0.95 intervals and the Page reference."""
    for p in points:
        _check_size(p, max_sites)
    records = _map(entropy_task, list(points), jobs)
    rows = [
        {"experiment_id": experiment_id, "N": r["N"], "n_q": r["n_q"], "L": "x".join(map(str, r["layers"])),
         "gamma": r["gamma"], "seed": r["seed"], "k": k, "S2": s}
        for r in records
        for k, s in enumerate(r["S2"], start=1)
    ]
    groups: dict[tuple, list[dict]] = {}
    for r in records:
        groups.setdefault(_group_key(r), []).append(r)
    summary = []
    for (n, n_q, layers, gamma), rs in groups.items():
        prof = np.array([r["S2"] for r in rs])
        summary.append(
            {
                "experiment_id": experiment_id, "N": n, "n_q": n_q, "layers": list(layers), "gamma": gamma,
                "seeds": [r["seed"] for r in rs],
                "S2max": summarize([r["S2max"] for r in rs]),
                "max_rank_mean": float(np.mean([r["max_rank"] for r in rs])),
                "S2_mean": prof.mean(axis=0).tolist(),
                "page": page_curve(n).tolist(),
            }
        )
    return rows, records, summary


def run_truncation(
    points: Sequence[ModelPoint], ds: Sequence[int] = (4, 8, 16, 32, 64), jobs: int = 1,
    experiment_id: str = "truncation", normalize: bool = False, max_sites: int = 12,
):
    """``eps(D)`` per seed and seed-averaged per configuration."""
    for p in points:
        _check_size(p, max_sites)
    ds = tuple(int(d) for d in ds)
    records = _map(truncation_task, [(p, ds, normalize) for p in points], jobs)
    rows = [
        {"experiment_id": experiment_id, "N": r["N"], "L": "x".join(map(str, r["layers"])), "gamma": r["gamma"],
         "seed": r["seed"], "D": d, "epsilon": e}
        for r in records
        for d, e in r["epsilon"].items()
    ]
    groups: dict[tuple, list[dict]] = {}
    for r in records:
        groups.setdefault(_group_key(r), []).append(r)
    summary = [
        {"experiment_id": experiment_id, "N": n, "layers": list(layers), "gamma": gamma,
         "epsilon_mean": {d: float(np.mean([r["epsilon"][d] for r in rs])) for d in ds},
         "normalized": normalize}
        for (n, _, layers, gamma), rs in groups.items()
    ]
    return rows, records, summary


# ---------------------------------------------------------------------------
# regression


def make_encoding(kind: str, n: int) -> EncodingMap:
    if kind == "naive":
        return EncodingMap.naive(n)
    if kind == "exponential":
        return EncodingMap.exponential(n)
    if kind == "iqp1d":
        return EncodingMap.iqp1d(n)
    raise ValueError(f"unknown encoding {kind!r}")


def coefficient_fit(
    n: int, encoding: str = "exponential", layers: int = 10, gamma: float = 0.0, m_train: int = 500,
    chi: int = 4, seed: int = 0, cfg: TrainConfig = TrainConfig(),
) -> dict:
    """Fit a cMPS to a unit-norm circuit model, tracking ``||Delta||^2`` and ``D`` every epoch.

    Training inputs are ``m_train`` points linearly spaced on ``[-pi, pi]``.
    """
    enc = make_encoding(encoding, n)
    spec = CircuitSpec.random(n, layers, seed=seed, encoding=enc, gamma=gamma)
    target = to_coefficient_mps(spec).normalized_copy()
    xs = np.linspace(-np.pi, np.pi, m_train)
    feats = feature_batch(enc, xs)
    y = cmps_eval_batch(target, feats)
    g = gram_matrix(enc) if enc.frequencies() is not None else gram_matrix(enc, mode="quadrature")
    fro = g.frobenius()
    dist, coef = [], []

    def track(_, cores):
        fd = function_distance(target, Mps(tuple(cores)), g, fro)
        dist.append(fd.d)
        coef.append(fd.coeff_dist)

    c0 = init_cmps(n, chi, seed=seed, feats=feats)
    _, trace = train_cmps(c0, feats, y, cfg, callback=track)
    rows = [
        {"epoch": e, "train_mse": trace.train_mse[e], "coeff_dist": coef[e], "D": dist[e]}
        for e in range(len(dist))
    ]
    return {
        "rows": rows,
        "summary": {"N": n, "encoding": encoding, "L": layers, "gamma": gamma, "m_train": m_train, "chi": chi,
                    "seed": seed, "pearson": pearson(coef, dist), "final_D": dist[-1], "final_coeff_dist": coef[-1],
                    "gram_frobenius": fro},
    }


def step_task(
    k: int = 3, n: int = 8, chi: int = 8, lams: Sequence[float] = (1e-3, 1e-4, 1e-5, 1e-6, 0.0), seed: int = 0,
    cfg: TrainConfig = TrainConfig(), vqml_layers: int | None = None,
) -> dict:
    """Step-function regression: cMPS over a ``lam`` grid and optionally a VQML model.

    The reported cMPS result is the one with the lowest final test loss.
    """
    ds = step_dataset(seed=seed)
    (xt, yt), (xe, ye) = ds.train(), ds.test()
    enc = EncodingMap.exponential(n, float(k)) if k != 1 else EncodingMap.naive(n)
    ft, fe = feature_batch(enc, xt), feature_batch(enc, xe)
    rows = []
    for lam in lams:
        c0 = init_cmps(n, chi, seed=seed, feats=ft)
        _, tr = train_cmps(c0, ft, yt, TrainConfig(**{**cfg.to_dict(), "lam": float(lam)}), test=(fe, ye))
        rows.append({"model": "cmps", "chi": chi, "L": "", "lam": lam, "seed": seed,
                     "train_mse": tr.train_mse[-1], "test_mse": tr.test_mse[-1]})
    best = min((r for r in rows), key=lambda r: r["test_mse"])
    out = {"rows": rows, "best_cmps": best, "k": k, "N": n}
    if vqml_layers:
        spec = CircuitSpec.random(n, vqml_layers, seed=seed, encoding=enc)
        _, tr = train_vqml(spec, xt, yt, TrainConfig(**{**cfg.to_dict(), "lam": 0.0}), test=(xe, ye))
        vq = {"model": "vqml", "chi": "", "L": vqml_layers, "lam": 0.0, "seed": seed,
              "train_mse": tr.train_mse[-1], "test_mse": tr.test_mse[-1], "n_params": spec.n_params}
        rows.append(vq)
        out["vqml"] = vq
    return out


def fmnist_regression(n: int, chi: int = 3, seed: int = 0, cfg: TrainConfig = TrainConfig(), source=None,
                      vqml: bool = False) -> dict:
    """cMPS (and optionally VQML) on PCA inputs relabeled by a ``chi = 3`` MPS."""
    ds = fmnist_mps_task(n, seed, source)
    (xt, yt), (xe, ye) = ds.train(), ds.test()
    enc = EncodingMap.elementwise(n)
    ft, fe = feature_batch(enc, xt), feature_batch(enc, xe)
    _, tr = train_cmps(init_cmps(n, chi, seed=seed, feats=ft), ft, yt, cfg, test=(fe, ye))
    rows = [{"model": "cmps", "n": n, "chi": chi, "L": "", "seed": seed,
             "train_mse": tr.train_mse[-1], "test_mse": tr.test_mse[-1]}]
    if vqml:
        layers = FMNIST_VQML_LAYERS.get(n, 4)
        spec = CircuitSpec.random(n, layers, seed=seed, encoding=enc)
        _, tv = train_vqml(spec, xt, yt, cfg, test=(xe, ye))
        rows.append({"model": "vqml", "n": n, "chi": "", "L": layers, "seed": seed,
                     "train_mse": tv.train_mse[-1], "test_mse": tv.test_mse[-1]})
    return {"rows": rows, "provenance": ds.provenance}


def kernel_task(n: int, lam: float = 0.01, seed: int = 0, source=None, max_qubits: int = 12) -> dict:
    """Quantum and product kernels on circuit-relabeled PCA data; ridge solutions and diagnostics."""
    if n > max_qubits:
        raise ResourceLimit(f"kernel task with {n} qubits exceeds the cap of {max_qubits}")
    ds = fmnist_kernel_task(n, seed, source)
    (xt, yt), (xe, ye) = ds.train(), ds.test()
    circuit = EncodingCircuit("iqp")
    enc = circuit.encoding_map(n)
    kernels = {
        "quantum": (quantum_kernel_matrix(circuit, xt), quantum_kernel_matrix(circuit, xe, xt)),
        "product": (product_kernel_matrix(enc, xt), product_kernel_matrix(enc, xe, xt)),
    }
    rows = []
    for name, (ktr, kte) in kernels.items():
        sol = kernel_ridge(ktr, yt, lam, kernel=name, train_inputs=xt)
        rows.append({
            "n": n, "kernel": name, "lam": lam, "seed": seed,
            "train_mse": float(np.mean((predict(sol, ktr) - yt) ** 2)),
            "test_mse": float(np.mean((predict(sol, kte) - ye) ** 2)),
            "min_eig": float(np.linalg.eigvalsh(ktr).min()),
            "max_diag_dev": float(np.abs(np.diag(ktr) - 1.0).max()),
        })
    return {"rows": rows, "provenance": ds.provenance}


def pearson(a: Sequence[float], b: Sequence[float]) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    if a.std() == 0 or b.std() == 0:
        return math.nan
    return float(np.corrcoef(a, b)[0, 1])
