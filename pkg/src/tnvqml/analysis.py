"""Entanglement profiles, truncation errors, Gram matrices and function distances."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .circuits.encoding import EncodingMap
from .coeffs import CoefficientMps
from .learn import cmps_eval_batch, feature_batch
from .tensor_core import Mps, mps_inner, mps_singular_spectrum

LOG2_3 = math.log2(3)

# ---------------------------------------------------------------------------
# entropy


@dataclass(frozen=True)
class EntropyProfile:
    """Rényi-2 entropies of every cut ``k = 1..N-1`` from per-cut normalized spectra."""

    s2: np.ndarray
    normalization: str = "per-cut normalized spectrum"

    @property
    def n_sites(self) -> int:
        return self.s2.size + 1

    @property
    def s2_max(self) -> float:
        return float(self.s2.max()) if self.s2.size else 0.0


def _as_mps(c) -> Mps:
    return c.mps if isinstance(c, CoefficientMps) else c


def renyi2_from_values(s: np.ndarray) -> float:
    """``-log2 sum p_i^2`` with ``p_i = s_i^2 / sum_j s_j^2``."""
    w = np.asarray(s, dtype=float) ** 2
    total = w.sum()
    if total <= 0:
        raise ZeroDivisionError("zero spectrum")
    p = w / total
    return float(max(0.0, -math.log2(float(np.sum(p * p)))))


def renyi2_profile(c) -> EntropyProfile:
    """Per-cut Rényi-2 entropies of a coefficient MPS (scale invariant)."""
    m = _as_mps(c)
    if m.norm() == 0:
        raise ZeroDivisionError("entropy of a zero-norm MPS is undefined")
    spec = mps_singular_spectrum(m)
    return EntropyProfile(np.array([renyi2_from_values(s) for s in spec.values]))


def page_reference(n: int, k: int, local_dim: int = 3) -> float:
    """``-log2`` of the Haar-average purity of a ``(d^k, d^(N-k))`` bipartition."""
    if not 1 <= k < n:
        raise ValueError(f"cut {k} outside [1, {n - 1}]")
    da, db = float(local_dim) ** k, float(local_dim) ** (n - k)
    return -math.log2((da + db) / (da * db + 1.0))


def page_curve(n: int, local_dim: int = 3) -> np.ndarray:
    return np.array([page_reference(n, k, local_dim) for k in range(1, n)])


def haar_purity_samples(da: int, db: int, samples: int, seed: int) -> np.ndarray:
    """Purities of the ``A`` marginal of Haar-random pure states on ``da * db``."""
    rng = np.random.default_rng(seed)
    psi = rng.normal(size=(samples, da, db)) + 1j * rng.normal(size=(samples, da, db))
    psi /= np.linalg.norm(psi.reshape(samples, -1), axis=1)[:, None, None]
    rho = np.einsum("sab,scb->sac", psi, psi.conj())
    return np.real(np.einsum("sab,sba->s", rho, rho))


# ---------------------------------------------------------------------------
# truncation


def truncation_error_curve(c, ds: Iterable[int], normalize: bool = False) -> dict[int, float]:
    """``eps(D) = sum_k sum_{i > D} (s^k_i)^2`` from the exact spectrum of every cut.

    The raw coefficient scale is kept unless ``normalize`` is set, in which
    case the MPS is rescaled to unit norm first.
    """
    m = _as_mps(c)
    if normalize:
        nrm = m.norm()
        if nrm == 0:
            raise ZeroDivisionError("cannot normalize a zero MPS")
        m = m.scaled(1.0 / nrm)
    spectra = mps_singular_spectrum(m).values
    out = {}
    for d in ds:
        if d < 1:
            raise ValueError("D must be >= 1")
        out[int(d)] = float(sum(np.sum(s[d:] ** 2) for s in spectra))
    return out


# ---------------------------------------------------------------------------
# Gram matrices

_FOURIER = np.array(
    [
        [0.0, 1.0, 0.0],  # 1
        [0.5, 0.0, 0.5],  # cos
        [0.5j, 0.0, -0.5j],  # sin, coefficients of exp(i b x) for b = -1, 0, 1
    ],
    dtype=complex,
)


@dataclass(frozen=True)
class Domain:
    """Input domain: an interval ``[low, high]`` or a finite point set."""

    low: float = -math.pi
    high: float = math.pi
    points: np.ndarray | None = None

    @property
    def discrete(self) -> bool:
        return self.points is not None

    def describe(self) -> dict:
        if self.discrete:
            return {"type": "discrete", "size": int(len(self.points))}
        return {"type": "interval", "low": self.low, "high": self.high}

    @classmethod
    def interval(cls, low: float = -math.pi, high: float = math.pi) -> "Domain":
        if not high > low:
            raise ValueError("empty interval")
        return cls(low, high)

    @classmethod
    def finite(cls, points) -> "Domain":
        pts = np.asarray(points, dtype=float)
        if pts.shape[0] == 0:
            raise ValueError("empty point set")
        return cls(points=pts)


@dataclass(frozen=True, eq=False)
class GramMatrix:
    """``G_ij = (1/|Omega|) int T_i T_j`` held as a weighted sample rule.

    ``G = F^T W F`` with ``F`` the feature rows of ``points`` and ``W`` the
    diagonal of ``weights``. For integer-frequency encodings on
    ``[-pi, pi]`` the analytic mode uses a uniform periodic grid that
    integrates every product of features exactly; ``dense`` holds the
    closed-form matrix when it is small enough to assemble.
    """

    encoding: EncodingMap
    domain: Domain
    mode: str
    points: np.ndarray
    weights: np.ndarray
    dense: np.ndarray | None = None
    std_error: bool = False
    meta: dict = field(default_factory=dict)

    def matrix(self) -> np.ndarray:
        """The ``3^N x 3^N`` matrix (only for small ``N``)."""
        if self.dense is not None:
            return self.dense
        n = self.encoding.n
        if 3**n > 3**7:
            raise MemoryError(f"refusing to assemble a 3^{n} Gram matrix")
        f = _feature_rows(self.encoding, self.points)
        return f.T @ (self.weights[:, None] * f)

    def rank(self, tol: float = 1e-8) -> int:
        w = np.linalg.eigvalsh(self.matrix())
        return int(np.count_nonzero(w > tol * max(1.0, float(w.max()))))

    def frobenius(self) -> float:
        """``||G||_F`` via the sample-space matrix ``W^1/2 F F^T W^1/2``."""
        if self.dense is not None:
            return float(np.linalg.norm(self.dense))
        a = self.encoding.angles_batch(self.points)
        sw = np.sqrt(self.weights)
        total = 0.0
        step = max(1, 2_000_000 // max(1, a.shape[0]))
        for i in range(0, a.shape[0], step):
            block = np.ones((min(step, a.shape[0] - i), a.shape[0]))
            for s in range(a.shape[1]):
                block *= 1.0 + np.cos(a[i : i + step, s, None] - a[None, :, s])
            block *= sw[i : i + step, None] * sw[None, :]
            total += float(np.sum(block * block))
        return math.sqrt(total)


def _feature_rows(enc: EncodingMap, xs) -> np.ndarray:
    """Dense feature vectors ``T(x)`` as rows, shape ``(M, 3^N)``."""
    feats = feature_batch(enc, xs)
    out = np.ones((feats.shape[0], 1))
    for s in range(feats.shape[1]):
        out = np.einsum("mi,mj->mij", out, feats[:, s]).reshape(feats.shape[0], -1)
    return out


def _fourier_gram(freqs: np.ndarray) -> np.ndarray:
    """Closed-form ``(1/2pi) int_{-pi}^{pi} T_i T_j`` for angles ``k_a x``."""
    # rows: feature index, columns: distinct frequencies omega
    coeff = np.ones((1, 1), dtype=complex)
    omega = np.zeros(1, dtype=np.int64)
    for k in freqs:
        coeff = np.einsum("iw,tb->itwb", coeff, _FOURIER).reshape(coeff.shape[0] * 3, -1)
        omega = (omega[:, None] + int(k) * np.array([-1, 0, 1])[None, :]).reshape(-1)
        uniq, inv = np.unique(omega, return_inverse=True)
        agg = np.zeros((coeff.shape[0], uniq.size), dtype=complex)
        np.add.at(agg.T, inv, coeff.T)
        coeff, omega = agg, uniq
    return np.real(coeff @ coeff.conj().T)


def gram_matrix(
    enc: EncodingMap,
    domain: Domain | None = None,
    mode: str = "analytic",
    samples: int | None = None,
    seed: int = 0,
) -> GramMatrix:
    """Gram matrix of the feature components over ``domain``.

    Modes: ``"analytic"`` (integer frequencies on ``[-pi, pi]``, exact),
    ``"quadrature"`` (composite trapezoid, default ``2 * 3^N + 1`` points),
    ``"discrete"`` (empirical Gram of a finite point set) and
    ``"montecarlo"`` (uniform samples; distances report a standard error).
    """
    domain = domain or Domain.interval()
    if mode == "discrete":
        if not domain.discrete:
            raise ValueError("discrete mode needs a finite domain")
        m = domain.points.shape[0]
        return GramMatrix(enc, domain, mode, domain.points, np.full(m, 1.0 / m))
    if domain.discrete:
        raise ValueError(f"{mode} mode needs an interval domain")
    if mode == "analytic":
        freqs = enc.frequencies()
        if freqs is None:
            raise ValueError(f"analytic Gram matrix needs integer frequencies, got a {enc.kind} encoding")
        if not (math.isclose(domain.low, -math.pi) and math.isclose(domain.high, math.pi)):
            raise ValueError("analytic Gram matrix is defined on [-pi, pi]")
        kmax = int(np.sum(np.abs(freqs)))
        p = 2 * kmax + 1
        pts = -math.pi + 2 * math.pi * np.arange(p) / p
        dense = _fourier_gram(freqs) if enc.n <= 7 else None
        return GramMatrix(enc, domain, mode, pts, np.full(p, 1.0 / p), dense, meta={"grid": p})
    if mode == "quadrature":
        p = samples or 2 * 3**enc.n + 1
        pts = np.linspace(domain.low, domain.high, p)
        w = np.full(p, 1.0 / (p - 1))
        w[[0, -1]] *= 0.5
        return GramMatrix(enc, domain, mode, pts, w, meta={"points": p, "rule": "trapezoid"})
    if mode == "montecarlo":
        p = samples or 10_000
        pts = np.random.default_rng(seed).uniform(domain.low, domain.high, p)
        return GramMatrix(enc, domain, mode, pts, np.full(p, 1.0 / p), std_error=True, meta={"samples": p, "seed": seed})
    raise ValueError(f"unknown Gram mode {mode!r}")


# ---------------------------------------------------------------------------
# distances


@dataclass(frozen=True)
class FunctionDistance:
    """``D = <Delta|G|Delta>``, ``||Delta||^2`` and the bound ``||Delta||^2 ||G||_F``."""

    d: float
    coeff_dist: float
    bound: float
    std_error: float | None = None


def coefficient_distance(a, b) -> float:
    """``||a - b||_2^2`` by MPS overlaps."""
    ma, mb = _as_mps(a), _as_mps(b)
    val = mps_inner(ma, ma).real + mps_inner(mb, mb).real - 2.0 * mps_inner(ma, mb).real
    return float(max(val, 0.0))


def function_distance(cq, cc, g: GramMatrix, frobenius: float | None = None) -> FunctionDistance:
    """Squared ``L2`` distance of the two models over the Gram domain.

    ``D`` is evaluated from the sample rule of ``g``; no ``3^N`` vector is formed.
    """
    ma, mb = _as_mps(cq), _as_mps(cc)
    if ma.n_sites != mb.n_sites or ma.n_sites != g.encoding.n:
        raise ValueError("coefficient MPSs and Gram matrix disagree on the number of sites")
    feats = feature_batch(g.encoding, g.points)
    diff = cmps_eval_batch(cq, feats) - cmps_eval_batch(cc, feats)
    sq = diff * diff
    d = float(np.dot(g.weights, sq))
    se = float(np.std(sq, ddof=1) / math.sqrt(sq.size)) if g.std_error and sq.size > 1 else None
    cd = coefficient_distance(cq, cc)
    fro = g.frobenius() if frobenius is None else frobenius
    return FunctionDistance(d, cd, cd * fro, se)


# ---------------------------------------------------------------------------
# summaries and emitters

Z95 = 1.959963984540054


def summarize(values: Sequence[float]) -> dict:
    """Mean, sample standard deviation and a 0.95 normal-approximation interval."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise ValueError("no values to summarize")
    mean = float(v.mean())
    sd = float(v.std(ddof=1)) if v.size > 1 else 0.0
    half = Z95 * sd / math.sqrt(v.size)
    return {"n": int(v.size), "mean": mean, "std": sd, "ci_low": mean - half, "ci_high": mean + half}


ENTROPY_FIELDS = ("experiment_id", "N", "L", "gamma", "seed", "k", "S2")
TRUNCATION_FIELDS = ("experiment_id", "D", "epsilon")


def entropy_rows(experiment_id: str, n: int, layers, gamma: float, seed: int, profile: EntropyProfile) -> list[dict]:
    return [
        {"experiment_id": experiment_id, "N": n, "L": layers, "gamma": gamma, "seed": seed, "k": k, "S2": float(s)}
        for k, s in enumerate(profile.s2, start=1)
    ]


def write_csv(path, rows: Sequence[dict], fields: Sequence[str] | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fields = list(fields or (rows[0].keys() if rows else []))
    with path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fields, extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)


def write_json(path, obj) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default))


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")
