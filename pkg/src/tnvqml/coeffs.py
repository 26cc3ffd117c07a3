"""Coefficient MPS of VQML models.

A model ``f(x) = Tr(O' S(x) rho S(x)^dag)`` equals ``C . T(x)`` with the
trigonometric feature map ``T(x) = (x)_a (1, cos phi_a, sin phi_a)`` and the
coefficient tensor ``C = (O' (.) rho^T) . R . Q``. Per site, ``R . Q`` maps a
2x2 block ``M`` to ``(Tr M, Tr XM, Tr YM)``, so ``C`` holds ``2^N`` times the
Pauli coefficients of ``O' (.) rho^T`` on strings without ``Z``.
"""

from __future__ import annotations

import io
import json
import struct
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .circuits import dense
from .circuits.builders import (
    DENSE_MAX_QUBITS,
    heisenberg_dense,
    observable_pauli_cores,
    observable_pauli_dense,
    pauli_dense_to_fused,
    pauli_cores_from_dense,
    pauli_cores_to_mpo,
    rho_pauli_cores,
    rho_pauli_dense,
    schrodinger_dense,
)
from .circuits.encoding import EncodingMap
from .circuits.gates import PAULIS, pauli_string
from .circuits.spec import CircuitSpec
from .tensor_core import EXACT_CUTOFF, Mpo, Mps, mps_add, mps_compress

# Imaginary parts above this (relative to the largest entry) break the realness invariant.
REAL_TOL = 1e-10


@dataclass(frozen=True)
class FixedTensors:
    """The local constants turning doubled encoding legs into the trigonometric basis.

    ``P`` is ``3 x 4`` (``b x lj``), ``R`` is ``4 x 3`` (``lj x b``) and ``Q`` is
    ``3 x 3``; ``lj`` is the fused (bra, ket) index ``2 l + j``.
    """

    P: np.ndarray
    R: np.ndarray
    Q: np.ndarray

    @classmethod
    def default(cls) -> "FixedTensors":
        p = np.array([[0, 0, 1, 0], [0.5, 0, 0, 0.5], [0, 1, 0, 0]], dtype=complex)
        r = np.array([[0, 1, 0], [0, 0, 1], [1, 0, 0], [0, 1, 0]], dtype=complex)
        q = np.array([[0, 1, -1j], [1, 0, 0], [0, 1, 1j]], dtype=complex)
        for a in (p, r, q):
            a.setflags(write=False)
        return cls(p, r, q)

    @property
    def rq(self) -> np.ndarray:
        """``R . Q`` as a ``4 x 3`` matrix."""
        return self.R @ self.Q

    def basis(self, phi: float) -> np.ndarray:
        """``B = Q . T``: the phases ``(e^{-i phi}, 1, e^{i phi})``."""
        return self.Q @ np.array([1.0, np.cos(phi), np.sin(phi)])


FIXED = FixedTensors.default()
_RQ = FIXED.rq


def hadamard_product_mpo(a: Mpo, b: Mpo) -> Mpo:
    """Element-wise product of two MPOs; bond dimensions multiply."""
    if a.n_sites != b.n_sites or a.out_dims != b.out_dims or a.in_dims != b.in_dims:
        raise ValueError("Hadamard product needs MPOs of equal length and physical dimensions")
    cores = []
    for x, y in zip(a.cores, b.cores):
        lx, o, i, rx = x.shape
        ly, _, _, ry = y.shape
        c = np.einsum("aoib,coid->acoibd", x, y).reshape(lx * ly, o, i, rx * ry)
        cores.append(c)
    return Mpo(tuple(cores))


def apply_rq(m: Mpo) -> Mps:
    """Contract every ``(out, in)`` pair of a qubit MPO with ``R . Q``."""
    rq = _RQ.reshape(2, 2, 3)
    return Mps(tuple(np.einsum("loir,oik->lkr", c, rq) for c in m.cores))


def _realify(cores: Sequence[np.ndarray], what: str) -> list[np.ndarray]:
    scale = max(float(np.abs(c).max()) for c in cores) or 1.0
    worst = max(float(np.abs(np.imag(c)).max()) for c in cores)
    if worst > REAL_TOL * scale:
        raise ArithmeticError(f"{what} has imaginary parts up to {worst:.3e}")
    return [np.ascontiguousarray(np.real(c)) for c in cores]


@dataclass(frozen=True, eq=False)
class CoefficientMps:
    """Real coefficient MPS with physical dimension 3.

    Args:
        mps: The coefficient chain.
        origin: ``{"kind": "circuit" | "variational" | "sparse_pauli", ...}``.
        norm: 2-norm of the unnormalized coefficient vector.
        normalized: Whether ``mps`` has been rescaled to unit norm.
    """

    mps: Mps
    origin: dict = field(default_factory=lambda: {"kind": "variational"})
    norm: float | None = None
    normalized: bool = False

    def __post_init__(self):
        if any(d != 3 for d in self.mps.physical_dims):
            raise ValueError("coefficient MPS must have physical dimension 3 on every site")
        cores = _realify(self.mps.cores, "coefficient MPS")
        object.__setattr__(self, "mps", Mps(tuple(cores), canonical_center=self.mps.canonical_center))
        if self.norm is None:
            object.__setattr__(self, "norm", self.mps.norm())

    @property
    def n_sites(self) -> int:
        return self.mps.n_sites

    @property
    def max_bond(self) -> int:
        return self.mps.max_bond

    def real_cores(self) -> list[np.ndarray]:
        return [np.real(c) for c in self.mps.cores]

    def to_dense(self) -> np.ndarray:
        return np.real(self.mps.to_dense())

    def normalized_copy(self) -> "CoefficientMps":
        """Unit-norm copy; ``norm`` keeps the original scale."""
        if self.normalized:
            return self
        cur = self.mps.norm()
        if cur == 0:
            raise ZeroDivisionError("cannot normalize a zero coefficient MPS")
        return CoefficientMps(self.mps.scaled(1.0 / cur), self.origin, self.norm, True)

    # binary container -------------------------------------------------------
    _MAGIC = b"CQMPS\x00"
    _VERSION = 1

    def to_bytes(self) -> bytes:
        """Header (N, physical dims, bond dims, metadata JSON) then float64 cores, little-endian."""
        meta = json.dumps({"origin": self.origin, "norm": self.norm, "normalized": self.normalized}).encode()
        cores = self.real_cores()
        bonds = [1] + [c.shape[2] for c in cores]
        buf = io.BytesIO()
        buf.write(self._MAGIC)
        buf.write(struct.pack("<II", self._VERSION, len(cores)))
        buf.write(struct.pack(f"<{len(cores)}I", *[c.shape[1] for c in cores]))
        buf.write(struct.pack(f"<{len(bonds)}I", *bonds))
        buf.write(struct.pack("<I", len(meta)))
        buf.write(meta)
        for c in cores:
            buf.write(np.ascontiguousarray(c, dtype="<f8").tobytes(order="C"))
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data: bytes) -> "CoefficientMps":
        view = memoryview(data)
        if bytes(view[:6]) != cls._MAGIC:
            raise ValueError("not a coefficient-MPS container")
        pos = 6
        version, n = struct.unpack_from("<II", view, pos)
        pos += 8
        if version != cls._VERSION:
            raise ValueError(f"unsupported container version {version}")
        phys = struct.unpack_from(f"<{n}I", view, pos)
        pos += 4 * n
        bonds = struct.unpack_from(f"<{n + 1}I", view, pos)
        pos += 4 * (n + 1)
        (mlen,) = struct.unpack_from("<I", view, pos)
        pos += 4
        meta = json.loads(bytes(view[pos : pos + mlen]).decode())
        pos += mlen
        cores = []
        for i in range(n):
            shape = (bonds[i], phys[i], bonds[i + 1])
            size = int(np.prod(shape))
            arr = np.frombuffer(data, dtype="<f8", count=size, offset=pos).reshape(shape)
            cores.append(arr.astype(np.float64))
            pos += 8 * size
        if pos != len(data):
            raise ValueError("trailing bytes in coefficient-MPS container")
        return cls(Mps(tuple(cores)), meta["origin"], meta["norm"], meta["normalized"])

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path) -> "CoefficientMps":
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


# ---------------------------------------------------------------------------
# folding re-uploading models into parallel form


@dataclass(frozen=True, eq=False)
class FoldedModel:
    """Parallel-form model ``Tr(O'' S(x) rho'' S(x)^dag)`` on ``n_sites`` qubits.

    ``rho_pieces`` and ``obs_pieces`` tile the sites with dense operators on
    consecutive qubits, given as ``(first_site, matrix)``.
    """

    n_sites: int
    rho_pieces: tuple[tuple[int, np.ndarray], ...]
    obs_pieces: tuple[tuple[int, np.ndarray], ...]
    encoding: EncodingMap

    def _dense(self, pieces) -> np.ndarray:
        out = np.ones((1, 1), dtype=complex)
        for _, m in pieces:
            out = np.kron(out, m)
        return out

    def rho_dense(self) -> np.ndarray:
        return self._dense(self.rho_pieces)

    def observable_dense(self) -> np.ndarray:
        return self._dense(self.obs_pieces)

    def _mpo(self, pieces) -> Mpo:
        cores: list[np.ndarray] = []
        for _, m in pieces:
            k = int(round(np.log2(m.shape[0])))
            cores.extend(Mpo.from_dense(m, [2] * k, [2] * k).cores)
        return Mpo(tuple(cores))

    def rho_mpo(self) -> Mpo:
        return self._mpo(self.rho_pieces)

    def observable_mpo(self) -> Mpo:
        return self._mpo(self.obs_pieces)

    def evaluate(self, xs) -> np.ndarray:
        """Direct ``Tr(O'' S rho'' S^dag)`` for a batch of inputs (small ``n_sites`` only)."""
        phi = self.encoding.angles_batch(xs)
        o, r = self.observable_dense(), self.rho_dense()
        m = o * r.T
        out = []
        for p in phi:
            s = np.ones(1, dtype=complex)
            for a in p:
                s = np.kron(s, [np.exp(-0.5j * a), np.exp(0.5j * a)])
            # sum_{row, col} M_{row col} conj(s_row) s_col
            out.append(s.conj() @ m @ s)
        return np.real(np.array(out))


def _choi(ops: list[tuple], n: int) -> np.ndarray:
    """``(I (x) E)(|Phi><Phi|)`` with unnormalized ``|Phi> = sum_i |ii>`` on ``2n`` qubits."""
    d = 2**n
    phi = np.eye(d, dtype=complex).reshape(-1)
    shifted = [(op[0], op[1] + n, *op[2:]) if op[0] == "u" else (op[0], op[1] + n, op[2] + n, *op[3:]) for op in ops]
    if all(op[0] != "dep" for op in shifted):
        psi = dense.apply_ops_state(phi.reshape((1,) + (2,) * (2 * n)), shifted).reshape(-1)
        return np.outer(psi, psi.conj())
    t = np.outer(phi, phi).reshape((2,) * (4 * n))
    return dense.apply_ops_operator(t, shifted, 2 * n).reshape(d * d, d * d)


def reuploading_to_parallel(spec: CircuitSpec) -> FoldedModel:
    """Bend the wires of a re-uploading model into a simple parallel model.

    Copy ``r`` of the register carries the ``r``-th encoding layer. The link
    channels between consecutive copies alternate between ``rho''`` (even
    links, as Choi operators) and ``O''`` (odd links, transposed Choi
    operators). With an even number of encoding layers an extra copy with zero
    angles closes the chain. A parallel spec folds to itself.
    """
    n, big_r = spec.n_q, spec.n_reuploads
    rho_pieces: list[tuple[int, np.ndarray]] = [(0, schrodinger_dense(spec.block_ops(0), n))]
    obs_pieces: list[tuple[int, np.ndarray]] = []
    if big_r == 1:
        obs_pieces.append((0, heisenberg_dense(spec.observable, spec.block_ops(1), n)))
        return FoldedModel(n, tuple(rho_pieces), tuple(obs_pieces), spec.encoding)
    for k in range(1, big_r):
        c = _choi(spec.block_ops(k), n)
        if k % 2 == 0:
            rho_pieces.append(((k - 1) * n, c))
        else:
            obs_pieces.append(((k - 1) * n, c.T))
    n_copies = big_r
    if big_r % 2 == 1:
        obs_pieces.append(((big_r - 1) * n, heisenberg_dense(spec.observable, spec.block_ops(big_r), n)))
    else:
        rho_pieces.append(((big_r - 1) * n, _choi(spec.block_ops(big_r), n)))
        obs_pieces.append((big_r * n, pauli_string(spec.observable)))
        n_copies += 1
    slots = list(range(big_r * n)) + [None] * ((n_copies - big_r) * n)
    enc = spec.encoding if n_copies == big_r else EncodingMap.padded(spec.encoding, slots)
    for pieces in (rho_pieces, obs_pieces):
        pieces.sort(key=lambda p: p[0])
        assert sum(int(round(np.log2(m.shape[0]))) for _, m in pieces) == n_copies * n
    return FoldedModel(n_copies * n, tuple(rho_pieces), tuple(obs_pieces), enc)


# ---------------------------------------------------------------------------
# coefficient extraction


def _rq_fused(t: np.ndarray) -> np.ndarray:
    """Apply ``R . Q`` to every fused ``(out, in)`` leg of a ``(4,)*n`` tensor; returns a real ``3^n`` vector."""
    for _ in range(t.ndim):
        # contract the leading site and append its new leg at the end
        t = np.tensordot(t, _RQ, axes=(0, 0))
    vec = t.reshape(-1)
    scale = float(np.abs(vec).max()) or 1.0
    if float(np.abs(vec.imag).max()) > REAL_TOL * scale:
        raise ArithmeticError("coefficient vector has non-negligible imaginary parts")
    return np.ascontiguousarray(vec.real)


def _fuse(m: np.ndarray) -> np.ndarray:
    """Dense ``2^n x 2^n`` matrix to per-site fused ``(out, in)`` legs."""
    n = int(round(np.log2(m.shape[0])))
    t = m.reshape((2,) * (2 * n))
    return np.transpose(t, [ax for s in range(n) for ax in (s, n + s)]).reshape((4,) * n)


def coefficient_vector(spec: CircuitSpec) -> np.ndarray:
    """Dense ``3^N`` coefficient vector (small models); folded site order."""
    if spec.structure == "parallel":
        n = spec.n_q
        o = pauli_dense_to_fused(observable_pauli_dense(spec))
        if spec.gamma == 0:
            psi = np.zeros((1,) + (2,) * n, dtype=complex)
            psi[(0,) * (n + 1)] = 1.0
            psi = dense.apply_ops_state(psi, spec.block_ops(0)).reshape(-1)
            # rho^T = conj(psi) psi^T
            rho_t = _fuse(np.outer(psi.conj(), psi))
        else:
            rho_t = pauli_dense_to_fused(rho_pauli_dense(spec), transpose=True)
        return _rq_fused(o * rho_t)
    folded = reuploading_to_parallel(spec)
    return _rq_fused(_fuse(folded.observable_dense() * folded.rho_dense().T))


def _real_compress(cores: list[np.ndarray], cutoff: float) -> list[np.ndarray]:
    return _realify(mps_compress(Mps(tuple(cores)), cutoff=cutoff).cores, "Pauli-basis operator")


def _resolve_method(method: str, n_sites: int) -> str:
    if method == "auto":
        return "dense" if n_sites <= DENSE_MAX_QUBITS else "mpo"
    if method not in ("dense", "mpo"):
        raise ValueError(f"unknown method {method!r}")
    return method


def folded_size(spec: CircuitSpec) -> int:
    r = spec.n_reuploads
    return spec.n_q * (r if r % 2 == 1 else r + 1)


def to_coefficient_mps(spec: CircuitSpec, method: str = "auto", cutoff: float = EXACT_CUTOFF) -> CoefficientMps:
    """Coefficient MPS ``C^q`` of a circuit.

    ``method="dense"`` forms ``O'' (.) rho''^T`` as a dense matrix (``N <= 11``
    by default) and compresses the ``3^N`` result; ``method="mpo"`` stays in
    MPO form throughout, applying ``R . Q`` site by site before an exact
    recompression sweep.
    """
    n_sites = folded_size(spec)
    route = _resolve_method(method, n_sites)
    if route == "dense":
        vec = coefficient_vector(spec)
        mps = Mps.from_dense(vec, [3] * n_sites, cutoff=cutoff)
    else:
        if spec.structure == "parallel":
            o_cores, r_cores = observable_pauli_cores(spec), rho_pauli_cores(spec)
        else:
            folded = reuploading_to_parallel(spec)
            o_cores = [c for _, m in folded.obs_pieces for c in pauli_cores_from_dense(m, cutoff)]
            r_cores = [c for _, m in folded.rho_pieces for c in pauli_cores_from_dense(m, cutoff)]
        # compress in the real Pauli basis so every bond gauge stays real
        o = pauli_cores_to_mpo(_real_compress(o_cores, cutoff))
        r = pauli_cores_to_mpo(_real_compress(r_cores, cutoff))
        raw = apply_rq(hadamard_product_mpo(o, r.transpose()))
        mps = mps_compress(Mps(tuple(_realify(raw.cores, "coefficient MPS"))), cutoff=cutoff)
    origin = {"kind": "circuit", "spec": spec.to_dict(), "folded_sites": n_sites}
    return CoefficientMps(mps, origin)


def pauli_coefficient(source, index: Sequence[int]) -> float:
    """``2^N`` times the Pauli coefficient of ``O' (.) rho^T`` on the string ``index``.

    ``source`` is a :class:`CircuitSpec`, a :class:`CoefficientMps` or a qubit
    :class:`Mpo` holding ``O' (.) rho^T``. Entries of ``index`` are 0, 1, 2 for
    I, X, Y. The value equals the ``C^q`` entry at ``index``.
    """
    index = [int(i) for i in index]
    if any(i not in (0, 1, 2) for i in index):
        raise ValueError("Pauli indices must lie in {0, 1, 2}")
    if isinstance(source, CircuitSpec):
        source = to_coefficient_mps(source)
    if isinstance(source, CoefficientMps):
        if len(index) != source.n_sites:
            raise ValueError("index length differs from the number of sites")
        return float(np.real(source.mps.entry(index)))
    if isinstance(source, Mpo):
        if len(index) != source.n_sites:
            raise ValueError("index length differs from the number of sites")
        env = np.ones(1, dtype=complex)
        for core, i in zip(source.cores, index):
            # Tr(sigma M) = sum_{o,i} sigma[i, o] M[o, i]
            env = env @ np.einsum("loir,io->lr", core, PAULIS[i])
        val = env[0]
        if abs(val.imag) > REAL_TOL * max(1.0, abs(val)):
            raise ArithmeticError("operator is not Hermitian on this string")
        return float(val.real)
    raise TypeError(f"unsupported source type {type(source).__name__}")


def sparse_pauli_coefficient_mps(indices: Sequence[Sequence[int]], weights: Sequence[float]) -> CoefficientMps:
    """Coefficient MPS ``sum_j w_j (sigma_j . R . Q)`` of a sparse Pauli expansion.

    Each term is the product state ``2^N e_j``; summing ``K`` terms gives a
    bond dimension of at most ``K``.
    """
    idx = [tuple(int(v) for v in i) for i in indices]
    if len(idx) != len(weights):
        raise ValueError("one weight per index is required")
    if not idx:
        raise ValueError("index set is empty")
    if len(set(idx)) != len(idx):
        raise ValueError("duplicate Pauli indices")
    n = len(idx[0])
    if any(len(i) != n for i in idx) or any(v not in (0, 1, 2) for i in idx for v in i):
        raise ValueError("indices must share one length and lie in {0, 1, 2}")
    total: Mps | None = None
    for i, w in zip(idx, weights):
        vecs = [2.0 * np.eye(3)[v] for v in i]
        vecs[0] = vecs[0] * float(w)
        term = Mps.product(vecs)
        total = term if total is None else mps_add(total, term)
    return CoefficientMps(total, {"kind": "sparse_pauli", "indices": [list(i) for i in idx]})


def coefficient_from_dense(vec: np.ndarray, origin: dict[str, Any] | None = None) -> CoefficientMps:
    """Exact coefficient MPS of a dense ``3^N`` vector."""
    vec = np.asarray(vec, dtype=float).reshape(-1)
    n = int(round(np.log(vec.size) / np.log(3)))
    if 3**n != vec.size:
        raise ValueError("vector length is not a power of 3")
    return CoefficientMps(Mps.from_dense(vec, [3] * n), origin or {"kind": "variational"})
