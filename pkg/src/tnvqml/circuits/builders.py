"""MPO representations of trainable blocks, evolved observables and pre-encoding states.

Two routes produce the same operators:

* ``"dense"`` evolves a ``2^n x 2^n`` operator gate by gate and compresses the
  result into an :class:`Mpo` (small ``n`` only).
* ``"mpo"`` evolves the operator as a chain of Pauli-basis coefficient cores
  (physical dimension 4, real arithmetic) by local Pauli transfer matrices,
  splitting two-site updates with an SVD at the canonical center.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from ..tensor_core import EXACT_CUTOFF, Mpo, Mps, _svd
from . import dense
from .gates import CNOT, PAULI_LETTERS, PAULIS, depolarizing_ptm, unitary_ptm
from .spec import CircuitSpec

# Relative cutoff of the two-site splits in the Pauli-basis evolution.
SPLIT_CUTOFF = 1e-13
# The "auto" route uses the dense kernels up to this many qubits.
DENSE_MAX_QUBITS = 11

_SQRT2 = np.sqrt(2.0)
# Normalized single-qubit Pauli basis B_p = P_p / sqrt(2), shape (4, 2, 2).
PAULI_BASIS = np.array(PAULIS) / _SQRT2
PAULI_BASIS.setflags(write=False)

SWAP = np.eye(4)[[0, 2, 1, 3]].astype(complex)


@lru_cache(maxsize=2)
def _cx_ptm(control_first: bool) -> np.ndarray:
    g = CNOT if control_first else SWAP @ CNOT @ SWAP
    return unitary_ptm(g)


def _ptm_list(ops: list[tuple]) -> list[tuple]:
    """Translate a gate list into ``("1", q, T4)`` and ``("2", i, T16)`` Pauli-basis steps."""
    out: list[tuple] = []
    for op in ops:
        if op[0] == "u":
            out.append(("1", op[1], unitary_ptm(op[2])))
        elif op[0] == "cx":
            c, t = op[1], op[2]
            if abs(c - t) != 1:
                raise ValueError("only nearest-neighbour two-qubit gates are supported")
            out.append(("2", min(c, t), _cx_ptm(c < t)))
        elif op[0] == "dep":
            out.append(("2", min(op[1], op[2]), depolarizing_ptm(op[3])))
        else:
            raise ValueError(f"unknown gate {op[0]!r}")
    return out


class _Chain:
    """Mutable open chain of real or complex cores ``(left, phys, right)`` with a tracked center."""

    def __init__(self, cores: list[np.ndarray], cutoff: float = SPLIT_CUTOFF):
        self.cores = cores
        self.center = 0
        self.cutoff = cutoff
        self._move(len(cores) - 1)
        self._move(0)

    def _move(self, site: int) -> None:
        while self.center < site:
            i = self.center
            l, d, r = self.cores[i].shape
            q, rr = np.linalg.qr(self.cores[i].reshape(l * d, r))
            self.cores[i] = q.reshape(l, d, q.shape[1])
            self.cores[i + 1] = np.tensordot(rr, self.cores[i + 1], axes=(1, 0))
            self.center += 1
        while self.center > site:
            i = self.center
            l, d, r = self.cores[i].shape
            q, rr = np.linalg.qr(self.cores[i].reshape(l, d * r).T)
            self.cores[i] = q.T.reshape(q.shape[1], d, r)
            self.cores[i - 1] = np.tensordot(self.cores[i - 1], rr.T, axes=(2, 0))
            self.center -= 1

    def one_site(self, site: int, mat: np.ndarray) -> None:
        self.cores[site] = np.einsum("pq,lqr->lpr", mat, self.cores[site])

    def two_site(self, site: int, mat: np.ndarray) -> None:
        """Apply ``mat`` (acting on the fused physical legs of ``site, site + 1``)."""
        self._move(site)
        a, b = self.cores[site], self.cores[site + 1]
        l, d1, _ = a.shape
        _, d2, r = b.shape
        theta = np.tensordot(a, b, axes=(2, 0)).reshape(l, d1 * d2, r)
        theta = np.einsum("pq,lqr->lpr", mat, theta).reshape(l * d1, d2 * r)
        u, s, vh = _svd(theta)
        keep = max(1, int(np.count_nonzero(s > self.cutoff * (s[0] if s.size else 0.0))))
        self.cores[site] = u[:, :keep].reshape(l, d1, keep)
        self.cores[site + 1] = (s[:keep, None] * vh[:keep]).reshape(keep, d2, r)
        self.center = site + 1


def _run_pauli(chain: _Chain, steps: list[tuple], heisenberg: bool) -> None:
    seq = reversed(steps) if heisenberg else steps
    for kind, site, mat in seq:
        m = mat.T if heisenberg else mat
        if kind == "1":
            chain.one_site(site, m)
        else:
            chain.two_site(site, m)


def fused_ptm_steps(ops: list[tuple]) -> list[tuple]:
    """Pauli-basis steps with single-qubit PTMs folded into the next two-qubit step on their wire."""
    pending: dict[int, np.ndarray] = {}
    out: list[tuple] = []
    for kind, site, mat in _ptm_list(ops):
        if kind == "1":
            pending[site] = mat @ pending.get(site, np.eye(4))
            continue
        a = pending.pop(site, np.eye(4))
        b = pending.pop(site + 1, np.eye(4))
        out.append(("2", site, mat @ np.kron(a, b)))
    out.extend(("1", q, m) for q, m in sorted(pending.items()))
    return out


def pauli_dense_evolve(t: np.ndarray, steps: list[tuple], heisenberg: bool) -> np.ndarray:
    """Apply Pauli-basis steps to a dense real coefficient tensor of shape ``(4,)*n``.

    The Heisenberg picture applies transposed steps in reverse order.
    """
    n = t.ndim
    t = np.ascontiguousarray(t)
    seq = reversed(steps) if heisenberg else steps
    for kind, site, mat in seq:
        m = mat.T if heisenberg else mat
        width = 4 if kind == "1" else 16
        span = 1 if kind == "1" else 2
        view = t.reshape(4**site, width, 4 ** (n - site - span))
        t = np.matmul(m, view).reshape((4,) * n)
    return t


def _product_tensor(vectors: list[np.ndarray]) -> np.ndarray:
    out = np.ones(())
    for v in vectors:
        out = np.multiply.outer(out, v)
    return out


def observable_pauli_dense(spec: CircuitSpec) -> np.ndarray:
    """Dense Pauli-basis coefficients of ``O'``, shape ``(4,)*n_q``."""
    _require_parallel(spec)
    t = _product_tensor([_pauli_vector(ch) for ch in spec.observable])
    return pauli_dense_evolve(t, fused_ptm_steps(spec.block_ops(1)), heisenberg=True)


def rho_pauli_dense(spec: CircuitSpec) -> np.ndarray:
    """Dense Pauli-basis coefficients of ``rho``, shape ``(4,)*n_q``."""
    _require_parallel(spec)
    t = _product_tensor([_ZERO_STATE] * spec.n_q)
    return pauli_dense_evolve(t, fused_ptm_steps(spec.block_ops(0)), heisenberg=False)


def pauli_dense_to_fused(t: np.ndarray, transpose: bool = False) -> np.ndarray:
    """Computational-basis entries with per-site fused ``(out, in)`` legs, shape ``(4,)*n``.

    With ``transpose`` the result holds the transposed operator.
    """
    basis = np.transpose(PAULI_BASIS, (0, 2, 1)) if transpose else PAULI_BASIS
    mat = basis.reshape(4, 4)
    out = t.astype(complex)
    for _ in range(t.ndim):
        out = np.tensordot(out, mat, axes=(0, 0))
    return out


def pauli_cores_to_mpo(cores: list[np.ndarray]) -> Mpo:
    """Convert Pauli-basis coefficient cores into computational-basis MPO cores."""
    return Mpo(tuple(np.einsum("lpr,poi->loir", c, PAULI_BASIS) for c in cores))


def _pauli_vector(letter: str) -> np.ndarray:
    v = np.zeros(4)
    v[PAULI_LETTERS.index(letter)] = _SQRT2
    return v


_ZERO_STATE = np.array([1.0, 0.0, 0.0, 1.0]) / _SQRT2


def _evolve_pauli(vectors: list[np.ndarray], ops: list[tuple], heisenberg: bool) -> list[np.ndarray]:
    chain = _Chain([np.asarray(v, dtype=float).reshape(1, 4, 1) for v in vectors])
    _run_pauli(chain, _ptm_list(ops), heisenberg)
    return chain.cores


def _concat_ops(spec: CircuitSpec, blocks) -> list[tuple]:
    ops: list[tuple] = []
    for b in blocks:
        ops.extend(spec.block_ops(b))
    return ops


def _require_parallel(spec: CircuitSpec) -> None:
    if spec.structure != "parallel":
        raise ValueError("re-uploading models must be folded with reuploading_to_parallel first")


def _choose(method: str, n: int) -> str:
    if method == "auto":
        return "dense" if n <= DENSE_MAX_QUBITS else "mpo"
    if method not in ("dense", "mpo"):
        raise ValueError(f"unknown method {method!r}")
    return method


def _unitary_from_ops(ops: list[tuple], n: int) -> np.ndarray:
    """Dense unitary of a noiseless gate list, applied column by column."""
    eye = np.eye(2**n, dtype=complex).reshape((2**n,) + (2,) * n)
    return dense.apply_ops_state(eye, ops).reshape(2**n, 2**n).T


def heisenberg_dense(letters: str, ops: list[tuple], n: int) -> np.ndarray:
    """``W^dag P W`` for a Pauli string ``P`` (adjoint channels when the list is noisy)."""
    if all(op[0] != "dep" for op in ops):
        w = _unitary_from_ops(ops, n)
        pw = w.T.reshape((2**n,) + (2,) * n)
        for q, ch in enumerate(letters):
            if ch != "I":
                pw = dense.apply_1q(pw, PAULIS[PAULI_LETTERS.index(ch)], 1 + q)
        return w.conj().T @ pw.reshape(2**n, 2**n).T
    t = dense.apply_ops_operator(dense.pauli_operator_tensor(letters), ops, n, heisenberg=True)
    return t.reshape(2**n, 2**n)


def schrodinger_dense(ops: list[tuple], n: int) -> np.ndarray:
    """``W |0><0| W^dag`` (channel output when the list is noisy)."""
    if all(op[0] != "dep" for op in ops):
        psi = np.zeros((1,) + (2,) * n, dtype=complex)
        psi[(0,) * (n + 1)] = 1.0
        psi = dense.apply_ops_state(psi, ops).reshape(-1)
        return np.outer(psi, psi.conj())
    t = dense.apply_ops_operator(dense.zero_projector_tensor(n), ops, n)
    return t.reshape(2**n, 2**n)


def dense_observable(spec: CircuitSpec) -> np.ndarray:
    """``O' = W2^dag O W2`` (adjoint channel for noisy models) as a ``2^n x 2^n`` matrix."""
    _require_parallel(spec)
    return heisenberg_dense(spec.observable, spec.block_ops(1), spec.n_q)


def dense_rho(spec: CircuitSpec) -> np.ndarray:
    """``rho = W1 |0><0| W1^dag`` (noisy channel for noisy models) as a ``2^n x 2^n`` matrix."""
    _require_parallel(spec)
    return schrodinger_dense(spec.block_ops(0), spec.n_q)


def pauli_cores_from_dense(m: np.ndarray, cutoff: float = EXACT_CUTOFF) -> list[np.ndarray]:
    """Real Pauli-basis coefficient cores of a dense Hermitian operator on ``k`` qubits."""
    k = int(round(np.log2(m.shape[0])))
    t = np.asarray(m).reshape((2,) * (2 * k))
    t = np.transpose(t, [ax for s in range(k) for ax in (s, k + s)]).reshape((4,) * k)
    proj = PAULI_BASIS.conj().reshape(4, 4)
    for _ in range(k):
        t = np.tensordot(t, proj, axes=(0, 1))
    vec = t.reshape(-1)
    if np.abs(vec.imag).max() > 1e-10 * max(1.0, np.abs(vec).max()):
        raise ArithmeticError("operator is not Hermitian")
    return [np.real(c) for c in Mps.from_dense(vec.real, [4] * k, cutoff=cutoff).cores]


def observable_pauli_cores(spec: CircuitSpec) -> list[np.ndarray]:
    """Pauli-basis cores of ``O'`` by local evolution (no dense operator)."""
    _require_parallel(spec)
    return _evolve_pauli([_pauli_vector(ch) for ch in spec.observable], spec.block_ops(1), heisenberg=True)


def rho_pauli_cores(spec: CircuitSpec) -> list[np.ndarray]:
    """Pauli-basis cores of ``rho`` by local evolution (no dense operator)."""
    _require_parallel(spec)
    return _evolve_pauli([_ZERO_STATE] * spec.n_q, spec.block_ops(0), heisenberg=False)


def evolve_observable(spec: CircuitSpec, method: str = "auto") -> Mpo:
    """MPO of the Heisenberg-evolved observable ``O'`` of a simple parallel model."""
    _require_parallel(spec)
    n = spec.n_q
    if _choose(method, n) == "dense":
        return Mpo.from_dense(dense_observable(spec), [2] * n, [2] * n)
    return pauli_cores_to_mpo(observable_pauli_cores(spec))


def build_rho(spec: CircuitSpec, method: str = "auto") -> Mpo:
    """MPO of the pre-encoding state ``rho`` of a simple parallel model."""
    _require_parallel(spec)
    n = spec.n_q
    if _choose(method, n) == "dense":
        return Mpo.from_dense(dense_rho(spec), [2] * n, [2] * n)
    return pauli_cores_to_mpo(rho_pauli_cores(spec))


def evolve_pauli_operator(vectors: list[np.ndarray], ops: list[tuple], heisenberg: bool) -> Mpo:
    """Evolve a product operator given by per-site Pauli-basis vectors through a gate list."""
    return pauli_cores_to_mpo(_evolve_pauli(vectors, ops, heisenberg))


def _hea_ops(n_q: int, layers: int, theta, gamma: float, reversed_cnot: bool) -> list[tuple]:
    from .encoding import EncodingMap

    spec = CircuitSpec(
        n_q, (layers, 0), theta, EncodingMap.naive(n_q), gamma=gamma, reversed_cnot=reversed_cnot
    )
    return spec.block_ops(0)


def build_trainable_mpo(n_q: int, layers: int, theta, gamma: float = 0.0, reversed_cnot: bool = False) -> Mpo:
    """MPO of ``layers`` hardware-efficient layers.

    With ``gamma == 0`` this is the unitary ``W`` (physical dimension 2).
    With ``gamma > 0`` it is the Schrodinger-picture superoperator acting on
    operators written in the normalized Pauli basis (physical dimension 4): the
    output core index is the Pauli label of ``E(A)``, the input that of ``A``.
    """
    theta = np.asarray(theta, dtype=float).reshape(-1)
    if theta.size != 3 * n_q * layers:
        raise ValueError(f"theta has {theta.size} entries, expected {3 * n_q * layers}")
    ops = _hea_ops(n_q, layers, theta, gamma, reversed_cnot)
    if gamma == 0:
        # left-multiply an identity MPO; fused physical leg is (out, in)
        chain = _Chain([np.eye(2, dtype=complex).reshape(1, 4, 1) for _ in range(n_q)])
        eye2 = np.eye(2)
        for op in ops:
            if op[0] == "u":
                chain.one_site(op[1], np.kron(op[2], eye2))
            else:
                g = CNOT if op[1] < op[2] else SWAP @ CNOT @ SWAP
                g4 = np.einsum("acbd,ij,kl->aickbjdl", g.reshape(2, 2, 2, 2), eye2, eye2).reshape(16, 16)
                chain.two_site(min(op[1], op[2]), g4)
        return Mpo(tuple(c.reshape(c.shape[0], 2, 2, c.shape[2]) for c in chain.cores))
    chain = _Chain([np.eye(4).reshape(1, 16, 1) for _ in range(n_q)])
    eye4 = np.eye(4)
    for kind, site, mat in _ptm_list(ops):
        if kind == "1":
            chain.one_site(site, np.kron(mat, eye4))
        else:
            m4 = np.einsum("acbd,ij,kl->aickbjdl", mat.reshape(4, 4, 4, 4), eye4, eye4).reshape(256, 256)
            chain.two_site(site, m4)
    return Mpo(tuple(c.reshape(c.shape[0], 4, 4, c.shape[2]) for c in chain.cores))
