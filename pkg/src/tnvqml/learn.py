"""Feature maps, classical MPS regression, VQML training and kernel methods."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .circuits import dense
from .circuits.encoding import EncodingMap
from .circuits.gates import H, PAULI_LETTERS, PAULIS, single_qubit_unitary
from .circuits.spec import CircuitSpec
from .coeffs import CoefficientMps
from .tensor_core import Mps

# ---------------------------------------------------------------------------
# feature map


@dataclass(frozen=True, eq=False)
class FeatureMapState:
    """Per-site vectors ``(1, cos phi_a(x), sin phi_a(x))`` of one input."""

    vectors: np.ndarray
    encoding: EncodingMap

    @property
    def n_sites(self) -> int:
        return self.vectors.shape[0]

    def norm_squared(self) -> float:
        """``<T(x)|T(x)>``, the product of per-site squared norms."""
        return float(np.prod(np.sum(self.vectors**2, axis=1)))

    def to_mps(self) -> Mps:
        return Mps.product(list(self.vectors))

    def to_dense(self) -> np.ndarray:
        out = np.ones(1)
        for v in self.vectors:
            out = np.kron(out, v)
        return out


def feature_map(enc: EncodingMap, x) -> FeatureMapState:
    """Evaluate ``T(x)``; each angle is computed once, then its cosine and sine."""
    phi = enc.angles(x)
    return FeatureMapState(np.stack([np.ones_like(phi), np.cos(phi), np.sin(phi)], axis=1), enc)


def feature_batch(enc: EncodingMap, xs) -> np.ndarray:
    """Per-site feature vectors of a batch, shape ``(M, N, 3)``."""
    phi = enc.angles_batch(xs)
    return np.stack([np.ones_like(phi), np.cos(phi), np.sin(phi)], axis=2)


# ---------------------------------------------------------------------------
# cMPS model


def _cores(c) -> list[np.ndarray]:
    if isinstance(c, CoefficientMps):
        return c.real_cores()
    if isinstance(c, Mps):
        return [np.real(x) for x in c.cores]
    return [np.asarray(x) for x in c]


def cmps_eval(c, t: FeatureMapState) -> float:
    """``C . T(x)`` by a left-to-right sweep."""
    cores = _cores(c)
    if len(cores) != t.n_sites:
        raise ValueError(f"cMPS has {len(cores)} sites, feature map {t.n_sites}")
    env = np.ones(1)
    for core, v in zip(cores, t.vectors):
        env = env @ np.tensordot(core, v, axes=(1, 0))
    return float(env[0])


def cmps_eval_batch(c, feats: np.ndarray) -> np.ndarray:
    """``C . T(x_m)`` for every row of a ``(M, N, 3)`` feature batch."""
    cores = _cores(c)
    if len(cores) != feats.shape[1]:
        raise ValueError(f"cMPS has {len(cores)} sites, features {feats.shape[1]}")
    env = np.ones((feats.shape[0], 1))
    for s, core in enumerate(cores):
        env = np.einsum("ma,apb,mp->mb", env, core, feats[:, s])
    return env[:, 0]


def _left_envs(cores, feats) -> list[np.ndarray]:
    envs = [np.ones((feats.shape[0], 1))]
    for s, core in enumerate(cores[:-1]):
        envs.append(np.einsum("ma,apb,mp->mb", envs[-1], core, feats[:, s]))
    return envs


def _right_envs(cores, feats) -> list[np.ndarray]:
    n = len(cores)
    envs = [None] * n
    envs[n - 1] = np.ones((feats.shape[0], 1))
    for s in range(n - 1, 0, -1):
        envs[s - 1] = np.einsum("apb,mp,mb->ma", cores[s], feats[:, s], envs[s])
    return envs


def _norm_envs(cores) -> tuple[list[np.ndarray], list[np.ndarray]]:
    n = len(cores)
    left = [np.ones((1, 1))]
    for core in cores[:-1]:
        left.append(np.einsum("ab,apc,bpd->cd", left[-1], core, core))
    right = [None] * n
    right[n - 1] = np.ones((1, 1))
    for s in range(n - 1, 0, -1):
        right[s - 1] = np.einsum("apc,bpd,cd->ab", cores[s], cores[s], right[s])
    return left, right


def cmps_loss(c, feats: np.ndarray, y: np.ndarray, lam: float = 0.0) -> float:
    """``(1/M) sum (f_C(x_i) - y_i)^2 + lam ||C||^2``."""
    cores = _cores(c)
    mse = float(np.mean((cmps_eval_batch(cores, feats) - y) ** 2))
    if lam == 0:
        return mse
    left, _ = _norm_envs(cores)
    last = cores[-1]
    norm2 = float(np.einsum("ab,apc,bpc->", left[-1], last, last))
    return mse + lam * norm2


def cmps_gradient(c, feats: np.ndarray, y: np.ndarray, lam: float = 0.0) -> list[np.ndarray]:
    """Gradient of :func:`cmps_loss` for every core, via cached left/right environments."""
    cores = _cores(c)
    m = feats.shape[0]
    if m == 0:
        raise ValueError("empty dataset")
    left, right = _left_envs(cores, feats), _right_envs(cores, feats)
    f = np.einsum("ma,apb,mp,mb->m", left[-1], cores[-1], feats[:, -1], right[-1])
    w = 2.0 * (f - y) / m
    grads = [np.einsum("m,ma,mp,mb->apb", w, left[s], feats[:, s], right[s]) for s in range(len(cores))]
    if lam:
        nl, nr = _norm_envs(cores)
        for s, core in enumerate(cores):
            grads[s] = grads[s] + 2.0 * lam * np.einsum("ab,bpd,cd->apc", nl[s], core, nr[s])
    return grads


def cmps_bond_dims(n: int, chi: int, phys: int = 3) -> list[int]:
    """Bond dimensions ``min(chi, phys^k, phys^(N-k))`` for cuts ``k = 1..N-1``."""
    return [min(chi, phys**k, phys ** (n - k)) for k in range(1, n)]


def n_cmps_params(n: int, chi: int) -> int:
    b = [1] + cmps_bond_dims(n, chi) + [1]
    return sum(b[s] * 3 * b[s + 1] for s in range(n))


def init_cmps(n: int, chi: int, seed: int = 0, feats: np.ndarray | None = None) -> CoefficientMps:
    """Random cMPS: entries ``N(0, 1 / (3 chi))``, rescaled to unit output variance on ``feats``."""
    rng = np.random.default_rng(seed)
    b = [1] + cmps_bond_dims(n, chi) + [1]
    scale = chi**-0.5 * 3**-0.5
    cores = [rng.normal(0.0, scale, (b[s], 3, b[s + 1])) for s in range(n)]
    if feats is not None:
        sd = float(np.std(cmps_eval_batch(cores, feats)))
        if sd > 0:
            factor = sd ** (-1.0 / n)
            cores = [core * factor for core in cores]
    return CoefficientMps(Mps(tuple(cores)), {"kind": "variational", "chi": chi, "seed": seed})


@dataclass(frozen=True)
class TrainConfig:
    """Full-batch Adam settings and the ridge constant of the cMPS loss."""

    lr: float = 0.01
    epochs: int = 500
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lam: float = 0.0
    seed: int = 0
    batch: str = "full"

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be non-negative")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")
        if self.batch != "full":
            raise ValueError("only full-batch training is supported")

    def to_dict(self) -> dict:
        return asdict(self)


class Adam:
    """Adam on a list of arrays, with bias-corrected moments."""

    def __init__(self, params: Sequence[np.ndarray], cfg: TrainConfig):
        self.cfg = cfg
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params: list[np.ndarray], grads: list[np.ndarray]) -> list[np.ndarray]:
        c = self.cfg
        self.t += 1
        out = []
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = c.beta1 * self.m[i] + (1 - c.beta1) * g
            self.v[i] = c.beta2 * self.v[i] + (1 - c.beta2) * g * g
            mhat = self.m[i] / (1 - c.beta1**self.t)
            vhat = self.v[i] / (1 - c.beta2**self.t)
            out.append(p - c.lr * mhat / (np.sqrt(vhat) + c.eps))
        return out


@dataclass
class LossTrace:
    """Per-epoch losses; ``test_mse`` is empty without a test set."""

    train_mse: list[float] = field(default_factory=list)
    test_mse: list[float] = field(default_factory=list)
    reg: list[float] = field(default_factory=list)

    def rows(self) -> list[dict]:
        n = len(self.train_mse)
        return [
            {
                "epoch": e,
                "train_mse": self.train_mse[e],
                "test_mse": self.test_mse[e] if self.test_mse else float("nan"),
                "reg_term": self.reg[e] if self.reg else 0.0,
            }
            for e in range(n)
        ]


def _check_finite(values, epoch: int) -> None:
    if not all(np.all(np.isfinite(v)) for v in values):
        raise FloatingPointError(f"non-finite parameters or gradients at epoch {epoch}")


def train_cmps(
    c0: CoefficientMps,
    feats: np.ndarray,
    y: np.ndarray,
    cfg: TrainConfig = TrainConfig(),
    test: tuple[np.ndarray, np.ndarray] | None = None,
    callback=None,
) -> tuple[CoefficientMps, LossTrace]:
    """Full-batch Adam on the regularized squared loss; bond dimensions stay fixed.

    ``trace.train_mse[e]`` is the MSE before update ``e``; a final entry holds
    the loss of the returned model. ``callback(epoch, cores)`` is called with
    the same parameters.
    """
    cores = c0.real_cores()
    y = np.asarray(y, dtype=float)
    opt = Adam(cores, cfg)
    trace = LossTrace()

    def record(epoch, cs):
        pred = cmps_eval_batch(cs, feats)
        trace.train_mse.append(float(np.mean((pred - y) ** 2)))
        if cfg.lam:
            trace.reg.append(cfg.lam * _norm2(cs))
        else:
            trace.reg.append(0.0)
        if test is not None:
            trace.test_mse.append(float(np.mean((cmps_eval_batch(cs, test[0]) - test[1]) ** 2)))
        if callback is not None:
            callback(epoch, cs)

    for epoch in range(cfg.epochs):
        record(epoch, cores)
        grads = cmps_gradient(cores, feats, y, cfg.lam)
        _check_finite(grads, epoch)
        cores = opt.step(cores, grads)
        _check_finite(cores, epoch)
    record(cfg.epochs, cores)
    origin = dict(c0.origin)
    origin.update({"kind": "variational", "train": cfg.to_dict()})
    return CoefficientMps(Mps(tuple(cores)), origin), trace


def _norm2(cores) -> float:
    left, _ = _norm_envs(cores)
    return float(np.einsum("ab,apc,bpc->", left[-1], cores[-1], cores[-1]))


# ---------------------------------------------------------------------------
# VQML training (noiseless statevector, adjoint gradients)


def _du(t1: float, t2: float, t3: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    c, s = np.cos(t1 / 2), np.sin(t1 / 2)
    e2, e3, e23 = np.exp(1j * t2), np.exp(1j * t3), np.exp(1j * (t2 + t3))
    d1 = 0.5 * np.array([[-s, -e3 * c], [e2 * c, -e23 * s]])
    d2 = np.array([[0, 0], [1j * e2 * s, 1j * e23 * c]])
    d3 = np.array([[0, -1j * e3 * s], [0, 1j * e23 * c]])
    return d1, d2, d3


def _cx_gather(n: int, pairs: list[tuple[int, int]]) -> np.ndarray:
    """Index array ``r`` with ``C psi = psi[..., r]`` for the CNOT staircase ``C``."""
    idx = np.arange(2**n).reshape((2,) * n)
    for c, t in pairs:
        idx = dense.apply_cx(idx, c, t)
    return idx.reshape(-1)


def _kron_all(mats) -> np.ndarray:
    out = np.ones((1, 1), dtype=complex)
    for m in mats:
        out = np.kron(out, m)
    return out


def _reduced(a: np.ndarray, b: np.ndarray, q: int, n: int) -> np.ndarray:
    """``M[i, j] = sum a[.., i, ..] b[.., j, ..]`` over everything but qubit ``q``."""
    m = a.shape[0]
    va = a.reshape(m * 2**q, 2, -1).transpose(1, 0, 2).reshape(2, -1)
    vb = b.reshape(m * 2**q, 2, -1).transpose(1, 0, 2).reshape(2, -1)
    return va @ vb.T


def _vqml_program(spec: CircuitSpec, angles: np.ndarray) -> list[tuple]:
    """Layer-fused program on flat states of shape ``(M, 2^n)``.

    Entries are ``("fixed", U)``, ``("layer", K, gather, us, theta, offset)``
    meaning ``C K`` with ``K`` the product of the single-qubit gates ``us``
    and ``C`` the CNOT staircase, and ``("diag", d)`` for the per-sample
    encoding phases.
    """
    n = spec.n_q
    pairs = [(i, i + 1) for i in range(n - 1)]
    if spec.reversed_cnot:
        pairs.reverse()
    gather = _cx_gather(n, pairs)
    zvals = 1 - 2 * np.indices((2,) * n).reshape(n, -1)
    prog: list[tuple] = []
    offset = 0
    for blk in range(len(spec.layers)):
        if blk in spec.hadamard_blocks:
            prog.append(("fixed", _kron_all([H] * n)))
        for layer in spec.block_theta(blk):
            us = [single_qubit_unitary(*layer[q]) for q in range(n)]
            prog.append(("layer", _kron_all(us), gather, us, layer, offset))
            offset += 3 * n
        if blk < spec.n_reuploads:
            prog.append(("diag", np.exp(-0.5j * angles[:, blk] @ zvals)))
    return prog


def _forward(psi: np.ndarray, op: tuple) -> np.ndarray:
    if op[0] == "diag":
        return psi * op[1]
    if op[0] == "fixed":
        return psi @ op[1].T
    return (psi @ op[1].T)[:, op[2]]


def _observable_matrix(letters: str) -> np.ndarray:
    return _kron_all([PAULIS[PAULI_LETTERS.index(ch)] for ch in letters])


def vqml_eval(spec: CircuitSpec, xs) -> np.ndarray:
    return np.atleast_1d(dense.statevector_model_eval(spec, xs))


def vqml_loss_and_grad(spec: CircuitSpec, xs, y) -> tuple[float, np.ndarray]:
    """MSE loss and its gradient in ``theta`` by the adjoint (reverse-mode) method."""
    if spec.gamma > 0:
        raise ValueError("adjoint gradients need a noiseless model")
    n = spec.n_q
    if n > dense.MAX_STATEVECTOR_QUBITS:
        raise dense.SizeLimitError(f"statevector limited to {dense.MAX_STATEVECTOR_QUBITS} qubits, got {n}")
    xs_arr = np.asarray(xs, dtype=float)
    batch = xs_arr.reshape(-1, spec.encoding.input_dim) if spec.encoding.input_dim > 1 else xs_arr.reshape(-1)
    y = np.asarray(y, dtype=float).reshape(-1)
    m = y.size
    angles = spec.encoding.angles_batch(batch).reshape(m, spec.n_reuploads, n)
    prog = _vqml_program(spec, angles)
    psi = np.zeros((m, 2**n), dtype=complex)
    psi[:, 0] = 1.0
    states = []
    for op in prog:
        states.append(psi)
        psi = _forward(psi, op)
    lam = psi @ _observable_matrix(spec.observable).T
    f = np.real(np.sum(psi.conj() * lam, axis=1))
    resid = f - y
    loss = float(np.mean(resid**2))
    lam = lam * (2.0 * resid / m)[:, None]
    grad = np.zeros(spec.n_params)
    for op, phi in zip(reversed(prog), reversed(states)):
        if op[0] == "diag":
            lam = lam * op[1].conj()
            continue
        if op[0] == "fixed":
            lam = lam @ op[1].conj()
            continue
        _, k, gather, us, theta, offset = op
        inv = np.empty_like(gather)
        inv[gather] = np.arange(gather.size)
        lam = lam[:, inv] @ k.conj()
        # <lam| C K (u_q^dag du_q on q) |phi> = Tr[(u_q^dag du_q) M_q], lam now K^dag C^dag lam
        mu = lam.conj()
        for q in range(n):
            red = _reduced(mu, phi, q, n)
            for j, d in enumerate(_du(*theta[q])):
                grad[offset + 3 * q + j] = 2.0 * np.real(np.sum((us[q].conj().T @ d) * red))
    return loss, grad


def train_vqml(
    spec0: CircuitSpec,
    xs,
    y,
    cfg: TrainConfig = TrainConfig(),
    test: tuple | None = None,
) -> tuple[CircuitSpec, LossTrace]:
    """Full-batch Adam on the circuit parameters (same optimizer settings as the cMPS trainer)."""
    theta = np.array(spec0.theta)
    opt = Adam([theta], cfg)
    trace = LossTrace()
    spec = spec0
    for epoch in range(cfg.epochs):
        spec = spec0.with_theta(theta)
        loss, grad = vqml_loss_and_grad(spec, xs, y)
        trace.train_mse.append(loss)
        trace.reg.append(0.0)
        if test is not None:
            trace.test_mse.append(float(np.mean((vqml_eval(spec, test[0]) - test[1]) ** 2)))
        _check_finite([grad], epoch)
        (theta,) = opt.step([theta], [grad])
    spec = spec0.with_theta(theta)
    trace.train_mse.append(float(np.mean((vqml_eval(spec, xs) - np.asarray(y)) ** 2)))
    trace.reg.append(0.0)
    if test is not None:
        trace.test_mse.append(float(np.mean((vqml_eval(spec, test[0]) - test[1]) ** 2)))
    return spec, trace


# ---------------------------------------------------------------------------
# kernels


def product_kernel(enc: EncodingMap, xi, xj) -> float:
    """``(1/2^N) prod_a [1 + cos(phi_a(x_i) - phi_a(x_j))]``."""
    d = enc.angles(xi) - enc.angles(xj)
    return float(np.prod(0.5 * (1.0 + np.cos(d))))


def product_kernel_matrix(enc: EncodingMap, xs, ys=None) -> np.ndarray:
    """Product-kernel matrix between two batches (``ys`` defaults to ``xs``)."""
    a = enc.angles_batch(xs)
    b = a if ys is None else enc.angles_batch(ys)
    out = np.ones((a.shape[0], b.shape[0]))
    for s in range(a.shape[1]):
        out *= 0.5 * (1.0 + np.cos(a[:, s, None] - b[None, :, s]))
    return out


@dataclass(frozen=True)
class EncodingCircuit:
    """Data-encoding circuit of a quantum kernel: ``"product"`` or ``"iqp"``."""

    kind: str = "iqp"
    repetitions: int = 2

    def states(self, xs) -> np.ndarray:
        return dense.encoding_states(self.kind, xs, self.repetitions)

    def encoding_map(self, n_q: int) -> EncodingMap:
        """The basis-equivalent parallel-form encoding."""
        if self.kind == "product":
            return EncodingMap.elementwise(n_q)
        return EncodingMap.iqp_vec(n_q, self.repetitions)


def quantum_kernel(circuit: EncodingCircuit, xi, xj) -> float:
    """``|<0|S^dag(x_i) S(x_j)|0>|^2``."""
    s = circuit.states(np.vstack([np.atleast_1d(xi), np.atleast_1d(xj)]))
    return float(abs(np.vdot(s[0], s[1])) ** 2)


def quantum_kernel_matrix(circuit: EncodingCircuit, xs, ys=None) -> np.ndarray:
    a = circuit.states(xs)
    b = a if ys is None else circuit.states(ys)
    return np.abs(a.conj() @ b.T) ** 2


class RidgeSolverError(np.linalg.LinAlgError):
    """Kernel system could not be solved; carries the numerical rank of ``K``."""

    def __init__(self, msg: str, rank: int):
        super().__init__(msg)
        self.rank = rank


@dataclass(frozen=True, eq=False)
class RidgeSolution:
    """Dual weights of kernel ridge regression."""

    weights: np.ndarray
    lam: float
    kernel: str
    train_inputs: np.ndarray | None = None
    jitter: float = 0.0
    residual: float = 0.0


def kernel_ridge(
    k: np.ndarray, y, lam: float, kernel: str = "product", train_inputs=None
) -> RidgeSolution:
    """Solve ``(K + lam I) gamma = y`` by a Cholesky factorization.

    With ``lam == 0`` and a numerically singular ``K`` a jitter of ``1e-12``
    is added; if the system still fails, :class:`RidgeSolverError` reports the
    rank of ``K``.
    """
    k = np.asarray(k, dtype=float)
    y = np.asarray(y, dtype=float)
    if lam < 0:
        raise ValueError("lam must be non-negative")
    if k.shape[0] != k.shape[1] or not np.allclose(k, k.T, atol=1e-8):
        raise ValueError("kernel matrix must be square and symmetric")
    a = k + lam * np.eye(k.shape[0])
    jitter = 0.0
    try:
        factor = scipy.linalg.cho_factor(a, lower=True)
    except np.linalg.LinAlgError:
        if lam > 0:
            raise
        jitter = 1e-12
        try:
            factor = scipy.linalg.cho_factor(a + jitter * np.eye(k.shape[0]), lower=True)
        except np.linalg.LinAlgError:
            rank = int(np.linalg.matrix_rank(k, tol=1e-10 * max(1.0, np.abs(k).max())))
            raise RidgeSolverError(f"kernel matrix is singular (rank {rank} of {k.shape[0]})", rank) from None
    gamma = scipy.linalg.cho_solve(factor, y)
    residual = float(np.linalg.norm(a @ gamma - y))
    if residual > 1e-8 * max(1.0, float(np.linalg.norm(y))):
        rank = int(np.linalg.matrix_rank(k, tol=1e-10 * max(1.0, np.abs(k).max())))
        raise RidgeSolverError(f"ridge residual {residual:.2e} too large (rank {rank} of {k.shape[0]})", rank)
    inputs = None if train_inputs is None else np.array(train_inputs, dtype=float)
    return RidgeSolution(gamma, float(lam), kernel, inputs, jitter, residual)


def predict(sol: RidgeSolution, k_rows) -> np.ndarray | float:
    """``sum_i gamma_i K(x, x_i)`` for one kernel row or a matrix of rows."""
    k_rows = np.asarray(k_rows, dtype=float)
    out = k_rows @ sol.weights
    return float(out) if np.ndim(out) == 0 else out


def representer_mps(sol: RidgeSolution, enc: EncodingMap, train_inputs=None) -> CoefficientMps:
    """cMPS ``(1/2^N) sum_i gamma_i T(x_i)`` of a product-kernel ridge solution (bond ``<= M_t``)."""
    if sol.kernel != "product":
        raise ValueError(f"no product-state representer for a {sol.kernel!r} kernel solution")
    xs = sol.train_inputs if train_inputs is None else np.asarray(train_inputs, dtype=float)
    if xs is None:
        raise ValueError("training inputs are required")
    feats = feature_batch(enc, xs)
    m, n, _ = feats.shape
    if m != sol.weights.size:
        raise ValueError("one training input per dual weight is required")
    cores = []
    for s in range(n):
        v = feats[:, s, :]
        if n == 1:
            core = (sol.weights / 2.0) @ v
            cores.append(core.reshape(1, 3, 1))
        elif s == 0:
            cores.append((v * (sol.weights / 2.0)[:, None]).T.reshape(1, 3, m))
        elif s == n - 1:
            cores.append((v / 2.0).reshape(m, 3, 1))
        else:
            core = np.zeros((m, 3, m))
            core[np.arange(m), :, np.arange(m)] = v / 2.0
            cores.append(core)
    return CoefficientMps(Mps(tuple(cores)), {"kind": "representer", "lam": sol.lam, "m_train": m})
