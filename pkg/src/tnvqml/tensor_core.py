"""Dense tensor algebra and matrix-product state/operator machinery.

Dense tensors are plain ``numpy.ndarray`` objects (row-major, explicit shape).
:class:`Mps` cores are indexed ``(left, physical, right)`` and :class:`Mpo`
cores ``(left, out, in, right)``. Both containers copy their cores on
construction and mark them read-only, so every operation below is a pure
function returning a new object.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.linalg

# Singular values below RANK_TOL * s_max count as zero when reporting ranks.
RANK_TOL = 1e-10
# Default relative cutoff of the exact-preserving recompression sweeps.
EXACT_CUTOFF = 1e-12


def _frozen(a: np.ndarray, dtype=np.complex128) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True)
    out.flags.writeable = False
    return out


def contract(a: np.ndarray, axes_a: Sequence[int], b: np.ndarray, axes_b: Sequence[int]) -> np.ndarray:
    """Sum over paired axes of ``a`` and ``b``.

    The result carries the uncontracted axes of ``a`` followed by those of ``b``.
    """
    axes_a, axes_b = list(axes_a), list(axes_b)
    if len(axes_a) != len(axes_b):
        raise ValueError(f"axis lists differ in length: {axes_a} vs {axes_b}")
    for i, j in zip(axes_a, axes_b):
        if a.shape[i] != b.shape[j]:
            raise ValueError(f"dimension mismatch on paired axes a[{i}]={a.shape[i]} vs b[{j}]={b.shape[j]}")
    return np.tensordot(a, b, axes=(axes_a, axes_b))


def _svd(mat: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    try:
        return scipy.linalg.svd(mat, full_matrices=False, lapack_driver="gesdd", check_finite=False)
    except np.linalg.LinAlgError:
        return scipy.linalg.svd(mat, full_matrices=False, lapack_driver="gesvd", check_finite=False)


def _keep_count(s: np.ndarray, max_bond: int | None, cutoff: float) -> int:
    keep = int(np.count_nonzero(s > cutoff))
    if max_bond is not None:
        keep = min(keep, max_bond)
    return max(keep, 1)


def svd_split(
    t: np.ndarray,
    left_axes: Sequence[int],
    max_bond: int | None = None,
    cutoff: float = 0.0,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Split ``t`` into ``U @ diag(s) @ V`` across the bipartition ``left_axes | rest``.

    ``U`` has shape ``left_shape + (k,)`` and ``V`` has ``(k,) + right_shape``.
    At most ``max_bond`` values are kept, all strictly above ``cutoff``
    (at least one value is always kept). Returns ``(U, s, V, discarded)``.
    """
    left_axes = list(left_axes)
    right_axes = [ax for ax in range(t.ndim) if ax not in left_axes]
    if not left_axes or not right_axes:
        raise ValueError("left_axes must be a proper nonempty subset of the axes")
    left_shape = [t.shape[ax] for ax in left_axes]
    right_shape = [t.shape[ax] for ax in right_axes]
    mat = np.transpose(t, left_axes + right_axes).reshape(int(np.prod(left_shape)), int(np.prod(right_shape)))
    u, s, vh = _svd(mat)
    k = _keep_count(s, max_bond, cutoff)
    discarded = s[k:].copy()
    return u[:, :k].reshape(left_shape + [k]), s[:k], vh[:k].reshape([k] + right_shape), discarded


@dataclass(frozen=True)
class SingularSpectrum:
    """Per-cut singular values of an MPS; ``values[k-1]`` belongs to the cut after site ``k``."""

    values: tuple[np.ndarray, ...]

    def ranks(self, rel_tol: float = RANK_TOL) -> list[int]:
        return [int(np.count_nonzero(s > rel_tol * s[0])) if s.size and s[0] > 0 else 0 for s in self.values]

    def max_rank(self, rel_tol: float = RANK_TOL) -> int:
        return max(self.ranks(rel_tol), default=1)


@dataclass(frozen=True)
class Mps:
    """Open-boundary matrix product state with cores ``(left, physical, right)``."""

    cores: tuple[np.ndarray, ...]
    canonical_center: int | None = None

    def __post_init__(self):
        cores = tuple(_frozen(c) for c in self.cores)
        if not cores:
            raise ValueError("an Mps needs at least one core")
        for i, c in enumerate(cores):
            if c.ndim != 3:
                raise ValueError(f"core {i} has rank {c.ndim}, expected 3")
        if cores[0].shape[0] != 1 or cores[-1].shape[2] != 1:
            raise ValueError("boundary bonds must be 1")
        for i in range(len(cores) - 1):
            if cores[i].shape[2] != cores[i + 1].shape[0]:
                raise ValueError(f"bond mismatch between sites {i} and {i + 1}")
        if self.canonical_center is not None and not 0 <= self.canonical_center < len(cores):
            raise ValueError("canonical_center out of range")
        object.__setattr__(self, "cores", cores)

    @property
    def n_sites(self) -> int:
        return len(self.cores)

    @property
    def physical_dims(self) -> list[int]:
        return [c.shape[1] for c in self.cores]

    @property
    def bond_dims(self) -> list[int]:
        return [c.shape[2] for c in self.cores[:-1]]

    @property
    def max_bond(self) -> int:
        return max(self.bond_dims, default=1)

    def to_dense(self) -> np.ndarray:
        v = self.cores[0].reshape(self.cores[0].shape[1], -1)
        for c in self.cores[1:]:
            v = (v @ c.reshape(c.shape[0], -1)).reshape(-1, c.shape[2])
        return v.reshape(-1)

    def entry(self, index: Sequence[int]) -> complex:
        v = np.ones(1, dtype=np.complex128)
        for c, i in zip(self.cores, index, strict=True):
            v = v @ c[:, i, :]
        return complex(v[0])

    def scaled(self, factor: complex) -> "Mps":
        """Multiply the represented vector by ``factor`` (applied to the center or first core)."""
        site = self.canonical_center or 0
        cores = list(self.cores)
        cores[site] = cores[site] * factor
        return Mps(tuple(cores), self.canonical_center)

    def norm(self) -> float:
        return float(np.sqrt(abs(mps_inner(self, self))))

    @classmethod
    def product(cls, vectors: Sequence[np.ndarray]) -> "Mps":
        return cls(tuple(np.asarray(v).reshape(1, -1, 1) for v in vectors))

    @classmethod
    def from_dense(
        cls,
        vec: np.ndarray,
        dims: Sequence[int],
        cutoff: float = EXACT_CUTOFF,
        max_bond: int | None = None,
    ) -> "Mps":
        """Left-canonical MPS of a dense vector by successive SVDs.

        ``cutoff`` is relative to the largest singular value of each cut.
        """
        dims = list(dims)
        vec = np.asarray(vec)
        # real input stays real so the SVD gauge is real as well
        rest = vec.astype(np.complex128 if np.iscomplexobj(vec) else np.float64).reshape(1, -1)
        cores = []
        for d in dims[:-1]:
            left = rest.shape[0]
            mat = rest.reshape(left * d, -1)
            u, s, vh = _svd(mat)
            k = _keep_count(s, max_bond, cutoff * (s[0] if s.size else 0.0))
            cores.append(u[:, :k].reshape(left, d, k))
            rest = s[:k, None] * vh[:k]
        cores.append(rest.reshape(rest.shape[0], dims[-1], 1))
        return cls(tuple(cores), canonical_center=len(dims) - 1)


@dataclass(frozen=True)
class Mpo:
    """Open-boundary matrix product operator with cores ``(left, out, in, right)``."""

    cores: tuple[np.ndarray, ...]

    def __post_init__(self):
        cores = tuple(_frozen(c) for c in self.cores)
        if not cores:
            raise ValueError("an Mpo needs at least one core")
        for i, c in enumerate(cores):
            if c.ndim != 4:
                raise ValueError(f"core {i} has rank {c.ndim}, expected 4")
        if cores[0].shape[0] != 1 or cores[-1].shape[3] != 1:
            raise ValueError("boundary bonds must be 1")
        for i in range(len(cores) - 1):
            if cores[i].shape[3] != cores[i + 1].shape[0]:
                raise ValueError(f"bond mismatch between sites {i} and {i + 1}")
        object.__setattr__(self, "cores", cores)

    @property
    def n_sites(self) -> int:
        return len(self.cores)

    @property
    def out_dims(self) -> list[int]:
        return [c.shape[1] for c in self.cores]

    @property
    def in_dims(self) -> list[int]:
        return [c.shape[2] for c in self.cores]

    @property
    def bond_dims(self) -> list[int]:
        return [c.shape[3] for c in self.cores[:-1]]

    @property
    def max_bond(self) -> int:
        return max(self.bond_dims, default=1)

    def as_mps(self) -> Mps:
        """Fuse ``(out, in)`` into one physical leg of size ``out * in``."""
        return Mps(tuple(c.reshape(c.shape[0], c.shape[1] * c.shape[2], c.shape[3]) for c in self.cores))

    @classmethod
    def from_mps(cls, m: Mps, out_dims: Sequence[int], in_dims: Sequence[int]) -> "Mpo":
        return cls(
            tuple(
                c.reshape(c.shape[0], o, i, c.shape[2])
                for c, o, i in zip(m.cores, out_dims, in_dims, strict=True)
            )
        )

    def to_dense(self) -> np.ndarray:
        n = self.n_sites
        t = self.as_mps().to_dense().reshape([x for c in self.cores for x in c.shape[1:3]])
        t = np.transpose(t, [2 * s for s in range(n)] + [2 * s + 1 for s in range(n)])
        return t.reshape(int(np.prod(self.out_dims)), int(np.prod(self.in_dims)))

    @classmethod
    def from_dense(
        cls,
        mat: np.ndarray,
        out_dims: Sequence[int],
        in_dims: Sequence[int],
        cutoff: float = EXACT_CUTOFF,
    ) -> "Mpo":
        n = len(out_dims)
        t = np.asarray(mat, dtype=np.complex128).reshape(list(out_dims) + list(in_dims))
        t = np.transpose(t, [ax for s in range(n) for ax in (s, n + s)])
        fused = Mps.from_dense(t.reshape(-1), [o * i for o, i in zip(out_dims, in_dims)], cutoff=cutoff)
        return cls.from_mps(fused, out_dims, in_dims)

    @classmethod
    def product(cls, matrices: Sequence[np.ndarray]) -> "Mpo":
        return cls(tuple(np.asarray(m).reshape(1, m.shape[0], m.shape[1], 1) for m in matrices))

    def transpose(self) -> "Mpo":
        return Mpo(tuple(np.transpose(c, (0, 2, 1, 3)) for c in self.cores))

    def adjoint(self) -> "Mpo":
        return Mpo(tuple(np.conj(np.transpose(c, (0, 2, 1, 3))) for c in self.cores))

    def compressed(self, cutoff: float = EXACT_CUTOFF) -> "Mpo":
        return Mpo.from_mps(mps_compress(self.as_mps(), cutoff=cutoff), self.out_dims, self.in_dims)


def _left_orthonormalize(cores: list[np.ndarray], site: int) -> None:
    c = cores[site]
    l, d, r = c.shape
    q, rr = np.linalg.qr(c.reshape(l * d, r))
    cores[site] = q.reshape(l, d, q.shape[1])
    cores[site + 1] = np.tensordot(rr, cores[site + 1], axes=(1, 0))


def _right_orthonormalize(cores: list[np.ndarray], site: int) -> None:
    c = cores[site]
    l, d, r = c.shape
    q, rr = np.linalg.qr(c.reshape(l, d * r).conj().T)
    cores[site] = q.conj().T.reshape(q.shape[1], d, r)
    cores[site - 1] = np.tensordot(cores[site - 1], rr.conj().T, axes=(2, 0))


def mps_canonicalize(m: Mps, center: int) -> Mps:
    """Mixed-canonical form: cores left of ``center`` left-isometric, right of it right-isometric."""
    if not 0 <= center < m.n_sites:
        raise ValueError(f"center {center} outside [0, {m.n_sites})")
    cores = list(m.cores)
    for i in range(center):
        _left_orthonormalize(cores, i)
    for i in range(m.n_sites - 1, center, -1):
        _right_orthonormalize(cores, i)
    return Mps(tuple(cores), canonical_center=center)


def _sweep(m: Mps, max_bond: int | None, rel_cutoff: float) -> tuple[list[np.ndarray], list[np.ndarray], float]:
    """Left-to-right SVD sweep from the right-canonical form.

    Returns the new cores, the full singular values seen at every cut and the
    sum of discarded squared values.
    """
    cores = list(mps_canonicalize(m, 0).cores)
    spectra: list[np.ndarray] = []
    discarded = 0.0
    for i in range(m.n_sites - 1):
        l, d, r = cores[i].shape
        u, s, vh = _svd(cores[i].reshape(l * d, r))
        spectra.append(s)
        k = _keep_count(s, max_bond, rel_cutoff * (s[0] if s.size else 0.0))
        discarded += float(np.sum(s[k:] ** 2))
        cores[i] = u[:, :k].reshape(l, d, k)
        cores[i + 1] = np.tensordot(s[:k, None] * vh[:k], cores[i + 1], axes=(1, 0))
    return cores, spectra, discarded


def mps_singular_spectrum(m: Mps) -> SingularSpectrum:
    """Singular values of every ``sites[:k] | sites[k:]`` matricization, ``k = 1..N-1``."""
    _, spectra, _ = _sweep(m, None, 0.0)
    return SingularSpectrum(tuple(np.asarray(s, dtype=float) for s in spectra))


def mps_truncate(m: Mps, max_bond: int) -> tuple[Mps, float]:
    """Cap every bond at ``max_bond`` in one SVD sweep.

    Returns the truncated MPS and the sum of squared singular values discarded
    during the sweep.
    """
    if max_bond < 1:
        raise ValueError("max_bond must be >= 1")
    cores, _, discarded = _sweep(m, max_bond, 0.0)
    return Mps(tuple(cores), canonical_center=m.n_sites - 1), discarded


def mps_compress(m: Mps, cutoff: float = EXACT_CUTOFF, max_bond: int | None = None) -> Mps:
    """Recompress by dropping singular values below ``cutoff`` times the largest one at each cut."""
    if m.n_sites == 1:
        return m
    cores, _, _ = _sweep(m, max_bond, cutoff)
    return Mps(tuple(cores), canonical_center=m.n_sites - 1)


def _check_compatible(a: Mps, b: Mps) -> None:
    if a.n_sites != b.n_sites:
        raise ValueError(f"length mismatch: {a.n_sites} vs {b.n_sites}")
    if a.physical_dims != b.physical_dims:
        raise ValueError(f"physical dimension mismatch: {a.physical_dims} vs {b.physical_dims}")


def mps_inner(a: Mps, b: Mps) -> complex:
    """``<a|b>`` with ``a`` conjugated."""
    _check_compatible(a, b)
    env = np.ones((1, 1), dtype=np.complex128)
    for ca, cb in zip(a.cores, b.cores):
        env = np.einsum("ab,adc,bde->ce", env, ca.conj(), cb, optimize=True)
    return complex(env[0, 0])


def mps_dot(a: Mps, b: Mps) -> complex:
    """Bilinear ``a . b`` (no conjugation)."""
    _check_compatible(a, b)
    env = np.ones((1, 1), dtype=np.complex128)
    for ca, cb in zip(a.cores, b.cores):
        env = np.einsum("ab,adc,bde->ce", env, ca, cb, optimize=True)
    return complex(env[0, 0])


def mps_add(a: Mps, b: Mps) -> Mps:
    """Direct-sum MPS of ``a + b``; bonds are the sums of input bonds."""
    _check_compatible(a, b)
    n = a.n_sites
    if n == 1:
        return Mps((a.cores[0] + b.cores[0],))
    cores = []
    for i, (ca, cb) in enumerate(zip(a.cores, b.cores)):
        la, d, ra = ca.shape
        lb, _, rb = cb.shape
        if i == 0:
            cores.append(np.concatenate([ca, cb], axis=2))
        elif i == n - 1:
            cores.append(np.concatenate([ca, cb], axis=0))
        else:
            c = np.zeros((la + lb, d, ra + rb), dtype=np.complex128)
            c[:la, :, :ra] = ca
            c[la:, :, ra:] = cb
            cores.append(c)
    return Mps(tuple(cores))


def mpo_compose(a: Mpo, b: Mpo) -> Mpo:
    """Operator product ``a @ b``; bonds multiply."""
    if a.n_sites != b.n_sites:
        raise ValueError(f"length mismatch: {a.n_sites} vs {b.n_sites}")
    if a.in_dims != b.out_dims:
        raise ValueError(f"dimension mismatch: {a.in_dims} vs {b.out_dims}")
    cores = []
    for ca, cb in zip(a.cores, b.cores):
        c = np.einsum("aokr,bkis->aboirs", ca, cb, optimize=True)
        la, lb, o, i, ra, rb = c.shape
        cores.append(c.reshape(la * lb, o, i, ra * rb))
    return Mpo(tuple(cores))


def mpo_apply(o: Mpo, m: Mps) -> Mps:
    """Apply an operator to a state; bonds multiply."""
    if o.n_sites != m.n_sites:
        raise ValueError(f"length mismatch: {o.n_sites} vs {m.n_sites}")
    if o.in_dims != m.physical_dims:
        raise ValueError(f"dimension mismatch: {o.in_dims} vs {m.physical_dims}")
    cores = []
    for co, cm in zip(o.cores, m.cores):
        c = np.einsum("aoir,bis->abors", co, cm, optimize=True)
        la, lb, d, ra, rb = c.shape
        cores.append(c.reshape(la * lb, d, ra * rb))
    return Mps(tuple(cores))
