"""Pre-processing functions feeding the compiled Pauli-Z encoding rotations."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any

import numpy as np

KINDS = ("naive", "exponential", "elementwise", "iqp1d", "iqp_vec", "padded")


@dataclass(frozen=True)
class EncodingMap:
    """The list of angles ``phi_1(x) .. phi_N(x)`` of the N encoding rotations.

    Build instances with the classmethods rather than the constructor.
    ``padded`` maps wrap another map and insert zero angles: ``slots[a]`` is
    the index into the wrapped map feeding site ``a``, or ``None`` for zero.
    """

    kind: str
    n: int
    base: float = 3.0
    input_dim: int = 1
    slots: tuple[int | None, ...] = ()
    repetitions: int = 2
    inner: "EncodingMap | None" = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown encoding kind {self.kind!r}")
        if self.n < 1:
            raise ValueError("an encoding needs at least one rotation")
        if self.kind == "padded":
            if self.inner is None or len(self.slots) != self.n:
                raise ValueError("padded encodings need an inner map and one slot per site")
            if any(s is not None and not 0 <= s < self.inner.n for s in self.slots):
                raise ValueError("slot index outside the inner map")

    # constructors -------------------------------------------------------
    @classmethod
    def naive(cls, n: int) -> "EncodingMap":
        return cls("naive", n)

    @classmethod
    def exponential(cls, n: int, base: float = 3.0) -> "EncodingMap":
        return cls("exponential", n, base=float(base))

    @classmethod
    def elementwise(cls, n: int) -> "EncodingMap":
        return cls("elementwise", n, input_dim=n)

    @classmethod
    def iqp1d(cls, n: int) -> "EncodingMap":
        return cls("iqp1d", n)

    @classmethod
    def iqp_vec(cls, n_q: int, repetitions: int = 2) -> "EncodingMap":
        """IQP encoding folded to parallel form.

        Each repetition contributes the ``n_q`` single coordinates followed by
        the ``n_q - 1`` nearest-neighbour products. The remaining sites up to
        ``repetitions * n_q**2`` carry zero angles.
        """
        if repetitions < 1:
            raise ValueError("repetitions must be positive")
        return cls("iqp_vec", repetitions * n_q * n_q, input_dim=n_q, repetitions=repetitions)

    @classmethod
    def padded(cls, inner: "EncodingMap", slots) -> "EncodingMap":
        return cls("padded", len(slots), input_dim=inner.input_dim, slots=tuple(slots), inner=inner)

    # evaluation ---------------------------------------------------------
    def angles(self, x) -> np.ndarray:
        """Angles for one input; returns shape ``(n,)``."""
        return self.angles_batch(np.asarray(x, dtype=float).reshape(1, -1))[0]

    def angles_batch(self, xs) -> np.ndarray:
        """Angles for a batch of inputs of shape ``(M, input_dim)`` (or ``(M,)`` for 1-D)."""
        xs = np.asarray(xs, dtype=float)
        if xs.ndim == 1:
            xs = xs[:, None]
        if xs.shape[1] != self.input_dim:
            raise ValueError(f"{self.kind} encoding expects input dimension {self.input_dim}, got {xs.shape[1]}")
        m = xs.shape[0]
        if self.kind == "naive":
            return np.repeat(xs, self.n, axis=1)
        if self.kind == "exponential":
            return xs * self.base ** np.arange(self.n)[None, :]
        if self.kind == "elementwise":
            return xs.copy()
        if self.kind == "iqp1d":
            # odd N: the extra site joins the first (linear) half
            half = (self.n + 1) // 2
            x = xs[:, :1]
            return np.hstack([np.repeat(x, half, axis=1), np.repeat((np.pi - x) * (np.pi - x), self.n - half, axis=1)])
        if self.kind == "iqp_vec":
            pairs = xs[:, :-1] * xs[:, 1:]
            nontrivial = np.hstack([xs, pairs] * self.repetitions)
            out = np.zeros((m, self.n))
            out[:, : nontrivial.shape[1]] = nontrivial
            return out
        inner = self.inner.angles_batch(xs)
        out = np.zeros((m, self.n))
        for a, s in enumerate(self.slots):
            if s is not None:
                out[:, a] = inner[:, s]
        return out

    def n_nontrivial(self) -> int:
        """Number of sites whose angle is not identically zero."""
        if self.kind == "iqp_vec":
            return self.repetitions * (2 * self.input_dim - 1)
        if self.kind == "padded":
            return sum(s is not None for s in self.slots)
        return self.n

    def frequencies(self) -> np.ndarray | None:
        """Integer frequencies ``k`` when every angle is ``k * x`` for a 1-D input, else ``None``."""
        if self.kind == "naive":
            return np.ones(self.n, dtype=np.int64)
        if self.kind == "exponential" and float(self.base).is_integer():
            return int(self.base) ** np.arange(self.n, dtype=np.int64)
        if self.kind == "padded":
            inner = self.inner.frequencies()
            if inner is None:
                return None
            return np.array([0 if s is None else inner[s] for s in self.slots], dtype=np.int64)
        return None

    # serialization ------------------------------------------------------
    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"kind": self.kind, "n": self.n}
        if self.kind == "exponential":
            d["base"] = self.base
        if self.kind in ("elementwise", "iqp_vec", "padded"):
            d["input_dim"] = self.input_dim
        if self.kind == "iqp_vec":
            d["repetitions"] = self.repetitions
        if self.kind == "padded":
            d["slots"] = list(self.slots)
            d["inner"] = self.inner.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "EncodingMap":
        kind = d["kind"]
        if kind == "padded":
            inner = cls.from_dict(d["inner"])
            return cls.padded(inner, [None if s is None else int(s) for s in d["slots"]])
        if kind == "iqp_vec":
            return cls.iqp_vec(int(d["input_dim"]), int(d.get("repetitions", 2)))
        return cls(kind, int(d["n"]), base=float(d.get("base", 3.0)), input_dim=int(d.get("input_dim", 1)))
