"""Packed symmetric tensors of order 2 and 4.

Entries are stored once per sorted multi-index, in colexicographic order
(sorted by the last index first).  For order 2 and dimension 3 the packed
order is ``(1,1), (1,2), (2,2), (1,3), (2,3), (3,3)``.

Inner products carry multiplicity weights so that every norm computed on
the packed form agrees with the norm of the full tensor.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations_with_replacement
from math import comb, factorial

import numpy as np

from .errors import DimensionMismatchError, UnsupportedOrderError

__all__ = [
    "SymMat",
    "SymTen4",
    "FlatMat",
    "packed_indices",
    "multiplicities",
    "outer_power",
    "flatten",
    "frobenius_distance",
    "iso_pack",
    "iso_unpack",
    "iso_pack_many",
]

SQRT2 = np.sqrt(2.0)


@lru_cache(maxsize=None)
def _indices(dim: int, order: int) -> np.ndarray:
    combos = list(combinations_with_replacement(range(dim), order))
    combos.sort(key=lambda t: t[::-1])
    out = np.array(combos, dtype=np.intp).reshape(-1, order)
    out.setflags(write=False)
    return out


def packed_indices(dim: int, order: int) -> np.ndarray:
    """Sorted (0-based) multi-indices in packed storage order, shape (m, order)."""
    if order not in (2, 4):
        raise UnsupportedOrderError(f"order must be 2 or 4, got {order}")
    if dim < 1:
        raise ValueError("dimension must be positive")
    return _indices(dim, order)


@lru_cache(maxsize=None)
def _multiplicities(dim: int, order: int) -> np.ndarray:
    idx = _indices(dim, order)
    out = np.empty(len(idx))
    for r, row in enumerate(idx):
        _, counts = np.unique(row, return_counts=True)
        out[r] = factorial(order) / np.prod([factorial(c) for c in counts])
    out.setflags(write=False)
    return out


def multiplicities(dim: int, order: int) -> np.ndarray:
    """Number of full-tensor entries represented by each packed entry."""
    packed_indices(dim, order)
    return _multiplicities(dim, order)


@lru_cache(maxsize=None)
def _position_table(dim: int, order: int) -> np.ndarray:
    # maps every full multi-index to its packed position
    idx = _indices(dim, order)
    table = np.empty((dim,) * order, dtype=np.intp)
    lookup = {tuple(row): p for p, row in enumerate(idx)}
    for full in np.ndindex(*table.shape):
        table[full] = lookup[tuple(sorted(full))]
    table.setflags(write=False)
    return table


def _readonly(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SymMat:
    """Symmetric ``dim x dim`` matrix stored as its upper triangle."""

    dim: int
    data: np.ndarray

    def __post_init__(self):
        data = _readonly(self.data).ravel()
        if data.size != self.dim * (self.dim + 1) // 2:
            raise ValueError(
                f"packed SymMat of dim {self.dim} needs {self.dim * (self.dim + 1) // 2} "
                f"entries, got {data.size}"
            )
        object.__setattr__(self, "data", data)

    @classmethod
    def from_full(cls, M) -> "SymMat":
        M = np.asarray(M, dtype=float)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ValueError("expected a square matrix")
        idx = packed_indices(M.shape[0], 2)
        return cls(M.shape[0], M[idx[:, 0], idx[:, 1]])

    @classmethod
    def zeros(cls, dim: int) -> "SymMat":
        return cls(dim, np.zeros(dim * (dim + 1) // 2))

    def full(self) -> np.ndarray:
        return self.data[_position_table(self.dim, 2)]

    def inner(self, other: "SymMat") -> float:
        _check_dims(self, other)
        return float(np.dot(multiplicities(self.dim, 2) * self.data, other.data))

    def norm(self) -> float:
        return float(np.sqrt(max(self.inner(self), 0.0)))

    def iso(self) -> np.ndarray:
        """Isometric packed vector: off-diagonal entries scaled by sqrt(2)."""
        return self.data * np.sqrt(multiplicities(self.dim, 2))

    def __add__(self, other: "SymMat") -> "SymMat":
        _check_dims(self, other)
        return SymMat(self.dim, self.data + other.data)

    def __sub__(self, other: "SymMat") -> "SymMat":
        _check_dims(self, other)
        return SymMat(self.dim, self.data - other.data)

    def __mul__(self, c: float) -> "SymMat":
        return SymMat(self.dim, self.data * float(c))

    __rmul__ = __mul__

    def __eq__(self, other):
        return (
            isinstance(other, SymMat)
            and other.dim == self.dim
            and np.array_equal(other.data, self.data)
        )

    def __repr__(self):
        return f"SymMat(dim={self.dim}, data={self.data!r})"


@dataclass(frozen=True, eq=False)
class SymTen4:
    """Symmetric order-4 tensor stored once per sorted index ``i<=j<=k<=l``."""

    dim: int
    data: np.ndarray

    def __post_init__(self):
        data = _readonly(self.data).ravel()
        if data.size != comb(self.dim + 3, 4):
            raise ValueError(
                f"packed SymTen4 of dim {self.dim} needs {comb(self.dim + 3, 4)} "
                f"entries, got {data.size}"
            )
        object.__setattr__(self, "data", data)

    @classmethod
    def from_full(cls, T) -> "SymTen4":
        T = np.asarray(T, dtype=float)
        if T.ndim != 4 or len(set(T.shape)) != 1:
            raise ValueError("expected an order-4 tensor with equal dimensions")
        idx = packed_indices(T.shape[0], 4)
        return cls(T.shape[0], T[idx[:, 0], idx[:, 1], idx[:, 2], idx[:, 3]])

    @classmethod
    def zeros(cls, dim: int) -> "SymTen4":
        return cls(dim, np.zeros(comb(dim + 3, 4)))

    def full(self) -> np.ndarray:
        return self.data[_position_table(self.dim, 4)]

    def inner(self, other: "SymTen4") -> float:
        _check_dims(self, other)
        return float(np.dot(multiplicities(self.dim, 4) * self.data, other.data))

    def norm(self) -> float:
        return float(np.sqrt(max(self.inner(self), 0.0)))

    def evaluate(self, v) -> float:
        """The quartic form ``sum T_ijkl v_i v_j v_k v_l``."""
        v = np.asarray(v, dtype=float)
        return self.inner(outer_power(v, 4))

    def __add__(self, other: "SymTen4") -> "SymTen4":
        _check_dims(self, other)
        return SymTen4(self.dim, self.data + other.data)

    def __sub__(self, other: "SymTen4") -> "SymTen4":
        _check_dims(self, other)
        return SymTen4(self.dim, self.data - other.data)

    def __mul__(self, c: float) -> "SymTen4":
        return SymTen4(self.dim, self.data * float(c))

    __rmul__ = __mul__

    def __eq__(self, other):
        return (
            isinstance(other, SymTen4)
            and other.dim == self.dim
            and np.array_equal(other.data, self.data)
        )

    def __repr__(self):
        return f"SymTen4(dim={self.dim}, data={self.data!r})"


@dataclass(frozen=True, eq=False)
class FlatMat:
    """Order-(2,2) flattening of a :class:`SymTen4` in isometric packed coordinates.

    ``iso(xx^T) @ F @ iso(yy^T) == T(x, x, y, y)``.
    """

    dim: int
    F: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "F", _readonly(self.F))

    def bilinear(self, x, y) -> float:
        return float(iso_pack(np.outer(x, x)) @ self.F @ iso_pack(np.outer(y, y)))


def _check_dims(a, b):
    if a.dim != b.dim:
        raise DimensionMismatchError(f"dimension mismatch: {a.dim} vs {b.dim}")


def outer_power(v, d: int):
    """``v^{(x)d}`` as a packed :class:`SymMat` (d=2) or :class:`SymTen4` (d=4)."""
    if d not in (2, 4):
        raise UnsupportedOrderError(f"order must be 2 or 4, got {d}")
    v = np.asarray(v, dtype=float).ravel()
    if v.size < 1:
        raise ValueError("vector must be non-empty")
    idx = packed_indices(v.size, d)
    vals = np.prod(v[idx], axis=1)
    return SymMat(v.size, vals) if d == 2 else SymTen4(v.size, vals)


@lru_cache(maxsize=None)
def _iso_weights(dim: int) -> np.ndarray:
    w = np.sqrt(_multiplicities(dim, 2))
    w.setflags(write=False)
    return w


def iso_pack(M) -> np.ndarray:
    """Isometric packed vector of a full symmetric matrix."""
    M = np.asarray(M, dtype=float)
    idx = packed_indices(M.shape[0], 2)
    return M[idx[:, 0], idx[:, 1]] * _iso_weights(M.shape[0])


def iso_unpack(z, dim: int) -> np.ndarray:
    """Inverse of :func:`iso_pack`."""
    z = np.asarray(z, dtype=float)
    return (z / _iso_weights(dim))[_position_table(dim, 2)]


def iso_pack_many(V) -> np.ndarray:
    """``iso(v v^T)`` for every row ``v`` of ``V``; shape (n, m)."""
    V = np.asarray(V, dtype=float)
    if V.ndim == 1:
        V = V[None, :]
    idx = packed_indices(V.shape[1], 2)
    return V[:, idx[:, 0]] * V[:, idx[:, 1]] * _iso_weights(V.shape[1])


def flatten(T: SymTen4) -> FlatMat:
    """Flatten a symmetric quartic tensor into an ``m x m`` symmetric matrix."""
    dim = T.dim
    idx2 = packed_indices(dim, 2)
    full = T.full()
    F = full[idx2[:, 0][:, None], idx2[:, 1][:, None], idx2[:, 0][None, :], idx2[:, 1][None, :]]
    w = _iso_weights(dim)
    return FlatMat(dim, F * np.outer(w, w))


def frobenius_distance(M: SymMat, N: SymMat) -> float:
    """Frobenius norm of ``M - N`` evaluated on the full matrices."""
    return (M - N).norm()
