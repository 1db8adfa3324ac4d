"""Mixing matrices and column-geometry helpers."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "MixingMatrix",
    "as_matrix",
    "canonical_columns",
    "canonical_vector",
    "abs_cosines",
]


def as_matrix(A) -> np.ndarray:
    """Return ``A`` as a 2-D float array (accepts :class:`MixingMatrix`)."""
    A = np.asarray(A, dtype=float)
    if A.ndim == 1:
        A = A[:, None]
    if A.ndim != 2:
        raise ValueError(f"expected a 2-D mixing matrix, got shape {A.shape}")
    return A


def canonical_vector(v) -> np.ndarray:
    """Unit vector with its largest-magnitude entry positive."""
    v = np.asarray(v, dtype=float)
    nrm = np.linalg.norm(v)
    if nrm == 0:
        return v.copy()
    v = v / nrm
    k = int(np.argmax(np.abs(v)))
    return -v if v[k] < 0 else v


def canonical_columns(A) -> np.ndarray:
    A = as_matrix(A)
    return np.column_stack([canonical_vector(a) for a in A.T]) if A.shape[1] else A.copy()


def abs_cosines(U, V) -> np.ndarray:
    """Matrix of ``|cos|`` between columns of ``U`` and columns of ``V``."""
    U = as_matrix(U)
    V = as_matrix(V)
    nu = np.linalg.norm(U, axis=0)
    nv = np.linalg.norm(V, axis=0)
    nu[nu == 0] = 1.0
    nv[nv == 0] = 1.0
    return np.abs((U / nu).T @ (V / nv))


@dataclass(frozen=True, eq=False)
class MixingMatrix:
    """A real ``I x J`` mixing matrix.

    Construct with ``normalize=True`` (the default) to get the canonical
    form: unit columns whose largest-magnitude entry is positive.
    """

    array: np.ndarray
    normalize: bool = True

    def __post_init__(self):
        A = as_matrix(self.array)
        if self.normalize:
            A = canonical_columns(A)
        A = A.copy()
        A.setflags(write=False)
        object.__setattr__(self, "array", A)

    def __array__(self, dtype=None, copy=None):
        return self.array if dtype is None else self.array.astype(dtype)

    @property
    def shape(self):
        return self.array.shape

    @property
    def rows(self) -> int:
        return self.array.shape[0]

    @property
    def cols(self) -> int:
        return self.array.shape[1]

    def column(self, j: int) -> np.ndarray:
        return self.array[:, j]

    @property
    def columns(self) -> list[np.ndarray]:
        return [self.array[:, j] for j in range(self.cols)]

    def max_pair_cosine(self) -> float:
        if self.cols < 2:
            return 0.0
        C = abs_cosines(self.array, self.array)
        np.fill_diagonal(C, 0.0)
        return float(C.max())

    def no_collinear_pair(self, tol: float = 1e-9) -> bool:
        return self.max_pair_cosine() < 1.0 - tol

    def __repr__(self):
        return f"MixingMatrix({self.rows}x{self.cols})"
