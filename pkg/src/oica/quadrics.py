"""Systems of quadrics attached to a mixing matrix, and systems with a prescribed number of real solutions.

The span of the squared columns ``a_j a_j^T`` is cut out by linear
relations ``sum_{i<=j} l_ij z_ij = 0``.  Replacing ``z_ij`` by ``x_i x_j``
gives quadrics whose common real zeros, other than the columns, are exactly
the rank-one witnesses ``b``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import DimensionMismatchError, InvalidCountError
from .mixing import as_matrix
from .tensors import SymMat, packed_indices

__all__ = [
    "QuadricSystem",
    "TrackedSystem",
    "linear_relations",
    "quadric_system",
    "build_real_count_system",
    "evaluate",
]


def _plain_pack_many(A: np.ndarray) -> np.ndarray:
    """Rows are ``(a_i a_j)_{i<=j}`` for each column ``a`` of ``A``."""
    idx = packed_indices(A.shape[0], 2)
    return A[idx[:, 0], :].T * A[idx[:, 1], :].T


@dataclass(frozen=True)
class QuadricSystem:
    """Polynomials ``f_k(x) = x^T F_k x + b_k . x + c_k``.

    ``forms`` hold the symmetric matrices ``F_k``; the coefficient of the
    monomial ``x_i x_j`` (``i < j``) is ``2 F_k[i, j]``.
    """

    dim: int
    forms: tuple
    linear: Optional[np.ndarray] = None  # k x dim
    constants: Optional[np.ndarray] = None  # k

    def __post_init__(self):
        forms = tuple(self.forms)
        for F in forms:
            if F.dim != self.dim:
                raise DimensionMismatchError("form dimension does not match the system")
        object.__setattr__(self, "forms", forms)
        k = len(forms)
        for name, shape in (("linear", (k, self.dim)), ("constants", (k,))):
            v = getattr(self, name)
            if v is not None:
                v = np.asarray(v, dtype=float).reshape(shape)
                if not np.any(v):
                    v = None
                object.__setattr__(self, name, v)

    @property
    def homogeneous(self) -> bool:
        return self.linear is None and self.constants is None

    def __len__(self):
        return len(self.forms)

    def matrices(self) -> np.ndarray:
        if not self.forms:
            return np.zeros((0, self.dim, self.dim))
        return np.stack([F.full() for F in self.forms])

    def monomial_coefficients(self) -> np.ndarray:
        """``k x C(dim+1,2)`` coefficients of ``x_i x_j`` (``i <= j``, packed order)."""
        idx = packed_indices(self.dim, 2)
        scale = np.where(idx[:, 0] == idx[:, 1], 1.0, 2.0)
        if not self.forms:
            return np.zeros((0, len(idx)))
        return np.array([F.data * scale for F in self.forms])

    def to_dict(self) -> dict:
        idx = packed_indices(self.dim, 2)
        forms = []
        for row in self.monomial_coefficients():
            forms.append({f"{i + 1},{j + 1}": float(c) for (i, j), c in zip(idx, row) if c != 0})
        out = {"dim": self.dim, "homogeneous": self.homogeneous, "forms": forms}
        if self.linear is not None:
            out["linear"] = [
                {str(i + 1): float(c) for i, c in enumerate(row) if c != 0} for row in self.linear
            ]
        if self.constants is not None:
            out["constants"] = [float(c) for c in self.constants]
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "QuadricSystem":
        n = int(d["dim"])
        forms = []
        for f in d["forms"]:
            M = np.zeros((n, n))
            for key, c in f.items():
                i, j = (int(t) - 1 for t in key.split(","))
                if i == j:
                    M[i, i] += c
                else:
                    M[i, j] += c / 2
                    M[j, i] += c / 2
            forms.append(SymMat.from_full(M))
        linear = None
        if d.get("linear"):
            linear = np.zeros((len(forms), n))
            for k, row in enumerate(d["linear"]):
                for key, c in row.items():
                    linear[k, int(key) - 1] = c
        constants = np.array(d["constants"], dtype=float) if d.get("constants") else None
        return cls(n, forms, linear, constants)

    @classmethod
    def from_json(cls, text: str) -> "QuadricSystem":
        return cls.from_dict(json.loads(text))


def evaluate(system: QuadricSystem, x) -> np.ndarray:
    """Values ``f_k(x)`` for every polynomial of the system (``x`` may be complex)."""
    x = np.asarray(x)
    if x.ndim != 1 or x.size != system.dim:
        raise DimensionMismatchError(f"point has shape {x.shape}, system has {system.dim} variables")
    if not len(system):
        return np.zeros(0)
    vals = np.einsum("i,kij,j->k", x, system.matrices(), x)
    if system.linear is not None:
        vals = vals + system.linear @ x
    if system.constants is not None:
        vals = vals + system.constants
    return vals


def linear_relations(A) -> np.ndarray:
    """Orthonormal basis (rows) of the linear forms vanishing on ``span{a_j a_j^T}``.

    Coordinates are ``z_ij`` for ``i <= j`` in packed order, with
    ``z_ij = x_i x_j`` on a rank-one point.  There are
    ``C(I+1,2) - rank`` relations.
    """
    A = as_matrix(A)
    I = A.shape[0]
    K = _plain_pack_many(A)  # J x m
    m = I * (I + 1) // 2
    if K.shape[0] == 0:
        return np.eye(m)
    _, s, Vt = np.linalg.svd(K)
    r = int(np.sum(s > 1e-10 * s[0])) if s.size and s[0] > 0 else 0
    L = Vt[r:].copy()
    L[np.abs(L) < 1e-14] = 0.0
    return L


def quadric_system(A) -> QuadricSystem:
    """Homogeneous quadrics ``f_k(x) = sum_{i<=j} l^(k)_ij x_i x_j``, one per linear relation."""
    A = as_matrix(A)
    I = A.shape[0]
    L = linear_relations(A)
    idx = packed_indices(I, 2)
    half = np.where(idx[:, 0] == idx[:, 1], 1.0, 0.5)
    return QuadricSystem(I, [SymMat(I, row * half) for row in L])


# --- prescribed real-solution counts ----------------------------------------


@dataclass(frozen=True)
class TrackedSystem:
    """A square system in ``I - 1`` variables with all ``2^(I-1)`` solutions listed."""

    system: QuadricSystem
    solutions: np.ndarray = field(repr=False)  # 2^(I-1) x (I-1), complex
    real_count: int

    @property
    def max_residual(self) -> float:
        if not len(self.solutions):
            return 0.0
        return float(max(np.abs(evaluate(self.system, s)).max() for s in self.solutions))

    @property
    def min_distance(self) -> float:
        S = self.solutions
        if len(S) < 2:
            return float("inf")
        d = np.linalg.norm(S[:, None, :] - S[None, :, :], axis=2)
        return float(d[np.triu_indices(len(S), 1)].min())

    def real_mask(self, tol: float = 1e-8) -> np.ndarray:
        return np.all(np.abs(self.solutions.imag) < tol, axis=1)

    def to_dict(self) -> dict:
        d = self.system.to_dict()
        d["solutions"] = [[[float(z.real), float(z.imag)] for z in s] for s in self.solutions]
        d["real_count"] = self.real_count
        d["num_solutions"] = int(len(self.solutions))
        return d


def _change_variables(M, b, c, sols, rng):
    """Substitute ``x = Q^T (y - t)`` with a random orthogonal ``Q`` and shift ``t``."""
    n = M.shape[1]
    Q, R = np.linalg.qr(rng.standard_normal((n, n)))
    Q = Q * np.sign(np.diag(R))
    t = rng.standard_normal(n)
    M2 = np.einsum("ab,kbc,dc->kad", Q, M, Q)
    b2 = b @ Q.T
    b_new = b2 - 2.0 * np.einsum("kab,b->ka", M2, t)
    c_new = c + np.einsum("a,kab,b->k", t, M2, t) - b2 @ t
    return M2, b_new, c_new, sols @ Q.T + t


def _append(M, b, c, sols, new_sols, quad_x1, quad_new, const):
    """Add a variable and the polynomial ``quad_x1 x1^2 + quad_new x_new^2 + lin x1 + const``."""
    k, n, _ = M.shape
    M2 = np.zeros((k + 1, n + 1, n + 1))
    M2[:k, :n, :n] = M
    b2 = np.zeros((k + 1, n + 1))
    b2[:k, :n] = b
    c2 = np.append(c, 0.0)
    M2[k, 0, 0] = quad_x1[0]
    b2[k, 0] = quad_x1[1]
    M2[k, n, n] = quad_new
    c2[k] = const
    return M2, b2, c2, new_sols


def _real(sols, tol=1e-8):
    return np.all(np.abs(sols.imag) < tol, axis=1)


def build_real_count_system(I: int, ell: int, seed: int = 0) -> TrackedSystem:
    """Quadrics in ``I - 1`` variables with ``2^(I-1)`` distinct solutions, exactly ``ell`` of them real.

    Built by induction on ``I``.  From a system with ``l'`` real solutions,
    appending ``(x1 - alpha)^2 - x_new^2`` doubles the real count, and
    appending ``x1^2 + x_new^2 - beta^2`` with ``beta`` between the two
    largest real ``|x1|`` gives ``2 l' - 2``.  Solutions are carried along
    exactly at each step.
    """
    if I < 2:
        raise InvalidCountError("need I >= 2")
    if ell < 0 or ell % 2 or ell > 2 ** (I - 1):
        raise InvalidCountError(f"real count must be even and in [0, {2 ** (I - 1)}], got {ell}")
    rng = np.random.default_rng(seed)

    plan = []  # steps from the base upwards
    target = ell
    for level in range(I, 2, -1):
        if target % 4 == 0:
            plan.append("double")
            target //= 2
        else:
            plan.append("split")
            target = (target + 2) // 2
    plan.reverse()

    # base: x^2 - 1 or x^2 + 1
    M = np.ones((1, 1, 1))
    b = np.zeros((1, 1))
    if target == 2:
        c = np.array([-1.0])
        sols = np.array([[1.0], [-1.0]], dtype=complex)
    else:
        c = np.array([1.0])
        sols = np.array([[1j], [-1j]], dtype=complex)

    for step in plan:
        x1 = sols[:, 0]
        if step == "double":
            alpha = float(np.abs(x1).max()) + 1.0
            root = x1 - alpha
            new = np.vstack([
                np.column_stack([sols, root]),
                np.column_stack([sols, -root]),
            ])
            # (x1 - alpha)^2 - x_new^2
            M, b, c, sols = _append(M, b, c, sols, new, (1.0, -2.0 * alpha), -1.0, alpha**2)
        else:
            real = _real(sols)
            for _ in range(100):
                M2, b2, c2, s2 = _change_variables(M, b, c, sols, rng)
                ax = np.sort(np.abs(s2[real, 0].real))[::-1]
                if len(ax) < 2 or ax[0] - ax[1] > 1e-3 * max(1.0, ax[0]):
                    break
            M, b, c, sols = M2, b2, c2, s2
            ax = np.sort(np.abs(sols[real, 0].real))[::-1]
            beta = 0.5 * (ax[0] + ax[1])
            x1 = sols[:, 0]
            # keep exactly real roots real
            x1r = np.where(real, x1.real, x1)
            root = np.sqrt((beta**2 - x1r**2).astype(complex))
            new = np.vstack([
                np.column_stack([sols, root]),
                np.column_stack([sols, -root]),
            ])
            # x1^2 + x_new^2 - beta^2
            M, b, c, sols = _append(M, b, c, sols, new, (1.0, 0.0), 1.0, -beta**2)

    system = QuadricSystem(
        I - 1, [SymMat.from_full(F) for F in M], linear=b, constants=c
    )
    tracked = TrackedSystem(system=system, solutions=sols, real_count=int(_real(sols).sum()))
    return tracked
