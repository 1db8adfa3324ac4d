"""Identifiability of a mixing matrix with one Gaussian source.

A matrix with no collinear columns is identifiable exactly when the span of
its squared columns ``a_j a_j^T`` holds no other rank-one matrix ``b b^T``.
This module classifies generic shapes, probes a given matrix numerically
for such a witness ``b``, builds the 2x2-minor matrices ``C`` and ``D``
whose kernel encodes rank-one combinations, and turns a witness into two
source models that produce the same observed distribution.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from itertools import combinations, combinations_with_replacement
from math import comb
from typing import Optional, Union

import numpy as np

from .cumulants import Exponential, Gaussian, SourceSpec, WithGaussianNoise
from .errors import DegenerateWitnessError, InvalidWitnessError, SizeLimitError
from .mixing import MixingMatrix, abs_cosines, as_matrix
from .optimize import MinimizeConfig, powell_minimize
from .tensors import iso_pack, iso_pack_many

__all__ = [
    "GenericIdentifiable",
    "GenericNonIdentifiable",
    "GenericAmbiguous",
    "WitnessFound",
    "NoWitnessFound",
    "CollinearColumns",
    "Verdict",
    "KernelReport",
    "ProbeConfig",
    "WitnessConstruction",
    "classify_generic",
    "collinear_pairs",
    "khatri_rao_matrix",
    "khatri_rao_rank",
    "minor_matrix",
    "kernel_report",
    "kernel_condition",
    "is_rank_one_combination",
    "rank_one_probe",
    "witness_distributions",
    "projected_veronese_count",
    "veronese_count_formula",
]


# --- verdicts ---------------------------------------------------------------


@dataclass(frozen=True)
class GenericIdentifiable:
    kind = "generic_identifiable"

    def to_dict(self) -> dict:
        return {"verdict": self.kind}


@dataclass(frozen=True)
class GenericNonIdentifiable:
    kind = "generic_non_identifiable"

    def to_dict(self) -> dict:
        return {"verdict": self.kind}


@dataclass(frozen=True)
class GenericAmbiguous:
    """Both identifiable and non-identifiable matrices occur with positive probability."""

    kind = "generic_ambiguous"

    def to_dict(self) -> dict:
        return {"verdict": self.kind}


@dataclass(frozen=True)
class WitnessFound:
    b: np.ndarray
    coefficients: np.ndarray
    residual: float
    coefficient_residual: float = 0.0
    kind = "witness_found"

    def to_dict(self) -> dict:
        return {
            "verdict": self.kind,
            "b": self.b.tolist(),
            "coefficients": self.coefficients.tolist(),
            "residual": self.residual,
            "coefficient_residual": self.coefficient_residual,
        }


@dataclass(frozen=True)
class NoWitnessFound:
    """No witness below tolerance.  Evidence of identifiability, not a proof."""

    best_residual: float
    starts: int
    kind = "no_witness_found"

    def to_dict(self) -> dict:
        return {"verdict": self.kind, "best_residual": self.best_residual, "starts": self.starts}


@dataclass(frozen=True)
class CollinearColumns:
    pair: tuple
    kind = "collinear_columns"

    def to_dict(self) -> dict:
        return {"verdict": self.kind, "pair": list(self.pair)}


Verdict = Union[
    GenericIdentifiable, GenericNonIdentifiable, GenericAmbiguous,
    WitnessFound, NoWitnessFound, CollinearColumns,
]


# --- generic classification -------------------------------------------------


def classify_generic(I: int, J: int) -> Verdict:
    """Identifiability of a generic real ``I x J`` mixing matrix."""
    if I < 2 or J < 1:
        raise ValueError("need I >= 2 and J >= 1")
    n = comb(I, 2)
    if J <= n or (I, J) in ((2, 2), (3, 4)):
        return GenericIdentifiable()
    if J == n + 1 and I >= 4 and I % 4 in (2, 3):
        return GenericAmbiguous()
    return GenericNonIdentifiable()


def collinear_pairs(A, tol: float = 1e-9) -> list[tuple[int, int]]:
    """Index pairs ``(i, j)``, ``i < j``, of columns with ``|cos| > 1 - tol``."""
    A = as_matrix(A)
    C = abs_cosines(A, A)
    J = A.shape[1]
    return [(i, j) for i in range(J) for j in range(i + 1, J) if C[i, j] > 1.0 - tol]


# --- Khatri-Rao square and the minor matrices -------------------------------


def khatri_rao_matrix(A) -> np.ndarray:
    """``C(I+1,2) x J`` matrix whose columns are the isometrically packed ``a_j a_j^T``."""
    A = as_matrix(A)
    return iso_pack_many(A.T).T


def _numerical_rank(M, rel: float = 1e-10) -> int:
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(s > rel * s[0])) if s[0] > 0 else 0


def khatri_rao_rank(A) -> int:
    """Dimension of ``span{a_j a_j^T}`` (singular values above ``1e-10 * max``)."""
    return _numerical_rank(khatri_rao_matrix(A))


def minor_matrix(A) -> np.ndarray:
    """2x2 minors of ``A``: rows are row pairs ``k < k'``, columns are column pairs ``i < j``."""
    A = as_matrix(A)
    I, J = A.shape
    rp = list(combinations(range(I), 2))
    cp = list(combinations(range(J), 2))
    C = np.empty((len(rp), len(cp)))
    for r, (k, kk) in enumerate(rp):
        for c, (i, j) in enumerate(cp):
            C[r, c] = A[k, i] * A[kk, j] - A[kk, i] * A[k, j]
    return C


@dataclass(frozen=True)
class KernelReport:
    C: np.ndarray
    D: np.ndarray
    kernel_dim: int
    kernel_basis: np.ndarray = field(repr=False)  # C(J,2) x kernel_dim

    def summary(self) -> dict:
        return {
            "C_shape": list(self.C.shape),
            "D_shape": list(self.D.shape),
            "D_rank": int(self.D.shape[1] - self.kernel_dim),
            "kernel_dim": self.kernel_dim,
        }


def kernel_report(A, rel_tol: float = 1e-10) -> KernelReport:
    """Build ``C(A)`` and ``D(A) = C(A) (.) C(A)`` and the kernel of ``D``.

    ``sum_j lambda_j a_j a_j^T`` has rank at most one exactly when the vector
    ``(lambda_i lambda_j)_{i<j}`` lies in the kernel of ``D``: each row of ``D``
    is a 2x2 minor of that combination.
    """
    A = as_matrix(A)
    if A.shape[1] < 2:
        raise ValueError("need at least two columns")
    C = minor_matrix(A)
    n = C.shape[0]
    pairs = list(combinations_with_replacement(range(n), 2))
    D = np.array([C[p] * C[q] for p, q in pairs]).reshape(len(pairs), C.shape[1])
    _, s, Vt = np.linalg.svd(D)
    r = int(np.sum(s > rel_tol * s[0])) if s.size and s[0] > 0 else 0
    basis = Vt[r:].T
    return KernelReport(C=C, D=D, kernel_dim=basis.shape[1], kernel_basis=basis)


def _pair_products(lam) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    return np.array([lam[i] * lam[j] for i, j in combinations(range(lam.size), 2)])


def kernel_condition(A, lam, tol: float = 1e-8, report: Optional[KernelReport] = None) -> bool:
    """Whether ``(lambda_i lambda_j)_{i<j}`` is in ``ker D(A)`` (relative to ``|D| |lambda|^2``)."""
    rep = report or kernel_report(A)
    lam = np.asarray(lam, dtype=float)
    scale = np.linalg.norm(rep.D, 2) * float(lam @ lam)
    if scale == 0:
        return True
    return float(np.linalg.norm(rep.D @ _pair_products(lam))) <= tol * scale


def is_rank_one_combination(A, lam, tol: float = 1e-8) -> bool:
    """Direct test: second singular value of ``sum lambda_j a_j a_j^T`` below ``tol`` times the scale."""
    A = as_matrix(A)
    lam = np.asarray(lam, dtype=float)
    G = (A * lam) @ A.T
    s = np.linalg.svd(G, compute_uv=False)
    scale = np.linalg.norm(A, 2) ** 2 * np.linalg.norm(lam)
    if scale == 0 or s.size < 2:
        return True
    return float(s[1]) <= tol * scale


# --- rank-one probe ---------------------------------------------------------


@dataclass(frozen=True)
class ProbeConfig:
    starts: int = 200
    seed: int = 0
    witness_tol: float = 1e-8
    collinear_cos: float = 0.99
    collinear_tol: float = 1e-9
    start_noise: float = 0.1
    minimize: MinimizeConfig = field(
        default_factory=lambda: MinimizeConfig(max_iters=200, ftol=1e-14, xtol=1e-12, restarts=1)
    )


def _probe_starts(A: np.ndarray, cfg: ProbeConfig) -> np.ndarray:
    """Perturbed columns first, then uniform points on the sphere."""
    I, J = A.shape
    rng = np.random.default_rng(cfg.seed)
    U = A / np.linalg.norm(A, axis=0)
    n_cols = min(J, cfg.starts)
    near = U[:, :n_cols].T + cfg.start_noise * rng.standard_normal((n_cols, I))
    far = rng.standard_normal((cfg.starts - n_cols, I))
    X = np.vstack([near, far])
    return X / np.linalg.norm(X, axis=1, keepdims=True)


def rank_one_probe(A, cfg: Optional[ProbeConfig] = None) -> Verdict:
    """Search ``span{a_j a_j^T}`` for a rank-one ``b b^T`` with ``b`` not collinear to any column.

    The distance ``g(b)`` from ``b b^T / |b|^2`` to the span is minimized with
    Powell's method from ``cfg.starts`` points.  To keep the search away from
    the columns, which are trivial zeros of ``g``, the objective is divided
    by ``min_j sin^2(b, a_j)``.  The result is a numerical finding: a
    :class:`NoWitnessFound` reports the best residual reached.
    """
    cfg = cfg or ProbeConfig()
    A = as_matrix(A)
    I, J = A.shape
    pairs = collinear_pairs(A, cfg.collinear_tol)
    if pairs:
        return CollinearColumns(pairs[0])

    K = khatri_rao_matrix(A)
    if K.size:
        Uq, s, _ = np.linalg.svd(K, full_matrices=False)
        Q = Uq[:, s > 1e-10 * s[0]] if s[0] > 0 else Uq[:, :0]
    else:
        Q = np.zeros((I * (I + 1) // 2, 0))
    P = np.eye(Q.shape[0]) - Q @ Q.T
    Un = A / np.linalg.norm(A, axis=0)

    def g(b):
        n2 = b @ b
        if n2 == 0:
            return math.inf
        return float(np.linalg.norm(P @ iso_pack(np.outer(b, b)))) / n2

    def h(b):
        n2 = b @ b
        if n2 == 0:
            return math.inf
        cos2 = ((Un.T @ b) ** 2).max() / n2
        return g(b) / max(1.0 - cos2, 1e-300)

    best = None  # (g, index, b)
    for idx, x0 in enumerate(_probe_starts(A, cfg)):
        res = powell_minimize(h, x0, cfg.minimize)
        b = res.x / np.linalg.norm(res.x)
        if np.abs(Un.T @ b).max() > cfg.collinear_cos:
            continue
        gb = g(b)
        if best is None or gb < best[0]:
            best = (gb, idx, b)

    if best is None:
        return NoWitnessFound(best_residual=math.inf, starts=cfg.starts)
    gb, _, b = best
    if gb > cfg.witness_tol:
        return NoWitnessFound(best_residual=float(gb), starts=cfg.starts)
    k = int(np.argmax(np.abs(b)))
    b = -b if b[k] < 0 else b
    target = iso_pack(np.outer(b, b))
    coef, *_ = np.linalg.lstsq(K, target, rcond=None)
    cres = float(np.linalg.norm(K @ coef - target) / np.linalg.norm(target))
    return WitnessFound(b=b, coefficients=coef, residual=float(gb), coefficient_residual=cres)


# --- equidistributed source models from a witness ---------------------------


@dataclass(frozen=True)
class WitnessConstruction:
    """Two models ``A s`` and ``B r`` with the same distribution.

    The Gaussian source sits at ``gaussian_index`` in both; ``B`` equals
    ``A`` with that column replaced by the witness.
    """

    spec_A: SourceSpec
    B: MixingMatrix
    spec_B: SourceSpec
    gaussian_index: int
    coefficients: np.ndarray  # normalized so the Gaussian column has coefficient 1


def witness_distributions(
    A,
    b,
    coefficients,
    *,
    base=None,
    tol: float = 1e-8,
    collinear_cos: float = 0.99,
) -> WitnessConstruction:
    """Sources ``s`` for ``A`` and ``r`` for ``B`` with ``A s`` and ``B r`` equidistributed.

    ``coefficients`` may have length ``J`` (any scale, satisfying
    ``b b^T = sum_j c_j a_j a_j^T``) or length ``J - 1`` (already normalized
    so that the last column's coefficient is one).  With length ``J`` the
    Gaussian is placed at the last column when its coefficient is positive,
    otherwise at the column with the largest coefficient.

    Each non-Gaussian pair shares a base variable ``y_j`` (``base``, default
    exponential(1)); the side with the larger variance adds independent
    Gaussian noise of variance ``|lambda_j|``.
    """
    A = as_matrix(A)
    I, J = A.shape
    b = np.asarray(b, dtype=float).ravel()
    c = np.asarray(coefficients, dtype=float).ravel()
    if b.size != I:
        raise InvalidWitnessError(f"witness has length {b.size}, expected {I}")
    if c.size == J - 1:
        c = np.append(c, 1.0)
    elif c.size != J:
        raise InvalidWitnessError(f"expected {J} or {J - 1} coefficients, got {c.size}")
    if np.linalg.norm(b) == 0:
        raise DegenerateWitnessError("witness is the zero vector")
    if abs_cosines(A, b).max() > collinear_cos:
        raise DegenerateWitnessError("witness is collinear to a column of A")

    g = J - 1 if c[-1] > 0 else int(np.argmax(c))
    if c[g] <= 0:
        raise InvalidWitnessError("no column has a positive coefficient")
    scale = c[g]
    lam = c / scale
    b = b / math.sqrt(scale)

    K = khatri_rao_matrix(A)
    target = iso_pack(np.outer(b, b))
    resid = float(np.linalg.norm(K @ lam - target))
    if resid > tol * max(1.0, float(np.linalg.norm(target))):
        raise InvalidWitnessError(f"b b^T is not the stated combination (residual {resid:.3e})")

    base = Exponential(1.0) if base is None else base
    ent_A, ent_B = [], []
    for j in range(J):
        if j == g:
            ent_A.append(Gaussian(1.0))
            ent_B.append(Gaussian(1.0))
        elif lam[j] >= 0:
            ent_A.append(WithGaussianNoise(base, float(lam[j])))
            ent_B.append(base)
        else:
            ent_A.append(base)
            ent_B.append(WithGaussianNoise(base, float(-lam[j])))
    B = A.copy()
    B[:, g] = b
    return WitnessConstruction(
        spec_A=SourceSpec(ent_A),
        B=MixingMatrix(B, normalize=False),
        spec_B=SourceSpec(ent_B),
        gaussian_index=g,
        coefficients=lam,
    )


# --- projected Veronese Hilbert function ------------------------------------


def projected_veronese_count(I: int, ell: int, max_states: int = 2_000_000) -> int:
    """Number of distinct monomials that are products of ``ell`` factors ``x_i x_j`` with ``i < j``.

    Enumerated by repeatedly multiplying every reachable exponent vector by
    every edge factor.
    """
    if I < 2:
        raise ValueError("need I >= 2")
    if ell < 0:
        raise ValueError("need ell >= 0")
    est = comb(2 * ell + I - 1, I - 1)
    if est * comb(I, 2) > max_states * 10 or est > max_states:
        raise SizeLimitError(f"enumeration for I={I}, ell={ell} exceeds the size budget")
    edges = [(i, j) for i, j in combinations(range(I), 2)]
    states = {(0,) * I}
    for _ in range(ell):
        nxt = set()
        for s in states:
            for i, j in edges:
                t = list(s)
                t[i] += 1
                t[j] += 1
                nxt.add(tuple(t))
        states = nxt
    return len(states)


def veronese_count_formula(I: int, ell: int) -> int:
    """Closed form ``C(2l+I-1, I-1) - I * C(l+I-2, I-1)``.

    Counts exponent vectors with sum ``2l`` and every entry at most ``l``,
    which are exactly the degree sequences of loopless multigraphs.
    """
    if ell == 0:
        return 1
    return comb(2 * ell + I - 1, I - 1) - I * comb(ell + I - 2, I - 1)
