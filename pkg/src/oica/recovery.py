"""Recovery of an overcomplete mixing matrix with one Gaussian source.

Step one decomposes the fourth cumulant with the subspace power method:
the column space of the flattened tensor is spanned by the squared
columns ``a_j a_j^T``, and each column is found as a rank-one fixed point
of a projected power iteration, then deflated away.  Step two searches the
span of the recovered squares together with the covariance for one more
rank-one matrix, which is the Gaussian column.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from math import comb
from typing import Optional, Union

import numpy as np
from scipy import linalg
from scipy.optimize import least_squares

from .cumulants import CumulantPair
from .errors import (
    DecompositionError,
    GaussianColumnUndetectedError,
    RankAmbiguousWarning,
    ResidualTooLargeError,
)
from .mixing import MixingMatrix, abs_cosines, as_matrix, canonical_vector
from .optimize import MinimizeConfig, best_of_restarts
from .tensors import (
    SymMat,
    SymTen4,
    _position_table,
    flatten,
    iso_pack,
    iso_pack_many,
    multiplicities,
    outer_power,
    packed_indices,
)

__all__ = [
    "RecoveryConfig",
    "Decomposition",
    "GaussianColumn",
    "RecoveryResult",
    "detect_rank",
    "decompose_k4",
    "recover_gaussian_column",
    "recover",
]


@dataclass(frozen=True)
class RecoveryConfig:
    """Knobs for both recovery steps.

    Tolerances left as ``None`` are chosen from the cumulant provenance:
    tight for population cumulants, loose for sample estimates.
    """

    seed: int = 0
    # step 1
    starts_per_round: int = 50
    power_iters: int = 1000
    power_tol: float = 1e-12
    shift: float = 1.0
    rank_one_tol: Optional[float] = None
    dedup_cos: float = 0.99
    rank_tol: float = 1e-6
    # step 2
    minimize: MinimizeConfig = field(default_factory=lambda: MinimizeConfig(restarts=10))
    profile: bool = True
    residual_abs_tol: Optional[float] = None
    residual_rel_tol: Optional[float] = None
    gaussian_coef_tol: float = 1e-8
    # allow ranks beyond the uniqueness regime and return best-effort results
    strict: bool = True

    def with_(self, **kw) -> "RecoveryConfig":
        return replace(self, **kw)


@dataclass(frozen=True)
class Decomposition:
    vectors: np.ndarray  # I x R, canonical unit columns
    weights: np.ndarray  # R
    residual: float  # ||k4 - sum w_r v_r^4|| / ||k4||
    rank: int
    fit: np.ndarray  # per-vector ||P_U iso(v v^T)|| when accepted
    eigenvalues: np.ndarray
    rank_ambiguous: bool = False
    lenient: int = 0  # components accepted below the rank-one tolerance


@dataclass(frozen=True)
class GaussianColumn:
    vector: np.ndarray
    coefficients: np.ndarray  # J (last entry multiplies the new column)
    objective: float
    restart: int
    iters_used: int


@dataclass(frozen=True)
class RecoveryResult:
    A_hat: MixingMatrix
    coefficients: np.ndarray
    objective: float
    decomposition: Decomposition
    warnings: tuple = ()

    @property
    def diagnostics(self) -> dict:
        d = self.decomposition
        return {
            "objective": self.objective,
            "k4_relative_residual": d.residual,
            "rank": d.rank,
            "rank_ambiguous": d.rank_ambiguous,
            "power_fit": d.fit.tolist(),
            "k4_weights": d.weights.tolist(),
            "coefficients": self.coefficients.tolist(),
            "warnings": list(self.warnings),
        }


def _default_rank_one_tol(sample: bool) -> float:
    return 0.5 if sample else 1e-6


def detect_rank(eigenvalues, sample: bool, rank_tol: float = 1e-6, max_rank: Optional[int] = None):
    """Rank of a flattening from its eigenvalues.

    Population: count of ``|ev| > rank_tol * max|ev|``.  Sample: position of
    the largest ratio between consecutive sorted ``|ev|`` among the leading
    ``max_rank + 1``.  Returns ``(rank, ambiguous)`` where ambiguous means the
    gap ratio at the chosen rank is below 10.
    """
    ev = np.sort(np.abs(np.asarray(eigenvalues, dtype=float)))[::-1]
    if ev.size == 0 or ev[0] == 0:
        return 0, False
    if not sample:
        R = int(np.sum(ev > rank_tol * ev[0]))
    else:
        top = ev[: (max_rank or ev.size) + 1]
        with np.errstate(divide="ignore"):
            ratios = top[:-1] / np.maximum(top[1:], np.finfo(float).tiny)
        R = int(np.argmax(ratios)) + 1
    if R < ev.size:
        gap = ev[R - 1] / ev[R] if ev[R] > 0 else math.inf
    else:
        gap = math.inf
    return R, bool(gap < 10)


def _power_batch(X, U, shift, iters, tol, accept=None, check_every=10):
    """Projected power iteration on every row of ``X`` simultaneously.

    ``accept(X, fit)`` returns a mask of usable candidates.  When one of the
    converged rows is usable and fits at least as well as every row still
    moving, the iteration stops early.
    """
    S, I = X.shape
    w = np.sqrt(multiplicities(I, 2))
    pos = _position_table(I, 2)
    P = U @ U.T
    active = np.ones(S, dtype=bool)
    for it in range(iters):
        if not active.any():
            break
        Xa = X[active]
        Y = iso_pack_many(Xa) @ P
        Pm = (Y / w)[:, pos]
        Xn = np.einsum("sij,sj->si", Pm, Xa) + shift * Xa
        Xn /= np.sqrt(np.einsum("si,si->s", Xn, Xn))[:, None]
        delta = np.sqrt(np.einsum("si,si->s", Xn - Xa, Xn - Xa))
        X[active] = Xn
        idx = np.flatnonzero(active)
        active[idx[delta < tol]] = False
        if accept is not None and (it + 1) % check_every == 0 and active.any():
            fit = np.linalg.norm(iso_pack_many(X) @ U, axis=1)
            ok = accept(X, fit) & ~active
            if ok.any() and fit[ok].max() >= fit[active].max():
                break
    fit = np.linalg.norm(iso_pack_many(X) @ U, axis=1)
    return X, fit


def _complement(q):
    """Orthonormal basis of the complement of the unit vector ``q``."""
    Q, _ = np.linalg.qr(np.column_stack([q, np.eye(q.size)]))
    return Q[:, 1:q.size]


def _fit_weights(k4: SymTen4, V):
    """Least squares weights for ``k4 ~ sum_r w_r v_r^4`` in the Frobenius norm."""
    sq = np.sqrt(multiplicities(k4.dim, 4))
    B = np.column_stack([outer_power(v, 4).data * sq for v in V.T]) if V.shape[1] else np.zeros((k4.data.size, 0))
    target = k4.data * sq
    if B.shape[1] == 0:
        return np.zeros(0), 1.0 if np.linalg.norm(target) > 0 else 0.0
    lam, *_ = np.linalg.lstsq(B, target, rcond=None)
    nrm = np.linalg.norm(target)
    res = np.linalg.norm(target - B @ lam)
    return lam, (res / nrm if nrm > 0 else res)


def decompose_k4(
    k4: SymTen4,
    rank: Union[int, str, None] = "auto",
    cfg: Optional[RecoveryConfig] = None,
    *,
    sample: bool = False,
) -> Decomposition:
    """Symmetric decomposition ``k4 = sum_r w_r v_r^{(x)4}`` by the subspace power method.

    Parameters
    ----------
    k4 : SymTen4
        Fourth cumulant (population or sample).
    rank : int or "auto"
        Number of components.  ``"auto"`` detects it from the spectrum of
        the flattening.
    sample : bool
        Whether ``k4`` is a sample estimate; affects rank detection and the
        default acceptance tolerance for rank-one fixed points.

    Raises
    ------
    DecompositionError
        When fewer than ``rank`` distinct rank-one fixed points are found.
        The exception carries the partial result.
    """
    cfg = cfg or RecoveryConfig()
    I = k4.dim
    # up to I components are always well posed (orthogonal case included)
    max_rank = max(comb(I, 2), I)
    F = flatten(k4).F
    ev, vecs = np.linalg.eigh(F)
    order = np.argsort(-np.abs(ev), kind="stable")
    ev, vecs = ev[order], vecs[:, order]

    R_auto, ambiguous = detect_rank(ev, sample, cfg.rank_tol, max_rank)
    if rank in (None, "auto"):
        R = min(R_auto, max_rank) if cfg.strict else R_auto
    else:
        R = int(rank)
        ambiguous = False
    if R < 0 or R > F.shape[0]:
        raise ValueError(f"rank {R} outside [0, {F.shape[0]}]")
    if cfg.strict and R > max_rank:
        raise ValueError(f"rank {R} exceeds max(C(I,2), I) = {max_rank}; pass strict=False to try anyway")
    if ambiguous:
        warnings.warn(f"rank detection ambiguous (chose {R})", RankAmbiguousWarning, stacklevel=2)

    eps_r1 = cfg.rank_one_tol if cfg.rank_one_tol is not None else _default_rank_one_tol(sample)
    rng = np.random.default_rng(cfg.seed)
    U = vecs[:, :R]
    M = np.diag(ev[:R])
    found: list[np.ndarray] = []
    fits: list[float] = []
    lenient = 0
    for _ in range(R):
        X = rng.standard_normal((cfg.starts_per_round, I))
        X /= np.linalg.norm(X, axis=1, keepdims=True)
        Fd = np.column_stack(found) if found else None

        def novelty_of(Z):
            return abs_cosines(Fd, Z.T).max(axis=0) if found else np.zeros(len(Z))

        def accept(Z, fit):
            return (fit >= 1.0 - eps_r1) & (novelty_of(Z) <= cfg.dedup_cos)

        X, fit = _power_batch(X, U, cfg.shift, cfg.power_iters, cfg.power_tol, accept)
        novelty = novelty_of(X)
        chosen = None
        for s in np.argsort(-fit, kind="stable"):
            if fit[s] < 1.0 - eps_r1:
                break
            if novelty[s] > cfg.dedup_cos:
                continue
            chosen = s
            break
        if chosen is None and not cfg.strict:
            # best effort: the most novel candidate, then the best fit
            chosen = int(np.lexsort((-fit, novelty))[0])
            lenient += 1
        if chosen is None:
            V = np.column_stack(found) if found else np.zeros((I, 0))
            lam, _ = _fit_weights(k4, V)
            raise DecompositionError(
                f"found {len(found)} of {R} rank-one components", vectors=V, weights=lam
            )
        a = canonical_vector(X[chosen])
        found.append(a)
        fits.append(float(fit[chosen]))
        if len(found) == R:
            break
        # deflate: drop the direction M^{-1} y from the working subspace
        y = U.T @ iso_pack(np.outer(a, a))
        q = linalg.lstsq(M, y)[0]
        nq = np.linalg.norm(q)
        if nq == 0 or not np.isfinite(nq):
            q = y
            nq = np.linalg.norm(q)
        B = _complement(q / nq)
        lam_a = 1.0 / float(y @ q) if float(y @ q) != 0 else 0.0
        M = B.T @ (M - lam_a * np.outer(y, y)) @ B
        M = 0.5 * (M + M.T)
        U = U @ B

    V = np.column_stack(found) if found else np.zeros((I, 0))
    lam, res = _fit_weights(k4, V)
    return Decomposition(
        vectors=V, weights=lam, residual=float(res), rank=R,
        fit=np.array(fits), eigenvalues=ev, rank_ambiguous=ambiguous, lenient=lenient,
    )


def _sphere(rng, I):
    v = rng.standard_normal(I)
    return v / np.linalg.norm(v)


def recover_gaussian_column(
    k2: SymMat,
    known,
    cfg: Optional[RecoveryConfig] = None,
    *,
    sample: bool = False,
) -> GaussianColumn:
    """Find the rank-one matrix ``v v^T`` completing ``k2`` in the span of known squares.

    Minimizes ``||k2 - sum_j l_j a_j a_j^T - l_J v v^T||`` with Powell's
    method from random starts.  With ``cfg.profile`` the coefficients are
    eliminated in closed form and only ``v`` is searched.
    """
    cfg = cfg or RecoveryConfig()
    I = k2.dim
    known = as_matrix(known) if np.size(known) else np.zeros((I, 0))
    if known.shape[0] != I:
        raise ValueError("known columns have the wrong dimension")
    K = known.shape[1]
    J = K + 1
    target = k2.iso()
    Bk = iso_pack_many(known.T).T if K else np.zeros((target.size, 0))

    if K:
        Uq, sv, _ = np.linalg.svd(Bk, full_matrices=False)
        Q = Uq[:, sv > 1e-12 * sv[0]]
    else:
        Q = np.zeros((target.size, 0))

    def perp(z):
        return z - Q @ (Q.T @ z)

    r0 = perp(target)
    r0sq = float(r0 @ r0)

    if cfg.profile:
        Pp = np.eye(target.size) - Q @ Q.T
        i0, i1 = packed_indices(I, 2).T
        wts = np.sqrt(multiplicities(I, 2))

        def objective(v):
            n2 = v @ v
            if n2 == 0:
                return r0sq
            z = v[i0] * v[i1] * wts / n2
            zz = z @ Pp @ z
            # near a known column the ratio below is 0/0 and rounding fakes a fit
            if zz < 1e-10 * (z @ z):
                return r0sq
            return max(r0sq - (r0 @ z) ** 2 / zz, 0.0)

        def sampler(rng):
            return _sphere(rng, I)
    else:
        def objective(p):
            v, l = p[:I], p[I:]
            n2 = v @ v
            if n2 == 0:
                return math.inf
            fit = Bk @ l[:K] + l[K] * iso_pack(np.outer(v, v)) / n2
            r = target - fit
            return r @ r

        def sampler(rng):
            return np.concatenate([_sphere(rng, I), rng.standard_normal(J)])

    mcfg = cfg.minimize
    if mcfg.max_iters is None:
        mcfg = mcfg.with_(max_iters=1000 * (I + J))
    mcfg = mcfg.with_(seed=_mix_seed(cfg.seed, mcfg.seed))
    best = best_of_restarts(objective, sampler, mcfg)

    def residual_vec(v):
        B = np.column_stack([Bk, iso_pack(np.outer(v, v)) / (v @ v)])
        l, *_ = np.linalg.lstsq(B, target, rcond=None)
        return target - B @ l, l

    # the line search stops near sqrt(eps) in v; finish with Levenberg-Marquardt
    v = best.x[:I] / np.linalg.norm(best.x[:I])
    r, l = residual_vec(v)
    obj = float(np.linalg.norm(r))
    if obj > 0:
        try:
            lm = least_squares(lambda u: residual_vec(u)[0], v, method="lm", xtol=1e-15, ftol=1e-15)
            r2, l2 = residual_vec(lm.x)
            if np.all(np.isfinite(lm.x)) and np.linalg.norm(r2) < obj:
                v, obj = lm.x / np.linalg.norm(lm.x), float(np.linalg.norm(r2))
        except (ValueError, np.linalg.LinAlgError):
            pass
    v = canonical_vector(v)
    r, l = residual_vec(v)
    obj = float(np.linalg.norm(r))

    abs_tol = cfg.residual_abs_tol if cfg.residual_abs_tol is not None else (1e-2 if sample else 1e-8)
    rel_tol = cfg.residual_rel_tol if cfg.residual_rel_tol is not None else (0.5 if sample else 1e-6)
    if cfg.strict:
        if obj > abs_tol + rel_tol * np.linalg.norm(target):
            raise ResidualTooLargeError(
                f"step-2 residual {obj:.3e} too large; covariance inconsistent with the model"
            )
        collinear = K > 0 and abs_cosines(known, v).max() > cfg.dedup_cos
        if abs(l[-1]) < cfg.gaussian_coef_tol * np.linalg.norm(l) or collinear or np.linalg.norm(l) == 0:
            raise GaussianColumnUndetectedError(
                "covariance already lies in the span of the known columns"
            )
    return GaussianColumn(v, l, obj, best.restart, best.iters_used)


def _mix_seed(a: int, b: int) -> int:
    return int(np.random.SeedSequence([a, b]).generate_state(1, dtype=np.uint64)[0])


def recover(
    cp: CumulantPair,
    J: Union[int, str, None] = "auto",
    cfg: Optional[RecoveryConfig] = None,
) -> RecoveryResult:
    """Recover the ``I x J`` mixing matrix from second and fourth cumulants.

    The first ``J - 1`` columns come from the fourth cumulant, the last
    (Gaussian) column from the covariance.  ``J="auto"`` sets ``J`` to the
    detected rank of the fourth cumulant plus one.
    """
    cfg = cfg or RecoveryConfig()
    sample = cp.is_sample
    if J in (None, "auto"):
        R: Union[int, str] = "auto"
    else:
        J = int(J)
        if J < 1:
            raise ValueError("J must be at least 1")
        R = J - 1
        if cfg.strict and R > comb(cp.dim, 2):
            raise ValueError(f"J - 1 = {R} exceeds C(I,2) = {comb(cp.dim, 2)}")
    notes = []
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", RankAmbiguousWarning)
        dec = decompose_k4(cp.k4, R, cfg, sample=sample)
    notes.extend(str(w.message) for w in caught)
    if dec.lenient:
        notes.append(f"{dec.lenient} component(s) accepted below the rank-one tolerance")
    g = recover_gaussian_column(cp.k2, dec.vectors, cfg, sample=sample)
    A = np.column_stack([dec.vectors, g.vector])
    return RecoveryResult(
        A_hat=MixingMatrix(A),
        coefficients=g.coefficients,
        objective=g.objective,
        decomposition=dec,
        warnings=tuple(notes),
    )
