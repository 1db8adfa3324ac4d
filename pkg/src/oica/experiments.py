"""Synthetic experiments: random mixing matrices, column matching, error sweeps."""
from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence, Union

import numpy as np

from .cumulants import (
    Descriptor,
    Gaussian,
    Moments,
    SourceSpec,
    population_cumulants,
    sample_cumulants,
)
from .errors import DimensionMismatchError, OICAError
from .mixing import MixingMatrix, as_matrix, canonical_columns
from .recovery import RecoveryConfig, recover

__all__ = [
    "generate_mixing",
    "sample_mixture",
    "greedy_match",
    "rel_frob_error",
    "match_error",
    "trial_seed",
    "SweepConfig",
    "SweepRow",
    "run_trial",
    "run_sweep",
]


def generate_mixing(I: int, J: int, seed, collinear_tol: float = 1e-6) -> MixingMatrix:
    """Standard normal ``I x J`` matrix with canonical unit columns, redrawn if two columns are collinear."""
    rng = np.random.default_rng(seed)
    while True:
        A = MixingMatrix(rng.standard_normal((I, J)))
        if A.no_collinear_pair(collinear_tol):
            return A


def sample_mixture(A, spec: SourceSpec, n: int, seed) -> np.ndarray:
    """``n`` independent rows of ``x = A s``."""
    A = as_matrix(A)
    if len(spec) != A.shape[1]:
        raise DimensionMismatchError(f"{len(spec)} sources for {A.shape[1]} columns")
    if n == 0:
        return np.empty((0, A.shape[0]))
    S = spec.sample(np.random.default_rng(seed), n)
    return S @ A.T


def _check_shapes(A_true, A_hat):
    A = as_matrix(A_true)
    B = as_matrix(A_hat)
    if A.shape != B.shape:
        raise DimensionMismatchError(f"shapes differ: {A.shape} vs {B.shape}")
    return A, B


def greedy_match(A_true, A_hat) -> MixingMatrix:
    """Permute and sign-flip the first ``J - 1`` columns of ``A_hat`` to follow ``A_true``.

    For each true column in order, the unused estimate with the largest
    ``|cos|`` is taken (ties go to the lower index).  The last (Gaussian)
    column stays in place and is only sign-aligned.
    """
    A, B = _check_shapes(A_true, A_hat)
    J = A.shape[1]
    out = np.empty_like(B)
    if J == 0:
        return MixingMatrix(out, normalize=False)
    na = np.linalg.norm(A, axis=0)
    nb = np.linalg.norm(B, axis=0)
    na[na == 0] = 1.0
    nb[nb == 0] = 1.0
    cos = (A / na).T @ (B / nb)
    free = list(range(J - 1))
    for j in range(J - 1):
        best = free[0]
        for k in free[1:]:
            if abs(cos[j, k]) > abs(cos[j, best]):
                best = k
        free.remove(best)
        out[:, j] = -B[:, best] if cos[j, best] < 0 else B[:, best]
    out[:, -1] = -B[:, -1] if cos[-1, -1] < 0 else B[:, -1]
    return MixingMatrix(out, normalize=False)


def rel_frob_error(A_true, A_matched) -> float:
    """``sqrt(sum_ij (a_ij - a'_ij)^2 / J)``."""
    A, B = _check_shapes(A_true, A_matched)
    J = A.shape[1]
    if J == 0:
        return 0.0
    return float(math.sqrt(((A - B) ** 2).sum() / J))


def match_error(A_true, A_hat) -> float:
    return rel_frob_error(A_true, greedy_match(A_true, A_hat))


# --- sweeps -----------------------------------------------------------------


def trial_seed(seed: int, J: int, trial: int) -> int:
    """64-bit seed of one trial, split from ``seed`` by ``(J, trial)``."""
    ss = np.random.SeedSequence(seed, spawn_key=(J, trial))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _child_seed(seed: int, *key: int) -> int:
    ss = np.random.SeedSequence(seed, spawn_key=tuple(key))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class SweepConfig:
    """A grid of synthetic recovery experiments.

    ``mode`` is ``"population"`` (exact cumulants) or ``"sample"``; in
    sample mode every trial is run at each size in ``n_values`` on the same
    mixing matrix.  The ``J - 1`` non-Gaussian sources all follow
    ``source``; the Gaussian source is last.
    """

    I: int
    J_range: tuple
    trials: int = 1
    mode: str = "population"
    n_values: tuple = ()
    source: Descriptor = Moments(1.0, 6.0)
    gaussian_variance: float = 1.0
    seed: int = 0
    recovery: RecoveryConfig = field(default_factory=lambda: RecoveryConfig(strict=False))

    def __post_init__(self):
        object.__setattr__(self, "J_range", tuple(int(j) for j in self.J_range))
        object.__setattr__(self, "n_values", tuple(int(n) for n in self.n_values))
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        if any(j < 2 for j in self.J_range):
            raise ValueError("every J must be at least 2")
        if self.I < 2:
            raise ValueError("I must be at least 2")
        if self.mode not in ("population", "sample"):
            raise ValueError("mode must be 'population' or 'sample'")
        if self.mode == "sample":
            if not self.n_values or min(self.n_values) < 2:
                raise ValueError("sample mode needs sample sizes of at least 2")
            if isinstance(self.source, Moments):
                raise ValueError("sample mode needs a source distribution that can be sampled")
        if not self.gaussian_variance > 0:
            raise ValueError("gaussian_variance must be positive")

    def spec(self, J: int) -> SourceSpec:
        return SourceSpec.default(J, self.gaussian_variance, self.source)


@dataclass(frozen=True)
class SweepRow:
    I: int
    J: int
    trial: int
    n: Union[int, str]  # sample size or "population"
    error: float
    objective: float
    seed: int
    reason: str = ""


def run_trial(cfg: SweepConfig, J: int, trial: int) -> list[SweepRow]:
    """All rows of one ``(J, trial)`` cell: one per sample size, or one in population mode."""
    seed = trial_seed(cfg.seed, J, trial)
    A = generate_mixing(cfg.I, J, _child_seed(seed, 0))
    spec = cfg.spec(J)
    rcfg = cfg.recovery.with_(seed=_child_seed(seed, 1))
    sizes = cfg.n_values if cfg.mode == "sample" else ("population",)
    rows = []
    for n in sizes:
        try:
            if n == "population":
                cp = population_cumulants(A, spec)
            else:
                X = sample_mixture(A, spec, n, _child_seed(seed, 2, n))
                cp = sample_cumulants(X)
            res = recover(cp, J, rcfg)
            err = match_error(A, res.A_hat)
            rows.append(SweepRow(cfg.I, J, trial, n, err, float(res.objective), seed))
        except (OICAError, ArithmeticError, ValueError, np.linalg.LinAlgError) as exc:
            reason = getattr(exc, "reason", "invalid_input" if isinstance(exc, ValueError) else type(exc).__name__)
            rows.append(SweepRow(cfg.I, J, trial, n, math.nan, math.nan, seed, reason))
    return rows


def _run_cell(args):
    return run_trial(*args)


def default_workers() -> int:
    env = os.environ.get("OICA_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return 1


def run_sweep(cfg: SweepConfig, workers: Optional[int] = None, progress=None) -> list[SweepRow]:
    """Run every ``(J, trial)`` cell; rows come back ordered by ``(J, trial, n)``.

    Failed trials become rows with ``error = nan`` and a reason code.
    ``workers > 1`` runs cells in separate processes; the output does not
    depend on it.
    """
    workers = default_workers() if workers is None else max(1, int(workers))
    cells = [(cfg, J, t) for J in cfg.J_range for t in range(cfg.trials)]
    rows: list[SweepRow] = []
    if workers == 1:
        for i, cell in enumerate(cells):
            rows.extend(_run_cell(cell))
            if progress is not None:
                progress(i + 1, len(cells))
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for i, part in enumerate(pool.map(_run_cell, cells)):
                rows.extend(part)
                if progress is not None:
                    progress(i + 1, len(cells))
    return rows
