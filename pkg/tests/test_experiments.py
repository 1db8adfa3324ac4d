import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oica.cumulants import Exponential, Gaussian, SourceSpec
from oica.errors import DimensionMismatchError, ModelViolationError
from oica.experiments import (
    SweepConfig,
    generate_mixing,
    greedy_match,
    match_error,
    rel_frob_error,
    run_sweep,
    run_trial,
    sample_mixture,
    trial_seed,
)
from oica.mixing import MixingMatrix
from oica.recovery import RecoveryConfig


def test_generate_mixing():
    A = generate_mixing(6, 10, 5)
    B = generate_mixing(6, 10, 5)
    assert np.array_equal(A.array, B.array)
    assert np.allclose(np.linalg.norm(A.array, axis=0), 1, atol=1e-12)
    assert not np.array_equal(A.array, generate_mixing(6, 10, 6).array)


def test_generate_mixing_no_collinear_pairs():
    rng = np.random.default_rng(0)
    for _ in range(2000):
        A = generate_mixing(6, 10, rng.integers(2**63)).array
        C = np.abs(A.T @ A)
        np.fill_diagonal(C, 0)
        assert C.max() < 1 - 1e-6


def test_sample_mixture():
    X = sample_mixture(np.eye(3), SourceSpec([Exponential(1.0)] * 3), 200_000, 0)
    assert np.allclose(X.mean(axis=0), 1, atol=0.01)
    assert sample_mixture(np.eye(2), SourceSpec.default(2), 0, 0).shape == (0, 2)
    with pytest.raises(DimensionMismatchError):
        sample_mixture(np.eye(2), SourceSpec.default(3), 5, 0)
    with pytest.raises(ModelViolationError):
        sample_mixture(np.eye(2), SourceSpec([Gaussian(1.0), Gaussian(1.0)]), 5, 0)


def test_sample_mixture_deterministic():
    spec = SourceSpec([Exponential(1.0), Gaussian(1.0)])
    assert np.array_equal(sample_mixture(np.eye(2), spec, 50, 9), sample_mixture(np.eye(2), spec, 50, 9))


def test_greedy_match_swap_and_sign():
    A = generate_mixing(3, 4, 1).array
    H = A.copy()
    H[:, [0, 1]] = H[:, [1, 0]]
    H[:, 1] *= -1
    assert np.allclose(greedy_match(A, H).array, A)
    assert np.allclose(greedy_match(A, A).array, A)


def test_greedy_match_keeps_gaussian_column_in_place():
    A = np.eye(3)
    H = np.eye(3)[:, [2, 1, 0]]
    M = greedy_match(A, H).array
    # the last estimate stays last even though it matches the first truth column
    assert np.allclose(M[:, 2], [1, 0, 0])


def test_greedy_match_perturbed_column():
    A = np.eye(4)
    t = np.deg2rad(10)
    H = A.copy()
    H[:, 2] = [0, 0, np.cos(t), np.sin(t)]
    H = H[:, [1, 2, 0, 3]]
    M = greedy_match(A, H).array
    assert np.allclose(M[:, [0, 1, 3]], A[:, [0, 1, 3]])
    assert np.allclose(M[:, 2], [0, 0, np.cos(t), np.sin(t)])


@given(st.integers(0, 10_000))
def test_greedy_match_invariance(seed):
    rng = np.random.default_rng(seed)
    I, J = rng.integers(2, 6), rng.integers(2, 9)
    A = generate_mixing(I, J, seed).array
    perm = np.append(rng.permutation(J - 1), J - 1)
    signs = rng.choice([-1.0, 1.0], J)
    H = A[:, perm] * signs
    M = greedy_match(A, H).array
    assert rel_frob_error(A, M) <= 1e-12
    # output columns are the input columns up to sign
    assert sorted(np.round(np.abs(M).sum(axis=0), 9)) == sorted(np.round(np.abs(H).sum(axis=0), 9))


def test_greedy_match_ties_lowest_index():
    A = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    H = np.array([[0.0, 0.0, 0.0], [1.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    M = greedy_match(A, H)
    assert np.array_equal(M.array[:, 0], H[:, 0])


def test_rel_frob_error_examples():
    assert rel_frob_error(np.eye(2), np.eye(2)) == 0
    assert rel_frob_error(np.eye(2), [[1, 0], [0, 0]]) == pytest.approx(math.sqrt(0.5))
    assert rel_frob_error([[1], [0]], [[0], [1]]) == pytest.approx(math.sqrt(2))
    with pytest.raises(DimensionMismatchError):
        rel_frob_error(np.eye(2), np.eye(3))
    with pytest.raises(DimensionMismatchError):
        greedy_match(np.eye(2), np.ones((2, 3)))


def test_trial_seeds_distinct():
    seeds = {trial_seed(0, J, t) for J in range(2, 20) for t in range(50)}
    assert len(seeds) == 18 * 50
    assert trial_seed(3, 10, 4) == trial_seed(3, 10, 4)


def test_sweep_deterministic_and_ordered():
    cfg = SweepConfig(I=4, J_range=(5, 6), trials=2)
    a = run_sweep(cfg)
    assert a == run_sweep(cfg)
    assert [(r.J, r.trial) for r in a] == [(5, 0), (5, 1), (6, 0), (6, 1)]
    assert all(r.n == "population" for r in a)
    assert max(r.error for r in a) < 1e-4


def test_sweep_workers_do_not_change_rows():
    cfg = SweepConfig(I=3, J_range=(3, 4), trials=2)
    assert run_sweep(cfg, workers=1) == run_sweep(cfg, workers=2)


def test_sample_mode_rows():
    cfg = SweepConfig(I=3, J_range=(3,), trials=1, mode="sample", n_values=(500, 5000), source=Exponential(1.0))
    rows = run_trial(cfg, 3, 0)
    assert [r.n for r in rows] == [500, 5000]
    assert len({r.seed for r in rows}) == 1


def test_failed_trial_becomes_nan_row():
    cfg = SweepConfig(I=3, J_range=(3,), recovery=RecoveryConfig(strict=True, residual_abs_tol=0.0, residual_rel_tol=0.0))
    rows = run_sweep(cfg)
    assert len(rows) == 1
    r = rows[0]
    assert math.isnan(r.error) == bool(r.reason)


def test_failed_trial_reason_recorded():
    cfg = SweepConfig(I=2, J_range=(4,), recovery=RecoveryConfig(strict=True))
    (r,) = run_sweep(cfg)
    assert math.isnan(r.error) and math.isnan(r.objective) and r.reason


def test_sweep_config_validation():
    with pytest.raises(ValueError):
        SweepConfig(I=4, J_range=(5,), trials=0)
    with pytest.raises(ValueError):
        SweepConfig(I=4, J_range=(1,))
    with pytest.raises(ValueError):
        SweepConfig(I=4, J_range=(5,), mode="sample", n_values=(100,))
    with pytest.raises(ValueError):
        SweepConfig(I=4, J_range=(5,), gaussian_variance=0.0)


def test_progress_callback():
    seen = []
    run_sweep(SweepConfig(I=3, J_range=(3,), trials=3), progress=lambda i, n: seen.append((i, n)))
    assert seen == [(1, 3), (2, 3), (3, 3)]


def test_gaussian_variance_weak_trend():
    def mean_err(v):
        rows = run_sweep(SweepConfig(I=4, J_range=(7,), trials=4, gaussian_variance=v, seed=2))
        return np.nanmean([r.error for r in rows])

    assert mean_err(100.0) <= mean_err(0.01) + 0.05
