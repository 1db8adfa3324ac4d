import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oica.errors import DimensionMismatchError, InvalidCountError
from oica.identifiability import khatri_rao_rank
from oica.quadrics import (
    QuadricSystem,
    build_real_count_system,
    evaluate,
    linear_relations,
    quadric_system,
)
from oica.tensors import SymMat, packed_indices

from _matrices import A_ID, A_NONID, ID_RELATIONS_LEX, LEX_PAIRS_4


def same_row_space(P, Q, tol=1e-9):
    r = np.linalg.matrix_rank
    return r(P, tol) == r(Q, tol) == r(np.vstack([P, Q]), tol)


def lex_to_packed(rows, I):
    pos = {tuple(p): k for k, p in enumerate(packed_indices(I, 2).tolist())}
    out = np.zeros_like(rows)
    for c, (i, j) in enumerate(LEX_PAIRS_4):
        out[:, pos[(i, j)]] = rows[:, c]
    return out


def test_relations_of_identifiable_example():
    L = linear_relations(A_ID)
    assert L.shape == (4, 10)
    assert same_row_space(L, lex_to_packed(ID_RELATIONS_LEX, 4))
    assert np.allclose(L @ L.T, np.eye(4))


def test_relation_count():
    for A in (A_ID, A_NONID, np.eye(3), np.random.default_rng(0).standard_normal((4, 7))):
        I = A.shape[0]
        assert len(linear_relations(A)) == I * (I + 1) // 2 - khatri_rao_rank(A)


def test_full_span_gives_no_relations():
    assert linear_relations(A_NONID).shape[0] == 0
    assert len(quadric_system(A_NONID)) == 0


def test_identity_relation_on_off_diagonal():
    L = linear_relations(np.eye(2))
    assert L.shape == (1, 3)
    pos = packed_indices(2, 2).tolist().index([0, 1])
    assert abs(L[0, pos]) == pytest.approx(1.0) and np.count_nonzero(L) == 1


def test_quadrics_of_identifiable_example():
    sys_ = quadric_system(A_ID)
    expected = [
        {(0, 1): 1, (1, 2): -1, (1, 3): 1},
        {(0, 2): 1, (1, 2): -1, (1, 3): 1},
        {(0, 1): 1, (1, 2): -1, (2, 3): 1},
        {(0, 3): 1},
    ]
    idx = packed_indices(4, 2).tolist()
    E = np.zeros((4, len(idx)))
    for k, poly in enumerate(expected):
        for (i, j), c in poly.items():
            E[k, idx.index([i, j])] = c
    assert same_row_space(sys_.monomial_coefficients(), E)
    for a in A_ID.T:
        assert np.abs(evaluate(sys_, a)).max() < 1e-10
    assert np.abs(evaluate(sys_, [1, 1, 1, 0])).max() < 1e-10
    assert np.abs(evaluate(sys_, [1, 2, 3, 4])).max() > 1e-3


def test_witness_is_a_common_zero():
    # one extra column keeps the span proper so there is something to check
    A = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 1.0], [1.0, 2.0, 3.0]])
    b = np.array([1.0, 2.0, 0.0])
    coef, *_ = np.linalg.lstsq(
        np.array([np.outer(a, a).ravel() for a in A.T]).T, np.outer(b, b).ravel(), rcond=None
    )
    in_span = np.allclose(np.einsum("j,ij,kj->ik", coef, A, A), np.outer(b, b))
    assert in_span == (np.abs(evaluate(quadric_system(A), b)).max() < 1e-10)
    # 2x3 example: the squares span everything, so b = (1, 2) is trivially a zero
    assert evaluate(quadric_system(A_NONID), [1, 2]).size == 0


@given(st.integers(0, 10_000), st.integers(2, 6))
def test_duality(seed, I):
    rng = np.random.default_rng(seed)
    J = rng.integers(1, I * (I + 1) // 2)
    A = rng.standard_normal((I, J))
    sys_ = quadric_system(A)
    # a point in the span (a column) and a generic point
    for b, zero in ((A[:, 0] * 1.7, True), (rng.standard_normal(I), None)):
        K = np.array([np.outer(a, a)[np.triu_indices(I)] for a in A.T]).T
        t = np.outer(b, b)[np.triu_indices(I)]
        lam, *_ = np.linalg.lstsq(K, t, rcond=None)
        in_span = np.linalg.norm(K @ lam - t) <= 1e-8 * np.linalg.norm(t)
        vanish = len(sys_) == 0 or np.abs(evaluate(sys_, b)).max() <= 1e-8 * (b @ b)
        assert in_span == vanish
        if zero:
            assert vanish


def test_homogeneity():
    sys_ = quadric_system(A_ID)
    x = np.array([0.3, -1.2, 2.0, 0.7])
    assert np.allclose(evaluate(sys_, 2.5 * x), 6.25 * evaluate(sys_, x))
    assert np.all(evaluate(sys_, np.zeros(4)) == 0)


def test_evaluate_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        evaluate(quadric_system(A_ID), [1, 2])


def test_evaluate_inhomogeneous():
    sys_ = QuadricSystem(1, [SymMat.from_full(np.ones((1, 1)))], constants=[-1.0])
    assert evaluate(sys_, [2.0]).tolist() == [3.0]
    assert not sys_.homogeneous


def test_json_round_trip():
    sys_ = quadric_system(A_ID)
    back = QuadricSystem.from_json(sys_.to_json())
    assert np.allclose(back.monomial_coefficients(), sys_.monomial_coefficients())
    tracked = build_real_count_system(4, 6, seed=1)
    d = tracked.system.to_dict()
    back = QuadricSystem.from_dict(json.loads(json.dumps(d)))
    for s in tracked.solutions:
        assert np.allclose(evaluate(back, s), evaluate(tracked.system, s))


def test_real_count_base_cases():
    t = build_real_count_system(2, 2)
    assert t.real_count == 2 and np.allclose(sorted(t.solutions[:, 0].real), [-1, 1])
    assert evaluate(t.system, [2.0]).tolist() == [3.0]
    t = build_real_count_system(2, 0)
    assert t.real_count == 0 and np.allclose(sorted(t.solutions[:, 0].imag), [-1, 1])


def test_real_count_three_variables():
    t = build_real_count_system(3, 2)
    assert len(t.system) == 2 and len(t.solutions) == 4
    assert t.real_count == 2 and t.max_residual < 1e-10


@pytest.mark.parametrize("I", [2, 3, 4, 5, 6])
def test_tracked_invariants(I):
    for ell in range(0, 2 ** (I - 1) + 1, 2):
        t = build_real_count_system(I, ell, seed=ell)
        assert len(t.solutions) == 2 ** (I - 1)
        assert t.real_count == ell == int(t.real_mask().sum())
        assert t.max_residual < 1e-8
        assert t.min_distance > 1e-6
        assert t.system.dim == I - 1 and len(t.system) == I - 1


def test_real_count_deterministic():
    a = build_real_count_system(5, 10, seed=3)
    b = build_real_count_system(5, 10, seed=3)
    assert np.array_equal(a.solutions, b.solutions)


@pytest.mark.parametrize("I,ell", [(3, 3), (3, 6), (2, -2), (1, 0)])
def test_invalid_counts(I, ell):
    with pytest.raises(InvalidCountError):
        build_real_count_system(I, ell)
