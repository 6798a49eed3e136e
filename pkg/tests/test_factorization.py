import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kkperturb.algebra import (
    conjugate_algebra,
    diagonal_algebra,
    full_matrix_algebra,
    op_norm,
    random_unitary_near_identity,
)
from kkperturb.errors import ApproximantTooFar, ShapeMismatch
from kkperturb.factorization import (
    FactorizationConfig,
    FactorizationWitness,
    RowElement,
    check_factorization,
    naive_witness,
    search_length2,
    transfer_row_approximant,
)
from kkperturb.perturbation import sample_rows

M2 = full_matrix_algebra(2)


def row_over(alg, m, seed):
    rng = np.random.default_rng(seed)
    x = sample_rows(alg, m, 1, rng)[0]
    return RowElement(np.array(np.split(x, m, axis=1)), alg)


def test_single_entry_witness():
    a = np.array([[0.3, 0.1j], [0.0, -0.5]])
    x = RowElement(a[None], M2)
    one = np.ones((1, 1), dtype=complex)
    w = FactorizationWitness(one, a[None].astype(complex), one, np.eye(2, dtype=complex)[None], one)
    rep = check_factorization(x, w, M2)
    assert rep.residual == 0.0
    assert rep.K == pytest.approx(1.0)


def test_homogeneity():
    x = row_over(M2, 3, 0)
    w = naive_witness(x)
    t = 2.5
    rep = check_factorization(x.scaled(t), w.scaled(t), M2)
    assert rep.residual <= 1e-12
    assert rep.K == pytest.approx(t * w.K)


@pytest.mark.parametrize("n", [1, 2, 4, 6])
def test_naive_witness(n):
    x = row_over(M2, n, n)
    rep = check_factorization(x, naive_witness(x), M2)
    assert rep.residual <= 1e-12
    assert rep.K == pytest.approx(np.sqrt(n) * x.norm)
    assert rep.max_entry_norm <= 1 + 1e-12


def test_shape_mismatch():
    x = row_over(M2, 3, 1)
    w = naive_witness(row_over(M2, 2, 1))
    with pytest.raises(ShapeMismatch):
        check_factorization(x, w)


def test_equal_entries_ratio():
    a = np.array([[0.2, 0.5], [0.1, -0.4j]])
    a = a / op_norm(a)
    x = RowElement(np.array([a] * 4), M2)
    res = search_length2(x, FactorizationConfig(restarts=2))
    assert res.success
    assert res.ratio <= 2.0 + 1e-9


def test_width_one_is_optimal():
    x = row_over(M2, 1, 3)
    res = search_length2(x, FactorizationConfig(restarts=2))
    assert res.success and res.ratio <= 1 + 1e-6


@settings(max_examples=10)
@given(st.integers(1, 6), st.integers(0, 10_000))
def test_search_witness_reconstructs(n, seed):
    x = row_over(M2, n, seed)
    res = search_length2(x, FactorizationConfig(restarts=2, iterations=100, seed=seed))
    if res.success:
        rep = check_factorization(x, res.witness, M2)
        assert rep.residual <= 1e-8
        assert rep.max_entry_norm <= 1 + 1e-9
        assert rep.algebra_residual <= 1e-8
        assert res.ratio < 55


def test_transfer_identity_case():
    a = diagonal_algebra(2)
    x = row_over(a, 3, 4)
    res = search_length2(x, FactorizationConfig(restarts=1))
    tr = transfer_row_approximant(x, res.witness, a, 1e-9)
    assert tr.distance <= 1e-9
    assert tr.y.norm <= 1 + 1e-9


@pytest.mark.parametrize("eps", [1e-2, 1e-4])
def test_transfer_bounds(eps):
    a = diagonal_algebra(2)
    u = random_unitary_near_identity(2, eps, seed=5)
    b = conjugate_algebra(a, u)
    gamma = 2 * op_norm(u - np.eye(2))
    for m in (1, 3):
        x = row_over(a, m, m)
        w = search_length2(x, FactorizationConfig(restarts=1)).witness
        tr = transfer_row_approximant(x, w, b, gamma)
        assert tr.distance_prime <= 2 * tr.K * gamma + 1e-9
        assert tr.y.norm <= 1 + 1e-9
        if m == 1:
            assert tr.distance <= 220 * gamma


def test_transfer_rejects_far_algebra():
    a = diagonal_algebra(2)
    b = conjugate_algebra(a, random_unitary_near_identity(2, 0.5, seed=0))
    x = row_over(a, 2, 0)
    with pytest.raises(ApproximantTooFar):
        transfer_row_approximant(x, naive_witness(x), b, 1e-6)
