import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from kkperturb.algebra import diagonal_algebra, full_matrix_algebra, op_norm, scalar_algebra
from kkperturb.basic_construction import build_basic_construction, theta_inverse, verify_covariant
from kkperturb.errors import NotInRange
from kkperturb.expectation import trace_expectation
from kkperturb.scenarios import random_inclusion


def bc_for(d, b):
    return build_basic_construction(trace_expectation(d, b))


def test_jones_projection_ranks():
    d = full_matrix_algebra(2)
    np.testing.assert_allclose(bc_for(d, d).jones_projection, np.eye(4), atol=1e-12)
    assert np.linalg.matrix_rank(bc_for(d, scalar_algebra(2)).jones_projection, tol=1e-9) == 1
    assert np.linalg.matrix_rank(bc_for(d, diagonal_algebra(2)).jones_projection, tol=1e-9) == 2


def test_jones_projection_is_projection():
    eb = bc_for(full_matrix_algebra(3), diagonal_algebra(3)).jones_projection
    np.testing.assert_allclose(eb @ eb, eb, atol=1e-12)
    np.testing.assert_allclose(eb, eb.conj().T, atol=1e-12)


def test_covariance_relations():
    bc = bc_for(full_matrix_algebra(2), diagonal_algebra(2))
    rep = verify_covariant(bc)
    assert rep.commutator_in_B <= 1e-9
    assert rep.compression_residual <= 1e-9
    assert rep.min_commutator_outside_B > 0.05
    e12 = np.array([[0, 1], [0, 0]], dtype=complex)
    lam = bc.lambda_rep(e12)
    eb = bc.jones_projection
    assert op_norm(lam @ eb - eb @ lam) > 0.1


def test_theta_inverse_examples():
    bc = bc_for(full_matrix_algebra(2), diagonal_algebra(2))
    eb = bc.jones_projection
    for b in bc.target.basis:
        got, res = theta_inverse(bc, bc.lambda_rep(b) @ eb)
        np.testing.assert_allclose(got, b, atol=1e-10)
    one, _ = theta_inverse(bc, eb)
    np.testing.assert_allclose(one, np.eye(2), atol=1e-10)
    e11 = np.diag([1.0, 0.0]).astype(complex)
    got, _ = theta_inverse(bc, bc.lambda_rep(e11) @ eb)
    np.testing.assert_allclose(got, e11, atol=1e-10)


def test_theta_inverse_rejects_outside_range():
    bc = bc_for(full_matrix_algebra(2), diagonal_algebra(2))
    with pytest.raises(NotInRange):
        theta_inverse(bc, np.eye(4) - bc.jones_projection)


@given(st.integers(0, 10_000))
def test_lambda_is_isometric_star_representation(seed):
    b, d = random_inclusion(seed, max_dim=4)
    bc = bc_for(d, b)
    rng = np.random.default_rng(seed)
    c = rng.standard_normal((2, d.dim)) + 1j * rng.standard_normal((2, d.dim))
    x, y = d.from_coefficients(c)
    lx, ly = bc.lambda_rep(x), bc.lambda_rep(y)
    assert op_norm(lx) == pytest.approx(op_norm(x), rel=1e-9)
    np.testing.assert_allclose(bc.lambda_rep(x @ y), lx @ ly, atol=1e-10)
    np.testing.assert_allclose(bc.lambda_rep(x.conj().T), lx.conj().T, atol=1e-10)


@given(st.integers(0, 10_000))
def test_covariance_on_random_inclusions(seed):
    b, d = random_inclusion(seed, max_dim=4)
    rep = verify_covariant(bc_for(d, b))
    assert rep.commutator_in_B <= 1e-9
    assert rep.compression_residual <= 1e-9
    assert rep.injectivity_margin > 1e-6


def test_amplification_isometric_on_matrices_over_b():
    bc = bc_for(full_matrix_algebra(2), diagonal_algebra(2))
    rng = np.random.default_rng(4)
    eb = bc.jones_projection
    m = 3
    blocks = bc.target.from_coefficients(rng.standard_normal((m, m, 2)) + 1j * rng.standard_normal((m, m, 2)))
    x = np.block([[blocks[i, j] for j in range(m)] for i in range(m)])
    amp = np.block([[bc.lambda_rep(blocks[i, j]) @ eb for j in range(m)] for i in range(m)])
    assert op_norm(amp) == pytest.approx(op_norm(x), rel=1e-9)
