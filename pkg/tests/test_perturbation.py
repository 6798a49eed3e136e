import numpy as np
import pytest

from kkperturb.algebra import (
    adjoint,
    algebras_equal,
    block_diagonal_algebra,
    conjugate_algebra,
    diagonal_algebra,
    full_matrix_algebra,
    op_norm,
    random_unitary_near_identity,
    relative_commutant,
    scalar_algebra,
)
from kkperturb.basic_construction import build_basic_construction
from kkperturb.errors import SpectralGapFail
from kkperturb.expectation import quasi_basis, trace_expectation
from kkperturb.metrics import LinearMap, MetricConfig
from kkperturb.perturbation import (
    GAMMA_PRIME_THRESHOLD,
    build_phi,
    build_t,
    check_watlem,
    check_watlem2,
    close_projection_and_unitary,
    homomorphism_residuals,
    intertwiner,
    perturbation_pipeline,
    variant_bound,
    variant_bound_recomputed,
    watlem2_sides,
)

CFG = MetricConfig(restarts=6, inner_iterations=60, outer_steps=8, amplification_cutoff=3)
C, A, D = scalar_algebra(2), diagonal_algebra(2), full_matrix_algebra(2)


def perturbed(eps, seed=0, c=C, a=A, d=D):
    u0 = random_unitary_near_identity(d.ambient_dim, eps, seed, algebra=relative_commutant(c, d))
    return conjugate_algebra(a, u0), u0


def test_watlem_equal_algebras():
    rep = check_watlem(A, A, trace_expectation(D, A), CFG)
    assert max(rep.idempotence, rep.row_identity, rep.column_identity) <= 1e-9


@pytest.mark.parametrize("eps", [1e-2, 1e-4])
def test_watlem_bounds_with_explicit_gamma(eps):
    b, u0 = perturbed(eps, 3)
    rep = check_watlem(A, b, trace_expectation(D, b), CFG, gamma=2 * op_norm(u0 - np.eye(2)))
    assert rep.passed


def test_watlem_single_entry_rows():
    b, _ = perturbed(1e-3, 1)
    rep = check_watlem(A, b, trace_expectation(D, b), CFG, m_max=1)
    assert rep.passed


def test_watlem2_entries_in_b_vanish():
    e = trace_expectation(D, A)
    bc = build_basic_construction(e)
    x = np.hstack([np.diag([0.3, -1j]), np.diag([1.0, 0.5])])
    (a, b), (c, d) = watlem2_sides(e, bc, x)
    assert max(a, b, c, d) <= 1e-12


def test_watlem2_random_rows():
    e = trace_expectation(D, A)
    rng = np.random.default_rng(0)
    bc = build_basic_construction(e)
    for m in (1, 2):
        x = rng.standard_normal((2, 2 * m)) + 1j * rng.standard_normal((2, 2 * m))
        (a, b), (c, d) = watlem2_sides(e, bc, x)
        assert a == pytest.approx(b, abs=1e-9)
        assert c == pytest.approx(d, abs=1e-9)
        assert a > 1e-3
    rep = check_watlem2(e, bc, CFG)
    assert rep.passed


def test_build_t_trivial_case():
    e = trace_expectation(D, D)
    bc = build_basic_construction(e)
    t, rep = build_t(bc, quasi_basis(trace_expectation(D, D)), D)
    np.testing.assert_allclose(t, np.eye(4), atol=1e-12)
    np.testing.assert_allclose(bc.jones_projection, np.eye(4), atol=1e-12)
    assert rep.mm_residual <= 1e-12


def test_build_t_equal_algebras():
    bc = build_basic_construction(trace_expectation(D, A))
    t, rep = build_t(bc, quasi_basis(trace_expectation(A, C)), A)
    assert op_norm(t - bc.jones_projection) <= 1e-9
    assert rep.mm_residual <= 1e-9
    assert rep.commutant_residual <= 1e-9
    assert rep.min_eigenvalue >= -1e-12


def test_close_projection_examples():
    q, w, rep = close_projection_and_unitary(np.diag([1.0, 0.0]), np.diag([1.0, 0.0]))
    np.testing.assert_allclose(q, np.diag([1.0, 0.0]))
    np.testing.assert_allclose(w, np.eye(2), atol=1e-12)
    q, w, rep = close_projection_and_unitary(np.diag([0.9, 0.05]), np.diag([1.0, 0.0]))
    np.testing.assert_allclose(q, np.diag([1.0, 0.0]))
    np.testing.assert_allclose(w, np.eye(2), atol=1e-12)
    assert rep.delta == pytest.approx(0.1)


def test_close_projection_gap_failure():
    with pytest.raises(SpectralGapFail):
        close_projection_and_unitary(np.diag([0.4, 0.0]), np.diag([1.0, 0.0]))


def test_close_projection_bounds_on_rotated_projection():
    th = 0.2
    v = np.array([np.cos(th), np.sin(th)])
    t = np.outer(v, v)
    e = np.diag([1.0, 0.0])
    q, w, rep = close_projection_and_unitary(t, e)
    assert rep.q_deviation <= 2 * rep.delta + 1e-12
    assert rep.wqw_residual <= 1e-12
    assert rep.w_deviation <= 2 * np.sqrt(2) * rep.delta + 1e-9


def test_phi_is_identity_when_a_equals_b():
    bc = build_basic_construction(trace_expectation(D, A))
    phi, rep = build_phi(bc, np.eye(4), A, C)
    np.testing.assert_allclose(phi.images, A.basis, atol=1e-10)
    assert max(rep.hom_residual, rep.adjoint_residual, rep.fixes_C_residual) <= 1e-10


def test_phi_fixes_c_when_c_equals_a():
    b, _ = perturbed(1e-3, 2, c=A, a=A)
    bc = build_basic_construction(trace_expectation(D, b))
    qb = quasi_basis(trace_expectation(A, A))
    t, _ = build_t(bc, qb, A)
    _, w, _ = close_projection_and_unitary(t, bc.jones_projection)
    phi, rep = build_phi(bc, w, A, A)
    np.testing.assert_allclose(phi.images, A.basis, atol=1e-10)


def test_intertwiner_identity_case():
    qb = quasi_basis(trace_expectation(D, D))
    ident = LinearMap.inclusion(D)
    u, rep = intertwiner(ident, ident, qb, D, CFG)
    np.testing.assert_allclose(u, np.eye(2), atol=1e-12)
    assert rep.s_deviation <= 1e-12


def test_intertwiner_recovers_conjugation_up_to_commutant():
    a = block_diagonal_algebra([2, 1])
    d = full_matrix_algebra(3)
    c = scalar_algebra(3)
    v = random_unitary_near_identity(3, 0.05, seed=8, algebra=relative_commutant(c, d))
    phi1 = LinearMap.inclusion(a)
    phi2 = LinearMap.from_function(a, lambda x: v @ x @ adjoint(v))
    u, rep = intertwiner(phi1, phi2, quasi_basis(trace_expectation(a, c)), c, CFG)
    for x in a.basis:
        np.testing.assert_allclose(u @ v @ x @ adjoint(v) @ adjoint(u), x, atol=1e-9)
    # u v commutes with A, so Ad(u) and Ad(v*) agree on A
    assert max(op_norm(u @ v @ x - x @ u @ v) for x in a.basis) <= 1e-9
    assert rep.u_deviation <= 2 * rep.gamma + 1e-12


def test_homomorphism_residuals_detect_non_homomorphisms():
    s = np.diag([1.0, 2.0])
    sim = LinearMap.similarity(D, s)
    hom, adj, unital, _ = homomorphism_residuals(sim)
    assert hom <= 1e-12 and unital <= 1e-12
    assert adj > 0.1


def test_bound_constants():
    g = 1e-6
    assert variant_bound(g) == pytest.approx(16 * np.sqrt(110e-6) + 880e-6)
    assert variant_bound_recomputed(g) == pytest.approx(16 * np.sqrt(2) * np.sqrt(220 * g) + 4 * 220 * g)


def test_pipeline_equal_algebras():
    rep = perturbation_pipeline(C, A, A, D, CFG)
    assert rep.error is None
    assert rep.conjugation_verdict
    np.testing.assert_allclose(rep.u, np.eye(2), atol=1e-9)
    assert max(rep.t_deviation, rep.w_deviation, rep.u_deviation) <= 1e-9
    assert rep.warnings == []
    assert rep.passed


@pytest.mark.parametrize("setup", [
    (C, A, D),
    (scalar_algebra(3), diagonal_algebra(3), full_matrix_algebra(3)),
    (scalar_algebra(4), block_diagonal_algebra([2, 2]), full_matrix_algebra(4)),
])
def test_pipeline_small_perturbation(setup):
    c, a, d = setup
    b, u0 = perturbed(1e-5, 4, c, a, d)
    rep = perturbation_pipeline(c, a, b, d, CFG)
    assert rep.error is None
    assert rep.conjugation_verdict
    assert algebras_equal(conjugate_algebra(a, rep.u), b, 1e-8)
    assert rep.u_deviation <= variant_bound(rep.gamma_kk)
    assert rep.bound_satisfied and rep.bound_used == "16sqrt110"
    assert rep.passed
    # u lies in the relative commutant of C
    assert max(op_norm(rep.u @ x - x @ rep.u) for x in c.basis) <= 1e-8


def test_pipeline_flags_large_distance():
    b, _ = perturbed(0.3, 1)
    rep = perturbation_pipeline(C, A, b, D, CFG)
    assert "gamma_prime_above_threshold" in rep.warnings
    assert 220 * rep.gamma_kk >= GAMMA_PRIME_THRESHOLD
    assert rep.checks


def test_pipeline_records_errors():
    b, _ = perturbed(1.9, 6)
    rep = perturbation_pipeline(C, A, b, D, CFG)
    # far from A: either a numerical hypothesis fails or the run completes; never raises
    assert rep.error is None or rep.error_kind == "numerical"
