"""Jones basic construction realised on the GNS space L^2(D, tr/N).

Since ``D``'s basis is trace-orthonormal, GNS vectors are just coefficient
vectors and every operator is a plain ``dim(D) x dim(D)`` matrix.  The
representation of ``C*(lambda(D), e_B)`` there is faithful, so operator norms
computed on it are the C*-norms.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .algebra import STRUCTURAL_TOL, adjoint, op_norm
from .errors import NotInRange
from .expectation import ConditionalExpectation


@dataclass(frozen=True, eq=False)
class BasicConstruction:
    expectation: ConditionalExpectation
    jones_projection: np.ndarray
    _b_images: np.ndarray  # lambda(b_k) e_B for B's basis, stacked

    @property
    def source(self):
        return self.expectation.source

    @property
    def target(self):
        return self.expectation.target

    @property
    def gns_dim(self) -> int:
        return self.source.dim

    def eta(self, x):
        return self.source.coefficients(x)

    def eta_inverse(self, v):
        return self.source.from_coefficients(v)

    def lambda_rep(self, x):
        """Left multiplication by ``x`` (or a stack of ``x``) on the GNS space."""
        d = self.source
        x = np.asarray(x, dtype=complex)
        prods = np.einsum("...ab,jbc->...jac", x, d.basis)
        # column j holds eta(x d_j)
        return np.swapaxes(d.coefficients(prods), -1, -2)

    def lambda_row(self, entries):
        """``lambda^(1,m)(x)``: GNS operators laid side by side."""
        return np.hstack([self.lambda_rep(x) for x in entries])

    def lambda_column(self, entries):
        return np.vstack([self.lambda_rep(x) for x in entries])

    def diag_amplification(self, op, m: int):
        return np.kron(np.eye(m), op)


def build_basic_construction(e: ConditionalExpectation) -> BasicConstruction:
    # E_B acts on coefficient vectors through its matrix; it is self-adjoint there
    eb = np.asarray(e.matrix_rep, dtype=complex)
    eb = 0.5 * (eb + adjoint(eb))
    bc = BasicConstruction(e, eb, np.empty((0,)))
    images = bc.lambda_rep(e.target.basis) @ eb
    return BasicConstruction(e, eb, images)


@dataclass(frozen=True)
class CovariantReport:
    commutator_in_B: float
    min_commutator_outside_B: float
    compression_residual: float
    injectivity_margin: float


def _complement_basis(bc: BasicConstruction):
    d, b = bc.source, bc.target
    outside = d.basis - b.project(d.basis)
    vecs = outside.reshape(d.dim, -1)
    u, s, vh = np.linalg.svd(vecs, full_matrices=False)
    keep = s > 1e-8
    mats = vh[keep].reshape(-1, d.ambient_dim, d.ambient_dim) * np.sqrt(d.ambient_dim)
    return mats


def verify_covariant(bc: BasicConstruction) -> CovariantReport:
    """Residuals for the covariance relations between ``lambda`` and ``e_B``.

    1. ``[lambda(b), e_B]`` vanishes on ``B`` and not on the trace-orthogonal
       complement of ``B`` in ``D`` (minimum over an orthonormal basis of it).
    2. ``e_B lambda(x) e_B = lambda(E_B(x)) e_B`` on ``D``'s basis.
    3. smallest singular value of ``b -> lambda(b) e_B`` on coefficients.
    """
    e, eb = bc.expectation, bc.jones_projection
    lam_b = bc.lambda_rep(bc.target.basis)
    comm_in = max(op_norm(l @ eb - eb @ l) for l in lam_b)
    outside = _complement_basis(bc)
    if len(outside):
        lam_o = bc.lambda_rep(outside)
        comm_out = min(op_norm(l @ eb - eb @ l) for l in lam_o)
    else:
        comm_out = float("inf")
    lam_d = bc.lambda_rep(bc.source.basis)
    lam_ed = bc.lambda_rep(e(bc.source.basis))
    comp = max(op_norm(eb @ l @ eb - le @ eb) for l, le in zip(lam_d, lam_ed))
    mat = bc._b_images.reshape(bc.target.dim, -1).T
    margin = float(np.linalg.svd(mat, compute_uv=False)[-1])
    return CovariantReport(float(comm_in), float(comm_out), float(comp), margin)


def theta_inverse(bc: BasicConstruction, op, tol: float = 1e-8):
    """Recover ``b`` in ``B`` from ``op ~ lambda(b) e_B``.

    Least squares on ``B``'s coefficients; returns ``(b, residual)`` with the
    residual measured in operator norm.

    Raises
    ------
    NotInRange
        If the residual exceeds ``tol * max(1, ||op||)``.
    """
    op = np.asarray(op, dtype=complex)
    mat = bc._b_images.reshape(bc.target.dim, -1).T
    coef, *_ = np.linalg.lstsq(mat, op.reshape(-1), rcond=None)
    fit = (mat @ coef).reshape(op.shape)
    res = op_norm(op - fit)
    if res > tol * max(1.0, op_norm(op)):
        raise NotInRange(f"operator is {res:.3e} away from lambda(B) e_B")
    return bc.target.from_coefficients(coef), float(res)
