"""Trace-preserving conditional expectations, quasi-bases and the index."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .algebra import (
    SINGULAR_TOL,
    STRUCTURAL_TOL,
    ConcreteAlgebra,
    adjoint,
    op_norm,
)
from .errors import GramDegenerate, IndexNotInvertible, NotNested

# smallest kept eigenvalue of a pivot Gram element, relative to its norm
PIVOT_RATIO = 1e-3


@dataclass(frozen=True, eq=False)
class ConditionalExpectation:
    """``E: D -> B``, the orthogonal projection for ``tr(x* y) / N``.

    ``matrix_rep[i, j]`` is the ``i``-th D-coordinate of ``E(d_j)``.
    """

    source: ConcreteAlgebra
    target: ConcreteAlgebra
    matrix_rep: np.ndarray

    def __call__(self, x):
        """Apply ``E`` to a matrix or a stack of matrices."""
        return self.target.project(x)

    def apply_blocks(self, y):
        """Entrywise amplification ``E^(p,q)`` on a ``(pN, qN)`` block matrix."""
        return self.target.project_blocks(y)

    def certificates(self) -> dict:
        """Residuals of the defining properties, evaluated on the bases."""
        d, b = self.source, self.target
        img = self(d.basis)
        idem = max(op_norm(self(y) - y) for y in img)
        outside = max(b.residual(y) for y in img)
        bimod = 0.0
        for bl in b.basis:
            for br in b.basis:
                lhs = self(bl @ d.basis @ br)
                rhs = bl @ img @ br
                bimod = max(bimod, max(op_norm(u - v) for u, v in zip(lhs, rhs)))
        unital = op_norm(self(np.eye(d.ambient_dim)) - np.eye(d.ambient_dim))
        # E(x* x) as a form on D-coordinates: <c, F c> = tr E(x*x)/N = tr(x*x)/N
        form = np.einsum("iab,jbc->ijac", adjoint(d.basis), d.basis)
        form = np.einsum("ijaa->ij", self(form)) / d.ambient_dim
        positivity = float(np.min(np.linalg.eigvalsh(0.5 * (form + adjoint(form)))))
        return {
            "idempotent": idem,
            "range": outside,
            "bimodular": bimod,
            "unital": unital,
            "faithfulness_margin": positivity,
        }


def trace_expectation(d: ConcreteAlgebra, b: ConcreteAlgebra, tol: float = STRUCTURAL_TOL) -> ConditionalExpectation:
    """The trace-preserving conditional expectation of ``D`` onto ``B``.

    Raises
    ------
    NotNested
        If some basis element of ``B`` is not in ``D``.
    """
    if d.ambient_dim != b.ambient_dim:
        raise NotNested("algebras live in different ambient dimensions")
    worst = max(d.residual(y) for y in b.basis)
    if worst > tol:
        raise NotNested(f"B is not contained in D (residual {worst:.3e})")
    rep = d.coefficients(b.project(d.basis)).T
    return ConditionalExpectation(d, b, rep)


@dataclass(frozen=True, eq=False)
class QuasiBasis:
    elements: np.ndarray
    index_element: np.ndarray

    def __len__(self):
        return len(self.elements)


@dataclass(frozen=True)
class QuasiBasisReport:
    max_residual: float
    centrality_residual: float
    sigma_min_T: float


def _psd_inverse_sqrt(g, tol):
    """``g^(-1/2)`` on the support of ``g`` (zero elsewhere), and the support rank."""
    g = 0.5 * (g + adjoint(g))
    w, v = np.linalg.eigh(g)
    keep = w > tol
    inv = np.zeros_like(w)
    inv[keep] = 1.0 / np.sqrt(w[keep])
    return (v * inv) @ adjoint(v), int(keep.sum())


def _module_expand(e, vs, x):
    out = np.zeros_like(x)
    for v in vs:
        out = out + v @ e(adjoint(v) @ x)
    return out


def quasi_basis(e: ConditionalExpectation, spanning=None, tol: float = 1e-12) -> QuasiBasis:
    """Quasi-basis ``{v_i}`` with ``x = sum v_i E(v_i* x)`` on all of ``D``.

    Hilbert-module Gram-Schmidt over ``B`` applied to ``spanning`` (default:
    the basis of ``D``).  Each step takes the remaining vector with the largest
    Gram element ``G = E(w* w)`` (ties broken by input order), re-orthogonalises
    it and appends ``w G^(-1/2)``, with the inverse square root taken on the
    eigenvalues of ``G`` above ``PIVOT_RATIO * ||G||``.  Directions dropped from
    that support stay in ``w`` and are picked up by later steps, so every step is
    well conditioned even when ``G`` is nearly singular.

    Raises
    ------
    GramDegenerate
        If the expansion identity cannot be reached on ``D``'s basis.
    """
    d = e.source
    ws = [np.array(x, dtype=complex) for x in (d.basis if spanning is None else spanning)]
    scale = max(op_norm(x) for x in ws) ** 2
    vs = []
    for _ in range(4 * d.dim + 4):
        grams = [e(adjoint(w) @ w) for w in ws]
        sizes = [op_norm(g) for g in grams]
        k = int(np.argmax(sizes))
        if sizes[k] <= tol * tol * scale:
            break
        w = ws[k] - _module_expand(e, vs, ws[k])
        g = e(adjoint(w) @ w)
        inv_sqrt, _ = _psd_inverse_sqrt(g, PIVOT_RATIO * op_norm(g))
        v = w @ inv_sqrt
        vs.append(v)
        ws = [x - v @ e(adjoint(v) @ x) for x in ws]
    else:
        raise GramDegenerate("module Gram-Schmidt did not terminate")
    vs = np.array(vs)
    t = np.einsum("iab,icb->ac", vs, np.conj(vs))
    qb = QuasiBasis(vs, t)
    rep = verify_quasi_basis(e, qb)
    if rep.max_residual > 1e-9 * max(1.0, scale) or rep.sigma_min_T <= SINGULAR_TOL:
        raise GramDegenerate(
            f"module Gram-Schmidt failed: residual {rep.max_residual:.3e}, sigma_min(T) {rep.sigma_min_T:.3e}"
        )
    return qb


def verify_quasi_basis(e: ConditionalExpectation, qb: QuasiBasis) -> QuasiBasisReport:
    d = e.source
    res = max(op_norm(x - _module_expand(e, qb.elements, x)) for x in d.basis)
    t = qb.index_element
    cent = max(op_norm(t @ a - a @ t) for a in d.basis)
    smin = float(np.linalg.svd(t, compute_uv=False)[-1])
    return QuasiBasisReport(float(res), float(cent), smin)


def index_inverse_sqrt(qb: QuasiBasis, tol: float = SINGULAR_TOL):
    """``T^(-1/2)`` for the (positive, invertible) index element."""
    t = qb.index_element
    w, v = np.linalg.eigh(0.5 * (t + adjoint(t)))
    if w[0] <= tol:
        raise IndexNotInvertible(f"index has sigma_min {w[0]:.3e}")
    return (v / np.sqrt(w)) @ adjoint(v)
