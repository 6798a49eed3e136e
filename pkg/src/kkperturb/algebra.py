"""Unital *-subalgebras of M_N(C) and the dense linear algebra they need.

A :class:`ConcreteAlgebra` stores an orthonormal basis for the normalised
trace inner product ``<x, y> = tr(x* y) / N``.  The first basis element of
every algebra built here is the identity.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import EigenvalueAtThreshold, NotUnitary, SingularInput
from . import kernels

STRUCTURAL_TOL = 1e-9
SINGULAR_TOL = 1e-10


def adjoint(m):
    return np.conj(np.swapaxes(m, -1, -2))


def op_norm(m) -> float:
    """Largest singular value (the C*-norm of a matrix)."""
    m = np.asarray(m, dtype=complex)
    if m.size == 0:
        return 0.0
    return float(np.linalg.norm(m, 2))


def row_norm(entries) -> float:
    """Norm of a row ``(x_1, ..., x_n)`` in ``M_{1,n}(M_N)``: ``||sum x_j x_j*||^(1/2)``."""
    return op_norm(np.hstack(list(entries)))


def polar_unitary(m, tol: float = SINGULAR_TOL):
    """Unitary part ``u = m (m* m)^(-1/2)`` of an invertible square matrix.

    Raises
    ------
    SingularInput
        If the smallest singular value is ``<= tol``.
    """
    m = np.asarray(m, dtype=complex)
    w, s, vh = np.linalg.svd(m)
    if s[-1] <= tol:
        raise SingularInput(f"polar decomposition of a singular matrix (sigma_min={s[-1]:.3e})")
    return w @ vh


def spectral_projection(h, threshold: float, tol: float = STRUCTURAL_TOL):
    """Projection onto the eigenvectors of self-adjoint ``h`` with eigenvalue >= threshold."""
    h = np.asarray(h, dtype=complex)
    herm = 0.5 * (h + adjoint(h))
    if op_norm(h - herm) > tol * max(1.0, op_norm(h)):
        raise ValueError("spectral_projection needs a self-adjoint matrix")
    evals, evecs = np.linalg.eigh(herm)
    close = np.abs(evals - threshold) <= tol
    if np.any(close):
        raise EigenvalueAtThreshold(
            f"eigenvalue {evals[close][0]:.3e} within {tol:g} of threshold {threshold:g}"
        )
    v = evecs[:, evals >= threshold]
    return v @ adjoint(v)


def is_unitary(u, tol: float = STRUCTURAL_TOL) -> bool:
    u = np.asarray(u, dtype=complex)
    eye = np.eye(u.shape[0])
    return op_norm(adjoint(u) @ u - eye) <= tol and op_norm(u @ adjoint(u) - eye) <= tol


def _flatten(mats, n):
    # normalised so that the standard inner product equals tr(x* y) / N
    return np.asarray(mats, dtype=complex).reshape(len(mats), n * n) / np.sqrt(n)


def _extend_orthonormal(basis_vecs, candidates, tol):
    """Append to ``basis_vecs`` the new directions of ``candidates``, in order.

    Classical Gram-Schmidt with one re-orthogonalisation pass; candidates whose
    residual is below ``tol`` (relative to their norm) are dropped.
    """
    out = [v for v in basis_vecs]
    q = np.array(out) if out else np.zeros((0, candidates.shape[1]), dtype=complex)
    for c in candidates:
        cn = np.linalg.norm(c)
        if cn == 0.0:
            continue
        r = c.copy()
        for _ in range(2):
            if q.shape[0]:
                r = r - q.T @ (np.conj(q) @ r)
        rn = np.linalg.norm(r)
        if rn <= tol * max(1.0, cn):
            continue
        r = r / rn
        out.append(r)
        q = np.array(out)
    return q


@dataclass(frozen=True, eq=False)
class ConcreteAlgebra:
    """Unital *-subalgebra of ``M_N(C)`` with a trace-orthonormal basis.

    Attributes
    ----------
    ambient_dim : int
        ``N``; the algebra sits inside ``M_N(C)``.
    basis : ndarray, shape (d, N, N)
        Orthonormal for ``<x, y> = tr(x* y) / N``.
    """

    ambient_dim: int
    basis: np.ndarray
    contains_unit: bool = True
    _qt: np.ndarray = field(init=False, repr=False)
    _qc: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        basis = np.ascontiguousarray(np.asarray(self.basis, dtype=complex))
        basis.setflags(write=False)
        object.__setattr__(self, "basis", basis)
        q = _flatten(basis, self.ambient_dim)
        object.__setattr__(self, "_qt", np.ascontiguousarray(q.T))
        object.__setattr__(self, "_qc", np.ascontiguousarray(np.conj(q)))

    @property
    def dim(self) -> int:
        return self.basis.shape[0]

    @property
    def kernel_basis(self):
        """``(Qt, Qc)`` pair consumed by :mod:`kkperturb.kernels`."""
        return self._qt, self._qc

    def coefficients(self, x):
        """Coordinates ``<b_k, x>``; works on stacks ``(..., N, N)``."""
        x = np.asarray(x, dtype=complex)
        return np.einsum("kab,...ab->...k", np.conj(self.basis), x) / self.ambient_dim

    def from_coefficients(self, c):
        return np.einsum("...k,kab->...ab", np.asarray(c, dtype=complex), self.basis)

    def project(self, x):
        """Trace-orthogonal projection of ``x`` (or a stack) onto the span."""
        return self.from_coefficients(self.coefficients(x))

    def residual(self, x) -> float:
        """Operator norm of the component of ``x`` outside the span."""
        x = np.asarray(x, dtype=complex)
        return op_norm(x - self.project(x))

    def contains(self, x, tol: float = STRUCTURAL_TOL) -> bool:
        return self.residual(x) <= tol * max(1.0, op_norm(x))

    def project_blocks(self, y):
        """Blockwise projection of an element of ``M_{p,q}(M_N)``."""
        qt, qc = self.kernel_basis
        return kernels.project_blocks(np.ascontiguousarray(y, dtype=complex), qt, qc, self.ambient_dim)

    def gram(self):
        q = _flatten(self.basis, self.ambient_dim)
        return np.conj(q) @ q.T

    def closure_residual(self) -> float:
        """Largest distance from span of a basis product or adjoint."""
        prods = np.einsum("iab,jbc->ijac", self.basis, self.basis).reshape(-1, self.ambient_dim, self.ambient_dim)
        res = np.concatenate([prods, adjoint(self.basis)])
        diff = res - self.project(res)
        return float(max(np.linalg.norm(d, 2) for d in diff))

    def identity_coefficients(self):
        return self.coefficients(np.eye(self.ambient_dim))


def orthonormal_algebra(ambient_dim: int, mats, tol: float = STRUCTURAL_TOL) -> ConcreteAlgebra:
    """Orthonormalise a spanning family (assumed already closed) into an algebra."""
    n = ambient_dim
    cands = _flatten(np.concatenate([np.eye(n)[None], np.asarray(mats, dtype=complex).reshape(-1, n, n)]), n)
    q = _extend_orthonormal([], cands, tol)
    return ConcreteAlgebra(n, (q * np.sqrt(n)).reshape(-1, n, n))


def algebra_from_generators(ambient_dim: int, generators=(), tol: float = STRUCTURAL_TOL) -> ConcreteAlgebra:
    """Smallest unital *-subalgebra of ``M_N`` containing ``generators``.

    Breadth-first closure: each round appends adjoints, then all pairwise
    products, re-orthonormalising as it goes, until the dimension is stable.
    """
    n = ambient_dim
    gens = [np.asarray(g, dtype=complex) for g in generators]
    for g in gens:
        if g.shape != (n, n):
            raise ValueError(f"generator of shape {g.shape} in M_{n}")
    start = [np.eye(n)] + gens
    q = _extend_orthonormal([], _flatten(start, n), tol)
    while True:
        mats = (q * np.sqrt(n)).reshape(-1, n, n)
        dim = mats.shape[0]
        q = _extend_orthonormal(list(q), _flatten(adjoint(mats), n), tol)
        mats = (q * np.sqrt(n)).reshape(-1, n, n)
        prods = np.einsum("iab,jbc->ijac", mats, mats).reshape(-1, n, n)
        q = _extend_orthonormal(list(q), _flatten(prods, n), tol)
        if q.shape[0] == dim:
            break
    return ConcreteAlgebra(n, (q * np.sqrt(n)).reshape(-1, n, n))


def full_matrix_algebra(n: int) -> ConcreteAlgebra:
    units = []
    for i in range(n):
        for j in range(n):
            e = np.zeros((n, n), dtype=complex)
            e[i, j] = 1.0
            units.append(e)
    return orthonormal_algebra(n, units)


def scalar_algebra(n: int) -> ConcreteAlgebra:
    return ConcreteAlgebra(n, np.eye(n, dtype=complex)[None])


def diagonal_algebra(n: int) -> ConcreteAlgebra:
    return orthonormal_algebra(n, [np.diag(np.eye(n)[i]) for i in range(n)])


def block_diagonal_algebra(sizes, multiplicities=None) -> ConcreteAlgebra:
    """``(M_{n_1} x 1_{m_1}) + ... + (M_{n_k} x 1_{m_k})`` placed block diagonally."""
    sizes = list(sizes)
    mult = list(multiplicities) if multiplicities is not None else [1] * len(sizes)
    n = sum(s * m for s, m in zip(sizes, mult))
    mats = []
    offset = 0
    for s, m in zip(sizes, mult):
        for i in range(s):
            for j in range(s):
                e = np.zeros((s, s))
                e[i, j] = 1.0
                full = np.zeros((n, n), dtype=complex)
                full[offset:offset + s * m, offset:offset + s * m] = np.kron(e, np.eye(m))
                mats.append(full)
        offset += s * m
    return orthonormal_algebra(n, mats)


def conjugate_algebra(alg: ConcreteAlgebra, u, tol: float = STRUCTURAL_TOL) -> ConcreteAlgebra:
    """The algebra ``u A u*``; the conjugated basis is re-orthonormalised in order."""
    u = np.asarray(u, dtype=complex)
    if not is_unitary(u, tol):
        raise NotUnitary("conjugate_algebra needs a unitary")
    conj = u @ alg.basis @ adjoint(u)
    q = _extend_orthonormal([], _flatten(conj, alg.ambient_dim), tol)
    return ConcreteAlgebra(alg.ambient_dim, (q * np.sqrt(alg.ambient_dim)).reshape(-1, alg.ambient_dim, alg.ambient_dim))


def subspace_distance(a: ConcreteAlgebra, b: ConcreteAlgebra) -> float:
    """Sine of the largest principal angle between the two spans (1 if dimensions differ)."""
    if a.ambient_dim != b.ambient_dim or a.dim != b.dim:
        return 1.0
    qa = _flatten(a.basis, a.ambient_dim).T
    qb = _flatten(b.basis, b.ambient_dim).T
    angles = scipy.linalg.subspace_angles(qa, qb)
    return float(np.sin(np.max(angles))) if angles.size else 0.0


def algebras_equal(a: ConcreteAlgebra, b: ConcreteAlgebra, tol: float = STRUCTURAL_TOL) -> bool:
    return subspace_distance(a, b) <= tol


def is_subalgebra(small: ConcreteAlgebra, big: ConcreteAlgebra, tol: float = STRUCTURAL_TOL) -> bool:
    return all(big.residual(b) <= tol for b in small.basis)


def relative_commutant(c: ConcreteAlgebra, d: ConcreteAlgebra, tol: float = STRUCTURAL_TOL) -> ConcreteAlgebra:
    """``C' ∩ D``: elements of ``D`` commuting with every element of ``C``."""
    n = d.ambient_dim
    blocks = []
    for cb in c.basis:
        comm = np.einsum("ab,kbc->kac", cb, d.basis) - np.einsum("kab,bc->kac", d.basis, cb)
        blocks.append(comm.reshape(d.dim, n * n).T)
    lin = np.vstack(blocks)
    _, s, vh = np.linalg.svd(lin)
    rank = int(np.sum(s > tol * max(1.0, s[0] if s.size else 1.0)))
    null = np.conj(vh[rank:])
    mats = d.from_coefficients(null)
    return orthonormal_algebra(n, mats, tol)


def random_self_adjoint(alg: ConcreteAlgebra, rng) -> np.ndarray:
    c = rng.standard_normal(alg.dim) + 1j * rng.standard_normal(alg.dim)
    h = alg.from_coefficients(c)
    return 0.5 * (h + adjoint(h))


def random_unitary_near_identity(dim: int, epsilon: float, seed: int, algebra: ConcreteAlgebra | None = None):
    """``exp(i eps H / ||H||)`` for a seeded random self-adjoint ``H``.

    ``||u - 1|| = 2 sin(eps/2) <= eps``.  When ``algebra`` is given ``H`` is
    drawn from it, so ``u`` lies in that algebra.
    """
    if not 0.0 <= epsilon <= 2.0:
        raise ValueError("epsilon must lie in [0, 2]")
    rng = np.random.default_rng(seed)
    if algebra is None:
        algebra = full_matrix_algebra(dim)
    if algebra.ambient_dim != dim:
        raise ValueError("algebra ambient dimension mismatch")
    h = random_self_adjoint(algebra, rng)
    # remove the scalar part so that ||H|| is spent on a non-trivial rotation
    h = h - np.trace(h).real / dim * np.eye(dim)
    nh = op_norm(h)
    if epsilon == 0.0 or nh == 0.0:
        return np.eye(dim, dtype=complex)
    return scipy.linalg.expm(1j * epsilon * h / nh)
