"""Length-2 row factorisations ``x = C1 D1 C2 D2 C3`` and the row-approximant transfer.

``C1`` (1 x K), ``C2`` (K x K), ``C3`` (K x n) are scalar matrices; ``D1`` and
``D2`` are diagonal with entries in the unit ball of an algebra, stored as
stacks of ``K`` matrices.  The row entry ``x_j`` is then
``sum_{k,l} C1[k] C2[k,l] C3[l,j] D1[k] D2[l]``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from .algebra import ConcreteAlgebra, op_norm, row_norm
from .errors import ApproximantTooFar, ShapeMismatch
from .metrics import MetricConfig, dist_to_unit_ball


@dataclass(frozen=True, eq=False)
class RowElement:
    entries: np.ndarray
    algebra: ConcreteAlgebra | None = None

    def __post_init__(self):
        object.__setattr__(self, "entries", np.asarray(self.entries, dtype=complex))
        if self.entries.ndim != 3 or self.entries.shape[1] != self.entries.shape[2]:
            raise ShapeMismatch("a row is a stack (n, N, N) of square matrices")

    @property
    def width(self) -> int:
        return self.entries.shape[0]

    @property
    def norm(self) -> float:
        return row_norm(self.entries)

    @property
    def matrix(self):
        return np.hstack(list(self.entries))

    def scaled(self, t):
        return RowElement(self.entries * t, self.algebra)


@dataclass(frozen=True, eq=False)
class FactorizationWitness:
    C1: np.ndarray
    D1: np.ndarray
    C2: np.ndarray
    D2: np.ndarray
    C3: np.ndarray

    @property
    def K(self) -> float:
        return op_norm(self.C1) * op_norm(self.C2) * op_norm(self.C3)

    def product(self):
        return np.einsum("k,kl,lj,kab,lbc->jac", self.C1[0], self.C2, self.C3, self.D1, self.D2)

    def with_entries(self, D1, D2):
        return FactorizationWitness(self.C1, np.asarray(D1), self.C2, np.asarray(D2), self.C3)

    def scaled(self, t):
        return FactorizationWitness(self.C1 * t, self.D1, self.C2, self.D2, self.C3)


@dataclass(frozen=True)
class FactorizationReport:
    residual: float
    K: float
    max_entry_norm: float
    algebra_residual: float

    def valid(self, tol=1e-8) -> bool:
        return self.residual <= tol and self.max_entry_norm <= 1.0 + tol and self.algebra_residual <= tol


def _check_shapes(x: RowElement, w: FactorizationWitness):
    k = w.C2.shape[0]
    n, big_n = x.width, x.entries.shape[1]
    if w.C1.shape != (1, k) or w.C2.shape != (k, k) or w.C3.shape != (k, n):
        raise ShapeMismatch(
            f"scalar factors {w.C1.shape}, {w.C2.shape}, {w.C3.shape} do not fit width {k} and row length {n}"
        )
    for d in (w.D1, w.D2):
        if d.shape != (k, big_n, big_n):
            raise ShapeMismatch(f"diagonal factor of shape {d.shape}, expected {(k, big_n, big_n)}")


def check_factorization(x: RowElement, w: FactorizationWitness, algebra: ConcreteAlgebra | None = None,
                        ) -> FactorizationReport:
    """Residual ``||x - C1 D1 C2 D2 C3||`` (row norm) and ``K = ||C1|| ||C2|| ||C3||``.

    A witness with small residual, entries of norm ``<= 1`` lying in the
    algebra certifies ``||x||_(2) <= K``.
    """
    _check_shapes(x, w)
    algebra = algebra or x.algebra
    res = row_norm(x.entries - w.product())
    entries = np.concatenate([w.D1, w.D2])
    max_norm = max(op_norm(e) for e in entries)
    alg_res = max(algebra.residual(e) for e in entries) if algebra is not None else 0.0
    return FactorizationReport(float(res), float(w.K), float(max_norm), float(alg_res))


def naive_witness(x: RowElement) -> FactorizationWitness:
    """``C1 = ||x|| (1, ..., 1)``, ``D1 = diag(x_j / ||x||)``, everything else the identity.

    Exact, with ``K = sqrt(n) ||x||``.
    """
    n, big_n = x.width, x.entries.shape[1]
    nrm = x.norm
    eye = np.broadcast_to(np.eye(big_n, dtype=complex), (n, big_n, big_n)).copy()
    if nrm == 0.0:
        return FactorizationWitness(np.zeros((1, n), complex), np.zeros_like(eye), np.eye(n, dtype=complex), eye,
                                    np.eye(n, dtype=complex))
    return FactorizationWitness(np.full((1, n), nrm, dtype=complex), x.entries / nrm, np.eye(n, dtype=complex),
                                eye, np.eye(n, dtype=complex))


@dataclass(frozen=True)
class FactorizationConfig:
    restarts: int = 5
    iterations: int = 300
    width: int | None = None
    tolerance: float = 1e-8
    ridge: float = 1e-6
    seed: int = 0


@dataclass(frozen=True, eq=False)
class SearchResult:
    """Outcome of :func:`search_length2`; ``witness`` is ``None`` on failure."""

    witness: FactorizationWitness | None
    residual: float
    ratio: float
    attempts: tuple = ()

    @property
    def success(self) -> bool:
        return self.witness is not None


def _lstsq(mat, rhs, ridge):
    if ridge > 0:
        k = mat.shape[1]
        mat = np.vstack([mat, np.sqrt(ridge) * np.eye(k)])
        rhs = np.concatenate([rhs, np.zeros(k, dtype=complex)])
    return np.linalg.lstsq(mat, rhs, rcond=None)[0]


def _retract_entries(entries, alg):
    qt, qc = alg.kernel_basis
    return np.array([kernels.retract(np.ascontiguousarray(e), qt, qc, alg.ambient_dim) for e in entries])


def _als(x: RowElement, alg: ConcreteAlgebra, w: FactorizationWitness, iters: int, ridge: float, tol: float):
    target = x.entries.reshape(-1)
    C1, C2, C3, D1, D2 = w.C1[0].copy(), w.C2.copy(), w.C3.copy(), w.D1.copy(), w.D2.copy()
    k = C2.shape[0]
    n = x.width
    basis = alg.basis
    for it in range(iters):
        lam = ridge * (0.5 ** min(it, 40))
        # C1: x_j = sum_k C1[k] Y_kj,  Y_kj = D1[k] sum_l C2[k,l] D2[l] C3[l,j]
        inner = np.einsum("kl,lj,lbc->kjbc", C2, C3, D2)
        y = np.einsum("kab,kjbc->kjac", D1, inner)
        C1 = _lstsq(y.reshape(k, -1).T, target, lam)
        # C3: x_j = sum_l Z_l C3[l,j]
        z = np.einsum("k,kab,kl,lbc->lac", C1, D1, C2, D2)
        zm = z.reshape(k, -1).T
        C3 = np.stack([_lstsq(zm, x.entries[j].reshape(-1), lam) for j in range(n)], axis=1)
        # C2: x_j = sum_{k,l} C2[k,l] C1[k] C3[l,j] D1[k] D2[l]
        blocks = np.einsum("k,lj,kab,lbc->kljac", C1, C3, D1, D2)
        C2 = _lstsq(blocks.reshape(k * k, -1).T, target, lam).reshape(k, k)
        # D1[k] = sum_a alpha[k,a] b_a
        w_ = np.einsum("k,kl,lj,lbc->kjbc", C1, C2, C3, D2)
        cols = np.einsum("aij,kljc->kalic", basis, w_)
        alpha = _lstsq(cols.reshape(k * alg.dim, -1).T, target, lam).reshape(k, alg.dim)
        D1 = _retract_entries(alg.from_coefficients(alpha), alg)
        # D2[l] = sum_a beta[l,a] b_a
        v = np.einsum("k,kab,kl->lab", C1, D1, C2)
        cols = np.einsum("lij,ajk,lm->lamik", v, basis, C3)
        beta = _lstsq(cols.reshape(k * alg.dim, -1).T, target, lam).reshape(k, alg.dim)
        D2 = _retract_entries(alg.from_coefficients(beta), alg)
        cand = FactorizationWitness(C1[None, :], D1, C2, D2, C3)
        if row_norm(x.entries - cand.product()) <= 0.1 * tol:
            break
    return FactorizationWitness(C1[None, :], D1, C2, D2, C3)


def search_length2(x: RowElement, cfg: FactorizationConfig | None = None, algebra: ConcreteAlgebra | None = None,
                   ) -> SearchResult:
    """Heuristic search for a cheap length-2 factorisation of a row.

    Candidates: the naive witness, an alternating least-squares run started
    from ``C2 = 1`` and ``D1 = D2 = x_j / ||x||``, and ``cfg.restarts`` runs from
    random starts.  Among candidates reconstructing ``x`` to ``cfg.tolerance``
    with entries in the unit ball of the algebra, the smallest ``K`` wins; the
    ratio reported is ``K / ||x||``.
    """
    cfg = cfg or FactorizationConfig()
    alg = algebra or x.algebra
    if alg is None:
        raise ValueError("search_length2 needs the algebra carrying the row entries")
    n, big_n = x.width, x.entries.shape[1]
    k = cfg.width or n
    nrm = x.norm
    rng = np.random.default_rng(cfg.seed)
    candidates = []
    if k == n:
        candidates.append(naive_witness(x))
    if nrm > 0:
        d0 = np.zeros((k, big_n, big_n), dtype=complex)
        d0[: min(k, n)] = x.entries[: min(k, n)] / nrm
        d0 = _retract_entries(d0, alg)
        c3 = np.zeros((k, n), dtype=complex)
        c3[: min(k, n), : min(k, n)] = np.eye(min(k, n))
        start = FactorizationWitness(np.ones((1, k), complex), d0, np.eye(k, dtype=complex), d0.copy(), c3)
        candidates.append(_als(x, alg, start, cfg.iterations, cfg.ridge, cfg.tolerance))
        for _ in range(cfg.restarts):
            def rand(*shape):
                return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
            d1 = _retract_entries(alg.from_coefficients(rand(k, alg.dim)) / 2, alg)
            d2 = _retract_entries(alg.from_coefficients(rand(k, alg.dim)) / 2, alg)
            start = FactorizationWitness(rand(1, k), d1, rand(k, k) / np.sqrt(k), d2, rand(k, n) / np.sqrt(k))
            candidates.append(_als(x, alg, start, cfg.iterations, cfg.ridge, cfg.tolerance))
    best, best_res = None, np.inf
    attempts = []
    for w in candidates:
        rep = check_factorization(x, w, alg)
        attempts.append((rep.residual, rep.K))
        best_res = min(best_res, rep.residual)
        if rep.valid(cfg.tolerance) and (best is None or rep.K < best.K):
            best = w
    if best is None:
        return SearchResult(None, float(best_res), np.inf, tuple(attempts))
    ratio = best.K / nrm if nrm > 0 else 0.0
    return SearchResult(best, float(check_factorization(x, best, alg).residual), float(ratio), tuple(attempts))


@dataclass(frozen=True, eq=False)
class TransferResult:
    y: RowElement
    y_prime: RowElement
    distance: float
    distance_prime: float
    K: float
    gamma: float
    bound_prime: float
    certified_220: bool


def transfer_row_approximant(x: RowElement, w: FactorizationWitness, target: ConcreteAlgebra, gamma: float,
                             cfg: MetricConfig | None = None) -> TransferResult:
    """Move a factorised row of ``A`` to a nearby row of ``target``.

    Every diagonal entry is replaced by its best unit-ball approximant in
    ``target``; ``y' = C1 E1 C2 E2 C3`` then satisfies ``||x - y'|| <= 2 K gamma``.
    ``y'`` is divided by its norm only when that norm exceeds one.

    Raises
    ------
    ApproximantTooFar
        If some entry is further than ``gamma`` from the unit ball of ``target``.
    """
    cfg = cfg or MetricConfig()
    approx = []
    for entry in np.concatenate([w.D1, w.D2]):
        br = dist_to_unit_ball(entry, target, cfg)
        if br.upper > gamma + 1e-12:
            raise ApproximantTooFar(f"entry is {br.upper:.3e} from the unit ball of B, gamma = {gamma:.3e}")
        approx.append(br.witness)
    k = w.C2.shape[0]
    e1, e2 = np.array(approx[:k]), np.array(approx[k:])
    yp = RowElement(w.with_entries(e1, e2).product(), target)
    ypn = yp.norm
    y = yp.scaled(1.0 / ypn) if ypn > 1.0 else yp
    dist_p = row_norm(x.entries - yp.entries)
    dist = row_norm(x.entries - y.entries)
    K = w.K
    return TransferResult(
        y=y,
        y_prime=yp,
        distance=float(dist),
        distance_prime=float(dist_p),
        K=float(K),
        gamma=float(gamma),
        bound_prime=float(2 * K * gamma),
        certified_220=bool(K <= 55.0 and x.norm <= 1.0 + 1e-12),
    )
