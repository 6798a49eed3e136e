"""Bracket estimators for Kadison-Kastler type distances between subalgebras.

The inner problem ``min ||x - b||`` over the unit ball of ``M_{p,q}(B)`` is
convex and solved by :func:`kkperturb.kernels.inner_descent`; its value is
bracketed by a feasible point (upper) and a trace-class dual witness (lower).
The outer supremum over the unit ball of ``M_{p,q}(A)`` is non-convex and only
explored by multistart hill climbing, so distance uppers are estimates while
distance lowers stay certified.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .algebra import ConcreteAlgebra, op_norm


@dataclass(frozen=True)
class MetricConfig:
    restarts: int = 8
    inner_iterations: int = 80
    inner_tolerance: float = 1e-9
    amplification_cutoff: int = 4
    seed: int = 0
    outer_steps: int = 12
    dykstra_iterations: int = 20

    def __post_init__(self):
        for name in ("restarts", "inner_iterations", "amplification_cutoff", "outer_steps", "dykstra_iterations"):
            if getattr(self, name) < 1:
                raise ValueError(f"MetricConfig.{name} must be >= 1")


@dataclass
class Bracket:
    lower: float
    upper: float
    witness: object = None
    certified_upper: bool = False
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        self.lower = max(0.0, float(self.lower))
        self.upper = float(self.upper)
        if self.lower > self.upper:
            # rounding between the primal value and the dual certificate
            self.lower = self.upper

    def contains(self, value, slack=0.0) -> bool:
        return self.lower - slack <= value <= self.upper + slack

    def overlaps(self, other: "Bracket", slack=0.0) -> bool:
        return self.lower <= other.upper + slack and other.lower <= self.upper + slack


# -- block helpers -----------------------------------------------------------

def blocks_to_matrix(blocks):
    """``(p, q, N, N)`` -> ``(pN, qN)``."""
    blocks = np.asarray(blocks)
    p, q, n, _ = blocks.shape
    return np.ascontiguousarray(blocks.transpose(0, 2, 1, 3).reshape(p * n, q * n))


def matrix_to_blocks(mat, n):
    p, q = mat.shape[0] // n, mat.shape[1] // n
    return mat.reshape(p, n, q, n).transpose(0, 2, 1, 3)


def row_matrix(entries):
    return np.ascontiguousarray(np.hstack([np.asarray(e, dtype=complex) for e in entries]))


def _element(alg: ConcreteAlgebra, coef):
    return blocks_to_matrix(alg.from_coefficients(coef))


def _normalise(alg, coef, polar):
    x = _element(alg, coef)
    if polar:
        u, s, vh = np.linalg.svd(x, full_matrices=False)
        # the polar partial isometry stays in M_{p,q}(A); retract removes rounding
        qt, qc = alg.kernel_basis
        x = kernels.retract(np.ascontiguousarray(u @ vh), qt, qc, alg.ambient_dim)
        coef = alg.coefficients(matrix_to_blocks(x, alg.ambient_dim))
        x = _element(alg, coef)
    nrm = op_norm(x)
    if nrm == 0.0:
        return coef, x
    return coef / nrm, x / nrm


# -- inner problem -----------------------------------------------------------

def solve_inner(x, target: ConcreteAlgebra, cfg: MetricConfig, warm=None):
    """Bracket ``min ||x - b||`` over ``b`` in the unit ball of ``M_{p,q}(target)``.

    Returns ``(b, upper, lower, trace)``.
    """
    x = np.ascontiguousarray(x, dtype=complex)
    qt, qc = target.kernel_basis
    n = target.ambient_dim
    start = kernels.retract(x, qt, qc, n)
    if warm is not None:
        warm = kernels.retract(np.ascontiguousarray(warm, dtype=complex), qt, qc, n)
        if op_norm(x - warm) < op_norm(x - start):
            start = warm
    b, upper, lower, _, trace = kernels.inner_descent(
        x, start, qt, qc, n, cfg.inner_iterations, cfg.dykstra_iterations, cfg.inner_tolerance
    )
    return b, float(upper), float(lower), trace[~np.isnan(trace)]


def dist_to_unit_ball(x, target: ConcreteAlgebra, cfg: MetricConfig | None = None) -> Bracket:
    """Distance from ``x`` (an ``N x N`` matrix or a block matrix) to the unit ball of ``target``.

    Both ends are certified: the upper is attained by ``witness``; the lower
    comes from weak duality and is at least ``||x|| - 1`` and the trace-class
    distance from ``x`` to span(target).
    """
    cfg = cfg or MetricConfig()
    b, upper, lower, trace = solve_inner(x, target, cfg)
    return Bracket(lower, upper, witness=b, certified_upper=True, details={"trace": trace})


# -- outer problem -----------------------------------------------------------

def _rng(cfg, *keys):
    return np.random.default_rng([cfg.seed, *keys])


def sup_inf(source: ConcreteAlgebra, target: ConcreteAlgebra, p: int, q: int, cfg: MetricConfig, rng,
            seeds=()) -> dict:
    """Explore ``sup_{x} inf_{y} ||x - y||`` over unit balls of ``M_{p,q}(source)``, ``M_{p,q}(target)``.

    ``seeds`` are extra starting coefficient arrays of shape ``(p, q, dim)``.
    """
    d = source.dim
    shape = (p, q, d)
    best_up, best_lo = -1.0, 0.0
    wit_up = wit_lo = best_coef = None
    pool = []

    def evaluate(coef, warm=None):
        nonlocal best_up, best_lo, wit_up, wit_lo, best_coef
        _, x = _normalise(source, coef, polar=False)
        y, up, lo, _ = solve_inner(x, target, cfg, warm)
        if up > best_up:
            best_up, wit_up, best_coef = up, (x, y), coef
        if lo > best_lo:
            best_lo, wit_lo = lo, x
        return up, y

    starts = []
    for r in range(cfg.restarts):
        coef = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        starts.append(_normalise(source, coef, polar=(r % 2 == 1))[0])
    for coef in seeds:
        if coef is not None:
            starts.append(_normalise(source, np.asarray(coef, dtype=complex), polar=False)[0])
    for r, coef in enumerate(starts):
        up, y = evaluate(coef)
        pool.append((up, r, coef, y))

    pool.sort(key=lambda t: (-t[0], t[1]))
    for up, _, coef, y in pool[: max(1, cfg.restarts // 3)]:
        sigma = 0.5
        for _ in range(cfg.outer_steps):
            trial = coef.copy()
            idx = tuple(rng.integers(0, s) for s in shape)
            trial[idx] += sigma * (rng.standard_normal() + 1j * rng.standard_normal())
            trial, _ = _normalise(source, trial, polar=bool(rng.integers(0, 2)))
            val, y_new = evaluate(trial, warm=y)
            if val > up:
                up, coef, y = val, trial, y_new
                sigma = min(1.0, 1.5 * sigma)
            else:
                sigma *= 0.6
    return {
        "lower": best_lo,
        "upper": max(best_up, best_lo),
        "witness": wit_up,
        "lower_witness": wit_lo,
        "coef": best_coef,
    }


def _distance(a, b, p, q, cfg, seeds=((), ())):
    if a.ambient_dim != b.ambient_dim:
        raise ValueError("algebras must share the ambient dimension")
    # both directions use the same stream, so the estimate is symmetric in (a, b)
    fwd = sup_inf(a, b, p, q, cfg, _rng(cfg, p, q), seeds[0])
    bwd = sup_inf(b, a, p, q, cfg, _rng(cfg, p, q), seeds[1])
    lower = max(fwd["lower"], bwd["lower"])
    upper = max(fwd["upper"], bwd["upper"])
    witness = fwd["witness"] if fwd["upper"] >= bwd["upper"] else bwd["witness"]
    return Bracket(lower, upper, witness=witness, certified_upper=False,
                   details={"terms": (fwd["lower"], fwd["upper"], bwd["lower"], bwd["upper"]),
                            "coefs": (fwd["coef"], bwd["coef"])})


def kk_distance(a: ConcreteAlgebra, b: ConcreteAlgebra, cfg: MetricConfig | None = None) -> Bracket:
    """Kadison-Kastler distance: Hausdorff distance between the unit balls."""
    return _distance(a, b, 1, 1, cfg or MetricConfig())


def amplified_distance(a, b, n: int, cfg: MetricConfig | None = None) -> Bracket:
    """Distance between ``M_n(A)`` and ``M_n(B)``; one term of the cb distance."""
    cfg = cfg or MetricConfig()
    if n > cfg.amplification_cutoff:
        raise ValueError(f"n={n} exceeds amplification_cutoff={cfg.amplification_cutoff}")
    return _distance(a, b, n, n, cfg)


def row_distance(a, b, cfg: MetricConfig | None = None, n_max: int | None = None) -> Bracket:
    """Row distance truncated at ``n_max`` (default ``cfg.amplification_cutoff``).

    ``details["per_n"]`` lists ``(n, lower, upper)``; the reported bracket is
    the running maximum, so it is monotone in ``n_max``.  The search at width
    ``n`` also starts from the best width ``n - 1`` rows padded with a zero.
    """
    cfg = cfg or MetricConfig()
    n_max = n_max or cfg.amplification_cutoff
    per_n = []
    lower = upper = 0.0
    witness = None
    seeds = ((), ())
    for n in range(1, n_max + 1):
        br = _distance(a, b, 1, n, cfg, seeds)
        seeds = tuple(
            () if c is None else (np.concatenate([c, np.zeros((1, 1, c.shape[2]), dtype=complex)], axis=1),)
            for c in br.details["coefs"]
        )
        per_n.append((n, br.lower, br.upper))
        lower = max(lower, br.lower)
        if br.upper >= upper:
            upper, witness = br.upper, br.witness
    return Bracket(lower, upper, witness=witness, certified_upper=False, details={"per_n": per_n})


# -- linear maps ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LinearMap:
    """Linear map from ``source`` into ``M_M(C)`` given by the images of the basis.

    ``cb_bound`` is an optional known upper bound on the cb norm.
    """

    source: ConcreteAlgebra
    images: np.ndarray
    cb_bound: float | None = None

    @property
    def out_dim(self) -> int:
        return self.images.shape[-1]

    @property
    def matrix(self):
        """Matrix on coefficient space: column k is ``vec(phi(b_k))``."""
        return self.images.reshape(self.source.dim, -1).T

    def __call__(self, x):
        return np.einsum("...k,kab->...ab", self.source.coefficients(x), self.images)

    def apply_blocks(self, y):
        blocks = matrix_to_blocks(np.asarray(y, dtype=complex), self.source.ambient_dim)
        return blocks_to_matrix(self(blocks))

    def __sub__(self, other: "LinearMap") -> "LinearMap":
        return LinearMap(self.source, self.images - other.images)

    @classmethod
    def from_function(cls, source, func, cb_bound=None):
        return cls(source, np.array([func(b) for b in source.basis]), cb_bound)

    @classmethod
    def inclusion(cls, source):
        return cls(source, source.basis.copy(), 1.0)

    @classmethod
    def similarity(cls, source, s):
        """``x -> S x S^-1``; its cb norm is at most ``||S|| ||S^-1||``."""
        s = np.asarray(s, dtype=complex)
        sinv = np.linalg.inv(s)
        return cls(source, s @ source.basis @ sinv, op_norm(s) * op_norm(sinv))


def _ratio(phi, coef):
    x = _element(phi.source, coef)
    nx = op_norm(x)
    if nx == 0.0:
        return 0.0
    return op_norm(phi.apply_blocks(x)) / nx


def row_norm_of_map(phi: LinearMap, n_max: int, cfg: MetricConfig | None = None, extra_rows=()) -> Bracket:
    """Multistart lower estimate of ``sup_n ||phi^(1,n)||`` for ``n <= n_max``.

    ``extra_rows`` are explicit rows (lists of entries) also evaluated.  The
    upper end is ``phi.cb_bound`` when known, else ``inf``.
    """
    cfg = cfg or MetricConfig()
    src = phi.source
    per_n = []
    best, wit = 0.0, None
    for n in range(1, n_max + 1):
        rng = _rng(cfg, 7, n)
        shape = (1, n, src.dim)
        local = 0.0
        starts = []
        for r in range(cfg.restarts):
            coef = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
            coef, _ = _normalise(src, coef, polar=(r % 2 == 1))
            val = _ratio(phi, coef)
            starts.append((val, r, coef))
        starts.sort(key=lambda t: (-t[0], t[1]))
        for val, _, coef in starts[: max(1, cfg.restarts // 3)]:
            sigma = 0.5
            for _ in range(cfg.outer_steps):
                trial = coef.copy()
                idx = tuple(rng.integers(0, s) for s in shape)
                trial[idx] += sigma * (rng.standard_normal() + 1j * rng.standard_normal())
                tv = _ratio(phi, trial)
                if tv > val:
                    val, coef = tv, trial
                    sigma = min(1.0, 1.5 * sigma)
                else:
                    sigma *= 0.6
            if val > local:
                local = val
                if val > best:
                    best, wit = val, _element(src, coef)
        per_n.append((n, local))
    for row in extra_rows:
        x = row_matrix(row)
        nx = op_norm(x)
        if nx > 0:
            val = op_norm(phi.apply_blocks(x)) / nx
            if val > best:
                best, wit = val, x
    upper = phi.cb_bound if phi.cb_bound is not None else np.inf
    return Bracket(min(best, upper), upper, witness=wit, certified_upper=phi.cb_bound is not None,
                   details={"per_n": per_n})


def map_norm(phi: LinearMap, cfg: MetricConfig | None = None) -> float:
    """Multistart lower estimate of the norm ``||phi||``."""
    return row_norm_of_map(phi, 1, cfg).lower
