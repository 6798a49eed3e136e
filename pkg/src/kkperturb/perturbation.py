"""Row-metric lemma checks and the pipeline producing ``u`` with ``u A u* = B``.

Pipeline, for ``C ⊆ A, B ⊆ D`` with ``A`` close to ``B``:

1. ``t = sum lambda(m_i) e_B lambda(m_i*)`` on the GNS space of ``D``, where
   ``m_i = T^(-1/2) v_i`` is the normalised quasi-basis of ``E_C^A``;
2. ``q`` = spectral projection of ``t`` onto ``[1/2, inf)``, and ``w`` the polar
   part of ``e_B q + (1 - e_B)(1 - q)`` so that ``w q w* = e_B``;
3. ``phi(x) = theta^(-1)(e_B w lambda(x) w* e_B)``, a *-homomorphism ``A -> B``
   fixing ``C``;
4. ``u`` = polar part of ``sum phi(m_i) m_i*``, so that ``phi = Ad(u)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .algebra import (
    ConcreteAlgebra,
    adjoint,
    conjugate_algebra,
    op_norm,
    polar_unitary,
    spectral_projection,
    subspace_distance,
)
from .basic_construction import BasicConstruction, build_basic_construction, theta_inverse
from .errors import KKError, NumericalFailure, SpectralGapFail
from .expectation import ConditionalExpectation, QuasiBasis, index_inverse_sqrt, quasi_basis, trace_expectation
from .metrics import (
    Bracket,
    LinearMap,
    MetricConfig,
    _normalise,
    kk_distance,
    row_distance,
    row_norm_of_map,
)

CHECK_TOL = 1e-8
GAMMA_PRIME_THRESHOLD = 1.0 / 2066.0
GAMMA_THRESHOLD = 1e-6
ROUNDING_SLACK = 1e-12


@dataclass(frozen=True)
class Check:
    """One asserted inequality ``lhs <= rhs``.

    ``source`` names the statement the inequality comes from.  Checks with
    ``asserted=False`` are reported but do not affect the verdict.  ``slack``
    absorbs rounding when both sides are at machine precision.
    """

    tag: str
    source: str
    gamma: float
    lhs: float
    rhs: float
    asserted: bool = True
    slack: float = ROUNDING_SLACK

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def passed(self) -> bool:
        return bool(self.lhs <= self.rhs + self.slack)

    def as_dict(self) -> dict:
        return {
            "check_tag": self.tag,
            "paper_source": self.source,
            "gamma": float(self.gamma),
            "lhs": float(self.lhs),
            "rhs": float(self.rhs),
            "margin": float(self.margin),
            "pass": self.passed,
            "asserted": self.asserted,
        }


def sample_rows(alg: ConcreteAlgebra, m: int, count: int, rng, unit_ball: bool = True):
    """``count`` random rows in ``M_{1,m}(alg)`` as ``(N, mN)`` matrices.

    With ``unit_ball`` the rows are normalised, every other one through its
    polar part so that extreme points are represented.
    """
    rows = []
    for k in range(count):
        coef = rng.standard_normal((1, m, alg.dim)) + 1j * rng.standard_normal((1, m, alg.dim))
        _, x = _normalise(alg, coef, polar=unit_ball and k % 2 == 1)
        rows.append(x)
    return rows


def _row_entries(x, n):
    return [x[:, j * n:(j + 1) * n] for j in range(x.shape[1] // n)]


# -- row-metric lemmas -------------------------------------------------------

@dataclass(frozen=True)
class WatlemReport:
    gamma: float
    idempotence: float
    row_identity: float
    column_identity: float
    checks: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.asserted)


def check_watlem(A: ConcreteAlgebra, B: ConcreteAlgebra, e_b: ConditionalExpectation,
                 cfg: MetricConfig | None = None, gamma: float | None = None, samples: int = 20,
                 m_max: int | None = None) -> WatlemReport:
    """Worst values over sampled unit-ball rows ``x`` of ``M_{1,m}(A)`` of

    * ``||E^(1,m)(x) - x||``                               (bound ``2 gamma``)
    * ``||E^(1,m)(x) E^(m,1)(x*) - E(x x*)||``             (bound ``4 gamma``)
    * ``||E^(m,1)(x*) E^(1,m)(x) - E^(m)(x* x)||``          (bound ``4 gamma``)

    with ``gamma`` the upper bracket of the row distance unless given.
    """
    cfg = cfg or MetricConfig()
    m_max = m_max or cfg.amplification_cutoff
    if gamma is None:
        gamma = row_distance(A, B, cfg, m_max).upper
    rng = np.random.default_rng([cfg.seed, 11])
    worst = np.zeros(3)
    for m in range(1, m_max + 1):
        for x in sample_rows(A, m, samples, rng):
            ex = e_b.apply_blocks(x)
            vals = (
                op_norm(ex - x),
                op_norm(ex @ adjoint(ex) - e_b(x @ adjoint(x))),
                op_norm(adjoint(ex) @ ex - e_b.apply_blocks(adjoint(x) @ x)),
            )
            worst = np.maximum(worst, vals)
    checks = (
        Check("watlem-idempotence", "Lem-watlem", gamma, worst[0], 2 * gamma),
        Check("watlem-row", "Lem-watlem", gamma, worst[1], 4 * gamma),
        Check("watlem-column", "Lem-watlem", gamma, worst[2], 4 * gamma),
    )
    return WatlemReport(float(gamma), float(worst[0]), float(worst[1]), float(worst[2]), checks)


@dataclass(frozen=True)
class Watlem2Report:
    samples: int
    row_discrepancy: float
    column_discrepancy: float
    largest_value: float
    checks: tuple

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


def watlem2_sides(e_b: ConditionalExpectation, bc: BasicConstruction, x):
    """Both sides of the two identities for the row ``x`` (an ``(N, mN)`` matrix).

    Returns ``((lhs_row, rhs_row), (lhs_col, rhs_col))``: the left sides use the
    expectation on matrices, the right sides only ``lambda`` and ``e_B`` on the
    GNS space.
    """
    n = bc.source.ambient_dim
    entries = _row_entries(x, n)
    m = len(entries)
    ex = e_b.apply_blocks(x)
    lhs_row = op_norm(ex @ adjoint(ex) - e_b(x @ adjoint(x)))
    lhs_col = op_norm(adjoint(ex) @ ex - e_b.apply_blocks(adjoint(x) @ x))
    eb = bc.jones_projection
    one = np.eye(bc.gns_dim)
    lam_row = bc.lambda_row(entries)
    lam_col = bc.lambda_column([adjoint(e) for e in entries])
    rhs_row = op_norm(eb @ lam_row @ bc.diag_amplification(one - eb, m) @ lam_col @ eb)
    big_eb = bc.diag_amplification(eb, m)
    rhs_col = op_norm(big_eb @ lam_col @ (one - eb) @ lam_row @ big_eb)
    return (lhs_row, rhs_row), (lhs_col, rhs_col)


def check_watlem2(e_b: ConditionalExpectation, bc: BasicConstruction, cfg: MetricConfig | None = None,
                  samples: int = 25, m_max: int | None = None, tol: float = CHECK_TOL) -> Watlem2Report:
    """Largest discrepancies between the two sides over random rows of ``M_{1,m}(D)``."""
    cfg = cfg or MetricConfig()
    m_max = m_max or cfg.amplification_cutoff
    rng = np.random.default_rng([cfg.seed, 13])
    d_row = d_col = biggest = 0.0
    count = 0
    for m in range(1, m_max + 1):
        for x in sample_rows(bc.source, m, samples, rng, unit_ball=False):
            (a, b), (c, d) = watlem2_sides(e_b, bc, x)
            d_row, d_col = max(d_row, abs(a - b)), max(d_col, abs(c - d))
            biggest = max(biggest, a, c)
            count += 1
    checks = (
        Check("watlem2-row", "Lem-watlem2", 0.0, d_row, tol),
        Check("watlem2-column", "Lem-watlem2", 0.0, d_col, tol),
    )
    return Watlem2Report(count, float(d_row), float(d_col), float(biggest), checks)


# -- homomorphism construction ----------------------------------------------

def normalised_quasi_basis(qb: QuasiBasis):
    """``m_i = T^(-1/2) v_i``; the row ``M = (m_1, ..., m_n)`` has ``M M* = 1``."""
    return np.einsum("ab,ibc->iac", index_inverse_sqrt(qb), qb.elements)


@dataclass(frozen=True)
class TReport:
    mm_residual: float
    self_adjoint_residual: float
    min_eigenvalue: float
    commutant_residual: float


def build_t(bc: BasicConstruction, qb: QuasiBasis, A: ConcreteAlgebra | None = None):
    """``t = sum lambda(m_i) e_B lambda(m_i*)`` and its residual report.

    Raises
    ------
    IndexNotInvertible
        If the index element of ``qb`` is singular.
    """
    ms = normalised_quasi_basis(qb)
    n = ms.shape[-1]
    mm = np.einsum("iab,icb->ac", ms, np.conj(ms))
    lam = bc.lambda_rep(ms)
    lam_adj = bc.lambda_rep(adjoint(ms))
    t = np.einsum("iab,bc,icd->ad", lam, bc.jones_projection, lam_adj)
    comm = 0.0
    if A is not None:
        comm = max(op_norm(t @ l - l @ t) for l in bc.lambda_rep(A.basis))
    rep = TReport(
        mm_residual=op_norm(mm - np.eye(n)),
        self_adjoint_residual=op_norm(t - adjoint(t)),
        min_eigenvalue=float(np.linalg.eigvalsh(0.5 * (t + adjoint(t)))[0]),
        commutant_residual=float(comm),
    )
    return t, rep


@dataclass(frozen=True)
class CloseReport:
    delta: float
    q_deviation: float
    wqw_residual: float
    w_deviation: float
    q_commutant_residual: float


def close_projection_and_unitary(t, e_b, lam_a=None):
    """Projection ``q`` near ``t`` and unitary ``w`` with ``w q w* = e_B``.

    ``lam_a`` optionally holds ``lambda`` of a basis of ``A``, used to measure
    how far ``q`` is from commuting with it.

    Raises
    ------
    SpectralGapFail
        If ``||t - e_B|| >= 1/2``.
    SingularInput
        If ``e_B q + (1 - e_B)(1 - q)`` is not invertible.
    """
    t = np.asarray(t, dtype=complex)
    e_b = np.asarray(e_b, dtype=complex)
    delta = op_norm(t - e_b)
    if delta >= 0.5:
        raise SpectralGapFail(f"||t - e_B|| = {delta:.3e} is not below 1/2")
    t = 0.5 * (t + adjoint(t))
    q = spectral_projection(t, 0.5)
    one = np.eye(len(t))
    z = e_b @ q + (one - e_b) @ (one - q)
    w = polar_unitary(z)
    comm = 0.0
    if lam_a is not None:
        comm = max(op_norm(q @ l - l @ q) for l in lam_a)
    rep = CloseReport(
        delta=float(delta),
        q_deviation=op_norm(q - e_b),
        wqw_residual=op_norm(w @ q @ adjoint(w) - e_b),
        w_deviation=op_norm(w - one),
        q_commutant_residual=float(comm),
    )
    return q, w, rep


@dataclass(frozen=True)
class PhiReport:
    theta_residual: float
    hom_residual: float
    adjoint_residual: float
    unital_residual: float
    fixes_C_residual: float


def homomorphism_residuals(phi: LinearMap, C: ConcreteAlgebra | None = None):
    """Multiplicativity, adjoint, unit and ``phi|_C = id`` residuals on bases."""
    src = phi.source
    basis = src.basis
    images = phi(basis)
    prods = np.einsum("iab,jbc->ijac", basis, basis)
    hom = float(np.max([op_norm(a - b) for a, b in zip(
        phi(prods).reshape(-1, *images.shape[1:]),
        np.einsum("iab,jbc->ijac", images, images).reshape(-1, *images.shape[1:]),
    )]))
    adj = max(op_norm(phi(adjoint(b)) - adjoint(p)) for b, p in zip(basis, images))
    eye = np.eye(src.ambient_dim)
    unital = op_norm(phi(eye) - np.eye(phi.out_dim))
    fix = 0.0
    if C is not None:
        fix = max(op_norm(phi(c) - c) for c in C.basis)
    return hom, float(adj), float(unital), float(fix)


def build_phi(bc: BasicConstruction, w, A: ConcreteAlgebra, C: ConcreteAlgebra | None = None,
              tol: float = CHECK_TOL):
    """The *-homomorphism ``phi: A -> B``, ``phi(x) = theta^(-1)(e_B w lambda(x) w* e_B)``.

    Raises
    ------
    NotInRange
        If some compressed image is not of the form ``lambda(b) e_B``.
    """
    eb = bc.jones_projection
    w = np.asarray(w, dtype=complex)
    images, worst = [], 0.0
    for lam in bc.lambda_rep(A.basis):
        b, res = theta_inverse(bc, eb @ w @ lam @ adjoint(w) @ eb, tol)
        images.append(b)
        worst = max(worst, res)
    phi = LinearMap(A, np.array(images))
    hom, adj, unital, fix = homomorphism_residuals(phi, C)
    return phi, PhiReport(float(worst), hom, adj, unital, fix)


def map_row_deviation(phi1: LinearMap, phi2: LinearMap, n_max: int, cfg: MetricConfig | None = None,
                      extra_rows=()) -> Bracket:
    """Lower estimate of ``||phi1 - phi2||_row`` over widths ``n <= n_max``."""
    return row_norm_of_map(phi1 - phi2, n_max, cfg, extra_rows)


# -- intertwiner -------------------------------------------------------------

@dataclass(frozen=True)
class IntertwinerReport:
    gamma: float
    s_deviation: float
    s_invertibility: float
    conjugation_residual: float
    commutes_C_residual: float
    u_deviation: float
    sqrt2_margin: float
    checks: tuple


def intertwiner(phi1: LinearMap, phi2: LinearMap, qb: QuasiBasis, C: ConcreteAlgebra | None = None,
                cfg: MetricConfig | None = None, gamma: float | None = None, n_max: int | None = None):
    """Unitary ``u`` with ``phi1 = Ad(u) o phi2`` from ``s = sum phi1(m_i) phi2(m_i*)``.

    ``gamma`` defaults to the larger of the multistart estimate of
    ``||phi1 - phi2||_row`` and its value on the row ``M`` of normalised
    quasi-basis elements; the latter alone already bounds ``||1 - s||``.

    Raises
    ------
    SingularInput
        If ``s`` is not invertible.
    """
    cfg = cfg or MetricConfig()
    n_max = n_max or cfg.amplification_cutoff
    ms = normalised_quasi_basis(qb)
    if gamma is None:
        gamma = map_row_deviation(phi1, phi2, n_max, cfg, extra_rows=[list(ms)]).lower
    s = np.einsum("iab,ibc->ac", phi1(ms), phi2(adjoint(ms)))
    one = np.eye(len(s))
    s_dev = op_norm(one - s)
    smin = float(np.linalg.svd(s, compute_uv=False)[-1])
    u = polar_unitary(s)
    basis = phi1.source.basis
    conj = max(op_norm(a - u @ b @ adjoint(u)) for a, b in zip(phi1(basis), phi2(basis)))
    comm = 0.0
    if C is not None:
        comm = max(op_norm(u @ c - c @ u) for c in C.basis)
    u_dev = op_norm(one - u)
    checks = (
        Check("intertwine-s", "Lem-intertwine", gamma, s_dev, gamma),
        Check("intertwine-bound", "Lem-intertwine", gamma, u_dev, 2 * gamma),
    )
    rep = IntertwinerReport(
        gamma=float(gamma),
        s_deviation=float(s_dev),
        s_invertibility=smin,
        conjugation_residual=float(conj),
        commutes_C_residual=float(comm),
        u_deviation=float(u_dev),
        sqrt2_margin=float(np.sqrt(2) * gamma - u_dev),
        checks=checks,
    )
    return u, rep


# -- full pipeline -----------------------------------------------------------

def variant_bound(gamma: float) -> float:
    """The stated bound ``16 sqrt(110) gamma^(1/2) + 880 gamma``."""
    return 16 * np.sqrt(110) * np.sqrt(gamma) + 880 * gamma


def variant_bound_recomputed(gamma: float) -> float:
    """``16 sqrt(2) (220 gamma)^(1/2) + 4 (220 gamma) = 32 sqrt(110) gamma^(1/2) + 880 gamma``."""
    return 32 * np.sqrt(110) * np.sqrt(gamma) + 880 * gamma


@dataclass(eq=False)
class PerturbationReport:
    gamma_used: float = np.nan
    gamma_kk: float = np.nan
    kk_bracket: tuple = (np.nan, np.nan)
    row_bracket: tuple = (np.nan, np.nan)
    t_deviation: float = np.nan
    q_commutant_residual: float = np.nan
    w_deviation: float = np.nan
    phi_hom_residual: float = np.nan
    phi_fixes_C_residual: float = np.nan
    phi_row_deviation: float = np.nan
    s_invertibility: float = np.nan
    u: np.ndarray | None = None
    u_deviation: float = np.nan
    conjugation_residual: float = np.nan
    conjugation_verdict: bool = False
    bound_satisfied: bool = False
    bound_used: str = ""
    warnings: list = field(default_factory=list)
    checks: list = field(default_factory=list)
    error: str | None = None
    error_kind: str | None = None

    @property
    def passed(self) -> bool:
        return self.error is None and all(c.passed for c in self.checks if c.asserted)


def _add_bound_checks(rep: PerturbationReport, gamma: float):
    stated = Check("variant-bound", "Thm-variant-bound", gamma, rep.u_deviation, variant_bound(gamma))
    recomputed = Check("variant-bound-recomputed", "Thm-variant-bound", gamma, rep.u_deviation,
                       variant_bound_recomputed(gamma), asserted=not stated.passed)
    rep.checks += [stated, recomputed]
    if stated.passed:
        rep.bound_satisfied, rep.bound_used = True, "16sqrt110"
    else:
        rep.bound_satisfied, rep.bound_used = recomputed.passed, "32sqrt110"


def perturbation_pipeline(C: ConcreteAlgebra, A: ConcreteAlgebra, B: ConcreteAlgebra, D: ConcreteAlgebra,
                          cfg: MetricConfig | None = None, tol: float = CHECK_TOL, kk: Bracket | None = None,
                          row: Bracket | None = None) -> PerturbationReport:
    """Run the whole construction and record every intermediate bound.

    ``kk`` and ``row`` are precomputed brackets for ``d(A, B)`` and
    ``d_row(A, B)``; they are estimated here when omitted.

    Errors raised by any stage are stored in the report (``error`` and
    ``error_kind`` = ``"numerical"`` or ``"structural"``) instead of propagating.
    """
    cfg = cfg or MetricConfig()
    rep = PerturbationReport()
    try:
        _run_pipeline(rep, C, A, B, D, cfg, tol, kk, row)
    except NumericalFailure as exc:
        rep.error, rep.error_kind = f"{type(exc).__name__}: {exc}", "numerical"
    except KKError as exc:
        rep.error, rep.error_kind = f"{type(exc).__name__}: {exc}", "structural"
    return rep


def _run_pipeline(rep, C, A, B, D, cfg, tol, kk, row):
    n_max = cfg.amplification_cutoff
    kk = kk or kk_distance(A, B, cfg)
    row = row or row_distance(A, B, cfg, n_max)
    gamma_kk, gamma = kk.upper, row.upper
    rep.gamma_kk, rep.gamma_used = gamma_kk, gamma
    rep.kk_bracket, rep.row_bracket = (kk.lower, kk.upper), (row.lower, row.upper)
    if 220 * gamma_kk >= GAMMA_PRIME_THRESHOLD:
        rep.warnings.append("gamma_prime_above_threshold")
    if gamma_kk >= GAMMA_THRESHOLD:
        rep.warnings.append("gamma_above_threshold")
    rep.checks.append(Check("rm-inequality", "Thm-rm", gamma_kk, row.lower, 220 * gamma_kk))

    e_b = trace_expectation(D, B)
    bc = build_basic_construction(e_b)
    qb = quasi_basis(trace_expectation(A, C))
    lam_a = bc.lambda_rep(A.basis)

    t, t_rep = build_t(bc, qb, A)
    rep.checks.append(Check("normalised-row", "Lem-homo", 0.0, t_rep.mm_residual, tol))
    rep.checks.append(Check("t-commutant", "Lem-homo", 0.0, t_rep.commutant_residual, tol))
    rep.t_deviation = op_norm(t - bc.jones_projection)
    rep.checks.append(Check("projest", "Eq-projest", gamma, rep.t_deviation, 2 * np.sqrt(gamma)))

    q, w, c_rep = close_projection_and_unitary(t, bc.jones_projection, lam_a)
    rep.q_commutant_residual, rep.w_deviation = c_rep.q_commutant_residual, c_rep.w_deviation
    delta = c_rep.delta
    rep.checks += [
        Check("q-deviation", "Lem-homo", gamma, c_rep.q_deviation, 2 * delta + tol),
        Check("q-commutant", "Lem-homo", gamma, c_rep.q_commutant_residual, 10 * tol),
        Check("wqw", "Lem-homo", gamma, c_rep.wqw_residual, tol),
        Check("w-deviation", "Lem-homo", gamma, c_rep.w_deviation, 2 * np.sqrt(2) * delta + 1e-9),
    ]

    phi, p_rep = build_phi(bc, w, A, C, tol)
    rep.phi_hom_residual = max(p_rep.hom_residual, p_rep.adjoint_residual)
    rep.phi_fixes_C_residual = p_rep.fixes_C_residual
    ms = normalised_quasi_basis(qb)
    dev = map_row_deviation(phi, LinearMap.inclusion(A), n_max, cfg, extra_rows=[list(ms)]).lower
    rep.phi_row_deviation = dev
    rep.checks += [
        Check("homo-multiplicative", "Lem-homo", gamma, rep.phi_hom_residual, tol),
        Check("homo-fixes-C", "Lem-homo", gamma, rep.phi_fixes_C_residual, tol),
        Check("homo-bound", "Lem-homo", gamma, dev, 8 * np.sqrt(2) * np.sqrt(gamma) + 2 * gamma),
    ]

    u, i_rep = intertwiner(phi, LinearMap.inclusion(A), qb, C, cfg, gamma=dev, n_max=n_max)
    rep.u, rep.u_deviation, rep.s_invertibility = u, i_rep.u_deviation, i_rep.s_invertibility
    rep.checks += list(i_rep.checks)
    rep.checks.append(Check("intertwine-commutes-C", "Lem-intertwine", dev, i_rep.commutes_C_residual, tol))

    conj = conjugate_algebra(A, u)
    rep.conjugation_residual = subspace_distance(conj, B)
    rep.conjugation_verdict = bool(rep.conjugation_residual <= tol)
    rep.checks.append(Check("variant-conjugation", "Thm-variant", gamma_kk, rep.conjugation_residual, tol))
    _add_bound_checks(rep, gamma_kk)

