"""Hot inner loops of the distance estimators.

Every routine here is written in the numpy subset numba understands, so the
same source runs compiled (default) or interpreted (``KKPERTURB_DISABLE_NUMBA=1``).
The uncompiled versions are always reachable through ``.py_func``.

Block convention: an element of ``M_{p,q}(B)`` is a ``(p*N, q*N)`` complex
array whose ``N x N`` blocks lie in ``B``.  ``B`` is described by ``Qt``
(``N*N x d``) and ``Qc`` (``d x N*N``): the flattened basis, orthonormal for the
standard inner product, as columns and conjugated rows respectively.
"""
import numpy as np

from ._jit import HAS_NUMBA, maybe_jit

__all__ = [
    "HAS_NUMBA",
    "op_norm",
    "trace_norm",
    "clip_ball",
    "project_blocks",
    "retract",
    "dykstra",
    "dual_lower_bound",
    "inner_descent",
]


@maybe_jit
def op_norm(a):
    s = np.linalg.svd(a, full_matrices=False)[1]
    return s[0]


@maybe_jit
def trace_norm(a):
    s = np.linalg.svd(a, full_matrices=False)[1]
    return s.sum()


@maybe_jit
def _scale_columns(u, w):
    out = u.copy()
    for j in range(w.shape[0]):
        out[:, j] *= w[j]
    return out


@maybe_jit
def clip_ball(y):
    """Nearest point of the operator-norm unit ball (singular values clipped at 1)."""
    u, s, vh = np.linalg.svd(y, full_matrices=False)
    if s[0] <= 1.0:
        return y.copy()
    w = np.minimum(s, 1.0).astype(np.complex128)
    return np.dot(_scale_columns(u, w), vh)


@maybe_jit
def project_blocks(y, Qt, Qc, N):
    """Trace-orthogonal projection of every ``N x N`` block onto span(B)."""
    p = y.shape[0] // N
    q = y.shape[1] // N
    nn = N * N
    v = np.empty((nn, p * q), dtype=np.complex128)
    for i in range(p):
        for j in range(q):
            col = i * q + j
            for a in range(N):
                for b in range(N):
                    v[a * N + b, col] = y[i * N + a, j * N + b]
    w = np.dot(Qt, np.dot(Qc, v))
    out = np.empty_like(y)
    for i in range(p):
        for j in range(q):
            col = i * q + j
            for a in range(N):
                for b in range(N):
                    out[i * N + a, j * N + b] = w[a * N + b, col]
    return out


@maybe_jit
def retract(y, Qt, Qc, N):
    """Map ``y`` into ``M_{p,q}(B)`` intersected with the unit ball.

    Clipping singular values keeps the blocks inside ``B`` because ``B`` is a
    *-subalgebra, so the output is exactly feasible (up to rounding).
    """
    return clip_ball(project_blocks(y, Qt, Qc, N))


@maybe_jit
def dykstra(y, Qt, Qc, N, iters, tol):
    """Dykstra's alternating projections onto span(B)^{p x q} and the unit ball."""
    z = y.copy()
    pinc = np.zeros_like(y)
    qinc = np.zeros_like(y)
    for _ in range(iters):
        a = project_blocks(z + pinc, Qt, Qc, N)
        pinc = z + pinc - a
        c = clip_ball(a + qinc)
        qinc = a + qinc - c
        step = np.sqrt(np.sum(np.abs(c - z) ** 2))
        z = c
        if step <= tol:
            break
    return z


@maybe_jit
def _certificate(x, z, Qt, Qc, N):
    # Weak duality: for ||Z||_1 <= 1 and every feasible b,
    # ||x - b|| >= Re tr(Z* x) - ||P_B Z||_1.
    return np.sum(np.conj(z) * x).real - trace_norm(project_blocks(z, Qt, Qc, N))


@maybe_jit
def dual_lower_bound(x, r, Qt, Qc, N, max_cluster):
    """Certified lower bound on ``min ||x - b||`` from trace-class dual witnesses.

    Candidates: averaged top singular pairs of the residual ``r`` (the optimal
    dual lives there), the top pair of ``x`` itself (gives ``||x|| - 1``) and the
    normalised component of ``x`` orthogonal to span(B).
    """
    best = 0.0
    u, s, vh = np.linalg.svd(r, full_matrices=False)
    kmax = min(max_cluster, s.shape[0])
    for k in range(1, kmax + 1):
        if s[k - 1] <= 0.0:
            break
        z = np.dot(np.ascontiguousarray(u[:, :k]), np.ascontiguousarray(vh[:k, :])) / k
        val = _certificate(x, z, Qt, Qc, N)
        if val > best:
            best = val
    ux, sx, vhx = np.linalg.svd(x, full_matrices=False)
    if sx[0] > 0.0:
        z = np.outer(ux[:, 0], vhx[0, :])
        val = _certificate(x, z, Qt, Qc, N)
        if val > best:
            best = val
    perp = x - project_blocks(x, Qt, Qc, N)
    tn = trace_norm(perp)
    if tn > 0.0:
        val = _certificate(x, perp / tn, Qt, Qc, N)
        if val > best:
            best = val
    # certificates at rounding level carry no information
    if best <= 64.0 * 2.220446049250313e-16 * max(1.0, sx[0]):
        best = 0.0
    return best


@maybe_jit
def inner_descent(x, b0, Qt, Qc, N, iters, dykstra_iters, gap_tol):
    """Projected subgradient descent for ``min ||x - b||`` over ``b`` in the unit ball of ``M_{p,q}(B)``.

    Steps are Polyak steps towards an adaptive target level between the best
    value and the best dual certificate; the direction is the averaged top
    singular cluster of the residual.  Every iterate is re-projected (Dykstra)
    and retracted, so each recorded value is attained by a feasible point.

    Returns ``(b_best, upper, lower, iterations, trace)`` where ``trace`` holds
    the best value after each iteration (non-increasing).
    """
    b = retract(b0, Qt, Qc, N)
    u, s, vh = np.linalg.svd(x - b, full_matrices=False)
    f = s[0]
    best = f
    b_best = b.copy()
    lower = dual_lower_bound(x, x - b, Qt, Qc, N, 4)
    trace = np.full(iters + 1, np.nan)
    trace[0] = best
    delta = 0.5 * (best - lower)
    fails = 0
    done = 0
    for k in range(iters):
        done = k
        gap = best - lower
        if gap <= gap_tol:
            break
        window = max(0.05 * gap, 1e-14)
        m = 1
        while m < s.shape[0] and s[m] >= s[0] - window:
            m += 1
        g = np.dot(np.ascontiguousarray(u[:, :m]), np.ascontiguousarray(vh[:m, :])) / m
        target = max(best - delta, lower)
        alpha = (f - target) * m
        y = b + alpha * g
        b = retract(dykstra(y, Qt, Qc, N, dykstra_iters, 1e-13), Qt, Qc, N)
        u, s, vh = np.linalg.svd(x - b, full_matrices=False)
        f = s[0]
        if f < best:
            best = f
            b_best = b.copy()
            fails = 0
        else:
            fails += 1
            if fails >= 3:
                delta *= 0.5
                fails = 0
                b = b_best.copy()
                u, s, vh = np.linalg.svd(x - b, full_matrices=False)
                f = s[0]
        if k % 10 == 9 or fails == 0:
            cand = dual_lower_bound(x, x - b_best, Qt, Qc, N, 4)
            if cand > lower:
                lower = cand
        if delta > best - lower:
            delta = 0.5 * (best - lower)
        trace[k + 1] = best
        done = k + 1
    if lower > best:
        lower = best
    return b_best, best, lower, done, trace
