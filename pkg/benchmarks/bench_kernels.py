"""Compiled vs interpreted kernels on the inner distance problem.

Run ``python3 benchmarks/bench_kernels.py``.  Each kernel is timed in this
process (numba) and in a child process started with
``KKPERTURB_DISABLE_NUMBA=1``, where every kernel and its callees run as plain
numpy.  Both runs see identical inputs and their outputs are compared.
"""
import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np

from kkperturb import kernels
from kkperturb.algebra import conjugate_algebra, diagonal_algebra, full_matrix_algebra, random_unitary_near_identity
from kkperturb.metrics import blocks_to_matrix


def best_of(fn, args, repeat):
    times = []
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times), out


def _first(out):
    return out[0] if isinstance(out, tuple) else out


def make_case(n, width, eps, seed):
    rng = np.random.default_rng(seed)
    a = diagonal_algebra(n) if n <= 3 else full_matrix_algebra(2)
    n = a.ambient_dim
    b = conjugate_algebra(a, random_unitary_near_identity(n, eps, seed))
    coef = rng.standard_normal((1, width, a.dim)) + 1j * rng.standard_normal((1, width, a.dim))
    x = blocks_to_matrix(a.from_coefficients(coef))
    x /= np.linalg.norm(x, 2)
    qt, qc = b.kernel_basis
    return x, qt, qc, n


def measure(repeat, width, iters, seed):
    """``{"kernel/N": [seconds, output]}`` for every kernel and size."""
    out = {}
    for n in (2, 3, 4):
        x, qt, qc, nn = make_case(n, width, 1e-3, seed)
        b0 = kernels.retract(x, qt, qc, nn)
        cases = {
            "project_blocks": (kernels.project_blocks, (x, qt, qc, nn)),
            "retract": (kernels.retract, (x, qt, qc, nn)),
            "dykstra": (kernels.dykstra, (x, qt, qc, nn, 20, 1e-13)),
            "dual_lower_bound": (kernels.dual_lower_bound, (x, x - b0, qt, qc, nn, 4)),
            "inner_descent": (kernels.inner_descent, (x, b0, qt, qc, nn, iters, 20, 1e-9)),
        }
        for name, (fn, fargs) in cases.items():
            fn(*fargs)  # compile outside the timing
            t, res = best_of(fn, fargs, repeat)
            res = np.asarray(_first(res))
            out[f"{name}/{nn}/{n}"] = [t, [res.real.ravel().tolist(), res.imag.ravel().tolist()]]
    return out


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--width", type=int, default=4, help="row length of the test element")
    parser.add_argument("--iters", type=int, default=80, help="descent iterations")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--child", action="store_true", help=argparse.SUPPRESS)
    args = parser.parse_args(argv)
    if args.child:
        json.dump(measure(args.repeat, args.width, args.iters, args.seed), sys.stdout)
        return

    if not kernels.HAS_NUMBA:
        print("numba is disabled in this process; both columns run numpy")
    compiled = measure(args.repeat, args.width, args.iters, args.seed)
    env = dict(os.environ, KKPERTURB_DISABLE_NUMBA="1")
    cmd = [sys.executable, __file__, "--child", "--repeat", str(args.repeat), "--width", str(args.width),
           "--iters", str(args.iters), "--seed", str(args.seed)]
    plain = json.loads(subprocess.run(cmd, env=env, check=True, capture_output=True, text=True).stdout)

    header = f"{'kernel':<18}{'N':>3}{'numba [ms]':>12}{'numpy [ms]':>12}{'speedup':>10}{'max diff':>12}"
    print(header)
    print("-" * len(header))
    for key, (tc, oc) in compiled.items():
        tp, op = plain[key]
        name, nn, _ = key.split("/")
        a = np.array(oc[0]) + 1j * np.array(oc[1])
        b = np.array(op[0]) + 1j * np.array(op[1])
        diff = float(np.max(np.abs(a - b))) if a.shape == b.shape else float("nan")
        print(f"{name:<18}{nn:>3}{1e3 * tc:>12.3f}{1e3 * tp:>12.3f}{tp / tc:>10.1f}{diff:>12.1e}")


if __name__ == "__main__":
    main()
