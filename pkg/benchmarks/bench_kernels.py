"""Compare the compiled and numpy kernel backends on realistic problem sizes.

Usage::

    python benchmarks/bench_kernels.py [--repeat 20]

Prints the median time per call of each kernel, then the wall time of a
complete solve with each backend forced through ``EBEMAXENT_PURE_PYTHON``.
"""

import argparse
import os
import statistics
import subprocess
import sys
import time

import numpy as np

from ebemaxent._kernels import available_backends
from ebemaxent.basis import enumerate_multi_indices, eval_basis_matrix
from ebemaxent.quadrature import smolyak_sparse_grid

CASES = [(2, 4, 11), (4, 4, 8), (5, 4, 8)]

SOLVE = """
import time, numpy as np
from ebemaxent import BACKEND, enumerate_multi_indices, smolyak_sparse_grid, MomentProblem, ebe_solve
from ebemaxent.basis import eval_basis_matrix
b = enumerate_multi_indices(4, 4)
rule = smolyak_sparse_grid(4, 8)
lam = np.zeros(len(b)); lam[[len(b) - 1, len(b) - 5]] = -1.0; lam[0] = 0.5
B = eval_basis_matrix(b, rule.nodes); q = rule.weights * np.exp(B @ lam)
p = MomentProblem(b, B.T @ q / q.sum(), rule)
t = time.perf_counter(); ebe_solve(p); print(BACKEND, time.perf_counter() - t)
"""


def median_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return statistics.median(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    backends = available_backends()
    rng = np.random.default_rng(0)

    print(f"{'case':<22}{'kernel':<14}" + "".join(f"{name:>12}" for name in backends) + "     speedup")
    for d, p, level in CASES:
        b = enumerate_multi_indices(d, p)
        rule = smolyak_sparse_grid(d, level)
        Bt = np.ascontiguousarray(eval_basis_matrix(b, rule.nodes).T)
        lam = rng.uniform(-0.5, 0.5, len(b))
        nz = np.flatnonzero(lam).astype(np.intp)
        q = rule.weights * np.exp(lam @ Bt)
        rows = np.arange(len(b), dtype=np.intp)
        kernels = {
            "exp_weights": lambda m: m.exp_weights(Bt, lam, nz, 700.0),
            "moments": lambda m: m.moments(Bt, q, rows),
            "gram": lambda m: m.gram(Bt, q, rows, rows),
        }
        label = f"d={d} n={len(b)} N={rule.num_nodes}"
        for kname, call in kernels.items():
            t = {name: median_time(lambda m=mod: call(m), args.repeat) for name, mod in backends.items()}
            speed = f"{t['python'] / t['cython']:8.2f}x" if "cython" in t else "       -"
            print(f"{label:<22}{kname:<14}" + "".join(f"{v * 1e3:10.3f}ms" for v in t.values()) + f"  {speed}")
            label = ""

    print("\nfull d=4 solve (69 constraints, 7537 nodes):")
    for flag in ("0", "1"):
        env = dict(os.environ, EBEMAXENT_PURE_PYTHON=flag)
        out = subprocess.run([sys.executable, "-c", SOLVE], env=env, capture_output=True, text=True, check=True)
        name, secs = out.stdout.split()
        print(f"  {name:<8}{float(secs):8.3f}s")


if __name__ == "__main__":
    main()
