"""Timing comparison of the compiled and numpy kernel backends."""
from __future__ import annotations

import os
import subprocess
import sys
import time
import timeit
from typing import Dict, List, Tuple

import numpy as np

from ._backend import available_backends, get_kernels
from .graph import circle

__all__ = ["kernel_timings", "end_to_end", "format_table"]


def _cases(k, rng):
    N, m, n = 5, 20, 32
    H = rng.standard_normal((N, m, n))
    y = rng.standard_normal((N, m))
    X = rng.standard_normal((N, n))
    g = circle(N)
    indptr, indices = g.adjacency_csr()
    psi = np.full(N, 12.0)
    deg = g.degrees.astype(float)
    w = np.full(N, 0.01)
    arrs = [rng.standard_normal((N, n)) for _ in range(11)]
    return {
        "sample_indices(13 of 20)": lambda: k.sample_indices(7, 3, 1000, 13, m),
        "neighbor_sum(circle 5)": lambda: k.neighbor_sum(X, indptr, indices),
        "half_step": lambda: k.half_step(*arrs, deg, psi, 2.0, 2.0, 3.0, 1.0),
        "prox_l1_box": lambda: k.prox_l1_box(X, psi, w, -1.0, 1.0),
        "trunc_grad_stack(batch 13)": lambda: k.trunc_grad_stack(H, y, 3.0, X, 7, 1000, 13),
        "trunc_grad_stack(full)": lambda: k.trunc_grad_stack(H, y, 3.0, X, 7, 1000, 0),
    }


def kernel_timings(repeat: int = 5, number: int = 2000) -> Dict[str, Dict[str, float]]:
    """Best-of-``repeat`` microseconds per call, keyed by kernel then backend."""
    out: Dict[str, Dict[str, float]] = {}
    for name in available_backends():
        cases = _cases(get_kernels(name), np.random.default_rng(0))
        for label, fn in cases.items():
            best = min(timeit.repeat(fn, number=number, repeat=repeat)) / number
            out.setdefault(label, {})[name] = best * 1e6
    return out


_E2E = (
    "from sppdm.graph import circle\n"
    "from sppdm.oracles import generate_regression\n"
    "from sppdm.solver import SolverConfig, run_sppdm\n"
    "import numpy as np\n"
    "pb, _ = generate_regression(np.random.default_rng(0))\n"
    "run_sppdm(pb, circle(5), SolverConfig(batch=13, iterations={iters}))\n"
)


def end_to_end(iterations: int = 2000) -> Dict[str, float]:
    """Wall seconds for one desk SPPDM run per backend, each in a fresh interpreter."""
    out = {}
    for name in available_backends():
        env = dict(os.environ, SPPDM_BACKEND=name)
        t0 = time.perf_counter()
        subprocess.run([sys.executable, "-c", _E2E.format(iters=iterations)], env=env, check=True)
        out[name] = time.perf_counter() - t0
    return out


def format_table(timings: Dict[str, Dict[str, float]]) -> str:
    names = available_backends()
    rows: List[Tuple[str, ...]] = [("kernel", *(f"{n} (us)" for n in names))]
    if len(names) == 2:
        rows[0] += ("speedup",)
    for label, per in timings.items():
        row = (label, *(f"{per[n]:.2f}" for n in names))
        if len(names) == 2:
            row += (f"{per['python'] / per['cython']:.1f}x",)
        rows.append(row)
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    return "\n".join("  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in rows)
