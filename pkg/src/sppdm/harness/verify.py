"""Bundled property checks runnable from the command line."""
from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable, List, Tuple

import numpy as np

from ..graph import circle, incidence_matrices, random_connected
from ..metrics import (
    feasible_config,
    rate_check,
    rounds_rate_check,
    trace_sppdm,
    variance_bound_check,
)
from ..netsim import run_distributed
from ..oracles import generate_regression, prox_l1_box, truncated_loss_gradient, truncated_loss_value
from ..solver import PrimalDualReference, SolverConfig, build_update_matrices, initial_point, run_sppdm, sppdm_init, sppdm_step

__all__ = ["CheckResult", "verify_suite", "grid_prox_scalar", "finite_difference_error"]


@dataclass
class CheckResult:
    module: str
    operation: str
    seed: int
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        tag = "PASS" if self.passed else "FAIL"
        return f"[{tag}] {self.module}.{self.operation} (seed {self.seed}): {self.detail} [{self.seconds:.2f}s]"


def grid_prox_scalar(v: float, psi: float, weight: float, lo: float, hi: float, resolution: float = 1e-6) -> float:
    """Minimizer of ``(psi/2)(v-u)^2 + weight|u|`` over a uniform grid on ``[lo, hi]``."""
    a = max(lo, min(v, 0.0) - 1.0)
    b = min(hi, max(v, 0.0) + 1.0)
    u = np.linspace(a, b, int(round((b - a) / resolution)) + 1)
    obj = 0.5 * psi * (v - u) ** 2 + weight * np.abs(u)
    return float(u[np.argmin(obj)])


def finite_difference_error(fun, grad, x, step=None) -> float:
    """Relative error between ``grad(x)`` and central differences of ``fun``."""
    x = np.asarray(x, dtype=float)
    h = 1e-6 * (1.0 + np.linalg.norm(x)) if step is None else step
    fd = np.empty_like(x)
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        fd[j] = (fun(x + e) - fun(x - e)) / (2.0 * h)
    g = grad(x)
    return float(np.linalg.norm(fd - g) / max(np.linalg.norm(g), 1e-12))


def _incidence(seed):
    rng = np.random.default_rng(seed)
    for _ in range(20):
        g = random_connected(int(rng.integers(2, 13)), 0.3, rng)
        pair = incidence_matrices(g)
        if not np.array_equal(pair.gram_sum(), 2 * np.diag(g.degrees)):
            return False, f"identity fails on {g.edges}"
    return True, "A^T A + B^T B = 2D on 20 random graphs"


def _prox(seed):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(10):
        v = rng.uniform(-2, 2, size=3)
        psi = rng.uniform(0.5, 20)
        w = rng.uniform(0, 1)
        got = prox_l1_box(v, psi, w)
        ref = np.array([grid_prox_scalar(vi, psi, w, -1.0, 1.0) for vi in v])
        worst = max(worst, float(np.max(np.abs(got - ref))))
    return worst <= 1e-6, f"max deviation from grid minimizer {worst:.2e}"


def _gradient(seed):
    rng = np.random.default_rng(seed)
    H = rng.standard_normal((20, 6))
    y = rng.standard_normal(20)
    worst = 0.0
    for _ in range(20):
        x = rng.standard_normal(6)
        err = finite_difference_error(lambda u: truncated_loss_value(H, y, u, 3.0),
                                      lambda u: truncated_loss_gradient(H, y, u, 3.0), x)
        worst = max(worst, err)
    return worst <= 1e-5, f"max relative error {worst:.2e} over 20 points"


def _equivalence(seed):
    g = circle(3)
    pb, _ = generate_regression(np.random.default_rng(seed), N=3, m=20, n=8, S=2)
    cfg = SolverConfig(batch=4, seed=seed)
    x0 = initial_point(pb, seed)
    mats = build_update_matrices(g, cfg)
    st = sppdm_init(pb, mats, cfg, x0)
    ref = PrimalDualReference(pb, g, cfg)
    ref.init(x0)
    dev = float(np.max(np.abs(st.x - ref.x)))
    for _ in range(49):
        st = sppdm_step(st, pb, mats, cfg)
        ref.step()
        dev = max(dev, float(np.max(np.abs(st.x - ref.x))))
    return dev <= 1e-10, f"sup-norm deviation {dev:.2e} over 50 iterations"


def _netsim(seed):
    g = circle(5)
    pb, _ = generate_regression(np.random.default_rng(seed))
    cfg = SolverConfig(batch=4, seed=seed)
    xs = []
    run_sppdm(pb, g, cfg, None, 50, observer=lambda s: xs.append(s.x))
    ys = {}
    _, _, log = run_distributed(pb, g, cfg, 50, trace=False, observer=lambda k, X: ys.__setitem__(k, X))
    dev = max(float(np.max(np.abs(xs[k - 1] - ys[k]))) for k in range(1, 51))
    ok = dev == 0.0 and set(log.messages) == {2 * g.n_edges}
    return ok, f"max deviation {dev:.1e}, messages per round {sorted(set(log.messages))}"


def _descent(seed, iterations=100):
    g = circle(5)
    pb, _ = generate_regression(np.random.default_rng(seed))
    cfg = feasible_config(pb, g)
    from ..metrics import constants_for

    tau = constants_for(pb, g, cfg).tau
    tr, _ = trace_sppdm(pb, g, cfg.with_(batch=None), iterations=iterations, phi_tau=tau)
    phi = tr.column("phi")[1:]
    inc = float(np.max(np.diff(phi)))
    return inc <= 1e-8 and phi.min() >= 0.0, f"largest step increase {inc:.2e} over {iterations} iterations"


def _variance(seed):
    g = circle(5)
    pb, _ = generate_regression(np.random.default_rng(seed))
    cfg = SolverConfig(seed=seed)
    a = variance_bound_check(pb, g, cfg, 4, 1000)
    b = variance_bound_check(pb, g, cfg, 8, 1000)
    ratio = b.empirical / a.empirical
    ok = a.passed and b.passed and 0.35 <= ratio <= 0.65
    return ok, f"E|x - xhat|^2 = {a.empirical:.3e} (bound {a.bound:.3e}), halving ratio {ratio:.3f}"


def _rate(seed):
    g = circle(5)
    pb, _ = generate_regression(np.random.default_rng(seed))
    tr, _ = trace_sppdm(pb, g, SolverConfig(seed=seed), iterations=5000)
    rep = rate_check(tr.column("q_gap"), (100, 5000))
    return rep.passed, f"log-log slope of min Q vs K: {rep.slope:.2f}"


def _rounds(seed):
    g = circle(5)
    pb, _ = generate_regression(np.random.default_rng(seed))
    _, tr, _ = run_distributed(pb, g, SolverConfig(seed=seed), 2000)
    rep = rounds_rate_check(tr.column("q_gap"))
    return rep.passed, f"log eps vs log rounds slope {rep.slope:.2f}"


FAST: List[Tuple[str, str, Callable]] = [
    ("graph", "incidence_matrices", _incidence),
    ("oracles", "prox_l1_box", _prox),
    ("oracles", "truncated_loss_gradient", _gradient),
    ("solver", "primal_dual_reference_step", _equivalence),
    ("netsim", "run_distributed", _netsim),
    ("metrics", "potential_phi", _descent),
]
FULL: List[Tuple[str, str, Callable]] = [
    ("metrics", "variance_bound_check", _variance),
    ("metrics", "rate_check", _rate),
    ("netsim", "communication_census", _rounds),
]


def verify_suite(level: str = "fast", seed: int = 0, echo: bool = True) -> List[CheckResult]:
    """Run the bundled checks; ``level="full"`` adds the statistical and rate checks."""
    if level not in ("fast", "full"):
        raise ValueError("level must be 'fast' or 'full'")
    checks = FAST + (FULL if level == "full" else [])
    out = []
    for module, op, fn in checks:
        t0 = time.perf_counter()
        try:
            ok, detail = fn(seed)
        except Exception as exc:  # a crash is a failed check, reported like any other
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        res = CheckResult(module, op, seed, bool(ok), detail, time.perf_counter() - t0)
        if echo:
            print(res.line(), flush=True)
        out.append(res)
    return out
