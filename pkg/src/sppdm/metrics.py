"""Optimality measures, the descent potential, theory constants and run traces."""
from __future__ import annotations

import csv
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from ._backend import kernels
from .errors import InfeasibleParameters, InnerSolverDiverged, InsufficientData, OracleFailure
from .graph import Graph, incidence_matrices, spectral_norm
from .oracles import Problem
from .solver import (
    SolverConfig,
    SolverState,
    UpdateMatrices,
    build_update_matrices,
    initial_point,
    next_dual,
    run_baseline,
    sppdm_init,
    sppdm_step,
)

__all__ = [
    "optimality_gap_Q",
    "edge_violation",
    "stationarity_and_consensus",
    "TheoryConstants",
    "theory_constants",
    "constants_for",
    "write_constants",
    "augmented_lagrangian",
    "dual_function",
    "proximal_function",
    "potential_phi",
    "PotentialEvaluator",
    "VarianceReport",
    "variance_bound_check",
    "RateReport",
    "rate_check",
    "plateau_level",
    "strictly_decreasing",
    "rounds_to_eps",
    "rounds_rate_check",
    "RunTrace",
    "record_iterate",
    "trace_sppdm",
    "trace_baseline",
    "feasible_config",
]


# ---------------------------------------------------------------------------
# optimality measures

def edge_violation(X, graph: Graph) -> float:
    """``|A x|^2 = sum over edges of |x_i - x_j|^2``."""
    X = np.asarray(X, dtype=float)
    if graph.n_edges == 0:
        return 0.0
    e = np.asarray(graph.edges)
    D = X[e[:, 0]] - X[e[:, 1]]
    return float(np.sum(D * D))


def optimality_gap_Q(X, p, problem: Problem, graph: Graph) -> float:
    """``|x - prox_r^1(x - grad f(x) - p)|^2 + |A x|^2`` with ``p = A^T lambda``."""
    X = np.asarray(X, dtype=float)
    G = problem.gradients(X)
    V = X - G - np.asarray(p, dtype=float)
    R = X - problem.prox(V, np.ones(X.shape[0]))
    q = float(np.sum(R * R)) + edge_violation(X, graph)
    if not math.isfinite(q):
        raise OracleFailure("optimality gap is not finite")
    return q


def stationarity_and_consensus(X, problem: Problem) -> tuple[float, float]:
    """Errors at the agent average ``xbar``.

    Stationarity is ``|xbar - prox^1_rbar(xbar - sum_i grad f_i(xbar))|^2`` with
    ``rbar = sum_i r_i`` on a single copy; consensus is
    ``(1/N) sum_i |x_i - xbar|^2``.
    """
    X = np.asarray(X, dtype=float)
    N = X.shape[0]
    xbar = X.mean(axis=0)
    G = problem.gradients(np.tile(xbar, (N, 1))).sum(axis=0)
    rbar = problem.consensus_regularizer()
    R = xbar - rbar.prox(xbar - G, 1.0)
    D = X - xbar
    return float(R @ R), float(np.sum(D * D) / N)


# ---------------------------------------------------------------------------
# theory constants

@dataclass(frozen=True)
class TheoryConstants:
    varrho: float
    sigma1: float
    sigma2: float
    sigma3: float
    sigma4: float
    sigma5: float
    sigma_A: float
    d_max: int
    eta: float
    eta_bar: float
    tau: float
    s_hat1: float
    s_hat2: float
    alpha_cap: float
    beta_cap: float
    C1: float
    C0: float
    K1: float
    K2: float
    K3: float
    K4: float
    penalty_ok: bool
    momentum_ok: bool
    alpha_ok: bool
    beta_ok: bool

    @property
    def feasible(self) -> bool:
        return self.penalty_ok and self.momentum_ok and self.alpha_ok and self.beta_ok

    def violated(self) -> List[str]:
        return [name for name in ("penalty_ok", "momentum_ok", "alpha_ok", "beta_ok") if not getattr(self, name)]

    def as_dict(self) -> Dict[str, object]:
        return asdict(self)


def _safe_div(a, b):
    if b == 0:
        return math.inf if a > 0 else (math.nan if a == 0 else -math.inf)
    return a / b


def theory_constants(cfg: SolverConfig, L: float, mu: float, sigma_A: float, d_max: int,
                     sigma5: float = 1.0, eta: float | None = None, strict: bool = False) -> TheoryConstants:
    """Convergence constants and feasibility flags for one configuration.

    ``eta`` is the momentum constant used in ``s_hat2`` and in the ``alpha``
    cap.  By default it is ``cfg.eta`` for a constant schedule, ``0`` without
    momentum and ``eta_bar`` for the Nesterov schedule.  ``tau`` is the
    midpoint of the interval on which ``s_hat1`` and ``s_hat2`` are both
    non-negative.  With ``strict=True`` a violated condition raises
    :class:`InfeasibleParameters`.
    """
    a, b, g, c, kap = cfg.alpha, cfg.beta, cfg.gamma, cfg.c, cfg.kappa
    penalty_ok = (kap > -mu) and (g > 3.0 * L)
    varrho = _safe_div(kap + L + c * sigma_A ** 2 + 1.0, kap + mu)
    sigma1 = varrho * (2.0 + 2.0 * c * d_max + g + kap)
    sigma2 = g + L
    sigma3 = _safe_div(kap + mu, sigma_A)
    sigma4 = (kap + mu) / kap
    ratio = (kap + 2.0 * c + g - 3.0 * L) / (2.0 * (g - mu + 3.0 * L))
    eta_bar = math.sqrt(ratio) if ratio >= 0 else math.nan
    if eta is None:
        eta = {"constant": cfg.eta, "zero": 0.0}.get(cfg.momentum, eta_bar)
    if cfg.momentum == "nesterov":
        # eta_k -> 1, so the schedule stays below eta_bar only if eta_bar >= 1
        momentum_ok = bool(eta_bar >= 1.0)
    else:
        momentum_ok = bool(eta <= eta_bar)

    tau_hi = (kap + 2.0 * c + g - 3.0 * L) / 4.0
    tau_lo = max(0.0, (g + 3.0 * L - mu) / 2.0 * eta * eta)
    tau = 0.5 * (tau_lo + tau_hi)
    s_hat1 = (kap + 2.0 * c + g - 3.0 * L) / 2.0 - 2.0 * tau
    s_hat2 = (mu - g - 3.0 * L) / 2.0 * eta * eta + tau

    alpha_cap = min(
        _safe_div(s_hat1, 4.0 * sigma_A * sigma1 ** 2),
        _safe_div(s_hat2, 4.0 * sigma_A ** 2 * sigma2 ** 2 * eta ** 2),
        c,
    )
    beta_cap = min(a / (12.0 * kap * sigma5 ** 2), sigma4 / 36.0, 1.0)
    alpha_ok = bool(0 < a <= alpha_cap)
    beta_ok = bool(0 < b < beta_cap)

    C1 = 1.0 / (2.0 * g) + (6.0 * L + 8.0 * tau + kap * (1.0 - b)) / (4.0 * (g + 2.0 * c + kap) ** 2)
    sa2 = sigma_A ** 2
    K1 = 6.0 + 40.0 * g + 20.0 * c ** 2 * d_max ** 2 + 4.0 * (20.0 * c ** 2 * sa2 + 1.0) * sa2 * sigma1 ** 2
    K2 = (20.0 * L ** 2 + 20.0 * g ** 2) * eta_bar ** 2 + 4.0 * (20.0 * c ** 2 * sa2 + 1.0) * sa2 * sigma2 ** 2 * eta_bar ** 2
    K3 = 20.0 * kap ** 2
    K4 = 2.0 * (20.0 * c ** 2 * sa2 + 1.0)
    beta_term = _safe_div(4.0 * K3 * b, kap * (1.0 - b))
    C0 = _safe_div(2.0 * K1, s_hat1) + _safe_div(K2, s_hat2) + beta_term + 2.0 * K4 / a

    tc = TheoryConstants(
        varrho=varrho, sigma1=sigma1, sigma2=sigma2, sigma3=sigma3, sigma4=sigma4, sigma5=sigma5,
        sigma_A=sigma_A, d_max=int(d_max), eta=float(eta), eta_bar=eta_bar, tau=tau,
        s_hat1=s_hat1, s_hat2=s_hat2, alpha_cap=alpha_cap, beta_cap=beta_cap, C1=C1, C0=C0,
        K1=K1, K2=K2, K3=K3, K4=K4, penalty_ok=bool(penalty_ok), momentum_ok=momentum_ok, alpha_ok=alpha_ok,
        beta_ok=beta_ok,
    )
    if strict and tc.violated():
        raise InfeasibleParameters(tc.violated()[0])
    return tc


def constants_for(problem: Problem, graph: Graph, cfg: SolverConfig, sigma5: float = 1.0,
                  eta: float | None = None, strict: bool = False) -> TheoryConstants:
    sigma_A = spectral_norm(incidence_matrices(graph).A) if graph.n_edges else 0.0
    return theory_constants(cfg, problem.L, problem.mu, sigma_A, graph.max_degree, sigma5, eta, strict)


def write_constants(tc: TheoryConstants, path) -> Path:
    """Flat ``key = value`` text report."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = [f"{k} = {v!r}" for k, v in tc.as_dict().items()]
    lines.append(f"feasible = {tc.feasible!r}")
    path.write_text("\n".join(lines) + "\n")
    return path


# ---------------------------------------------------------------------------
# potential function

def augmented_lagrangian(X, Z, p, problem: Problem, graph: Graph, cfg: SolverConfig) -> float:
    """``f(x) + r(x) + <p, x> + (c/2)|Ax|^2 + (kappa/2)|x - z|^2`` with ``p = A^T lambda``."""
    D = X - Z
    return (problem.f_value(X) + problem.r_value(X) + float(np.sum(p * X))
            + 0.5 * cfg.c * edge_violation(X, graph) + 0.5 * cfg.kappa * float(np.sum(D * D)))


def _fista(grad, value, prox, x0, lipschitz, strong, tol, max_iter):
    """Accelerated proximal gradient for a strongly convex composite problem.

    Stops when the gradient-map norm ``lipschitz * |x - prox(x - grad/lipschitz)|``
    drops to ``tol``.
    """
    q = strong / lipschitz
    mom = (1.0 - math.sqrt(q)) / (1.0 + math.sqrt(q))
    x = x0.copy()
    y = x0.copy()
    for _ in range(max_iter):
        g = grad(y)
        x_new = prox(y - g / lipschitz, lipschitz)
        if not np.all(np.isfinite(x_new)):
            raise InnerSolverDiverged("inner iterate became non-finite")
        y = x_new + mom * (x_new - x)
        x = x_new
        gm = lipschitz * np.linalg.norm(x - prox(x - grad(x) / lipschitz, lipschitz))
        if gm <= tol:
            return x, value(x)
    raise InnerSolverDiverged(f"inner solver did not reach tolerance {tol:g} in {max_iter} iterations")


def dual_function(Z, p, problem: Problem, graph: Graph, cfg: SolverConfig, tol: float = 1e-10,
                  warm=None, max_iter: int = 50_000):
    """``d(z; lambda) = min_x L_c(x, z; lambda)``; returns ``(value, minimizer)``."""
    if not cfg.kappa + problem.mu > 0:
        raise InnerSolverDiverged("kappa + mu must be positive for a strongly convex inner problem")
    mats = build_update_matrices(graph, cfg)
    lap_norm = spectral_norm(mats.A) ** 2 if graph.n_edges else 0.0
    lip = problem.L + cfg.c * lap_norm + cfg.kappa
    strong = cfg.kappa + problem.mu

    def grad(X):
        return problem.gradients(X) + p + cfg.c * mats.laplacian_apply(X) + cfg.kappa * (X - Z)

    def value(X):
        return augmented_lagrangian(X, Z, p, problem, graph, cfg)

    def prox(V, psi):
        return problem.prox(V, np.full(V.shape[0], psi))

    x0 = Z.copy() if warm is None else warm
    x, v = _fista(grad, value, prox, x0, lip, strong, tol, max_iter)
    return v, x


def proximal_function(Z, problem: Problem, cfg: SolverConfig, tol: float = 1e-10, warm=None,
                      max_iter: int = 50_000):
    """``P(z) = min_{Ax=0} f(x) + r(x) + (kappa/2)|x - z|^2`` solved on the consensus subspace.

    With a connected graph ``Ax = 0`` means every agent holds the same ``u``,
    so the problem is an ``n``-dimensional composite one.
    """
    if not cfg.kappa + problem.mu > 0:
        raise InnerSolverDiverged("kappa + mu must be positive for a strongly convex inner problem")
    N = problem.n_agents
    rbar = problem.consensus_regularizer()
    lip = N * (problem.L + cfg.kappa)
    strong = N * (cfg.kappa + problem.mu)

    def grad(u):
        U = np.tile(u, (N, 1))
        return problem.gradients(U).sum(axis=0) + cfg.kappa * (N * u - Z.sum(axis=0))

    def value(u):
        U = np.tile(u, (N, 1))
        D = U - Z
        return problem.f_value(U) + rbar.value(u) + 0.5 * cfg.kappa * float(np.sum(D * D))

    def prox(v, psi):
        return rbar.prox(v, psi)

    u0 = Z.mean(axis=0) if warm is None else warm
    u, v = _fista(grad, value, prox, u0, lip, strong, tol, max_iter)
    return v, u


class PotentialEvaluator:
    """Evaluates ``phi`` along a trajectory, warm-starting both inner solves."""

    def __init__(self, problem: Problem, graph: Graph, cfg: SolverConfig, tau: float, tol: float = 1e-10):
        self.problem, self.graph, self.cfg, self.tau, self.tol = problem, graph, cfg, tau, tol
        self._wx = None
        self._wu = None

    def __call__(self, X, X_prev, Z, p) -> float:
        lc = augmented_lagrangian(X, Z, p, self.problem, self.graph, self.cfg)
        dv, self._wx = dual_function(Z, p, self.problem, self.graph, self.cfg, self.tol, self._wx)
        pv, self._wu = proximal_function(Z, self.problem, self.cfg, self.tol, self._wu)
        D = X - X_prev
        self.last = {"Lc": lc, "d": dv, "P": pv}
        return lc + self.tau * float(np.sum(D * D)) + 2.0 * pv - 2.0 * dv


def potential_phi(state: SolverState, problem: Problem, graph: Graph, cfg: SolverConfig, tau: float,
                  tol: float = 1e-10) -> float:
    """``phi^k = L_c(x^k, z^k; lambda^k) + tau |x^k - x^{k-1}|^2 + 2P(z^k) - 2d(z^k; lambda^k)``."""
    return PotentialEvaluator(problem, graph, cfg, tau, tol)(state.x, state.x_prev, state.z, state.p)


# ---------------------------------------------------------------------------
# variance bound

@dataclass
class VarianceReport:
    batch: int
    trials: int
    empirical: float
    bound: float
    sigma2: float
    slack: float
    passed: bool


def variance_bound_check(problem: Problem, graph: Graph, cfg: SolverConfig, batch: int, trials: int = 1000,
                         warmup: int = 5, x0=None, slack: float = 0.25, full_pass: bool = False,
                         seed_base: int = 10_000) -> VarianceReport:
    """Monte-Carlo estimate of ``E|x^{k+1} - xhat^{k+1}|^2`` for one step.

    ``xhat`` uses the full gradient at ``s^k``; each trial redraws the
    mini-batch from a fresh stream.  The bound is
    ``N sigma^2 / ((gamma + 2c + kappa)^2 |I|)`` with ``sigma^2`` the largest
    per-agent single-sample gradient variance at ``s^k``.
    """
    mats = build_update_matrices(graph, cfg)
    det = cfg.with_(batch=None)
    if x0 is None:
        x0 = initial_point(problem, cfg.seed)
    state = sppdm_init(problem, mats, det, x0)
    for _ in range(warmup):
        state = sppdm_step(state, problem, mats, det)
    k = state.k
    s = state.x + cfg.eta_at(k) * (state.x - state.x_prev)
    S = mats.neighbor_sum(state.x)

    def advance(g):
        xh = kernels.half_step(state.x_half, state.x, state.x_prev, S, state.S_prev, s, state.s_prev,
                               state.z, state.z_prev, g, state.g_prev, mats.deg, mats.psi,
                               cfg.alpha, cfg.c, cfg.gamma, cfg.kappa)
        return problem.prox(xh, mats.psi)

    x_hat = advance(problem.gradients(s))
    total = 0.0
    for t in range(trials):
        g = problem.gradients(s) if full_pass else problem.stochastic_gradients(s, seed_base + t, k, batch)
        D = advance(g) - x_hat
        total += float(np.sum(D * D))
    emp = total / trials
    sigma2 = problem.sigma2(s)
    bound = problem.n_agents * sigma2 / ((cfg.gamma + 2.0 * cfg.c + cfg.kappa) ** 2 * batch)
    return VarianceReport(batch, trials, emp, bound, sigma2, slack, emp <= bound * (1.0 + slack))


# ---------------------------------------------------------------------------
# rates

@dataclass
class RateReport:
    slope: float
    intercept: float
    points: int
    threshold: float
    passed: bool


def _loglog_fit(xs, ys, threshold) -> RateReport:
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    if xs.size < 2 or np.unique(xs).size < 2:
        raise InsufficientData("need at least two distinct points for a log-log fit")
    if np.any(ys <= 0) or np.any(xs <= 0):
        raise InsufficientData("log-log fit needs positive values")
    slope, intercept = np.polyfit(np.log(xs), np.log(ys), 1)
    return RateReport(float(slope), float(intercept), int(xs.size), threshold, bool(slope <= threshold))


def rate_check(q_values: Sequence[float], window: tuple[int, int] = (100, 5000), points: int = 30,
               threshold: float = -0.9, floor: float = 1e-300) -> RateReport:
    """Fit ``log min_{k<K} Q`` against ``log K`` for ``K`` log-spaced in ``window``.

    ``q_values[k]`` is ``Q(x^k, lambda^{k+1})``.  Values below ``floor`` are
    clipped so a trace that reaches exact zero still fits.
    """
    q = np.asarray(q_values, dtype=float)
    lo, hi = window
    if q.size < hi or lo < 1:
        raise InsufficientData(f"trace has {q.size} entries, window needs {hi}")
    running = np.minimum.accumulate(q)
    Ks = np.unique(np.round(np.geomspace(lo, hi, points)).astype(int))
    vals = np.maximum(running[Ks - 1], floor)
    return _loglog_fit(Ks, vals, threshold)


def rounds_to_eps(q_values: Sequence[float], eps: Iterable[float]) -> List[Optional[int]]:
    """First ``k`` with ``Q(x^k) <= eps`` (``None`` if never reached)."""
    q = np.asarray(q_values, dtype=float)
    out = []
    for e in eps:
        hit = np.flatnonzero(q <= e)
        out.append(int(hit[0]) if hit.size else None)
    return out


def rounds_rate_check(q_values, eps=(1e-2, 1e-3, 1e-4), threshold: float = -0.9) -> RateReport:
    """Fit ``log eps`` against ``log rounds(eps)``; ``O(1/eps)`` rounds gives slope ``<= -1``."""
    rounds = rounds_to_eps(q_values, eps)
    if any(r is None for r in rounds):
        raise InsufficientData("trace never reached every target")
    rounds = [max(r, 1) for r in rounds]
    return _loglog_fit(rounds, eps, threshold)


def plateau_level(values: Sequence[float], fraction: float = 0.1) -> float:
    """Mean of the last ``fraction`` of a curve."""
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise InsufficientData("empty curve")
    tail = max(1, int(round(fraction * v.size)))
    return float(v[-tail:].mean())


def strictly_decreasing(levels: Sequence[float]) -> bool:
    return all(b < a for a, b in zip(levels, levels[1:]))


# ---------------------------------------------------------------------------
# traces

TRACE_HEADER = ("iter", "stationarity", "consensus", "q_gap", "phi", "ax_norm2", "wall_ms")


@dataclass
class RunTrace:
    """Per-iteration metric record; rows hold ``x^k`` for increasing ``k``."""

    iters: List[int] = field(default_factory=list)
    stationarity: List[float] = field(default_factory=list)
    consensus: List[float] = field(default_factory=list)
    q_gap: List[float] = field(default_factory=list)
    phi: List[float] = field(default_factory=list)
    ax_norm2: List[float] = field(default_factory=list)
    wall_ms: List[float] = field(default_factory=list)
    meta: Dict[str, str] = field(default_factory=dict)

    def append(self, k, stat, cons, q, phi, ax, wall):
        if self.iters and k <= self.iters[-1]:
            raise ValueError("trace iterations must increase")
        self.iters.append(int(k))
        self.stationarity.append(float(stat))
        self.consensus.append(float(cons))
        self.q_gap.append(float(q))
        self.phi.append(float(phi))
        self.ax_norm2.append(float(ax))
        self.wall_ms.append(float(wall))

    def __len__(self):
        return len(self.iters)

    def column(self, name) -> np.ndarray:
        return np.asarray(getattr(self, name), dtype=float)

    def to_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(TRACE_HEADER)
            for row in zip(self.iters, self.stationarity, self.consensus, self.q_gap, self.phi,
                           self.ax_norm2, self.wall_ms):
                w.writerow([row[0]] + [repr(v) for v in row[1:]])
        return path

    @classmethod
    def from_csv(cls, path) -> "RunTrace":
        tr = cls()
        with Path(path).open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if tuple(header) != TRACE_HEADER:
                raise InsufficientData(f"unexpected trace header {header}")
            for rec in reader:
                tr.append(int(rec[0]), *(float(v) for v in rec[1:]))
        return tr


def record_iterate(trace, k, X, p, problem, graph, phi, t0, wall_clock):
    stat, cons = stationarity_and_consensus(X, problem)
    q = optimality_gap_Q(X, p, problem, graph) if p is not None else math.nan
    wall = (time.perf_counter() - t0) * 1e3 if wall_clock else 0.0
    trace.append(k, stat, cons, q, phi, edge_violation(X, graph), wall)


def trace_sppdm(problem: Problem, graph: Graph, cfg: SolverConfig, x0=None, iterations: int | None = None,
                every: int = 1, phi_tau: float | None = None, phi_tol: float = 1e-10,
                wall_clock: bool = False) -> tuple[RunTrace, SolverState]:
    """Run SPPDM and record metrics for ``x^0`` and every ``every``-th iterate.

    ``q_gap`` at row ``k`` is ``Q(x^k, lambda^{k+1})``.  ``phi`` is evaluated
    only when ``phi_tau`` is given (``nan`` otherwise and at ``k = 0``).
    """
    mats = build_update_matrices(graph, cfg)
    if x0 is None:
        x0 = initial_point(problem, cfg.seed)
    x0 = np.asarray(x0, dtype=float)
    K = cfg.iterations if iterations is None else iterations
    trace = RunTrace(meta={"algorithm": "sppdm", "seed": str(cfg.seed)})
    phi_eval = PotentialEvaluator(problem, graph, cfg, phi_tau, phi_tol) if phi_tau is not None else None
    t0 = time.perf_counter()
    p1 = cfg.alpha * mats.laplacian_apply(x0) if cfg.init_dual_step else np.zeros_like(x0)
    record_iterate(trace, 0, x0, p1, problem, graph, math.nan, t0, wall_clock)
    state = sppdm_init(problem, mats, cfg, x0)
    while True:
        if state.k % every == 0 or state.k == K:
            phi = phi_eval(state.x, state.x_prev, state.z, state.p) if phi_eval else math.nan
            record_iterate(trace, state.k, state.x, next_dual(state, mats, cfg), problem, graph, phi, t0, wall_clock)
        if state.k >= K:
            break
        state = sppdm_step(state, problem, mats, cfg)
    return trace, state


def trace_baseline(name: str, problem: Problem, graph: Graph, cfg: SolverConfig, x0=None,
                   iterations: int | None = None, every: int = 1, wall_clock: bool = False,
                   step: float | None = None):
    """Run a baseline; ``q_gap`` is ``nan`` since baselines carry no multiplier."""
    if x0 is None:
        x0 = initial_point(problem, cfg.seed)
    x0 = np.asarray(x0, dtype=float)
    K = cfg.iterations if iterations is None else iterations
    trace = RunTrace(meta={"algorithm": name, "seed": str(cfg.seed)})
    t0 = time.perf_counter()
    record_iterate(trace, 0, x0, None, problem, graph, math.nan, t0, wall_clock)

    def observe(st):
        if st.k % every == 0 or st.k == K:
            record_iterate(trace, st.k, st.x, None, problem, graph, math.nan, t0, wall_clock)

    state = run_baseline(name, problem, graph, cfg, x0, K, observe, step=step)
    return trace, state


def feasible_config(problem: Problem, graph: Graph, base: SolverConfig | None = None, eta_fraction: float = 0.5,
                    sigma5: float = 1.0) -> SolverConfig:
    """A configuration meeting every convergence condition for ``problem``.

    ``gamma = 3.2 L``, ``kappa = max(1, 0.5 - mu)``, a constant momentum
    ``eta_fraction * eta_bar``, ``alpha`` at its cap and ``beta`` at half
    its cap.
    """
    base = base or SolverConfig()
    cfg = base.with_(gamma=3.2 * problem.L, kappa=max(1.0, 0.5 - problem.mu), momentum="constant")
    tc = constants_for(problem, graph, cfg, sigma5)
    cfg = cfg.with_(eta=eta_fraction * tc.eta_bar)
    tc = constants_for(problem, graph, cfg, sigma5)
    cfg = cfg.with_(alpha=tc.alpha_cap)
    tc = constants_for(problem, graph, cfg, sigma5)
    cfg = cfg.with_(beta=0.5 * tc.beta_cap)
    constants_for(problem, graph, cfg, sigma5, strict=True)
    return cfg
