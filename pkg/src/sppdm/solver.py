"""SPPDM / PPDM iterations, the explicit primal-dual reference form, and baselines.

Agent variables are ``(N, n)`` arrays.  The Kronecker-extended graph operators
act row-wise: ``A^T A x`` is ``deg * x - S`` and ``B^T B x`` is
``deg * x + S`` where ``S`` holds neighbour sums.

Iteration indexing follows the algorithm: :func:`sppdm_init` produces
``x^1`` from ``x^0`` and each :func:`sppdm_step` call with index ``k``
produces ``x^{k+1}``.  The dual image ``p`` carried by a state holding
``x^k`` is ``p^k``; with the default initialization ``p^1 = 0``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterator, List, Optional

import numpy as np
import scipy.sparse as sp

from ._backend import kernels
from .errors import BadParameters, NonFiniteIterate, PreconditionViolated
from .graph import Graph, incidence_matrices, metropolis_weights
from .oracles import L1Box, Problem, ZeroReg

__all__ = [
    "SolverConfig",
    "SolverState",
    "UpdateMatrices",
    "build_update_matrices",
    "nesterov_schedule",
    "initial_point",
    "sppdm_init",
    "sppdm_step",
    "next_dual",
    "iterate_sppdm",
    "run_sppdm",
    "PrimalDualReference",
    "dng_equivalence_form",
    "dng_discrepancies",
    "BaselineState",
    "pg_extra_matrices",
    "metropolis_pg_extra_matrices",
    "pg_extra_init",
    "pg_extra_step",
    "prox_dgd_step",
    "psgd_step",
    "dgd_step_size",
    "run_baseline",
    "write_state_csv",
    "read_state_csv",
]

MOMENTUM_KINDS = ("nesterov", "constant", "zero")


# ---------------------------------------------------------------------------
# momentum

_THETA = [1.0, 1.0]  # theta_{-1}, theta_0
_ETA = [0.0]  # eta_0


def nesterov_schedule(k: int) -> float:
    """``eta_k = (theta_{k-1} - 1) / theta_k`` with ``theta_{-1} = theta_0 = 1``.

    The sequence is memoized so a K-step run costs O(K) overall.

    >>> nesterov_schedule(0), nesterov_schedule(1)
    (0.0, 0.0)
    """
    if k < 0:
        raise BadParameters("k must be non-negative")
    while len(_ETA) <= k:
        j = len(_ETA)  # next eta index; _THETA[j] holds theta_{j-1}
        theta_prev = _THETA[j]
        theta = (1.0 + math.sqrt(1.0 + 4.0 * theta_prev * theta_prev)) / 2.0
        _THETA.append(theta)
        _ETA.append((_THETA[j] - 1.0) / theta)
    return _ETA[k]


# ---------------------------------------------------------------------------
# configuration and state

@dataclass(frozen=True)
class SolverConfig:
    """Parameters of Algorithm SPPDM.

    Parameters
    ----------
    alpha, beta, gamma, c, kappa : float
        Dual step, proximal-variable step, surrogate curvature, penalty and
        proximal weight.
    momentum : {"nesterov", "constant", "zero"}
        Extrapolation schedule; ``eta`` is the constant for ``"constant"``.
    batch : int or None
        Mini-batch size per agent; ``None`` uses full gradients (PPDM).
    iterations : int
        Number of primal iterates produced by a run (``x^1 .. x^K``).
    seed : int
        Key of the counter-based sample streams.
    init_dual_step : bool
        Apply the dual update at ``k = 0`` as well, i.e. start from
        ``p^1 = alpha A^T A x^0`` instead of ``p^1 = 0``.
    """

    alpha: float = 2.0
    beta: float = 0.9
    gamma: float = 3.0
    c: float = 2.0
    kappa: float = 1.0
    momentum: str = "nesterov"
    eta: float = 0.0
    batch: Optional[int] = None
    iterations: int = 2000
    seed: int = 0
    init_dual_step: bool = False

    def __post_init__(self):
        for name in ("alpha", "gamma", "c", "kappa"):
            if not getattr(self, name) > 0:
                raise BadParameters(f"{name} must be positive")
        if not 0 < self.beta <= 1:
            raise BadParameters("beta must lie in (0, 1]")
        if self.momentum not in MOMENTUM_KINDS:
            raise BadParameters(f"momentum must be one of {MOMENTUM_KINDS}")
        if self.eta < 0:
            raise BadParameters("eta must be non-negative")
        if self.batch is not None and self.batch < 1:
            raise BadParameters("batch must be at least 1")
        if self.iterations < 1:
            raise BadParameters("iterations must be at least 1")

    def eta_at(self, k: int) -> float:
        if self.momentum == "nesterov":
            return nesterov_schedule(k)
        if self.momentum == "constant":
            return self.eta
        return 0.0

    @property
    def deterministic(self) -> bool:
        return self.batch is None

    def with_(self, **changes) -> "SolverConfig":
        return replace(self, **changes)


@dataclass
class SolverState:
    """Iterates held by every agent after producing ``x^k``.

    ``x_half`` is ``x^{k-1/2}``, ``s_prev`` is ``s^{k-1}`` and ``g_prev`` the
    cached gradient estimate at ``s^{k-1}``; ``S_prev`` caches the neighbour
    sums of ``x^{k-1}``.
    """

    k: int
    x: np.ndarray
    x_prev: np.ndarray
    x_half: np.ndarray
    s_prev: np.ndarray
    z: np.ndarray
    z_prev: np.ndarray
    g_prev: np.ndarray
    S_prev: np.ndarray
    p: np.ndarray

    def copy(self) -> "SolverState":
        return SolverState(self.k, *(getattr(self, f).copy() for f in _ARRAY_FIELDS))


_ARRAY_FIELDS = ("x", "x_prev", "x_half", "s_prev", "z", "z_prev", "g_prev", "S_prev", "p")


@dataclass(frozen=True)
class UpdateMatrices:
    """Graph-dependent operators of one configuration.

    ``U`` and ``Ut`` are the sparse ``N x N`` matrices with
    ``U = c Psi^-1 B^T B - alpha Psi^-1 A^T A`` and ``Ut = c Psi^-1 B^T B``.
    """

    psi: np.ndarray
    deg: np.ndarray
    U: sp.csr_matrix
    Ut: sp.csr_matrix
    A: np.ndarray
    B: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    graph: Graph = field(repr=False)

    @property
    def n_agents(self) -> int:
        return self.psi.size

    def neighbor_sum(self, X) -> np.ndarray:
        return kernels.neighbor_sum(np.ascontiguousarray(X), self.indptr, self.indices)

    def laplacian_apply(self, X) -> np.ndarray:
        """``A^T A X`` computed as ``deg * X - S``."""
        return self.deg[:, None] * X - self.neighbor_sum(X)

    def W(self, gamma: float, kappa: float) -> sp.csr_matrix:
        return (self.U + sp.diags((gamma + kappa) / self.psi)).tocsr()

    def Wt(self, gamma: float, kappa: float) -> sp.csr_matrix:
        return (self.Ut + sp.diags((gamma + kappa) / self.psi)).tocsr()


def build_update_matrices(g: Graph, cfg: SolverConfig) -> UpdateMatrices:
    deg = g.degrees.astype(float)
    psi = cfg.gamma + 2.0 * cfg.c * deg + cfg.kappa
    rows, cols, u_vals, ut_vals = [], [], [], []
    for i in range(g.n_nodes):
        rows.append(i)
        cols.append(i)
        u_vals.append(deg[i] * (cfg.c - cfg.alpha) / psi[i])
        ut_vals.append(deg[i] * cfg.c / psi[i])
        for j in g.neighbors[i]:
            rows.append(i)
            cols.append(j)
            u_vals.append((cfg.c + cfg.alpha) / psi[i])
            ut_vals.append(cfg.c / psi[i])
    shape = (g.n_nodes, g.n_nodes)
    U = sp.csr_matrix((u_vals, (rows, cols)), shape=shape)
    Ut = sp.csr_matrix((ut_vals, (rows, cols)), shape=shape)
    pair = incidence_matrices(g)
    indptr, indices = g.adjacency_csr()
    return UpdateMatrices(psi=psi, deg=deg, U=U, Ut=Ut, A=pair.A, B=pair.B,
                          indptr=indptr, indices=indices, graph=g)


def initial_point(problem: Problem, seed: int, scale: float = 0.1) -> np.ndarray:
    """Independent ``U[-scale, scale]`` start for every agent coordinate."""
    rng = np.random.default_rng(seed)
    return rng.uniform(-scale, scale, size=(problem.n_agents, problem.dim))


def _check_finite(x, k):
    if not np.all(np.isfinite(x)):
        raise NonFiniteIterate(k)


# ---------------------------------------------------------------------------
# SPPDM

def sppdm_init(problem: Problem, mats: UpdateMatrices, cfg: SolverConfig, x0) -> SolverState:
    """First iterate ``x^1`` from ``x^0``, using the full gradient at ``x^0``."""
    x0 = np.array(x0, dtype=float, copy=True).reshape(problem.n_agents, problem.dim)
    _check_finite(x0, 0)
    psi, deg = mats.psi, mats.deg
    S0 = mats.neighbor_sum(x0)
    g0 = problem.gradients(x0)
    num = (cfg.gamma + cfg.c * deg + cfg.kappa)[:, None] * x0 + cfg.c * S0 - g0
    p1 = np.zeros_like(x0)
    if cfg.init_dual_step:
        p1 = cfg.alpha * (deg[:, None] * x0 - S0)
        num = num - p1
    x_half = num / psi[:, None]
    x1 = problem.prox(x_half, psi)
    _check_finite(x1, 0)
    z1 = x0 + cfg.beta * (x1 - x0)
    return SolverState(k=1, x=x1, x_prev=x0, x_half=x_half, s_prev=x0.copy(), z=z1,
                       z_prev=x0.copy(), g_prev=g0, S_prev=S0, p=p1)


def sppdm_step(state: SolverState, problem: Problem, mats: UpdateMatrices, cfg: SolverConfig) -> SolverState:
    """Produce ``x^{k+1}`` from a state holding ``x^k`` (``k = state.k``)."""
    k = state.k
    eta = cfg.eta_at(k)
    x, x_prev = state.x, state.x_prev
    s = x + eta * (x - x_prev)
    g = problem.stochastic_gradients(s, cfg.seed, k, cfg.batch)
    S = mats.neighbor_sum(x)
    x_half = kernels.half_step(state.x_half, x, x_prev, S, state.S_prev, s, state.s_prev,
                               state.z, state.z_prev, g, state.g_prev, mats.deg, mats.psi,
                               cfg.alpha, cfg.c, cfg.gamma, cfg.kappa)
    x_new = problem.prox(x_half, mats.psi)
    _check_finite(x_new, k)
    z_new = state.z + cfg.beta * (x_new - state.z)
    p_new = state.p + cfg.alpha * (mats.deg[:, None] * x - S)
    return SolverState(k=k + 1, x=x_new, x_prev=x, x_half=x_half, s_prev=s, z=z_new,
                       z_prev=state.z, g_prev=g, S_prev=S, p=p_new)


def next_dual(state: SolverState, mats: UpdateMatrices, cfg: SolverConfig) -> np.ndarray:
    """``p^{k+1} = p^k + alpha A^T A x^k`` for a state holding ``x^k``."""
    return state.p + cfg.alpha * mats.laplacian_apply(state.x)


def iterate_sppdm(problem: Problem, graph: Graph, cfg: SolverConfig, x0=None,
                  iterations: int | None = None) -> Iterator[SolverState]:
    """Yield the states holding ``x^1, ..., x^K``."""
    mats = build_update_matrices(graph, cfg)
    if x0 is None:
        x0 = initial_point(problem, cfg.seed)
    K = cfg.iterations if iterations is None else iterations
    state = sppdm_init(problem, mats, cfg, x0)
    yield state
    for _ in range(K - 1):
        state = sppdm_step(state, problem, mats, cfg)
        yield state


def run_sppdm(problem: Problem, graph: Graph, cfg: SolverConfig, x0=None, iterations: int | None = None,
              observer: Callable[[SolverState], None] | None = None) -> SolverState:
    state = None
    for state in iterate_sppdm(problem, graph, cfg, x0, iterations):
        if observer is not None:
            observer(state)
    return state


# ---------------------------------------------------------------------------
# primal-dual reference

class PrimalDualReference:
    """Explicit primal-dual iteration with per-edge multipliers.

    Each step forms the full prox argument
    ``Psi^-1 (gamma s + c B^T B x + kappa z - G(s) - A^T lambda)`` with dense
    matrices.  It draws from the same keyed sample streams as
    :func:`sppdm_step`, so the two trajectories can be compared directly.
    """

    def __init__(self, problem: Problem, graph: Graph, cfg: SolverConfig):
        self.problem, self.cfg = problem, cfg
        pair = incidence_matrices(graph)
        self.A = pair.A.astype(float)
        self.BtB = (pair.B.T @ pair.B).astype(float)
        self.psi = cfg.gamma + 2.0 * cfg.c * graph.degrees.astype(float) + cfg.kappa

    def init(self, x0):
        cfg, pb = self.cfg, self.problem
        x0 = np.array(x0, dtype=float, copy=True)
        self.lam = cfg.alpha * (self.A @ x0) if cfg.init_dual_step else np.zeros((self.A.shape[0], x0.shape[1]))
        self.x_prev = x0
        self.z = x0.copy()
        self.x = self._primal(x0, x0, x0, pb.gradients(x0))
        self.z = self.z + cfg.beta * (self.x - self.z)
        self.k = 1
        return self.x

    def _primal(self, s, x, z, G):
        cfg = self.cfg
        arg = cfg.gamma * s + cfg.c * (self.BtB @ x) + cfg.kappa * z - G - self.A.T @ self.lam
        return self.problem.prox(arg / self.psi[:, None], self.psi)

    @property
    def p(self):
        return self.A.T @ self.lam

    def step(self):
        cfg, k = self.cfg, self.k
        self.lam = self.lam + cfg.alpha * (self.A @ self.x)
        s = self.x + cfg.eta_at(k) * (self.x - self.x_prev)
        G = self.problem.stochastic_gradients(s, cfg.seed, k, cfg.batch)
        x_new = self._primal(s, self.x, self.z, G)
        _check_finite(x_new, k)
        self.z = self.z + cfg.beta * (x_new - self.z)
        self.x_prev, self.x = self.x, x_new
        self.k = k + 1
        return self.x


# ---------------------------------------------------------------------------
# D-NG form with correction term

def _is_zero_reg(problem: Problem) -> bool:
    for r in problem.regs:
        if isinstance(r, ZeroReg):
            continue
        if isinstance(r, L1Box) and r.weight == 0 and np.isinf(r.lo) and np.isinf(r.hi):
            continue
        return False
    return True


def dng_equivalence_form(xs: List[np.ndarray], s_k: np.ndarray, g_k: np.ndarray,
                         mats: UpdateMatrices, cfg: SolverConfig, problem: Problem | None = None,
                         from_zero: bool | None = None) -> np.ndarray:
    """Predict ``x^{k+1} = Wt s^k - Psi^-1 G(s^k) + C^k``.

    ``xs`` holds ``x^0 .. x^k``.  The correction
    ``C^k = Psi^-1 (c B^T B + kappa)(x^k - s^k) - sum_t (I - Wt) x^t`` sums
    over ``t = 0..k`` when the dual step is applied at initialization and over
    ``t = 1..k`` otherwise.
    """
    if cfg.alpha != cfg.c:
        raise PreconditionViolated("D-NG form needs alpha == c")
    if cfg.beta != 1.0:
        raise PreconditionViolated("D-NG form needs beta == 1")
    if problem is not None and not _is_zero_reg(problem):
        raise PreconditionViolated("D-NG form needs r == 0")
    if from_zero is None:
        from_zero = cfg.init_dual_step
    psi = mats.psi[:, None]
    Wt = mats.Wt(cfg.gamma, cfg.kappa)
    BtB = (mats.B.T @ mats.B).astype(float)
    x_k = xs[-1]
    d = x_k - s_k
    C = (cfg.c * (BtB @ d) + cfg.kappa * d) / psi
    start = 0 if from_zero else 1
    for x_t in xs[start:]:
        C = C - (x_t - Wt @ x_t)
    return Wt @ s_k - g_k / psi + C


def dng_discrepancies(problem: Problem, graph: Graph, cfg: SolverConfig, x0, iterations: int) -> np.ndarray:
    """Sup-norm gap between PPDM iterates and the D-NG prediction, per step."""
    mats = build_update_matrices(graph, cfg)
    state = sppdm_init(problem, mats, cfg, x0)
    xs = [state.x_prev.copy(), state.x.copy()]
    gaps = []
    for _ in range(iterations):
        k = state.k
        s_k = state.x + cfg.eta_at(k) * (state.x - state.x_prev)
        g_k = problem.stochastic_gradients(s_k, cfg.seed, k, cfg.batch)
        pred = dng_equivalence_form(xs, s_k, g_k, mats, cfg, problem)
        state = sppdm_step(state, problem, mats, cfg)
        gaps.append(float(np.max(np.abs(pred - state.x))))
        xs.append(state.x.copy())
    return np.array(gaps)


# ---------------------------------------------------------------------------
# baselines

@dataclass
class BaselineState:
    k: int
    x: np.ndarray
    x_prev: Optional[np.ndarray] = None
    x_half: Optional[np.ndarray] = None
    g_prev: Optional[np.ndarray] = None


def pg_extra_matrices(mats: UpdateMatrices, cfg: SolverConfig):
    """``(W, Wt, step)`` making PG-EXTRA coincide with PPDM at ``eta = 0, beta = 1``."""
    return mats.W(cfg.gamma, cfg.kappa), mats.Wt(cfg.gamma, cfg.kappa), 1.0 / mats.psi


def metropolis_pg_extra_matrices(g: Graph, step: float = 0.05):
    """Classic PG-EXTRA weights: Metropolis ``W``, ``Wt = (I + W) / 2``."""
    W = metropolis_weights(g)
    Wt = 0.5 * (np.eye(g.n_nodes) + W)
    return sp.csr_matrix(W), sp.csr_matrix(Wt), np.full(g.n_nodes, step)


def pg_extra_init(problem: Problem, Wt, step, x0) -> BaselineState:
    x0 = np.array(x0, dtype=float, copy=True)
    step = np.broadcast_to(np.asarray(step, dtype=float), (x0.shape[0],))
    g0 = problem.gradients(x0)
    x_half = Wt @ x0 - step[:, None] * g0
    x1 = problem.prox(x_half, 1.0 / step)
    _check_finite(x1, 0)
    return BaselineState(k=1, x=x1, x_prev=x0, x_half=x_half, g_prev=g0)


def pg_extra_step(state: BaselineState, problem: Problem, W, Wt, step) -> BaselineState:
    """``x^{k+1/2} = x^{k-1/2} + W x^k - Wt x^{k-1} - step (grad f(x^k) - grad f(x^{k-1}))``."""
    step = np.broadcast_to(np.asarray(step, dtype=float), (state.x.shape[0],))
    g = problem.gradients(state.x)
    x_half = state.x_half + W @ state.x - Wt @ state.x_prev - step[:, None] * (g - state.g_prev)
    x_new = problem.prox(x_half, 1.0 / step)
    _check_finite(x_new, state.k)
    return BaselineState(k=state.k + 1, x=x_new, x_prev=state.x, x_half=x_half, g_prev=g)


def dgd_step_size(k: int) -> float:
    """Diminishing step ``1 / (3 sqrt(k + 100))``."""
    return 1.0 / (3.0 * math.sqrt(k + 100.0))


def prox_dgd_step(state: BaselineState, problem: Problem, W, step: float | None = None) -> BaselineState:
    """``x^{k+1} = prox^{1/step}(W x^k - step grad f(x^k))``."""
    k = state.k
    step = dgd_step_size(k) if step is None else step
    v = W @ state.x - step * problem.gradients(state.x)
    x_new = problem.prox(v, np.full(state.x.shape[0], 1.0 / step))
    _check_finite(x_new, k)
    return BaselineState(k=k + 1, x=x_new, x_prev=state.x)


def _box_bounds(problem: Problem):
    lo, hi = -np.inf, np.inf
    for r in problem.regs:
        if isinstance(r, L1Box):
            lo, hi = max(lo, r.lo), min(hi, r.hi)
    return lo, hi


def psgd_step(state: BaselineState, problem: Problem, W, seed: int, batch: int | None,
              step: float | None = None) -> BaselineState:
    """Projected stochastic gradient step onto the regularizer's box."""
    k = state.k
    step = dgd_step_size(k) if step is None else step
    G = problem.stochastic_gradients(state.x, seed, k, batch)
    lo, hi = _box_bounds(problem)
    x_new = np.minimum(np.maximum(W @ state.x - step * G, lo), hi)
    _check_finite(x_new, k)
    return BaselineState(k=k + 1, x=x_new, x_prev=state.x)


def run_baseline(name: str, problem: Problem, graph: Graph, cfg: SolverConfig, x0=None,
                 iterations: int | None = None, observer=None, step: float | None = None) -> BaselineState:
    """Run ``pg-extra``, ``pg-extra-metropolis``, ``prox-dgd`` or ``psgd``.

    ``observer`` sees the state holding ``x^1 .. x^K``; diminishing-step
    methods use index ``k = 0`` for the first step.
    """
    if x0 is None:
        x0 = initial_point(problem, cfg.seed)
    x0 = np.array(x0, dtype=float, copy=True)
    K = cfg.iterations if iterations is None else iterations
    if name in ("pg-extra", "pg-extra-metropolis"):
        if name == "pg-extra":
            W, Wt, h = pg_extra_matrices(build_update_matrices(graph, cfg), cfg)
        else:
            W, Wt, h = metropolis_pg_extra_matrices(graph, 0.05 if step is None else step)
        state = pg_extra_init(problem, Wt, h, x0)
        advance = lambda st: pg_extra_step(st, problem, W, Wt, h)  # noqa: E731
    elif name in ("prox-dgd", "psgd"):
        W = sp.csr_matrix(metropolis_weights(graph))
        state = BaselineState(k=0, x=x0)
        if name == "prox-dgd":
            advance = lambda st: prox_dgd_step(st, problem, W, step)  # noqa: E731
        else:
            advance = lambda st: psgd_step(st, problem, W, cfg.seed, cfg.batch, step)  # noqa: E731
        state = advance(state)
    else:
        raise BadParameters(f"unknown baseline {name!r}")
    if observer is not None:
        observer(state)
    for _ in range(K - 1):
        state = advance(state)
        if observer is not None:
            observer(state)
    return state


# ---------------------------------------------------------------------------
# checkpoints

def write_state_csv(state: SolverState, path) -> Path:
    """Dump every state array as rows ``field,agent,k,v0..v{n-1}``."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    n = state.x.shape[1]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["field", "agent", "k"] + [f"v{j}" for j in range(n)])
        for name in _ARRAY_FIELDS:
            arr = getattr(state, name)
            for i, row in enumerate(arr):
                w.writerow([name, i, state.k] + [repr(float(v)) for v in row])
    return path


def read_state_csv(path) -> SolverState:
    rows: dict[str, list] = {name: [] for name in _ARRAY_FIELDS}
    k = None
    with Path(path).open(newline="") as fh:
        reader = csv.reader(fh)
        next(reader)
        for rec in reader:
            name, _agent, kk = rec[0], int(rec[1]), int(rec[2])
            k = kk
            rows[name].append([float(v) for v in rec[3:]])
    return SolverState(k=k, **{name: np.array(v) for name, v in rows.items()})
