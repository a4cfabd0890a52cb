"""Per-agent objective pieces: smooth losses and polyhedral regularizers.

Smooth terms expose ``value``, ``gradient`` and ``stochastic_gradient``
together with the curvature constants ``L`` (gradient Lipschitz) and ``mu``
(weak-convexity lower bound, possibly negative).  Regularizers expose
``value``, ``prox`` and a polyhedral description of their epigraph.

A :class:`Problem` stacks one smooth term and one regularizer per agent and
routes the regression case through the compiled kernels.
"""
from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from ._backend import kernels
from .errors import (
    BadParameters,
    BadSizes,
    DimensionMismatch,
    EmptyBatch,
    NotPolyhedral,
    OracleFailure,
)

__all__ = [
    "SampleStream",
    "SmoothTerm",
    "TruncatedLoss",
    "LeastSquaresLoss",
    "QuadraticLoss",
    "Regularizer",
    "ZeroReg",
    "L1Box",
    "Problem",
    "RegressionDataset",
    "truncated_loss_value",
    "truncated_loss_gradient",
    "stochastic_gradient",
    "prox_l1_box",
    "soft_threshold",
    "epigraph_witness",
    "epigraph_contains",
    "generate_regression",
    "estimate_lipschitz",
    "write_dataset_csv",
    "read_dataset_csv",
]


# ---------------------------------------------------------------------------
# sampling

@dataclass(frozen=True)
class SampleStream:
    """Counter-based sample stream keyed by ``(seed, agent, iteration)``.

    Two streams with equal keys yield identical indices, which is what lets
    the difference-form solver and the primal-dual reference consume the same
    mini-batches without sharing generator state.
    """

    seed: int
    agent: int
    iteration: int

    def indices(self, batch: int, m: int) -> np.ndarray:
        if batch < 1:
            raise EmptyBatch("mini-batch size must be at least 1")
        if m < 1:
            raise EmptyBatch("dataset is empty")
        return kernels.sample_indices(self.seed, self.agent, self.iteration, int(batch), int(m))


# ---------------------------------------------------------------------------
# smooth terms

class SmoothTerm:
    """Base class for a per-agent smooth loss.

    Finite-sum losses set ``n_samples`` and implement
    :meth:`sample_gradients`; deterministic losses leave it ``None`` and their
    stochastic gradient is the exact gradient.
    """

    n_samples: Optional[int] = None
    L: float = 1.0
    mu: float = -1.0

    @property
    def dim(self) -> int:
        raise NotImplementedError

    def value(self, x):
        raise NotImplementedError

    def gradient(self, x):
        raise NotImplementedError

    def sample_gradients(self, x, idx):
        """Mean of per-sample gradients over rows ``idx``."""
        raise NotImplementedError

    def per_sample_gradients(self, x):
        raise NotImplementedError

    def stochastic_gradient(self, x, stream: SampleStream, batch: int):
        if self.n_samples is None:
            if batch < 1:
                raise EmptyBatch("mini-batch size must be at least 1")
            return self.gradient(x)
        return self.sample_gradients(x, stream.indices(batch, self.n_samples))

    def sample_variance(self, x) -> float:
        """Variance of a single-sample gradient at ``x`` (exact over the dataset)."""
        if self.n_samples is None:
            return 0.0
        G = self.per_sample_gradients(x)
        return float(np.mean(np.sum((G - G.mean(axis=0)) ** 2, axis=1)))


def _check_dims(H, y, x):
    H = np.asarray(H, dtype=float)
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    if H.ndim != 2 or y.ndim != 1 or x.ndim != 1:
        raise DimensionMismatch("expected H (m, n), y (m,), x (n,)")
    if H.shape[0] != y.shape[0] or H.shape[1] != x.shape[0]:
        raise DimensionMismatch(
            f"H is {H.shape}, y has {y.shape[0]} entries, x has {x.shape[0]}"
        )
    return np.ascontiguousarray(H), np.ascontiguousarray(y), np.ascontiguousarray(x)


def truncated_loss_value(H, y, x, rho: float) -> float:
    """``rho/(2m) * sum_j log(1 + (y_j - h_j.x)^2 / rho)``."""
    if rho <= 0:
        raise BadParameters("rho must be positive")
    H, y, x = _check_dims(H, y, x)
    return float(kernels.trunc_value(H, y, float(rho), x))


def truncated_loss_gradient(H, y, x, rho: float) -> np.ndarray:
    if rho <= 0:
        raise BadParameters("rho must be positive")
    H, y, x = _check_dims(H, y, x)
    return kernels.trunc_grad(H, y, float(rho), x, None)


def curvature_bounds(H) -> tuple[float, float]:
    """Certified ``(L, mu)`` for the truncated loss on data ``H``.

    The per-sample curvature weight ``rho (rho - e^2) / (rho + e^2)^2`` lies
    in ``[-1/8, 1]`` for every residual ``e``, so the Hessian is bracketed by
    ``-1/8`` and ``1`` times ``H^T H / m``.
    """
    H = np.asarray(H, dtype=float)
    lam = float(np.linalg.eigvalsh(H.T @ H / H.shape[0])[-1])
    return lam, -lam / 8.0


class TruncatedLoss(SmoothTerm):
    """Non-convex truncated least-squares loss of one agent."""

    def __init__(self, H, y, rho: float = 3.0, L: float | None = None, mu: float | None = None):
        if rho <= 0:
            raise BadParameters("rho must be positive")
        H = np.ascontiguousarray(H, dtype=float)
        y = np.ascontiguousarray(y, dtype=float)
        if H.ndim != 2 or y.shape != (H.shape[0],):
            raise DimensionMismatch("expected H (m, n) and y (m,)")
        self.H, self.y, self.rho = H, y, float(rho)
        self.n_samples = H.shape[0]
        if L is None or mu is None:
            L_b, mu_b = curvature_bounds(H)
            L = L_b if L is None else L
            mu = mu_b if mu is None else mu
        self.L, self.mu = float(L), float(mu)

    @property
    def dim(self):
        return self.H.shape[1]

    def value(self, x):
        return float(kernels.trunc_value(self.H, self.y, self.rho, np.ascontiguousarray(x, dtype=float)))

    def gradient(self, x):
        return kernels.trunc_grad(self.H, self.y, self.rho, np.ascontiguousarray(x, dtype=float), None)

    def sample_gradients(self, x, idx):
        idx = np.asarray(idx, dtype=np.int64)
        if idx.size == 0:
            raise EmptyBatch("mini-batch size must be at least 1")
        return kernels.trunc_grad(self.H, self.y, self.rho, np.ascontiguousarray(x, dtype=float), idx)

    def per_sample_gradients(self, x):
        r = self.H @ x - self.y
        w = r * (self.rho / (self.rho + r * r))
        return self.H * w[:, None]


class LeastSquaresLoss(SmoothTerm):
    """Convex finite-sum loss ``(1/2m) sum_j (h_j.x - y_j)^2``."""

    def __init__(self, H, y):
        self.H = np.ascontiguousarray(H, dtype=float)
        self.y = np.ascontiguousarray(y, dtype=float)
        if self.H.ndim != 2 or self.y.shape != (self.H.shape[0],):
            raise DimensionMismatch("expected H (m, n) and y (m,)")
        self.n_samples = self.H.shape[0]
        lam = float(np.linalg.eigvalsh(self.H.T @ self.H / self.n_samples)[-1])
        self.L = lam
        self.mu = float(np.linalg.eigvalsh(self.H.T @ self.H / self.n_samples)[0])

    @property
    def dim(self):
        return self.H.shape[1]

    def value(self, x):
        r = self.H @ x - self.y
        return float(0.5 * np.mean(r * r))

    def gradient(self, x):
        return self.H.T @ (self.H @ x - self.y) / self.n_samples

    def sample_gradients(self, x, idx):
        idx = np.asarray(idx, dtype=np.int64)
        if idx.size == 0:
            raise EmptyBatch("mini-batch size must be at least 1")
        Hs = self.H[idx]
        return Hs.T @ (Hs @ x - self.y[idx]) / idx.size

    def per_sample_gradients(self, x):
        return self.H * (self.H @ x - self.y)[:, None]


class QuadraticLoss(SmoothTerm):
    """Deterministic quadratic ``x.Q.x / 2 + q.x`` (``Q`` symmetric)."""

    def __init__(self, Q, q):
        self.Q = np.atleast_2d(np.asarray(Q, dtype=float))
        self.q = np.atleast_1d(np.asarray(q, dtype=float))
        if self.Q.shape != (self.q.size, self.q.size):
            raise DimensionMismatch("Q must be (n, n) with q of length n")
        eig = np.linalg.eigvalsh(0.5 * (self.Q + self.Q.T))
        self.L = float(max(abs(eig[0]), abs(eig[-1])))
        self.mu = float(eig[0])

    @property
    def dim(self):
        return self.q.size

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ self.Q @ x + self.q @ x)

    def gradient(self, x):
        return self.Q @ np.asarray(x, dtype=float) + self.q


def stochastic_gradient(term: SmoothTerm, x, stream: SampleStream, batch: int, full_pass: bool = False):
    """Mini-batch gradient estimate: mean of ``batch`` per-sample gradients.

    ``full_pass=True`` replaces sampling by one ordered pass over the data and
    returns exactly ``term.gradient(x)``.
    """
    if batch < 1:
        raise EmptyBatch("mini-batch size must be at least 1")
    if full_pass:
        return term.gradient(x)
    return term.stochastic_gradient(x, stream, batch)


def estimate_lipschitz(term: SmoothTerm, rng: np.random.Generator, pairs: int = 200, scale: float = 1.0):
    """Largest ``|grad(x) - grad(y)| / |x - y|`` over random Gaussian pairs."""
    best = 0.0
    for _ in range(pairs):
        x = scale * rng.standard_normal(term.dim)
        y = scale * rng.standard_normal(term.dim)
        ratio = np.linalg.norm(term.gradient(x) - term.gradient(y)) / np.linalg.norm(x - y)
        best = max(best, float(ratio))
    return best


# ---------------------------------------------------------------------------
# non-smooth terms

def soft_threshold(v, t):
    v = np.asarray(v, dtype=float)
    return np.where(v > t, v - t, np.where(v < -t, v + t, 0.0))


def prox_l1_box(v, psi: float, weight: float, lo: float = -1.0, hi: float = 1.0):
    """Exact minimizer of ``(psi/2)|v-u|^2 + weight*|u|_1`` over the box ``[lo, hi]``.

    Separable, and the box contains 0, so soft-thresholding then clamping
    is exact.
    """
    if not psi > 0:
        raise BadParameters("psi must be positive")
    if weight < 0:
        raise BadParameters("l1 weight must be non-negative")
    if not lo <= 0 <= hi:
        raise BadParameters("box must contain 0")
    return np.clip(soft_threshold(v, weight / psi), lo, hi)


class Regularizer:
    """Convex regularizer with a polyhedral epigraph."""

    def value(self, x) -> float:
        raise NotImplementedError

    def prox(self, v, psi: float):
        raise NotImplementedError

    def combined(self, count: int) -> "Regularizer":
        """The regularizer ``count * r`` acting on one shared copy."""
        raise NotImplementedError


class ZeroReg(Regularizer):
    def value(self, x):
        return 0.0

    def prox(self, v, psi):
        if not psi > 0:
            raise BadParameters("psi must be positive")
        return np.array(v, dtype=float, copy=True)

    def combined(self, count):
        return self

    def __eq__(self, other):
        return isinstance(other, ZeroReg)

    def __hash__(self):
        return hash("ZeroReg")

    def __repr__(self):
        return "ZeroReg()"


@dataclass(frozen=True)
class L1Box(Regularizer):
    """``weight*|x|_1`` plus the indicator of ``[lo, hi]^n``.

    ``weight=0`` gives a pure box, infinite bounds a pure l1 penalty.
    """

    weight: float = 0.01
    lo: float = -1.0
    hi: float = 1.0

    def __post_init__(self):
        if self.weight < 0:
            raise BadParameters("l1 weight must be non-negative")
        if not self.lo <= 0 <= self.hi:
            raise BadParameters("box must contain 0")

    def value(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x < self.lo) or np.any(x > self.hi):
            return float("inf")
        return float(self.weight * np.abs(x).sum())

    def prox(self, v, psi):
        return prox_l1_box(v, psi, self.weight, self.lo, self.hi)

    def combined(self, count):
        return L1Box(self.weight * count, self.lo, self.hi)


def epigraph_witness(r: Regularizer, n: int):
    """Return ``(S_x, S_y, zeta)`` with ``r(x) <= y  <=>  S_x x + S_y y >= zeta``.

    The l1 part contributes one row ``y - weight*<sign, x> >= 0`` per sign
    pattern (``2^n`` rows, so ``n`` is capped at 16); finite box bounds
    contribute rows with a zero ``y`` coefficient.
    """
    if isinstance(r, ZeroReg):
        return np.zeros((1, n)), np.ones(1), np.zeros(1)
    if not isinstance(r, L1Box):
        raise NotPolyhedral(f"no polyhedral description for {type(r).__name__}")
    rows_x, rows_y, rhs = [], [], []
    if r.weight > 0:
        if n > 16:
            raise NotPolyhedral("l1 epigraph needs 2^n rows; n > 16 not supported")
        for signs in itertools.product((1.0, -1.0), repeat=n):
            rows_x.append(-r.weight * np.array(signs))
            rows_y.append(1.0)
            rhs.append(0.0)
    else:
        rows_x.append(np.zeros(n))
        rows_y.append(1.0)
        rhs.append(0.0)
    for k in range(n):
        if np.isfinite(r.lo):
            e = np.zeros(n)
            e[k] = 1.0
            rows_x.append(e)
            rows_y.append(0.0)
            rhs.append(r.lo)
        if np.isfinite(r.hi):
            e = np.zeros(n)
            e[k] = -1.0
            rows_x.append(e)
            rows_y.append(0.0)
            rhs.append(-r.hi)
    return np.array(rows_x), np.array(rows_y), np.array(rhs)


def epigraph_contains(witness, x, y, tol: float = 0.0) -> bool:
    S_x, S_y, zeta = witness
    return bool(np.all(S_x @ np.atleast_1d(x) + S_y * y >= zeta - tol))


# ---------------------------------------------------------------------------
# stacked problem

class Problem:
    """Per-agent smooth terms and regularizers of one consensus problem.

    ``L`` and ``mu`` are constants for the stacked objective (max / min over
    agents unless given).  Arrays of agent variables have shape ``(N, n)``.
    """

    def __init__(self, smooth: Sequence[SmoothTerm], regs: Sequence[Regularizer] | Regularizer,
                 L: float | None = None, mu: float | None = None, f_lower: float = 0.0):
        self.smooth: List[SmoothTerm] = list(smooth)
        if isinstance(regs, Regularizer):
            regs = [regs] * len(self.smooth)
        self.regs: List[Regularizer] = list(regs)
        if len(self.regs) != len(self.smooth) or not self.smooth:
            raise DimensionMismatch("need one regularizer per agent and at least one agent")
        dims = {t.dim for t in self.smooth}
        if len(dims) != 1:
            raise DimensionMismatch(f"agents disagree on dimension: {sorted(dims)}")
        self.n_agents = len(self.smooth)
        self.dim = dims.pop()
        self.L = float(L) if L is not None else max(t.L for t in self.smooth)
        self.mu = float(mu) if mu is not None else min(t.mu for t in self.smooth)
        self.f_lower = float(f_lower)
        self._stack = self._build_stack()
        self._box = self._build_box()

    # fast paths -------------------------------------------------------------
    def _build_stack(self):
        terms = self.smooth
        if not all(isinstance(t, TruncatedLoss) for t in terms):
            return None
        if len({t.rho for t in terms}) != 1 or len({t.H.shape for t in terms}) != 1:
            return None
        H = np.ascontiguousarray(np.stack([t.H for t in terms]))
        y = np.ascontiguousarray(np.stack([t.y for t in terms]))
        # rebind agent views into the stack so agent-local calls read the same memory
        for i, t in enumerate(terms):
            t.H, t.y = H[i], y[i]
        return H, y, terms[0].rho

    def _build_box(self):
        regs = self.regs
        if all(isinstance(r, L1Box) for r in regs) and len({(r.lo, r.hi) for r in regs}) == 1:
            return np.array([r.weight for r in regs]), regs[0].lo, regs[0].hi
        return None

    @property
    def is_finite_sum(self) -> bool:
        return all(t.n_samples is not None for t in self.smooth)

    # oracle access ----------------------------------------------------------
    def gradients(self, X) -> np.ndarray:
        X = np.ascontiguousarray(X, dtype=float)
        if self._stack is not None:
            H, y, rho = self._stack
            G = kernels.trunc_grad_stack(H, y, rho, X, 0, 0, 0)
        else:
            G = np.stack([t.gradient(X[i]) for i, t in enumerate(self.smooth)])
        if not np.all(np.isfinite(G)):
            raise OracleFailure("gradient oracle returned non-finite values")
        return G

    def stochastic_gradients(self, X, seed: int, iteration: int, batch: int | None) -> np.ndarray:
        """Mini-batch gradients; ``batch=None`` means full gradients."""
        if batch is None:
            return self.gradients(X)
        if batch < 1:
            raise EmptyBatch("mini-batch size must be at least 1")
        X = np.ascontiguousarray(X, dtype=float)
        if self._stack is not None:
            H, y, rho = self._stack
            G = kernels.trunc_grad_stack(H, y, rho, X, seed, iteration, int(batch))
        else:
            G = np.stack([
                t.stochastic_gradient(X[i], SampleStream(seed, i, iteration), batch)
                for i, t in enumerate(self.smooth)
            ])
        if not np.all(np.isfinite(G)):
            raise OracleFailure("gradient oracle returned non-finite values")
        return G

    def agent_gradient(self, i: int, x, seed: int, iteration: int, batch: int | None):
        """Agent-local oracle call; bit-identical to row ``i`` of the stacked call."""
        t = self.smooth[i]
        if batch is None:
            return t.gradient(x)
        return t.stochastic_gradient(x, SampleStream(seed, i, iteration), batch)

    def prox(self, V, psi) -> np.ndarray:
        """Row-wise ``prox_{r_i}^{psi_i}``."""
        V = np.ascontiguousarray(V, dtype=float)
        psi = np.ascontiguousarray(np.broadcast_to(np.asarray(psi, dtype=float), (V.shape[0],)))
        if self._box is not None:
            w, lo, hi = self._box
            return kernels.prox_l1_box(V, psi, np.ascontiguousarray(w[: V.shape[0]]), lo, hi)
        return np.stack([r.prox(V[i], psi[i]) for i, r in enumerate(self.regs)])

    def agent_prox(self, i: int, v, psi_i: float):
        if self._box is not None:
            w, lo, hi = self._box
            return kernels.prox_l1_box(
                np.ascontiguousarray(v, dtype=float)[None, :], np.array([psi_i]), w[i : i + 1], lo, hi
            )[0]
        return self.regs[i].prox(v, psi_i)

    def f_value(self, X) -> float:
        return float(sum(t.value(X[i]) for i, t in enumerate(self.smooth)))

    def r_value(self, X) -> float:
        return float(sum(r.value(X[i]) for i, r in enumerate(self.regs)))

    def consensus_regularizer(self) -> Regularizer:
        """``sum_i r_i`` acting on a single shared copy."""
        first = self.regs[0]
        if all(r == first for r in self.regs):
            return first.combined(self.n_agents)
        if all(isinstance(r, L1Box) for r in self.regs):
            lo = max(r.lo for r in self.regs)
            hi = min(r.hi for r in self.regs)
            return L1Box(sum(r.weight for r in self.regs), lo, hi)
        raise NotPolyhedral("cannot aggregate heterogeneous regularizers")

    def sigma2(self, X) -> float:
        """Largest per-agent single-sample gradient variance at ``X``."""
        return max(t.sample_variance(X[i]) for i, t in enumerate(self.smooth))


# ---------------------------------------------------------------------------
# synthetic regression data

@dataclass
class RegressionDataset:
    H: np.ndarray  # (N, m, n)
    y: np.ndarray  # (N, m)
    x_true: np.ndarray  # (n,)
    noise: np.ndarray = field(repr=False)  # (N, m)
    noise_sd: float = 2.0

    @property
    def support(self):
        return np.flatnonzero(self.x_true)


def generate_regression(rng: np.random.Generator, N: int = 5, m: int = 20, n: int = 32, S: int = 4,
                        rho: float = 3.0, noise_sd: float = 2.0, l1_weight: float = 0.01,
                        box: tuple[float, float] = (-1.0, 1.0), L: float | None = None,
                        mu: float | None = None):
    """Sparse linear-model data split across ``N`` agents with ``m`` rows each.

    Draw order (fixed, so a seed fully determines the output): ``H``, support,
    non-zero values, noise.
    """
    for name, val in (("N", N), ("m", m), ("n", n), ("S", S)):
        if int(val) < 1:
            raise BadSizes(f"{name} must be positive")
    if S > n:
        raise BadSizes("sparsity S cannot exceed the dimension n")
    if rho <= 0 or noise_sd < 0:
        raise BadSizes("rho must be positive and noise_sd non-negative")
    H = rng.standard_normal((N, m, n))
    x_true = np.zeros(n)
    support = np.sort(rng.choice(n, size=S, replace=False))
    x_true[support] = rng.uniform(-1.0, 1.0, size=S)
    noise = rng.normal(0.0, noise_sd, size=(N, m))
    y = H @ x_true + noise
    data = RegressionDataset(H=H, y=y, x_true=x_true, noise=noise, noise_sd=noise_sd)
    return problem_from_dataset(data, rho=rho, l1_weight=l1_weight, box=box, L=L, mu=mu), data


def problem_from_dataset(data: RegressionDataset, rho=3.0, l1_weight=0.01, box=(-1.0, 1.0), L=None, mu=None):
    terms = [TruncatedLoss(data.H[i], data.y[i], rho) for i in range(data.H.shape[0])]
    reg = L1Box(l1_weight, box[0], box[1])
    return Problem(terms, reg, L=L, mu=mu)


def write_dataset_csv(data: RegressionDataset, directory) -> list[Path]:
    """One CSV per agent: columns ``h0..h{n-1},y``, one row per sample."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    N, m, n = data.H.shape
    paths = []
    header = [f"h{k}" for k in range(n)] + ["y"]
    for i in range(N):
        p = directory / f"agent_{i:03d}.csv"
        with p.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            for j in range(m):
                w.writerow([repr(float(v)) for v in data.H[i, j]] + [repr(float(data.y[i, j]))])
        paths.append(p)
    truth = directory / "ground_truth.csv"
    with truth.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x_true"])
        for v in data.x_true:
            w.writerow([repr(float(v))])
    return paths


def read_dataset_csv(directory, noise_sd: float = float("nan")) -> RegressionDataset:
    directory = Path(directory)
    files = sorted(directory.glob("agent_*.csv"))
    if not files:
        raise FileNotFoundError(f"no agent_*.csv files in {directory}")
    Hs, ys = [], []
    for p in files:
        arr = np.loadtxt(p, delimiter=",", skiprows=1, ndmin=2)
        Hs.append(arr[:, :-1])
        ys.append(arr[:, -1])
    H = np.stack(Hs)
    y = np.stack(ys)
    truth_path = directory / "ground_truth.csv"
    x_true = np.loadtxt(truth_path, skiprows=1, ndmin=1) if truth_path.exists() else np.full(H.shape[2], np.nan)
    return RegressionDataset(H=H, y=y, x_true=x_true, noise=np.full_like(y, np.nan), noise_sd=noise_sd)
