"""Round-synchronous message passing execution of SPPDM.

Every agent owns one row of the iterates and sees only the ``x`` payloads
sent by its neighbours.  A round is: all agents send, barrier, all agents
update.  The per-agent arithmetic calls the same kernels as the matrix-form
solver on one-row slices, so the trajectories agree bit for bit.
"""
from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

from ._backend import kernels
from .errors import DuplicatePayload, LocalityViolation, MissingPayload, NonFiniteIterate
from .graph import Graph
from .metrics import RunTrace, record_iterate, rounds_to_eps
from .oracles import Problem
from .solver import SolverConfig, SolverState, initial_point

__all__ = [
    "Message",
    "Mailbox",
    "DropGuard",
    "drop_guard",
    "FaultPlan",
    "RoundLog",
    "Agent",
    "run_distributed",
    "CensusSummary",
    "communication_census",
]


@dataclass(frozen=True)
class Message:
    sender: int
    round: int
    payload: np.ndarray


class DropGuard:
    """Checks that each neighbour payload of a round arrives exactly once."""

    def __init__(self, graph: Graph, mode: str = "strict"):
        if mode != "strict":
            raise ValueError(f"unsupported guard mode {mode!r}")
        self.graph = graph
        self.mode = mode
        self.violations: List[str] = []

    def check(self, receiver: int, round_: int, messages: Sequence[Message]):
        counts: Dict[int, int] = {}
        for msg in messages:
            counts[msg.sender] = counts.get(msg.sender, 0) + 1
        for sender, cnt in sorted(counts.items()):
            if cnt > 1:
                raise DuplicatePayload(
                    f"round {round_}: agent {receiver} received {cnt} payloads from agent {sender}"
                )
        for sender in self.graph.neighbors[receiver]:
            if sender not in counts:
                raise MissingPayload(
                    f"round {round_}: payload from agent {sender} to agent {receiver} never arrived"
                )


def drop_guard(graph: Graph, mode: str = "strict") -> DropGuard:
    """Guard to pass to :class:`Mailbox`; only ``"strict"`` is supported."""
    return DropGuard(graph, mode)


class Mailbox:
    """Per-agent inbound queues with round-barrier visibility.

    Sends go to a pending buffer; :meth:`barrier` publishes them.  Reading a
    payload from a non-neighbour raises :class:`LocalityViolation`.
    """

    def __init__(self, graph: Graph, guard: Optional[DropGuard] = None):
        self.graph = graph
        self.guard = guard
        self._nbr = [set(nb) for nb in graph.neighbors]
        self._pending: List[List[Message]] = [[] for _ in range(graph.n_nodes)]
        self._visible: List[List[Message]] = [[] for _ in range(graph.n_nodes)]
        self._round = -1

    def post(self, sender: int, receiver: int, round_: int, payload: np.ndarray):
        self._pending[receiver].append(Message(sender, round_, payload))

    def barrier(self, round_: int):
        for receiver, msgs in enumerate(self._pending):
            for msg in msgs:
                if msg.sender not in self._nbr[receiver]:
                    raise LocalityViolation(f"round {round_}: agent {msg.sender} sent to non-neighbour {receiver}")
        self._visible = self._pending
        self._pending = [[] for _ in range(self.graph.n_nodes)]
        self._round = round_

    def collect(self, receiver: int) -> List[np.ndarray]:
        """Payloads of the published round in increasing sender order."""
        msgs = self._visible[receiver]
        for msg in msgs:
            if msg.sender not in self._nbr[receiver]:
                raise LocalityViolation(f"agent {receiver} read a payload from non-neighbour {msg.sender}")
            if msg.round != self._round:
                raise LocalityViolation(f"agent {receiver} saw a round-{msg.round} payload in round {self._round}")
        if self.guard is not None:
            self.guard.check(receiver, self._round, msgs)
        return [m.payload for m in sorted(msgs, key=lambda m: m.sender)]


@dataclass
class FaultPlan:
    """Injected send faults keyed by ``(round, sender, receiver)``."""

    duplicate: Set[Tuple[int, int, int]] = field(default_factory=set)
    drop: Set[Tuple[int, int, int]] = field(default_factory=set)
    misroute: Set[Tuple[int, int, int]] = field(default_factory=set)


@dataclass
class RoundLog:
    rounds: List[int] = field(default_factory=list)
    messages: List[int] = field(default_factory=list)
    scalars: List[int] = field(default_factory=list)
    sent: Optional[np.ndarray] = None
    received: Optional[np.ndarray] = None

    def add(self, round_, messages, scalars):
        self.rounds.append(round_)
        self.messages.append(messages)
        self.scalars.append(scalars)

    def to_csv(self, path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["round", "messages", "scalars"])
            for row in zip(self.rounds, self.messages, self.scalars):
                w.writerow(row)
        return path

    @classmethod
    def from_csv(cls, path) -> "RoundLog":
        log = cls()
        with Path(path).open(newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            for rec in reader:
                log.add(*(int(v) for v in rec))
        return log


class Agent:
    """State and update rule of one agent; reads only its own row and inbox."""

    def __init__(self, i: int, problem: Problem, graph: Graph, cfg: SolverConfig, x0: np.ndarray):
        self.i = i
        self.problem, self.cfg = problem, cfg
        d = float(graph.degrees[i])
        self.deg = np.array([d])
        self.psi = cfg.gamma + 2.0 * cfg.c * self.deg + cfg.kappa
        self.x = np.array(x0, dtype=float, copy=True)

    def payload(self) -> np.ndarray:
        return self.x.copy()

    @staticmethod
    def _sum(payloads, n):
        acc = np.zeros(n)
        for v in payloads:
            acc = acc + v
        return acc

    def init(self, payloads):
        cfg, pb = self.cfg, self.problem
        x0 = self.x
        S0 = self._sum(payloads, x0.size)
        g0 = pb.agent_gradient(self.i, x0, cfg.seed, 0, None)
        num = (cfg.gamma + cfg.c * self.deg + cfg.kappa) * x0 + cfg.c * S0 - g0
        p1 = np.zeros_like(x0)
        if cfg.init_dual_step:
            p1 = cfg.alpha * (self.deg * x0 - S0)
            num = num - p1
        x_half = num / self.psi
        x1 = pb.agent_prox(self.i, x_half, self.psi[0])
        if not np.all(np.isfinite(x1)):
            raise NonFiniteIterate(0)
        self.k = 1
        self.x, self.x_prev, self.x_half = x1, x0, x_half
        self.s_prev, self.z, self.z_prev = x0.copy(), x0 + cfg.beta * (x1 - x0), x0.copy()
        self.g_prev, self.S_prev, self.p = g0, S0, p1

    def step(self, payloads):
        cfg, pb, k = self.cfg, self.problem, self.k
        x, x_prev = self.x, self.x_prev
        s = x + cfg.eta_at(k) * (x - x_prev)
        g = pb.agent_gradient(self.i, s, cfg.seed, k, cfg.batch)
        S = self._sum(payloads, x.size)
        row = lambda v: v[None, :]  # noqa: E731
        x_half = kernels.half_step(row(self.x_half), row(x), row(x_prev), row(S), row(self.S_prev),
                                   row(s), row(self.s_prev), row(self.z), row(self.z_prev), row(g),
                                   row(self.g_prev), self.deg, self.psi, cfg.alpha, cfg.c, cfg.gamma,
                                   cfg.kappa)[0]
        x_new = pb.agent_prox(self.i, x_half, self.psi[0])
        if not np.all(np.isfinite(x_new)):
            raise NonFiniteIterate(k)
        z_new = self.z + cfg.beta * (x_new - self.z)
        self.p = self.p + cfg.alpha * (self.deg * x - S)
        self.x, self.x_prev, self.x_half = x_new, x, x_half
        self.s_prev, self.z_prev, self.z = s, self.z, z_new
        self.g_prev, self.S_prev = g, S
        self.k = k + 1


def _stack(agents, attr):
    return np.stack([getattr(a, attr) for a in agents])


def stacked_state(agents: Sequence[Agent]) -> SolverState:
    return SolverState(k=agents[0].k, **{f: _stack(agents, f) for f in
                                         ("x", "x_prev", "x_half", "s_prev", "z", "z_prev", "g_prev", "S_prev", "p")})


def run_distributed(problem: Problem, graph: Graph, cfg: SolverConfig, rounds: int | None = None, x0=None,
                    order: Sequence[int] | None = None, guard: bool = True, faults: FaultPlan | None = None,
                    workers: int = 1, trace: bool = True, every: int = 1,
                    observer: Callable[[int, np.ndarray], None] | None = None, wall_clock: bool = False):
    """Execute SPPDM as ``rounds`` synchronous message-passing rounds.

    Round 0 exchanges ``x^0`` and produces ``x^1``; round ``k`` exchanges
    ``x^k`` and produces ``x^{k+1}``.  ``order`` permutes the agent update
    order inside a round and ``workers > 1`` runs agent updates on a thread
    pool; neither changes the result.  ``observer(k, X)`` sees the stacked
    iterate ``x^k`` after every round.

    Returns ``(final stacked state, RunTrace or None, RoundLog)``.
    """
    N = graph.n_nodes
    if problem.n_agents != N:
        raise LocalityViolation("problem and graph disagree on the number of agents")
    K = cfg.iterations if rounds is None else rounds
    if x0 is None:
        x0 = initial_point(problem, cfg.seed)
    x0 = np.asarray(x0, dtype=float)
    agents = [Agent(i, problem, graph, cfg, x0[i]) for i in range(N)]
    box = Mailbox(graph, drop_guard(graph) if guard else None)
    faults = faults or FaultPlan()
    order = list(range(N)) if order is None else list(order)
    if sorted(order) != list(range(N)):
        raise ValueError("order must be a permutation of the agents")
    log = RoundLog(sent=np.zeros(N, dtype=np.int64), received=np.zeros(N, dtype=np.int64))
    tr = RunTrace(meta={"algorithm": "sppdm-netsim", "seed": str(cfg.seed)}) if trace else None
    n = problem.dim
    t0 = time.perf_counter()
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None

    def record(k):
        if tr is None or not (k % every == 0 or k == K):
            return
        X = _stack(agents, "x")
        if k == 0:
            P = cfg.alpha * (graph.degrees[:, None] * X - _neighbour_sums(X, graph)) if cfg.init_dual_step \
                else np.zeros_like(X)
        else:
            P = _stack(agents, "p") + cfg.alpha * (graph.degrees[:, None] * X - _neighbour_sums(X, graph))
        record_iterate(tr, k, X, P, problem, graph, math.nan, t0, wall_clock)

    record(0)
    if observer is not None:
        observer(0, x0.copy())
    try:
        for r in range(K):
            msgs = 0
            for i in range(N):
                payload = agents[i].payload()
                for j in graph.neighbors[i]:
                    key = (r, i, j)
                    if key in faults.drop:
                        continue
                    target = (j + 1) % N if key in faults.misroute else j
                    copies = 2 if key in faults.duplicate else 1
                    for _ in range(copies):
                        box.post(i, target, r, payload)
                        msgs += 1
                        log.sent[i] += 1
                        log.received[target] += 1
            box.barrier(r)
            inbox = {i: box.collect(i) for i in order}

            def update(i):
                if r == 0:
                    agents[i].init(inbox[i])
                else:
                    agents[i].step(inbox[i])

            if pool is None:
                for i in order:
                    update(i)
            else:
                list(pool.map(update, order))
            log.add(r, msgs, msgs * n)
            record(r + 1)
            if observer is not None:
                observer(r + 1, _stack(agents, "x"))
    finally:
        if pool is not None:
            pool.shutdown()
    return stacked_state(agents), tr, log


def _neighbour_sums(X, graph: Graph):
    indptr, indices = graph.adjacency_csr()
    return kernels.neighbor_sum(np.ascontiguousarray(X), indptr, indices)


@dataclass
class CensusSummary:
    rounds: int
    messages: int
    scalars: int
    per_round_messages: int
    eps: Tuple[float, ...] = ()
    rounds_to_eps: Tuple[Optional[int], ...] = ()
    messages_to_eps: Tuple[Optional[int], ...] = ()


def communication_census(log: RoundLog, K: int | None = None, trace: RunTrace | None = None,
                         eps: Iterable[float] = ()) -> CensusSummary:
    """Message totals over the first ``K`` rounds, plus rounds and messages to each ``eps``.

    ``eps`` targets are matched against the trace's ``q_gap`` column.
    """
    K = len(log.rounds) if K is None else K
    msgs = int(sum(log.messages[:K]))
    scal = int(sum(log.scalars[:K]))
    per = log.messages[0] if log.messages else 0
    eps = tuple(eps)
    r_eps: Tuple[Optional[int], ...] = ()
    m_eps: Tuple[Optional[int], ...] = ()
    if trace is not None and eps:
        hits = rounds_to_eps(trace.column("q_gap"), eps)
        r_eps = tuple(None if h is None else int(trace.iters[h]) for h in hits)
        m_eps = tuple(None if r is None else int(sum(log.messages[:r])) for r in r_eps)
    return CensusSummary(K, msgs, scal, per, eps, r_eps, m_eps)
