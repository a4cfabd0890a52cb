import numpy as np
import pytest

from sppdm.errors import DuplicatePayload, LocalityViolation, MissingPayload
from sppdm.graph import circle, complete, path, single
from sppdm.netsim import FaultPlan, Mailbox, RoundLog, communication_census, drop_guard, run_distributed
from sppdm.oracles import Problem, QuadraticLoss, ZeroReg
from sppdm.solver import SolverConfig, initial_point, run_sppdm

from conftest import desk_problem


def _matrix_trajectory(pb, g, cfg, K, x0):
    xs = [x0]
    run_sppdm(pb, g, cfg, x0, K, observer=lambda s: xs.append(s.x.copy()))
    return xs


def _net_trajectory(pb, g, cfg, K, x0, **kw):
    ys = {}
    _, _, log = run_distributed(pb, g, cfg, K, x0, trace=False, observer=lambda k, X: ys.__setitem__(k, X.copy()), **kw)
    return [ys[k] for k in range(K + 1)], log


def test_desk_200_rounds_bit_identical(desk):
    pb, _, g = desk
    cfg = SolverConfig(batch=13)
    x0 = initial_point(pb, 0)
    xs = _matrix_trajectory(pb, g, cfg, 200, x0)
    ys, log = _net_trajectory(pb, g, cfg, 200, x0)
    assert max(float(np.max(np.abs(a - b))) for a, b in zip(xs, ys)) == 0.0
    assert set(log.messages) == {10}
    assert set(log.scalars) == {10 * 32}


@pytest.mark.parametrize("seed", range(3))
@pytest.mark.parametrize("g", [circle(5), path(4), complete(4)], ids=["circle5", "path4", "complete4"])
@pytest.mark.parametrize("momentum", ["nesterov", "zero"])
def test_bit_equivalence_all_topologies(seed, g, momentum):
    pb, _ = desk_problem(seed, N=g.n_nodes, n=6, S=2)
    cfg = SolverConfig(batch=3, seed=seed, momentum=momentum)
    x0 = initial_point(pb, seed)
    xs = _matrix_trajectory(pb, g, cfg, 40, x0)
    ys, log = _net_trajectory(pb, g, cfg, 40, x0)
    assert all(np.array_equal(a, b) for a, b in zip(xs, ys))
    assert set(log.messages) == {2 * g.n_edges}


def test_order_and_threads_do_not_matter(desk):
    pb, _, g = desk
    cfg = SolverConfig(batch=4)
    x0 = initial_point(pb, 1)
    base, _ = _net_trajectory(pb, g, cfg, 30, x0)
    perm, _ = _net_trajectory(pb, g, cfg, 30, x0, order=[3, 0, 4, 2, 1])
    thr, _ = _net_trajectory(pb, g, cfg, 30, x0, workers=3)
    assert all(np.array_equal(a, b) and np.array_equal(a, c) for a, b, c in zip(base, perm, thr))


def test_backends_bit_identical_within_backend(use_backend, desk):
    pb, _, g = desk
    for name in ("python", "cython"):
        try:
            use_backend(name)
        except ImportError:
            continue
        cfg = SolverConfig(batch=4)
        x0 = initial_point(pb, 0)
        xs = _matrix_trajectory(pb, g, cfg, 20, x0)
        ys, _ = _net_trajectory(pb, g, cfg, 20, x0)
        assert all(np.array_equal(a, b) for a, b in zip(xs, ys))


def test_single_agent_sends_nothing():
    pb = Problem([QuadraticLoss(np.eye(2), np.ones(2))], ZeroReg())
    _, _, log = run_distributed(pb, single(), SolverConfig(), 5, np.zeros((1, 2)))
    assert log.messages == [0] * 5


def test_trace_matches_matrix_trace(desk):
    from sppdm.metrics import trace_sppdm

    pb, _, g = desk
    cfg = SolverConfig(batch=4)
    x0 = initial_point(pb, 0)
    a, _ = trace_sppdm(pb, g, cfg, x0, 25)
    _, b, _ = run_distributed(pb, g, cfg, 25, x0)
    for col in ("stationarity", "consensus", "ax_norm2"):
        assert np.array_equal(a.column(col), b.column(col))
    assert np.allclose(a.column("q_gap"), b.column("q_gap"), rtol=1e-12, atol=0)


# accounting ------------------------------------------------------------------

def test_census_circle3():
    pb, _ = desk_problem(0, N=3, n=4, S=1)
    _, _, log = run_distributed(pb, circle(3), SolverConfig(), 100, trace=False)
    c = communication_census(log, 100)
    assert c.messages == 600 and c.scalars == 2400 and c.per_round_messages == 6
    _, _, log2 = run_distributed(pb, circle(3), SolverConfig(), 200, trace=False)
    c2 = communication_census(log2, 200)
    assert c2.messages == 2 * c.messages and c2.scalars == 2 * c.scalars


def test_census_eps_accounting(desk):
    pb, _, g = desk
    _, tr, log = run_distributed(pb, g, SolverConfig(), 300)
    c = communication_census(log, trace=tr, eps=(1e-2, 1e-3))
    assert all(r is not None for r in c.rounds_to_eps)
    assert c.messages_to_eps == tuple(10 * r for r in c.rounds_to_eps)


def test_per_agent_counts(desk):
    pb, _, g = desk
    _, _, log = run_distributed(pb, g, SolverConfig(), 7, trace=False)
    assert np.array_equal(log.sent, 7 * g.degrees) and np.array_equal(log.received, 7 * g.degrees)


def test_roundlog_csv(tmp_path, desk):
    pb, _, g = desk
    _, _, log = run_distributed(pb, g, SolverConfig(), 4, trace=False)
    p = log.to_csv(tmp_path / "r.csv")
    assert p.read_text().splitlines()[0] == "round,messages,scalars"
    back = RoundLog.from_csv(p)
    assert back.rounds == log.rounds and back.messages == log.messages and back.scalars == log.scalars


# guards ----------------------------------------------------------------------

def test_duplicate_send_detected(desk):
    pb, _, g = desk
    with pytest.raises(DuplicatePayload, match="round 3"):
        run_distributed(pb, g, SolverConfig(), 6, faults=FaultPlan(duplicate={(3, 1, 2)}), trace=False)


def test_dropped_send_detected(desk):
    pb, _, g = desk
    with pytest.raises(MissingPayload, match="agent 1 to agent 2"):
        run_distributed(pb, g, SolverConfig(), 6, faults=FaultPlan(drop={(2, 1, 2)}), trace=False)


def test_misroute_is_locality_violation():
    pb, _ = desk_problem(0, N=4, n=3, S=1)
    with pytest.raises(LocalityViolation):
        run_distributed(pb, path(4), SolverConfig(), 3, faults=FaultPlan(misroute={(1, 0, 1)}), trace=False)


def test_mailbox_visibility():
    g = path(3)
    box = Mailbox(g, drop_guard(g))
    box.post(0, 1, 0, np.ones(2))
    box.post(2, 1, 0, np.zeros(2))
    assert box._visible[1] == []
    box.barrier(0)
    got = box.collect(1)
    assert np.array_equal(got[0], np.ones(2)) and np.array_equal(got[1], np.zeros(2))


def test_guard_mode():
    with pytest.raises(ValueError):
        drop_guard(path(2), "lenient")
