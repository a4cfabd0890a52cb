import math

import numpy as np
import pytest
import scipy.sparse as sp

from sppdm.errors import BadParameters, NonFiniteIterate, PreconditionViolated
from sppdm.graph import circle, complete, incidence_matrices, metropolis_weights, path, single
from sppdm.metrics import stationarity_and_consensus
from sppdm.oracles import L1Box, Problem, QuadraticLoss, ZeroReg, generate_regression
from sppdm.solver import (
    BaselineState,
    PrimalDualReference,
    SolverConfig,
    build_update_matrices,
    dgd_step_size,
    dng_discrepancies,
    dng_equivalence_form,
    initial_point,
    iterate_sppdm,
    nesterov_schedule,
    next_dual,
    prox_dgd_step,
    psgd_step,
    read_state_csv,
    run_baseline,
    run_sppdm,
    sppdm_init,
    sppdm_step,
    write_state_csv,
)

from conftest import desk_problem


def _theta_eta(k):
    """Independent evaluation of the momentum recursion with a plain loop."""
    th_prev, th = 1.0, 1.0
    eta = 0.0
    for _ in range(k):
        th_prev, th = th, (1.0 + math.sqrt(1.0 + 4.0 * th * th)) / 2.0
        eta = (th_prev - 1.0) / th
    return eta, th


def _quadratic_problem(N, n, seed, reg=None):
    rng = np.random.default_rng(seed)
    terms = []
    for _ in range(N):
        M = rng.standard_normal((n, n))
        terms.append(QuadraticLoss(M @ M.T / n + 0.5 * np.eye(n), rng.standard_normal(n)))
    return Problem(terms, reg or ZeroReg())


# momentum schedule -----------------------------------------------------------

def test_nesterov_first_terms():
    assert nesterov_schedule(0) == 0.0
    assert nesterov_schedule(1) == 0.0
    _, th1 = _theta_eta(1)
    assert th1 == pytest.approx((1 + math.sqrt(5)) / 2, abs=1e-6)


def test_nesterov_matches_recursion():
    for k in range(2, 60):
        assert nesterov_schedule(k) == pytest.approx(_theta_eta(k)[0], rel=1e-14)
    eta2, th2 = _theta_eta(2)
    assert th2 == pytest.approx(2.193527, abs=1e-6)
    assert nesterov_schedule(2) == pytest.approx(eta2, rel=1e-15)


def test_nesterov_tends_to_one():
    assert 0.99 < nesterov_schedule(1000) < 1.0


# configuration ---------------------------------------------------------------

@pytest.mark.parametrize("bad", [dict(alpha=0), dict(beta=1.5), dict(beta=0), dict(gamma=-1), dict(c=0),
                                 dict(kappa=0), dict(eta=-0.1), dict(momentum="heavy"), dict(batch=0)])
def test_config_validation(bad):
    with pytest.raises(BadParameters):
        SolverConfig(**bad)


def test_config_eta_at():
    assert SolverConfig(momentum="zero").eta_at(50) == 0.0
    assert SolverConfig(momentum="constant", eta=0.3).eta_at(7) == 0.3
    assert SolverConfig().eta_at(5) == nesterov_schedule(5)


# update matrices -------------------------------------------------------------

def test_update_matrices_circle3():
    m = build_update_matrices(circle(3), SolverConfig())
    assert np.all(m.psi == 12)
    U, Ut = m.U.toarray(), m.Ut.toarray()
    assert np.allclose(np.diag(U), 0, atol=1e-15)
    assert np.allclose(U[~np.eye(3, dtype=bool)], 1 / 3, rtol=1e-15)
    assert np.allclose(np.diag(Ut), 1 / 3, rtol=1e-15)
    assert np.allclose(Ut[~np.eye(3, dtype=bool)], 1 / 6, rtol=1e-15)


@pytest.mark.parametrize("g", [circle(5), path(4), complete(4)])
def test_update_matrices_reconstruction(g):
    cfg = SolverConfig(alpha=1.3, c=2.2, gamma=3.1, kappa=0.7)
    m = build_update_matrices(g, cfg)
    pair = incidence_matrices(g)
    Pinv = np.diag(1 / (cfg.gamma + 2 * cfg.c * g.degrees + cfg.kappa))
    Ut = cfg.c * Pinv @ (pair.B.T @ pair.B)
    U = Ut - cfg.alpha * Pinv @ (pair.A.T @ pair.A)
    assert np.max(np.abs(m.U.toarray() - U)) <= 1e-12
    assert np.max(np.abs(m.Ut.toarray() - Ut)) <= 1e-12


# initialization --------------------------------------------------------------

def test_init_single_agent_quadratic():
    pb = Problem([QuadraticLoss(np.eye(1), np.zeros(1))], ZeroReg())
    cfg = SolverConfig(gamma=3, kappa=1, c=5)
    st = sppdm_init(pb, build_update_matrices(single(), cfg), cfg, np.array([[1.0]]))
    assert st.x_half[0, 0] == 0.75 and st.x[0, 0] == 0.75


def test_init_fixed_point():
    Q = np.diag([1.0, 2.0])
    x0 = np.array([0.4, -0.3])
    pb = Problem([QuadraticLoss(Q, -Q @ x0)] * 3, ZeroReg())
    cfg = SolverConfig()
    st = sppdm_init(pb, build_update_matrices(circle(3), cfg), cfg, np.tile(x0, (3, 1)))
    assert np.allclose(st.x, x0, rtol=0, atol=1e-15)


def test_init_deterministic(desk):
    pb, _, g = desk
    cfg = SolverConfig(batch=4)
    x0 = initial_point(pb, 3)
    a = sppdm_init(pb, build_update_matrices(g, cfg), cfg, x0)
    b = sppdm_init(pb, build_update_matrices(g, cfg), cfg, x0)
    for f in ("x", "x_half", "z", "p"):
        assert np.array_equal(getattr(a, f), getattr(b, f))


def test_initial_point_range():
    pb, _ = desk_problem()
    x0 = initial_point(pb, 1)
    assert x0.shape == (5, 32) and np.all(np.abs(x0) <= 0.1)


# equivalence with the explicit primal-dual iteration -------------------------

@pytest.mark.parametrize("seed", range(3))
@pytest.mark.parametrize("g", [circle(3), path(4)], ids=["circle3", "path4"])
@pytest.mark.parametrize("batch", [None, 4])
@pytest.mark.parametrize("momentum", ["nesterov", "zero"])
def test_matches_primal_dual_reference(seed, g, batch, momentum):
    pb, _ = desk_problem(seed, N=g.n_nodes, n=8, S=2)
    cfg = SolverConfig(batch=batch, seed=seed, momentum=momentum)
    mats = build_update_matrices(g, cfg)
    x0 = initial_point(pb, seed)
    st = sppdm_init(pb, mats, cfg, x0)
    ref = PrimalDualReference(pb, g, cfg)
    ref.init(x0)
    for _ in range(50):
        assert np.max(np.abs(st.x - ref.x)) <= 1e-10
        ref.step()
        assert np.max(np.abs(next_dual(st, mats, cfg) - ref.p)) <= 1e-12
        st = sppdm_step(st, pb, mats, cfg)
    assert np.max(np.abs(st.x - ref.x)) <= 1e-10


def test_reference_initial_dual_zero():
    pb, _ = desk_problem(0, N=3, n=4, S=1)
    ref = PrimalDualReference(pb, circle(3), SolverConfig())
    ref.init(initial_point(pb, 0))
    assert not ref.p.any()


def test_init_dual_step_variant_matches_reference():
    pb, _ = desk_problem(2, N=4, n=6, S=2)
    g = path(4)
    cfg = SolverConfig(batch=3, init_dual_step=True)
    mats = build_update_matrices(g, cfg)
    x0 = initial_point(pb, 2)
    st = sppdm_init(pb, mats, cfg, x0)
    ref = PrimalDualReference(pb, g, cfg)
    ref.init(x0)
    for _ in range(30):
        st = sppdm_step(st, pb, mats, cfg)
        ref.step()
    assert np.max(np.abs(st.x - ref.x)) <= 1e-10


def test_kkt_point_is_fixed():
    g = path(3)
    pb = _quadratic_problem(3, 2, 0)
    Qs = sum(t.Q for t in pb.smooth)
    qs = sum(t.q for t in pb.smooth)
    xstar = np.linalg.solve(Qs, -qs)
    X = np.tile(xstar, (3, 1))
    A = incidence_matrices(g).A.astype(float)
    lam = np.linalg.lstsq(A.T, -pb.gradients(X), rcond=None)[0]
    assert np.allclose(A.T @ lam, -pb.gradients(X), atol=1e-13)
    ref = PrimalDualReference(pb, g, SolverConfig(batch=None))
    ref.init(X)
    ref.lam, ref.x, ref.x_prev, ref.z = lam, X.copy(), X.copy(), X.copy()
    ref.step()
    assert np.max(np.abs(ref.x - X)) <= 1e-12
    assert np.max(np.abs(ref.z - X)) <= 1e-12


def test_box_feasibility():
    pb, _ = desk_problem(0, l1_weight=0.0, box=(-0.05, 0.05))
    for st in iterate_sppdm(pb, circle(5), SolverConfig(batch=2), iterations=100):
        assert st.x.min() >= -0.05 and st.x.max() <= 0.05


def test_nonfinite_iterate_reports_iteration():
    pb, _ = desk_problem(0)
    x0 = initial_point(pb, 0)
    x0[0, 0] = np.nan
    with pytest.raises(NonFiniteIterate) as err:
        run_sppdm(pb, circle(5), SolverConfig(), x0, 3)
    assert err.value.iteration == 0


def test_run_deterministic(desk):
    pb, _, g = desk
    a = run_sppdm(pb, g, SolverConfig(batch=5, seed=4), iterations=40)
    b = run_sppdm(pb, g, SolverConfig(batch=5, seed=4), iterations=40)
    assert np.array_equal(a.x, b.x)


def test_backends_agree_on_trajectory(use_backend, desk):
    pb, _, g = desk
    out = {}
    for name in ("python", "cython"):
        try:
            use_backend(name)
        except ImportError:
            pytest.skip("compiled backend not built")
        out[name] = run_sppdm(pb, g, SolverConfig(batch=5), iterations=200).x
    assert np.max(np.abs(out["python"] - out["cython"])) <= 1e-10


# reductions ------------------------------------------------------------------

def _dense_pg_extra(problem, g, cfg, x0, iterations):
    """PG-EXTRA written straight from its recursion with dense matrices."""
    pair = incidence_matrices(g)
    psi = cfg.gamma + 2 * cfg.c * g.degrees + cfg.kappa
    Pinv = np.diag(1 / psi)
    Ut = cfg.c * Pinv @ (pair.B.T @ pair.B)
    U = Ut - cfg.alpha * Pinv @ (pair.A.T @ pair.A)
    W = U + (cfg.gamma + cfg.kappa) * Pinv
    Wt = Ut + (cfg.gamma + cfg.kappa) * Pinv
    g0 = problem.gradients(x0)
    half = Wt @ x0 - Pinv @ g0
    xs = [x0, problem.prox(half, psi)]
    for _ in range(iterations - 1):
        x, xp = xs[-1], xs[-2]
        half = half + W @ x - Wt @ xp - Pinv @ (problem.gradients(x) - problem.gradients(xp))
        xs.append(problem.prox(half, psi))
    return xs


@pytest.mark.parametrize("seed", range(3))
def test_pg_extra_reduction(seed, desk):
    pb, _, g = desk
    cfg = SolverConfig(momentum="zero", beta=1.0, batch=None)
    x0 = initial_point(pb, seed)
    ref = _dense_pg_extra(pb, g, cfg, x0, 100)
    xs = [x0]
    run_sppdm(pb, g, cfg, x0, 100, observer=lambda s: xs.append(s.x))
    assert max(np.max(np.abs(a - b)) for a, b in zip(xs, ref)) <= 1e-12
    ys = [x0]
    run_baseline("pg-extra", pb, g, cfg, x0, 100, observer=lambda s: ys.append(s.x))
    assert max(np.max(np.abs(a - b)) for a, b in zip(ys, ref)) <= 1e-12


def test_pg_extra_converges_convex_l1():
    pb = _quadratic_problem(2, 3, 5, reg=L1Box(0.05, -np.inf, np.inf))
    g = path(2)
    cfg = SolverConfig(momentum="zero", beta=1.0, batch=None, gamma=3.0 * pb.L + 1)
    st = run_baseline("pg-extra", pb, g, cfg, np.zeros((2, 3)), 2000)
    assert stationarity_and_consensus(st.x, pb)[1] <= 1e-8


def test_pg_extra_fixed_point():
    Q = np.diag([1.0, 2.0])
    x = np.array([0.4, -0.3])
    pb = Problem([QuadraticLoss(Q, -Q @ x)] * 3, ZeroReg())
    cfg = SolverConfig(momentum="zero", beta=1.0)
    st = run_baseline("pg-extra", pb, circle(3), cfg, np.tile(x, (3, 1)), 20)
    assert np.allclose(st.x, x, rtol=0, atol=1e-14)


def test_dng_identity():
    for g in (circle(5), path(4), complete(4)):
        cfg = SolverConfig(alpha=2.0, c=2.0, beta=1.0)
        m = build_update_matrices(g, cfg)
        pair = incidence_matrices(g)
        lhs = np.eye(g.n_nodes) - m.Wt(cfg.gamma, cfg.kappa).toarray()
        rhs = cfg.alpha * np.diag(1 / m.psi) @ (pair.A.T @ pair.A)
        assert np.max(np.abs(lhs - rhs)) <= 1e-12


@pytest.mark.parametrize("init_dual", [False, True])
@pytest.mark.parametrize("momentum", ["nesterov", "zero"])
def test_dng_reduction(init_dual, momentum):
    pb = _quadratic_problem(3, 4, 1)
    cfg = SolverConfig(alpha=2.0, c=2.0, beta=1.0, batch=None, momentum=momentum, init_dual_step=init_dual)
    x0 = np.random.default_rng(0).uniform(-1, 1, size=(3, 4))
    assert dng_discrepancies(pb, circle(3), cfg, x0, 30).max() <= 1e-9


def test_dng_first_correction():
    pb = _quadratic_problem(3, 2, 2)
    cfg = SolverConfig(alpha=2.0, c=2.0, beta=1.0, init_dual_step=True)
    m = build_update_matrices(circle(3), cfg)
    x0 = np.random.default_rng(1).standard_normal((3, 2))
    Wt = m.Wt(cfg.gamma, cfg.kappa).toarray()
    zero = np.zeros_like(x0)
    C = dng_equivalence_form([x0], x0, zero, m, cfg) - Wt @ x0
    assert np.allclose(C, -(x0 - Wt @ x0), atol=1e-15)


@pytest.mark.parametrize("bad", [dict(alpha=1.0), dict(beta=0.9)])
def test_dng_preconditions(bad):
    cfg = SolverConfig(**{**dict(alpha=2.0, c=2.0, beta=1.0), **bad})
    m = build_update_matrices(circle(3), cfg)
    x = np.zeros((3, 2))
    with pytest.raises(PreconditionViolated):
        dng_equivalence_form([x], x, x, m, cfg)


def test_dng_rejects_regularizer():
    pb, _ = desk_problem(0, N=3, n=2, S=1)
    cfg = SolverConfig(alpha=2.0, c=2.0, beta=1.0)
    x = np.zeros((3, 2))
    with pytest.raises(PreconditionViolated):
        dng_equivalence_form([x], x, x, build_update_matrices(circle(3), cfg), cfg, pb)


# diminishing-step baselines --------------------------------------------------

def test_dgd_first_step():
    assert dgd_step_size(0) == pytest.approx(1 / 30, rel=1e-15)


def test_prox_dgd_is_centralized_gd_on_complete_graph():
    Q = np.diag([1.0, 3.0])
    q = np.array([0.5, -1.0])
    pb = Problem([QuadraticLoss(Q, q)] * 4, ZeroReg())
    W = sp.csr_matrix(metropolis_weights(complete(4)))
    xbar = np.random.default_rng(0).standard_normal(2)
    st = BaselineState(k=0, x=np.tile(xbar, (4, 1)))
    for k in range(10):
        st = prox_dgd_step(st, pb, W)
        xbar = xbar - dgd_step_size(k) * (Q @ xbar + q)
        assert np.allclose(st.x, xbar, rtol=0, atol=1e-13)


def test_prox_dgd_and_psgd_fixed_point():
    Q = np.diag([1.0, 2.0])
    x = np.array([0.4, -0.3])
    pb = Problem([QuadraticLoss(Q, -Q @ x)] * 3, L1Box(0.0, -1, 1))
    W = sp.csr_matrix(metropolis_weights(circle(3)))
    X = np.tile(x, (3, 1))
    assert np.allclose(prox_dgd_step(BaselineState(0, X), pb, W).x, X, atol=1e-15)
    assert np.allclose(psgd_step(BaselineState(0, X), pb, W, 0, None).x, X, atol=1e-15)


def test_psgd_clamps():
    pb = Problem([QuadraticLoss(np.eye(2), np.array([-100.0, 100.0]))] * 2, L1Box(0.0, -1, 1))
    W = sp.csr_matrix(metropolis_weights(path(2)))
    st = psgd_step(BaselineState(0, np.zeros((2, 2))), pb, W, 0, None)
    assert np.array_equal(st.x, np.tile([1.0, -1.0], (2, 1)))


def test_psgd_full_batch_matches_prox_dgd_box():
    pb, _ = desk_problem(0, l1_weight=0.0)
    g = circle(5)
    x0 = initial_point(pb, 0)
    a = run_baseline("psgd", pb, g, SolverConfig(batch=None), x0, 50)
    b = run_baseline("prox-dgd", pb, g, SolverConfig(batch=None), x0, 50)
    assert np.max(np.abs(a.x - b.x)) <= 1e-14


def test_unknown_baseline(desk):
    pb, _, g = desk
    with pytest.raises(BadParameters):
        run_baseline("admm", pb, g, SolverConfig(), iterations=2)


def test_state_csv_roundtrip(tmp_path, desk):
    pb, _, g = desk
    st = run_sppdm(pb, g, SolverConfig(batch=3), iterations=5)
    back = read_state_csv(write_state_csv(st, tmp_path / "s.csv"))
    assert back.k == st.k
    for f in ("x", "x_prev", "x_half", "s_prev", "z", "z_prev", "g_prev", "S_prev", "p"):
        assert np.array_equal(getattr(back, f), getattr(st, f))
