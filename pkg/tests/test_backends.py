import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from sppdm._backend import BACKEND, available_backends, get_kernels
from sppdm.bench import format_table, kernel_timings
from sppdm.graph import random_connected

PY = get_kernels("python")
needs_ext = pytest.mark.skipif("cython" not in available_backends(), reason="compiled backend not built")


def test_python_always_available():
    assert "python" in available_backends()
    with pytest.raises(ImportError):
        get_kernels("fortran")


@needs_ext
def test_default_is_compiled():
    assert get_kernels().NAME == "cython"


@pytest.mark.parametrize("name", ["python", "cython"])
def test_env_var_forces_backend(name):
    if name not in available_backends():
        pytest.skip("backend not built")
    out = subprocess.run([sys.executable, "-c", "import sppdm; print(sppdm.BACKEND)"],
                         env=dict(os.environ, SPPDM_BACKEND=name), capture_output=True, text=True, check=True)
    assert out.stdout.strip() == name


finite = st.floats(-1e3, 1e3, allow_nan=False)


@needs_ext
@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**63 - 1), agent=st.integers(0, 1000), it=st.integers(0, 10**6),
       batch=st.integers(1, 64), m=st.integers(1, 500))
def test_sampling_bit_identical(seed, agent, it, batch, m):
    ext = get_kernels("cython")
    assert ext.stream_key(seed, agent, it) == PY.stream_key(seed, agent, it)
    assert np.array_equal(ext.sample_indices(seed, agent, it, batch, m), PY.sample_indices(seed, agent, it, batch, m))


@needs_ext
@settings(max_examples=30, deadline=None)
@given(n=st.integers(2, 10), p=st.floats(0, 1), seed=st.integers(0, 2**31), d=st.integers(1, 5))
def test_neighbor_sum_bit_identical(n, p, seed, d):
    g = random_connected(n, p, np.random.default_rng(seed))
    X = np.random.default_rng(seed).standard_normal((n, d))
    indptr, indices = g.adjacency_csr()
    ref = np.stack([X[list(g.neighbors[i])].sum(axis=0) if g.neighbors[i] else np.zeros(d) for i in range(n)])
    got_py = PY.neighbor_sum(X, indptr, indices)
    got_ext = get_kernels("cython").neighbor_sum(X, indptr, indices)
    assert np.array_equal(got_py, got_ext)
    assert np.allclose(got_py, ref, rtol=1e-14, atol=1e-14)


@needs_ext
@settings(max_examples=30, deadline=None)
@given(arrs=st.lists(arrays(np.float64, (3, 4), elements=finite), min_size=11, max_size=11),
       psi=arrays(np.float64, 3, elements=st.floats(1, 50)), a=st.floats(0.01, 5), c=st.floats(0.01, 5),
       gm=st.floats(0.01, 5), k=st.floats(0.01, 5))
def test_half_step_bit_identical(arrs, psi, a, c, gm, k):
    deg = np.array([1.0, 2.0, 1.0])
    ext = get_kernels("cython")
    assert np.array_equal(ext.half_step(*arrs, deg, psi, a, c, gm, k), PY.half_step(*arrs, deg, psi, a, c, gm, k))


@needs_ext
@settings(max_examples=30, deadline=None)
@given(V=arrays(np.float64, (3, 5), elements=finite), psi=arrays(np.float64, 3, elements=st.floats(0.1, 50)),
       w=arrays(np.float64, 3, elements=st.floats(0, 2)))
def test_prox_bit_identical(V, psi, w):
    ext = get_kernels("cython")
    assert np.array_equal(ext.prox_l1_box(V, psi, w, -1.0, 1.0), PY.prox_l1_box(V, psi, w, -1.0, 1.0))


@needs_ext
@pytest.mark.parametrize("batch", [0, 1, 13, 40])
def test_trunc_grad_agrees_to_rounding(batch):
    rng = np.random.default_rng(batch)
    H, y, X = rng.standard_normal((4, 20, 7)), rng.standard_normal((4, 20)), rng.standard_normal((4, 7))
    a = get_kernels("cython").trunc_grad_stack(H, y, 3.0, X, 5, 9, batch)
    b = PY.trunc_grad_stack(H, y, 3.0, X, 5, 9, batch)
    assert np.allclose(a, b, rtol=1e-13, atol=1e-15)
    assert get_kernels("cython").trunc_value(H[0], y[0], 3.0, X[0]) == pytest.approx(PY.trunc_value(H[0], y[0], 3.0, X[0]), rel=1e-13)


def test_benchmark_table():
    t = kernel_timings(repeat=1, number=5)
    assert set(next(iter(t.values()))) == set(available_backends())
    text = format_table(t)
    assert "half_step" in text and "python (us)" in text


def test_module_backend_name():
    assert BACKEND in available_backends()
