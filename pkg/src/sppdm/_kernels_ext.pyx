# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels; signatures mirror ``sppdm._kernels_py``."""
import numpy as np
cimport numpy as cnp
from libc.stdint cimport uint64_t, int64_t
from libc.math cimport log1p

cnp.import_array()

NAME = "cython"

cdef uint64_t _GOLDEN = 0x9E3779B97F4A7C15ULL
cdef uint64_t _M1 = 0xBF58476D1CE4E5B9ULL
cdef uint64_t _M2 = 0x94D049BB133111EBULL
_MASK64 = (1 << 64) - 1


cdef inline uint64_t _finalize(uint64_t z) noexcept nogil:
    z = (z ^ (z >> 30)) * _M1
    z = (z ^ (z >> 27)) * _M2
    return z ^ (z >> 31)


cdef inline uint64_t _key(uint64_t seed, uint64_t agent, uint64_t iteration) noexcept nogil:
    cdef uint64_t z = _finalize(seed + _GOLDEN)
    z = _finalize((z ^ agent) + _GOLDEN)
    z = _finalize((z ^ iteration) + _GOLDEN)
    return z


cdef inline int64_t _draw(uint64_t key, uint64_t step, uint64_t m) noexcept nogil:
    cdef uint64_t z = _finalize(key + step * _GOLDEN)
    return <int64_t>(((z >> 32) * m) >> 32)


def stream_key(seed, agent, iteration):
    return int(_key(<uint64_t>(seed & _MASK64), <uint64_t>(agent & _MASK64),
                    <uint64_t>(iteration & _MASK64)))


def sample_indices(seed, agent, iteration, Py_ssize_t batch, Py_ssize_t m):
    cdef uint64_t key = _key(<uint64_t>(seed & _MASK64), <uint64_t>(agent & _MASK64),
                             <uint64_t>(iteration & _MASK64))
    out = np.empty(batch, dtype=np.int64)
    cdef int64_t[::1] o = out
    cdef Py_ssize_t j
    for j in range(batch):
        o[j] = _draw(key, <uint64_t>(j + 1), <uint64_t>m)
    return out


def neighbor_sum(const double[:, ::1] X, const int64_t[::1] indptr, const int64_t[::1] indices):
    cdef Py_ssize_t N = X.shape[0], n = X.shape[1], i, k, p, j
    out = np.zeros((N, n))
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(N):
            for p in range(indptr[i], indptr[i + 1]):
                j = indices[p]
                for k in range(n):
                    o[i, k] = o[i, k] + X[j, k]
    return out


def half_step(const double[:, ::1] xh, const double[:, ::1] x, const double[:, ::1] x_prev,
              const double[:, ::1] S, const double[:, ::1] S_prev,
              const double[:, ::1] s, const double[:, ::1] s_prev,
              const double[:, ::1] z, const double[:, ::1] z_prev,
              const double[:, ::1] g, const double[:, ::1] g_prev,
              const double[::1] deg, const double[::1] psi,
              double alpha, double c, double gamma, double kappa):
    cdef Py_ssize_t N = x.shape[0], n = x.shape[1], i, k
    cdef double inv, a, t1, t2, t3, t4
    cdef double cma = c - alpha, cpa = c + alpha
    out = np.empty((N, n))
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(N):
            inv = 1.0 / psi[i]
            a = deg[i] * inv
            for k in range(n):
                t1 = a * (cma * x[i, k] - c * x_prev[i, k])
                t2 = inv * (cpa * S[i, k] - c * S_prev[i, k])
                t3 = inv * (gamma * (s[i, k] - s_prev[i, k]) + kappa * (z[i, k] - z_prev[i, k]))
                t4 = inv * (g[i, k] - g_prev[i, k])
                o[i, k] = xh[i, k] + t1 + t2 + t3 - t4
    return out


def prox_l1_box(const double[:, ::1] V, const double[::1] psi, const double[::1] weight,
                double lo, double hi):
    cdef Py_ssize_t N = V.shape[0], n = V.shape[1], i, k
    cdef double thr, v, u
    out = np.empty((N, n))
    cdef double[:, ::1] o = out
    with nogil:
        for i in range(N):
            thr = weight[i] / psi[i]
            for k in range(n):
                v = V[i, k]
                if v > thr:
                    u = v - thr
                elif v < -thr:
                    u = v + thr
                else:
                    u = 0.0
                if u < lo:
                    u = lo
                if u > hi:
                    u = hi
                o[i, k] = u
    return out


def trunc_value(const double[:, ::1] H, const double[::1] y, double rho, const double[::1] x):
    cdef Py_ssize_t m = H.shape[0], n = H.shape[1], j, k
    cdef double acc = 0.0, r
    with nogil:
        for j in range(m):
            r = -y[j]
            for k in range(n):
                r = r + H[j, k] * x[k]
            acc = acc + log1p(r * r / rho)
    return rho / (2.0 * m) * acc


cdef inline void _grad_row(const double[:, ::1] H, const double[::1] y, double rho,
                           const double[::1] x, Py_ssize_t j, double[::1] g) noexcept nogil:
    cdef Py_ssize_t n = H.shape[1], k
    cdef double r = -y[j], w
    for k in range(n):
        r = r + H[j, k] * x[k]
    w = r * (rho / (rho + r * r))
    for k in range(n):
        g[k] = g[k] + w * H[j, k]


cdef void _grad_agent(const double[:, ::1] H, const double[::1] y, double rho,
                      const double[::1] x, const int64_t[::1] idx, Py_ssize_t cnt,
                      bint full, double[::1] g) noexcept nogil:
    cdef Py_ssize_t n = H.shape[1], k, t
    for k in range(n):
        g[k] = 0.0
    if full:
        for t in range(cnt):
            _grad_row(H, y, rho, x, t, g)
    else:
        for t in range(cnt):
            _grad_row(H, y, rho, x, idx[t], g)
    for k in range(n):
        g[k] = g[k] / cnt


def trunc_grad(const double[:, ::1] H, const double[::1] y, double rho, const double[::1] x, idx):
    cdef Py_ssize_t n = H.shape[1]
    out = np.empty(n)
    cdef double[::1] g = out
    cdef const int64_t[::1] iv
    if idx is None:
        iv = np.empty(0, dtype=np.int64)
        _grad_agent(H, y, rho, x, iv, H.shape[0], True, g)
    else:
        iv = np.ascontiguousarray(idx, dtype=np.int64)
        _grad_agent(H, y, rho, x, iv, iv.shape[0], False, g)
    return out


def trunc_grad_stack(const double[:, :, ::1] H, const double[:, ::1] y, double rho,
                     const double[:, ::1] X, seed, iteration, Py_ssize_t batch):
    cdef Py_ssize_t N = H.shape[0], m = H.shape[1], n = H.shape[2], i, t
    cdef uint64_t s = <uint64_t>(seed & _MASK64), it = <uint64_t>(iteration & _MASK64), key
    out = np.empty((N, n))
    cdef double[:, ::1] G = out
    idx_buf = np.empty(max(batch, 1), dtype=np.int64)
    cdef int64_t[::1] idx = idx_buf
    with nogil:
        for i in range(N):
            if batch == 0:
                _grad_agent(H[i], y[i], rho, X[i], idx, m, True, G[i])
            else:
                key = _key(s, <uint64_t>i, it)
                for t in range(batch):
                    idx[t] = _draw(key, <uint64_t>(t + 1), <uint64_t>m)
                _grad_agent(H[i], y[i], rho, X[i], idx, batch, False, G[i])
    return out
