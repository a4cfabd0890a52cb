"""Pure numpy implementations of the hot kernels.

Every function here has a twin with the same signature in the compiled
``_kernels_ext`` module.  Elementwise kernels perform the same IEEE
operations in the same order as the compiled versions and agree bit for bit;
the truncated-loss gradient uses BLAS dot products here and agrees with the
compiled loop to rounding only.
"""
import numpy as np

NAME = "python"

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1


def _finalize(z):
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def stream_key(seed, agent, iteration):
    """64-bit key of the sample stream owned by ``agent`` at ``iteration``."""
    z = np.array([seed & _MASK64], dtype=np.uint64)
    z = _finalize(z + _GOLDEN)
    z = _finalize((z ^ np.uint64(agent & _MASK64)) + _GOLDEN)
    z = _finalize((z ^ np.uint64(iteration & _MASK64)) + _GOLDEN)
    return int(z[0])


def sample_indices(seed, agent, iteration, batch, m):
    """``batch`` indices drawn uniformly with replacement from ``range(m)``.

    Output ``j`` is the ``j``-th SplitMix64 draw from the stream keyed by
    ``(seed, agent, iteration)``, mapped to ``[0, m)`` by multiply-shift.
    """
    key = np.uint64(stream_key(seed, agent, iteration))
    steps = np.arange(1, batch + 1, dtype=np.uint64)
    z = _finalize(key + steps * _GOLDEN)
    return (((z >> np.uint64(32)) * np.uint64(m)) >> np.uint64(32)).astype(np.int64)


def neighbor_sum(X, indptr, indices):
    """Row ``i`` is the sum of ``X[j]`` over neighbours ``j`` of ``i`` in CSR order."""
    N = X.shape[0]
    out = np.zeros_like(X)
    deg = np.diff(indptr)
    if N == 0 or deg.max(initial=0) == 0:
        return out
    for t in range(int(deg.max())):
        rows = np.nonzero(deg > t)[0]
        out[rows] += X[indices[indptr[rows] + t]]
    return out


def half_step(xh, x, x_prev, S, S_prev, s, s_prev, z, z_prev, g, g_prev,
              deg, psi, alpha, c, gamma, kappa):
    """Difference-form update of the pre-prox point for every agent row."""
    inv = 1.0 / psi
    a = (deg * inv)[:, None]
    inv = inv[:, None]
    t1 = a * ((c - alpha) * x - c * x_prev)
    t2 = inv * ((c + alpha) * S - c * S_prev)
    t3 = inv * (gamma * (s - s_prev) + kappa * (z - z_prev))
    t4 = inv * (g - g_prev)
    return xh + t1 + t2 + t3 - t4


def prox_l1_box(V, psi, weight, lo, hi):
    """Row-wise ``argmin_u (psi_i/2)|v-u|^2 + weight_i |u|_1`` over ``[lo, hi]``."""
    thr = (weight / psi)[:, None]
    U = np.where(V > thr, V - thr, np.where(V < -thr, V + thr, 0.0))
    return np.minimum(np.maximum(U, lo), hi)


def trunc_value(H, y, rho, x):
    r = H @ x - y
    return float(rho / (2.0 * H.shape[0]) * np.sum(np.log1p(r * r / rho)))


def trunc_grad(H, y, rho, x, idx):
    """Mean truncated-loss gradient over sample rows ``idx`` (``None``: all rows in order)."""
    if idx is None:
        Hs, ys = H, y
    else:
        Hs, ys = H[idx], y[idx]
    r = Hs @ x - ys
    w = r * (rho / (rho + r * r))
    return (Hs.T @ w) / Hs.shape[0]


def trunc_grad_stack(H, y, rho, X, seed, iteration, batch):
    """Per-agent gradients; ``batch == 0`` means the full pass."""
    N, m, _ = H.shape
    G = np.empty_like(X)
    for i in range(N):
        idx = None if batch == 0 else sample_indices(seed, i, iteration, batch, m)
        G[i] = trunc_grad(H[i], y[i], rho, X[i], idx)
    return G
