"""Compiled inner loop: mean equation, Cholesky log-density, GARCH recursion."""
import math

import numpy as np
from numba import njit

LOG_2PI = math.log(2.0 * math.pi)
PIVOT_FLOOR = 1e-12
JITTER = 1e-10

OK = 0
FACTOR_FAIL = 1


@njit(cache=True)
def _cholesky(H, Lc, jitter):
    """Lower Cholesky factor into ``Lc``; returns the smallest pivot (<= 0 on failure)."""
    N = H.shape[0]
    smallest = np.inf
    for j in range(N):
        s = H[j, j] + jitter
        for k in range(j):
            s -= Lc[j, k] * Lc[j, k]
        if s < smallest:
            smallest = s
        if s <= 0.0:
            return s
        d = math.sqrt(s)
        Lc[j, j] = d
        for i in range(j + 1, N):
            v = H[i, j]
            for k in range(j):
                v -= Lc[i, k] * Lc[j, k]
            Lc[i, j] = v / d
    return smallest


@njit(cache=True)
def _logpdf_factored(eps, Lc, w):
    """Gaussian log density given the Cholesky factor; ``w`` is scratch."""
    N = eps.shape[0]
    logdet = 0.0
    quad = 0.0
    for i in range(N):
        s = eps[i]
        for k in range(i):
            s -= Lc[i, k] * w[k]
        w[i] = s / Lc[i, i]
        quad += w[i] * w[i]
        logdet += 2.0 * math.log(Lc[i, i])
    return -0.5 * (N * LOG_2PI + logdet + quad)


@njit(cache=True)
def _factor(H, Lc):
    """Factorize with the one-shot jitter rule; returns (ok, jittered)."""
    piv = _cholesky(H, Lc, 0.0)
    if piv < PIVOT_FLOOR:
        piv = _cholesky(H, Lc, JITTER)
        return piv > 0.0, True
    return True, False


@njit(cache=True)
def logpdf_path(eps, H, out):
    """Per-row Gaussian log densities of eps[t] under H[t]; returns the first failing t or -1."""
    T, N = eps.shape
    Lc = np.zeros((N, N))
    w = np.zeros(N)
    for t in range(T):
        ok, _ = _factor(H[t], Lc)
        if not ok:
            return t
        out[t] = _logpdf_factored(eps[t], Lc, w)
    return -1


@njit(cache=True)
def run_filter(r, Z, H0, C, kw, kc, dd, alpha, phi, a, b, exp_form,
               store, has_domestic, H_out, eps_out, mu_out, ll_out, dm_out, dk_out, H_fail):
    """Filter the sample; fills ``ll_out`` (and the path buffers if ``store``).

    Returns ``(status, t_fail, n_clamped, n_jitter)``.
    """
    T, N = r.shape
    J = Z.shape[1]
    L = kc.shape[0]
    n = N - L - 1
    m = N - 1
    H = H0.copy()
    Lc = np.zeros((N, N))
    eps = np.zeros(N)
    mu = np.zeros(N)
    w = np.zeros(N)
    dk = np.zeros(L)
    n_clamped = 0
    n_jitter = 0
    for t in range(T):
        # log-density factorization first: the mean needs H[m, m] > 0
        ok, jittered = _factor(H, Lc)
        if jittered:
            n_jitter += 1
        if not ok:
            for i in range(N):
                for j in range(N):
                    H_fail[i, j] = H[i, j]
            return FACTOR_FAIL, t, n_clamped, n_jitter

        arg = 0.0
        for j in range(J):
            arg += kw[j] * Z[t, j]
        if exp_form:
            if arg > 30.0:
                arg = 30.0
                n_clamped += 1
            elif arg < -30.0:
                arg = -30.0
                n_clamped += 1
            dm = math.exp(arg)
        else:
            dm = arg
        for k in range(L):
            s = 0.0
            for j in range(J):
                s += kc[k, j] * Z[t, j]
            dk[k] = s

        hmm = H[m, m]
        for i in range(N):
            v = dm * H[i, m]
            for k in range(L):
                v += dk[k] * H[i, n + k]
            if has_domestic and i < n:
                q = H[i, i] - H[i, m] * H[i, m] / hmm
                v += dd[i] * q
            extra = alpha[i]
            for j in range(J):
                extra += phi[i, j] * Z[t, j]
            mu[i] = v + extra
            eps[i] = r[t, i] - mu[i]

        ll_out[t] = _logpdf_factored(eps, Lc, w)

        if store:
            for i in range(N):
                eps_out[t, i] = eps[i]
                mu_out[t, i] = mu[i]
                for j in range(N):
                    H_out[t, i, j] = H[i, j]
            dm_out[t] = dm
            for k in range(L):
                dk_out[t, k] = dk[k]

        # H_{t+1}: upper triangle, mirrored
        for i in range(N):
            for j in range(i, N):
                v = C[i, j] + (a[i] * a[j]) * (eps[i] * eps[j]) + (b[i] * b[j]) * H[i, j]
                H[i, j] = v
                H[j, i] = v
    return OK, -1, n_clamped, n_jitter
