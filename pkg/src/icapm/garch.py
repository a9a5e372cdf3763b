"""Diagonal GARCH(1,1) covariance recursion with covariance targeting.

    H_t = H_0 o (11' - aa' - bb') + aa' o e_{t-1} e_{t-1}' + bb' o H_{t-1}

with ``o`` the elementwise product. Filtering starts from H_1 = H_0 and
e_0 = 0.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from . import _kernel
from .errors import DataError, NumericalError, PSDError
from .model_spec import ModelSpec

logger = logging.getLogger(__name__)

PSD_TOL = 1e-10
PENALTY_WEIGHT = 1e4


def _mirror_upper(M: np.ndarray) -> np.ndarray:
    return np.triu(M) + np.triu(M, 1).T


def intercept_matrix(H0, a, b) -> np.ndarray:
    """C = H_0 o (11' - aa' - bb'). Logs a warning for inadmissible loadings."""
    H0 = np.asarray(H0, dtype=float)
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if H0.shape != (a.size, a.size) or b.size != a.size:
        raise DataError("H0 must be N x N with a, b of length N")
    C = _mirror_upper(H0 * (1.0 - np.outer(a, a) - np.outer(b, b)))
    diag = check_admissible(a, b, H0)
    if not diag["admissible"]:
        logger.warning("inadmissible GARCH loadings: %s", diag["reason"])
    return C


def step(C, a, b, eps_prev, H_prev) -> np.ndarray:
    """One recursion step (upper triangle computed, mirrored)."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    e = np.asarray(eps_prev, dtype=float)
    H = np.asarray(C, dtype=float) + np.outer(a, a) * np.outer(e, e) + np.outer(b, b) * np.asarray(H_prev, dtype=float)
    return _mirror_upper(H)


def min_eigenvalue(H) -> float:
    return float(np.linalg.eigvalsh(np.asarray(H, dtype=float)).min())


def check_admissible(a, b, H0) -> dict:
    """Report whether a_i a_j + b_i b_j < 1 for all pairs and C is PSD."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    H0 = np.asarray(H0, dtype=float)
    persist = np.outer(a, a) + np.outer(b, b)
    iu = np.triu_indices(a.size)
    violated = [(int(i), int(j)) for i, j in zip(*iu) if not persist[i, j] < 1.0]
    boundary = [(int(i), int(j)) for i, j in zip(*iu) if persist[i, j] == 1.0]
    C = _mirror_upper(H0 * (1.0 - persist))
    lam = min_eigenvalue(C)
    ok = not violated and lam > -PSD_TOL
    reason = []
    if violated:
        reason.append(f"a_i a_j + b_i b_j >= 1 for pairs {violated}")
    if lam <= -PSD_TOL:
        reason.append(f"intercept not PSD (smallest eigenvalue {lam:.3g})")
    return {
        "admissible": ok,
        "violated_pairs": violated,
        "boundary_pairs": boundary,
        "intercept_min_eigenvalue": lam,
        "reason": "; ".join(reason),
    }


def admissibility_penalty(a, b) -> float:
    """Smooth penalty 1e4 * sum of squared pair violations of a_i a_j + b_i b_j < 1."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    excess = np.triu(np.outer(a, a) + np.outer(b, b) - 1.0)
    return float(PENALTY_WEIGHT * np.sum(np.maximum(excess, 0.0) ** 2))


@dataclass
class FilterResult:
    """Filtered paths, all indexed by return date t = 0..T-1."""

    mu: np.ndarray  # (T, N)
    H: np.ndarray  # (T, N, N)
    eps: np.ndarray  # (T, N)
    loglik_t: np.ndarray  # (T,)
    delta_m: np.ndarray  # (T,)
    delta_k: np.ndarray  # (T, L)
    n_clamped: int = 0
    n_jitter: int = 0

    @property
    def loglik(self) -> float:
        return float(np.sum(self.loglik_t))


def run(spec: ModelSpec, params, data, H0=None, store: bool = True):
    """Call the compiled filter. Returns ``(loglik_t, FilterResult | None)``."""
    if data.T == 0:
        raise DataError("empty sample")
    if data.N != spec.N or data.J != spec.J:
        raise DataError(f"dataset is {data.N} series x {data.J} instruments, spec expects {spec.N} x {spec.J}")
    H0 = data.sample_covariance() if H0 is None else np.asarray(H0, dtype=float)
    kw, kc, dd, al, ph, a, b = spec.kernel_arrays(params)
    C = _mirror_upper(H0 * (1.0 - np.outer(a, a) - np.outer(b, b)))
    T, N, L = data.T, data.N, spec.n_currencies
    ll = np.empty(T)
    if store:
        H_out = np.empty((T, N, N))
        eps = np.empty((T, N))
        mu = np.empty((T, N))
        dm = np.empty(T)
        dk = np.empty((T, L))
    else:
        H_out = np.empty((1, 1, 1))
        eps = mu = np.empty((1, 1))
        dm = np.empty(1)
        dk = np.empty((1, 1))
    H_fail = np.zeros((N, N))
    status, t_fail, n_clamped, n_jitter = _kernel.run_filter(
        data.r, data.Z, np.ascontiguousarray(H0), C, kw, kc, dd, al, ph, a, b,
        spec.market_price_form == "exponential", store, spec.has_domestic,
        H_out, eps, mu, ll, dm, dk, H_fail,
    )
    if status != _kernel.OK:
        raise PSDError(int(t_fail), min_eigenvalue(H_fail))
    if not store:
        return ll, None
    if n_clamped:
        logger.warning("market price argument clamped at %d dates", n_clamped)
    if n_jitter:
        logger.warning("diagonal jitter %.0e needed to factorize H_t at %d dates", _kernel.JITTER, n_jitter)
    res = FilterResult(mu=mu, H=H_out, eps=eps, loglik_t=ll, delta_m=dm, delta_k=dk,
                       n_clamped=int(n_clamped), n_jitter=int(n_jitter))
    return ll, res


def filter(spec: ModelSpec, params, data, H0=None) -> FilterResult:
    """Filter {mu_t, H_t, eps_t} through the sample and verify each H_t is PSD."""
    _, res = run(spec, params, data, H0, store=True)
    lam = np.linalg.eigvalsh(res.H).min(axis=1)
    bad = np.flatnonzero(lam < -PSD_TOL)
    if bad.size:
        raise PSDError(int(bad[0]), float(lam[bad[0]]))
    return res


def export_long(dates, names, H) -> str:
    """Filtered covariances as long-format text: date,i,j,value (upper triangle)."""
    lines = ["date,i,j,value"]
    N = len(names)
    for t, d in enumerate(dates):
        for i in range(N):
            for j in range(i, N):
                lines.append(f"{d},{names[i]},{names[j]},{float(H[t, i, j])!r}")
    return "\n".join(lines) + "\n"


def require_admissible(a, b, H0) -> dict:
    diag = check_admissible(a, b, H0)
    if not diag["admissible"]:
        raise NumericalError(f"inadmissible GARCH parameters: {diag['reason']}")
    return diag
