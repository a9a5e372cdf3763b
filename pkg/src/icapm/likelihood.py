"""Gaussian quasi-log-likelihood, numerical scores and the QML sandwich."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernel, garch
from .errors import NumericalError, PSDError, SingularMatrixError
from .model_spec import ModelSpec

SCORE_STEP = 1e-5
HESSIAN_STEP = 1e-4


@dataclass
class LogLik:
    total: float
    per_t: np.ndarray


def loglik(spec: ModelSpec, params, data, H0=None) -> LogLik:
    """-TN/2 ln 2pi - 1/2 sum ln|H_t| - 1/2 sum e_t' H_t^-1 e_t."""
    ll, _ = garch.run(spec, params, data, H0, store=False)
    return LogLik(total=float(np.sum(ll)), per_t=ll)


def gaussian_loglik(eps, H) -> LogLik:
    """Log density of each row eps[t] under N(0, H[t]); accepts a single vector and matrix."""
    eps = np.asarray(eps, dtype=float)
    H = np.asarray(H, dtype=float)
    if eps.ndim == 1:
        eps, H = eps[None, :], H[None, :, :]
    if H.shape != (eps.shape[0], eps.shape[1], eps.shape[1]):
        raise NumericalError("eps must be T x N with H of shape T x N x N")
    out = np.empty(eps.shape[0])
    t_fail = _kernel.logpdf_path(np.ascontiguousarray(eps), np.ascontiguousarray(H), out)
    if t_fail >= 0:
        raise PSDError(int(t_fail), garch.min_eigenvalue(H[t_fail]))
    return LogLik(total=float(out.sum()), per_t=out)


def fd_steps(x, rel: float) -> np.ndarray:
    return rel * np.maximum(1.0, np.abs(np.asarray(x, dtype=float)))


def per_observation_scores(contributions, x, step: float = SCORE_STEP, names=None) -> np.ndarray:
    """Central-difference scores (T x P) of per-observation contributions.

    ``contributions(x)`` returns the length-T vector of log-likelihood terms.
    """
    x = np.asarray(x, dtype=float)
    h = fd_steps(x, step)
    cols = []
    for p in range(x.size):
        up, dn = x.copy(), x.copy()
        up[p] += h[p]
        dn[p] -= h[p]
        try:
            cu, cd = contributions(up), contributions(dn)
        except NumericalError as exc:
            label = names[p] if names else f"#{p}"
            raise NumericalError(f"likelihood undefined when perturbing parameter {label}: {exc}") from exc
        if not (np.all(np.isfinite(cu)) and np.all(np.isfinite(cd))):
            label = names[p] if names else f"#{p}"
            raise NumericalError(f"non-finite contribution when perturbing parameter {label}")
        cols.append((cu - cd) / (2.0 * h[p]))
    return np.column_stack(cols)


def model_scores(spec: ModelSpec, psi, data, H0=None, step: float = SCORE_STEP) -> np.ndarray:
    return per_observation_scores(
        lambda x: loglik(spec, x, data, H0).per_t, psi, step, spec.param_names()
    )


def numerical_hessian(f, x, step: float = HESSIAN_STEP) -> np.ndarray:
    """Central-difference Hessian of a scalar function."""
    x = np.asarray(x, dtype=float)
    h = fd_steps(x, step)
    P = x.size
    f0 = f(x)
    Hm = np.empty((P, P))

    def at(shifts):
        y = x.copy()
        for p, s in shifts:
            y[p] += s * h[p]
        return f(y)

    for p in range(P):
        Hm[p, p] = (at([(p, 1)]) - 2.0 * f0 + at([(p, -1)])) / h[p] ** 2
        for q in range(p):
            v = (at([(p, 1), (q, 1)]) - at([(p, 1), (q, -1)])
                 - at([(p, -1), (q, 1)]) + at([(p, -1), (q, -1)])) / (4.0 * h[p] * h[q])
            Hm[p, q] = Hm[q, p] = v
    return Hm


def robust_covariance(A, B, T: int) -> np.ndarray:
    """(1/T) A^-1 B A^-1, symmetrized.

    ``A`` is the information-form average Hessian (minus the Hessian of the
    average log-likelihood) and ``B`` the average outer product of scores.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if not np.all(np.isfinite(A)):
        raise SingularMatrixError("non-finite Hessian; consider re-specifying the model")
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > 1e14:
        raise SingularMatrixError(
            "Hessian estimate is singular (condition number "
            f"{cond:.3g}); add a ridge or re-specify the model"
        )
    Ainv = np.linalg.inv(A)
    V = Ainv @ B @ Ainv / T
    return 0.5 * (V + V.T)


def sandwich(spec: ModelSpec, psi, data, H0=None, scores=None, hessian_step: float = HESSIAN_STEP):
    """Return ``(V, A, B, scores)`` at ``psi``."""
    T = data.T
    if scores is None:
        scores = model_scores(spec, psi, data, H0)
    B = scores.T @ scores / T
    Hm = numerical_hessian(lambda x: loglik(spec, x, data, H0).total / T, psi, hessian_step)
    A = -Hm
    A = 0.5 * (A + A.T)
    V = robust_covariance(A, B, T)
    return V, A, B, scores
