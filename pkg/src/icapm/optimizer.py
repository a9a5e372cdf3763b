"""Two-stage QML estimation: Nelder-Mead warm start, then BHHH ascent."""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from . import garch
from .errors import DataError, EstimationError, ICAPMError, NumericalError, SingularMatrixError
from .likelihood import HESSIAN_STEP, SCORE_STEP, loglik, per_observation_scores, sandwich
from .model_spec import ModelSpec

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# Nelder-Mead


@dataclass
class NelderMeadResult:
    x: np.ndarray
    fun: float
    n_iter: int
    n_fev: int
    status: str


def nelder_mead(objective: Callable, x0, max_iter: int | None = None, max_fev: int | None = None,
                tol_f: float = 1e-8, tol_x: float = 1e-8, initial_scale: float = 0.1) -> NelderMeadResult:
    """Minimize ``objective`` with the Nelder-Mead simplex.

    Reflection 1, expansion 2, contraction 0.5, shrink 0.5. The initial
    simplex offsets each coordinate of ``x0`` by ``initial_scale``. Stops when
    the spread of simplex values stays below ``tol_f`` for two consecutive
    iterations, the largest vertex distance (max-norm) from the best vertex
    drops below ``tol_x``, or a budget is exhausted. Non-finite objective
    values (and library numerical errors) count as +inf.
    """
    x0 = np.asarray(x0, dtype=float).ravel()
    n = x0.size
    max_iter = 200 * n if max_iter is None else max_iter
    max_fev = math.inf if max_fev is None else max_fev
    n_fev = 0

    def f(x):
        nonlocal n_fev
        n_fev += 1
        try:
            v = float(objective(x))
        except (NumericalError, FloatingPointError, OverflowError):
            return math.inf
        return v if math.isfinite(v) else math.inf

    sim = np.vstack([x0, x0 + initial_scale * np.eye(n)])
    fs = np.array([f(x) for x in sim])
    if not np.any(np.isfinite(fs)):
        raise EstimationError("objective non-finite at every vertex of the initial simplex")

    it, status = 0, "max_iter"
    flat = 0
    while True:
        order = np.argsort(fs, kind="stable")
        sim, fs = sim[order], fs[order]
        # two flat iterations in a row: one can be vertices straddling the optimum
        flat = flat + 1 if fs[-1] - fs[0] < tol_f else 0
        if flat >= 2:
            status = "tol_f"
            break
        if np.max(np.abs(sim[1:] - sim[0])) < tol_x:
            status = "tol_x"
            break
        if it >= max_iter:
            status = "max_iter"
            break
        if n_fev >= max_fev:
            status = "max_fev"
            break
        it += 1
        c = sim[:-1].mean(axis=0)
        xw, fw = sim[-1], fs[-1]
        xr = c + (c - xw)
        fr = f(xr)
        if fs[0] <= fr < fs[-2]:
            sim[-1], fs[-1] = xr, fr
            continue
        if fr < fs[0]:
            xe = c + 2.0 * (c - xw)
            fe = f(xe)
            if fe < fr:
                sim[-1], fs[-1] = xe, fe
            else:
                sim[-1], fs[-1] = xr, fr
            continue
        if fr < fw:
            xc = c + 0.5 * (xr - c)
            fc = f(xc)
            if fc <= fr:
                sim[-1], fs[-1] = xc, fc
                continue
        else:
            xc = c + 0.5 * (xw - c)
            fc = f(xc)
            if fc < fw:
                sim[-1], fs[-1] = xc, fc
                continue
        sim[1:] = sim[0] + 0.5 * (sim[1:] - sim[0])
        fs[1:] = [f(x) for x in sim[1:]]

    return NelderMeadResult(x=sim[0].copy(), fun=float(fs[0]), n_iter=it, n_fev=n_fev, status=status)


# ---------------------------------------------------------------------------
# BHHH


@dataclass
class BHHHResult:
    x: np.ndarray
    loglik: float
    n_iter: int
    status: str
    trace: list = field(default_factory=list)
    warnings: list = field(default_factory=list)


def _solve_outer(S: np.ndarray, g: np.ndarray) -> np.ndarray:
    M = S.T @ S
    P = M.shape[0]

    def usable(Mx):
        if not np.all(np.isfinite(Mx)):
            return False
        c = np.linalg.cond(Mx)
        return np.isfinite(c) and c < 1e14

    if not usable(M):
        M = M + 1e-8 * np.trace(M) / P * np.eye(P)
        if not usable(M):
            raise SingularMatrixError("score outer-product matrix singular even after ridge")
    return np.linalg.solve(M, g)


def bhhh(loglik_total: Callable, scores: Callable, x0, max_iter: int = 200, tol_grad: float = 1e-5,
         max_halvings: int = 20) -> BHHHResult:
    """Maximize ``loglik_total`` with BHHH steps d = (S'S)^-1 g.

    ``scores(x)`` returns the T x P per-observation score matrix whose column
    sums are the gradient. Steps are halved until the log-likelihood does not
    decrease.
    """
    x = np.asarray(x0, dtype=float).copy()
    f = float(loglik_total(x))
    if not math.isfinite(f):
        raise EstimationError("log-likelihood not finite at the BHHH start")
    trace, warnings = [], []
    status = "max_iter"
    it = 0
    while True:
        S = scores(x)
        g = S.sum(axis=0)
        gnorm = float(np.max(np.abs(g)))
        if it == 0:
            trace.append({"iter": 0, "loglik": f, "step": 0.0, "grad_inf": gnorm})
        else:
            trace[-1]["grad_inf"] = gnorm
        if gnorm < tol_grad:
            status = "converged"
            break
        if it >= max_iter:
            break
        d = _solve_outer(S, g)
        lam = 1.0
        accepted = False
        for _ in range(max_halvings + 1):
            xn = x + lam * d
            try:
                fn = float(loglik_total(xn))
            except NumericalError:
                fn = -math.inf
            if math.isfinite(fn) and fn >= f:
                accepted = True
                break
            lam *= 0.5
        if not accepted:
            status = "no_ascent"
            msg = f"BHHH found no ascent step at iteration {it + 1}; stopped with |g|_inf={gnorm:.3g}"
            warnings.append(msg)
            logger.warning(msg)
            break
        it += 1
        x, f = xn, fn
        trace.append({"iter": it, "loglik": f, "step": lam, "grad_inf": float("nan")})
    return BHHHResult(x=x, loglik=f, n_iter=it, status=status, trace=trace, warnings=warnings)


# ---------------------------------------------------------------------------
# full pipeline


@dataclass
class EstimationOptions:
    nm_fev_per_param: int = 500
    nm_max_iter: int | None = None
    nm_tol_f: float = 1e-6
    nm_tol_x: float = 1e-8
    nm_initial_scale: float = 0.1
    bhhh_max_iter: int = 200
    bhhh_tol_grad: float = 1e-5
    bhhh_max_halvings: int = 20
    score_step: float = SCORE_STEP
    hessian_step: float = HESSIAN_STEP
    two_step_h0: bool = False
    warm_start: bool = True
    start: list | None = None

    @classmethod
    def from_mapping(cls, values: dict) -> "EstimationOptions":
        known = set(cls.__dataclass_fields__)
        unknown = set(values) - known
        if unknown:
            raise DataError(f"unknown optimizer option(s): {sorted(unknown)}")
        return cls(**values)


@dataclass
class EstimationResult:
    spec: ModelSpec
    psi: np.ndarray
    cov: np.ndarray
    loglik: float
    penalty: float
    loglik_start: float
    H0: np.ndarray
    filtered: garch.FilterResult
    scores: np.ndarray
    trace: list
    status: str
    warnings: list
    options: EstimationOptions
    n_obs: int
    nelder_mead: dict = field(default_factory=dict)
    admissibility: dict = field(default_factory=dict)
    config_text: str | None = None

    @property
    def names(self) -> list[str]:
        return self.spec.param_names()

    @property
    def se(self) -> np.ndarray:
        with np.errstate(invalid="ignore"):
            return np.sqrt(np.diag(self.cov))

    @property
    def params(self):
        return self.spec.unpack(self.psi)

    def to_dict(self, data=None) -> dict:
        out = {
            "schema_version": SCHEMA_VERSION,
            "model": self.spec.describe(),
            "status": self.status,
            "n_obs": self.n_obs,
            "loglik": _num(self.loglik),
            "penalty": _num(self.penalty),
            "loglik_start": _num(self.loglik_start),
            "iterations": {
                "nelder_mead": self.nelder_mead,
                "bhhh": len(self.trace) - 1 if self.trace else 0,
            },
            "parameters": [
                {"name": n, "estimate": _num(v), "se": _num(s)}
                for n, v, s in zip(self.names, self.psi, self.se)
            ],
            "covariance": [[_num(v) for v in row] for row in self.cov],
            "H0": [[_num(v) for v in row] for row in self.H0],
            "admissibility": self.admissibility,
            "warnings": list(self.warnings),
            "options": asdict(self.options),
            "trace": [{k: _num(v) for k, v in row.items()} for row in self.trace],
            "config": self.config_text,
        }
        if data is not None:
            out["sample"] = {
                "dates": list(data.dates),
                "series": list(data.names),
                "instruments": list(data.instrument_names),
                "n_assets": data.n_assets,
                "n_currencies": data.n_currencies,
                "returns": [[float(v) for v in row] for row in data.r],
                "Z": [[float(v) for v in row] for row in data.Z],
            }
        return out


def _num(v):
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return int(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return v if math.isfinite(v) else None
    return v


def _normalize_signs(spec: ModelSpec, psi, cov, scores):
    """a and b enter only through aa' and bb': flip each so its sum is positive."""
    sign = np.ones(spec.n_params)
    blocks = spec.blocks()
    for key in ("a", "b"):
        sl = blocks[key]
        if np.sum(psi[sl]) < 0:
            sign[sl] = -1.0
    if np.all(sign == 1.0):
        return psi, cov, scores
    return psi * sign, cov * np.outer(sign, sign), scores * sign


def estimate(spec: ModelSpec, data, options: EstimationOptions | None = None,
             config_text: str | None = None, H0=None) -> EstimationResult:
    """Estimate the model by QML; see :class:`EstimationOptions` for knobs."""
    options = options or EstimationOptions()
    P = spec.n_params
    if data.T < P:
        raise EstimationError(f"insufficient observations: T={data.T} < P={P}")
    if data.N != spec.N or data.J != spec.J:
        raise DataError("dataset does not match the model specification")
    H0 = data.sample_covariance() if H0 is None else np.asarray(H0, dtype=float)
    result = _estimate_once(spec, data, options, H0)
    if options.two_step_h0:
        eps = result.filtered.eps
        H0_new = eps.T @ eps / data.T
        H0_new = 0.5 * (H0_new + H0_new.T)
        opts2 = EstimationOptions(**{**asdict(options), "start": list(result.psi), "two_step_h0": False})
        result = _estimate_once(spec, data, opts2, H0_new)
        result.options = options
        result.warnings.insert(0, "two-step: H0 re-estimated from first-pass residuals")
    result.config_text = config_text
    return result


def _estimate_once(spec, data, options, H0) -> EstimationResult:
    P, T = spec.n_params, data.T
    blocks = spec.blocks()
    sa, sb = blocks["a"], blocks["b"]
    names = spec.param_names()

    def penalty(x):
        return garch.admissibility_penalty(x[sa], x[sb])

    def contributions(x):
        return loglik(spec, x, data, H0).per_t - penalty(x) / T

    def penalized(x):
        try:
            return loglik(spec, x, data, H0).total - penalty(x)
        except NumericalError:
            return -math.inf

    start = spec.default_start() if options.start is None else np.asarray(options.start, dtype=float)
    f_start = penalized(start)
    warnings: list[str] = []
    trace: list[dict] = []
    x = start
    nm_info = {}
    if options.warm_start:
        if not math.isfinite(f_start):
            raise EstimationError("log-likelihood not finite at the starting values")
        nm = nelder_mead(lambda y: -penalized(y), start, max_iter=options.nm_max_iter,
                         max_fev=options.nm_fev_per_param * P, tol_f=options.nm_tol_f,
                         tol_x=options.nm_tol_x, initial_scale=options.nm_initial_scale)
        nm_info = {"n_iter": nm.n_iter, "n_fev": nm.n_fev, "status": nm.status,
                   "loglik": _num(-nm.fun)}
        trace.append({"stage": "nelder_mead", "iter": nm.n_iter, "loglik": -nm.fun,
                      "step": float("nan"), "grad_inf": float("nan")})
        if -nm.fun >= f_start:
            x = nm.x
    try:
        bh = bhhh(penalized,
                  lambda y: per_observation_scores(contributions, y, options.score_step, names),
                  x, max_iter=options.bhhh_max_iter, tol_grad=options.bhhh_tol_grad,
                  max_halvings=options.bhhh_max_halvings)
    except ICAPMError as exc:
        raise EstimationError(f"BHHH stage failed: {exc}", trace) from exc
    trace += [{"stage": "bhhh", **row} for row in bh.trace]
    warnings += bh.warnings
    psi = bh.x
    if not bh.loglik > f_start and bh.status != "converged":
        raise EstimationError("neither stage improved on the starting values", trace)

    pen = penalty(psi)
    diag = garch.check_admissible(psi[sa], psi[sb], H0)
    if not diag["admissible"]:
        warnings.append(f"final estimates not admissible: {diag['reason']}")
    filtered = garch.filter(spec, psi, data, H0)
    try:
        cov, _, _, scores = sandwich(spec, psi, data, H0, hessian_step=options.hessian_step)
    except NumericalError as exc:
        warnings.append(f"robust covariance unavailable: {exc}")
        cov = np.full((P, P), np.nan)
        scores = per_observation_scores(lambda y: loglik(spec, y, data, H0).per_t, psi,
                                        options.score_step, names)
    psi, cov, scores = _normalize_signs(spec, psi, cov, scores)
    if filtered.n_clamped:
        warnings.append(f"market price argument clamped at {filtered.n_clamped} dates")
    if filtered.n_jitter:
        warnings.append(f"diagonal jitter needed at {filtered.n_jitter} dates")
    return EstimationResult(
        spec=spec, psi=psi, cov=cov, loglik=filtered.loglik, penalty=pen,
        loglik_start=f_start, H0=np.array(H0), filtered=filtered, scores=scores,
        trace=trace, status=bh.status, warnings=warnings, options=options, n_obs=T,
        nelder_mead=nm_info, admissibility={k: v for k, v in diag.items()},
    )
