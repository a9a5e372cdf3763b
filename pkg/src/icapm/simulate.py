"""Synthetic panels from known parameters and Monte Carlo experiments.

Random numbers come from numpy's PCG64 generator (64-bit state). Replication
``rep`` of an experiment seeded with ``seed`` uses the stream
``PCG64(seed ^ rep)``, so results do not depend on the order in which
replications run.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import garch
from .data_model import Dataset, InstrumentPanel, ReturnsPanel, month_range, month_stamp, month_index
from .errors import DataError, ICAPMError
from .inference import standard_restrictions, wald
from .model_spec import ModelSpec, conditional_mean
from .optimizer import EstimationOptions, estimate

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class InstrumentProcess:
    """``kind`` is ``"constant"`` or ``"ar1"`` (independent Gaussian AR(1) per instrument)."""

    kind: str = "ar1"
    rho: float = 0.9
    scale: float = 0.1

    def __post_init__(self):
        if self.kind not in ("constant", "ar1"):
            raise DataError(f"unknown instrument process {self.kind!r}")
        if self.kind == "ar1" and not abs(self.rho) < 1:
            raise DataError("AR(1) persistence must satisfy |rho| < 1")


@dataclass
class SimulatedData:
    returns: ReturnsPanel
    instruments: InstrumentPanel
    dataset: Dataset
    H: np.ndarray
    mu: np.ndarray
    eps: np.ndarray


def generator(seed: int, rep: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) ^ int(rep)))


def simulate(spec: ModelSpec, true_params, H0, T: int, seed: int,
             instrument_process: InstrumentProcess | None = None, start: str = "1990-01",
             rng: np.random.Generator | None = None) -> SimulatedData:
    """Draw T months from the GARCH-in-mean model.

    For each t: z_{t-1}, then mu_t and H_t, then e_t = L_t u_t with L_t the
    Cholesky factor of H_t, r_t = mu_t + e_t, and H_{t+1} from the recursion.
    """
    process = instrument_process or InstrumentProcess()
    p = spec.as_params(true_params)
    H0 = np.asarray(H0, dtype=float)
    garch.require_admissible(p.a, p.b, H0)
    if T < 1:
        raise DataError("T must be positive")
    J, N = spec.J, spec.N
    if process.kind == "constant" and J != 1:
        raise DataError("constant-only instruments need J = 1")
    rng = generator(seed) if rng is None else rng

    Z = np.ones((T, J))
    if J > 1:
        sd0 = process.scale / math.sqrt(1.0 - process.rho**2)
        z = rng.standard_normal(J - 1) * sd0
        for t in range(T):
            Z[t, 1:] = z
            z = process.rho * z + process.scale * rng.standard_normal(J - 1)

    C = garch.intercept_matrix(H0, p.a, p.b)
    H = H0.copy()
    Hs = np.empty((T, N, N))
    mus = np.empty((T, N))
    eps = np.empty((T, N))
    for t in range(T):
        lam = garch.min_eigenvalue(H)
        if lam <= -garch.PSD_TOL:
            raise garch.PSDError(t, lam)
        Hs[t] = H
        mus[t] = conditional_mean(spec, p, H, Z[t])
        Lc = np.linalg.cholesky(H)
        eps[t] = Lc @ rng.standard_normal(N)
        H = garch.step(C, p.a, p.b, eps[t], H)
    r = mus + eps

    dates = month_range(start, T)
    inst_dates = month_range(month_stamp(month_index(start) - 1), T)
    names = spec.series_names
    roles = ("asset",) * spec.n_assets + ("currency",) * spec.n_currencies + ("market",)
    returns = ReturnsPanel(dates, names, roles, r)
    instruments = InstrumentPanel(inst_dates, spec.instrument_names, Z)
    data = Dataset(dates, names, r, Z, spec.instrument_names, spec.n_assets, spec.n_currencies)
    return SimulatedData(returns, instruments, data, Hs, mus, eps)


# ---------------------------------------------------------------------------
# Monte Carlo


def _one_rep(args):
    spec, psi_true, H0, T, seed, rep, process, options, restrictions = args
    rng = generator(seed, rep)
    try:
        sim = simulate(spec, psi_true, H0, T, seed, process, rng=rng)
        res = estimate(spec, sim.dataset, options)
    except ICAPMError as exc:
        return {"rep": rep, "ok": False, "error": str(exc)}
    tests = {}
    for restr in restrictions:
        try:
            tests[restr.label] = wald(restr, res.psi, res.cov)["p_value"]
        except ICAPMError:
            tests[restr.label] = float("nan")
    return {
        "rep": rep, "ok": True, "psi": res.psi.tolist(), "se": res.se.tolist(),
        "loglik": res.loglik, "status": res.status, "tests": tests,
    }


@dataclass
class MonteCarloReport:
    names: list
    truth: list
    reps: int
    T: int
    seed: int
    n_failed: int
    mean_bias: list
    mc_sd: list
    mean_se: list
    coverage_95: list
    rejection_5pct: dict
    failures: list = field(default_factory=list)
    estimates: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def format_table(self) -> str:
        lines = ["parameter\ttruth\tmean_bias\tmc_sd\tmean_se\tcoverage_95"]
        for row in zip(self.names, self.truth, self.mean_bias, self.mc_sd, self.mean_se, self.coverage_95):
            n, *vals = row
            lines.append("\t".join([n, *(f"{v:.6g}" for v in vals)]))
        if self.rejection_5pct:
            lines.append("")
            lines.append("null_hypothesis\trejection_rate_5pct")
            for k, v in self.rejection_5pct.items():
                lines.append(f"{k}\t{v:.4f}")
        lines.append(f"\nreps={self.reps} failed={self.n_failed} T={self.T} seed={self.seed}")
        return "\n".join(lines) + "\n"


def true_nulls(spec: ModelSpec, psi_true, atol: float = 0.0):
    """Battery restrictions that hold exactly at the true parameters."""
    psi_true = np.asarray(psi_true, dtype=float)
    out = []
    for restr in standard_restrictions(spec):
        if np.all(np.abs(restr.R @ psi_true - restr.r) <= atol):
            out.append(restr)
    return out


def monte_carlo(spec: ModelSpec, true_params, H0, reps: int, T: int, seed: int,
                instrument_process: InstrumentProcess | None = None,
                options: EstimationOptions | None = None, workers: int = 1) -> MonteCarloReport:
    """Repeated simulate-and-estimate; failed replications are counted, not fatal."""
    if reps < 2:
        raise DataError("reps >= 2 required")
    psi_true = spec.as_params(true_params).flatten()
    process = instrument_process or InstrumentProcess()
    options = options or EstimationOptions()
    restrictions = true_nulls(spec, psi_true)
    jobs = [(spec, psi_true, np.asarray(H0, dtype=float), T, seed, rep, process, options, restrictions)
            for rep in range(reps)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_one_rep, jobs))
    else:
        results = [_one_rep(j) for j in jobs]
    results.sort(key=lambda d: d["rep"])

    ok = [r for r in results if r["ok"]]
    failures = [{"rep": r["rep"], "error": r["error"]} for r in results if not r["ok"]]
    P = spec.n_params
    if ok:
        est = np.array([r["psi"] for r in ok])
        se = np.array([r["se"] for r in ok])
        bias = est.mean(axis=0) - psi_true
        sd = est.std(axis=0, ddof=1) if len(ok) > 1 else np.full(P, np.nan)
        with np.errstate(invalid="ignore"):
            mean_se = np.nanmean(se, axis=0) if np.any(np.isfinite(se)) else np.full(P, np.nan)
            cover = np.nanmean(np.abs(est - psi_true) <= 1.959963984540054 * se, axis=0)
    else:
        est = np.empty((0, P))
        bias = sd = mean_se = cover = np.full(P, np.nan)
    rejection = {}
    for restr in restrictions:
        pv = np.array([r["tests"][restr.label] for r in ok], dtype=float)
        pv = pv[np.isfinite(pv)]
        rejection[restr.label] = float(np.mean(pv < 0.05)) if pv.size else float("nan")
    return MonteCarloReport(
        names=spec.param_names(), truth=psi_true.tolist(), reps=reps, T=T, seed=seed,
        n_failed=len(failures), mean_bias=bias.tolist(), mc_sd=sd.tolist(),
        mean_se=mean_se.tolist(), coverage_95=cover.tolist(), rejection_5pct=rejection,
        failures=failures, estimates=est.tolist(),
    )
