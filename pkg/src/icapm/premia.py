"""Risk-premium decomposition, subperiod summaries and HP filtering."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import linalg, stats

from .data_model import month_index, month_stamp
from .errors import DataError
from .model_spec import residual_risk

DEFAULT_HP_LAMBDA = 14400.0
DEFAULT_BREAKS = ("1989-12",)


@dataclass
class Premia:
    """Per-row premium paths, each (T, N)."""

    dates: tuple
    names: tuple
    PRM: np.ndarray
    PRC: np.ndarray
    PRD: np.ndarray
    PT: np.ndarray

    def additivity_gap(self) -> float:
        return float(np.max(np.abs(self.PT - self.PRM - self.PRC - self.PRD)))

    def to_long(self) -> str:
        """Long-format text: date,row,component,value."""
        lines = ["date,row,component,value"]
        comps = (("PT", self.PT), ("PRM", self.PRM), ("PRC", self.PRC), ("PRD", self.PRD))
        for t, d in enumerate(self.dates):
            for i, name in enumerate(self.names):
                for label, arr in comps:
                    lines.append(f"{d},{name},{label},{float(arr[t, i])!r}")
        return "\n".join(lines) + "\n"


def decompose(result, data) -> Premia:
    """Split fitted premia into world-market, currency and domestic parts.

    PT is the fitted conditional mean net of the alpha/phi terms, so the
    identity PT = PRM + PRC + PRD is a genuine check on the filter output.
    """
    spec = result.spec
    f = result.filtered
    p = spec.unpack(result.psi)
    n, L, m = spec.n_assets, spec.n_currencies, spec.market_index
    H = f.H
    PRM = f.delta_m[:, None] * H[:, :, m]
    if L:
        PRC = np.einsum("tik,tk->ti", H[:, :, n:n + L], f.delta_k)
    else:
        PRC = np.zeros_like(PRM)
    PRD = np.zeros_like(PRM)
    if spec.has_domestic:
        q = np.array([residual_risk(Ht, m) for Ht in H])
        PRD[:, :n] = p.delta_d * q[:, :n]
    non_risk = np.zeros_like(PRM)
    if spec.has_alpha:
        _, _, _, al, ph, _, _ = spec.kernel_arrays(p)
        non_risk = al + data.Z @ ph.T
    PT = f.mu - non_risk
    return Premia(tuple(data.dates), tuple(data.names), PRM, PRC, PRD, PT)


def _newey_west_var(x: np.ndarray, lags: int) -> float:
    """Long-run variance of the sample mean's summands (Bartlett kernel)."""
    T = x.size
    dev = x - x.mean()
    s = float(dev @ dev) / T
    for k in range(1, min(lags, T - 1) + 1):
        w = 1.0 - k / (lags + 1.0)
        s += 2.0 * w * float(dev[k:] @ dev[:-k]) / T
    return s


def _mean_row(x: np.ndarray, se_method: str, nw_lags: int) -> dict:
    T = x.size
    if T == 0:
        raise DataError("empty subperiod")
    mean = float(x.mean()) * 1200.0
    if se_method == "newey_west":
        se = math.sqrt(max(_newey_west_var(x, nw_lags), 0.0) / T) * 1200.0
    elif se_method == "plain":
        se = (float(x.std(ddof=1)) / math.sqrt(T) * 1200.0) if T > 1 else float("nan")
    else:
        raise DataError(f"unknown se method {se_method!r}")
    if se > 0:
        p = float(2 * stats.norm.sf(abs(mean / se)))
    elif se == 0:
        p = 0.0 if mean != 0 else 1.0
    else:
        p = float("nan")
    star = "*" if p < 0.01 else "**" if p < 0.05 else ""
    return {"mean_pct_year": mean, "se": se, "p_value": p, "star": star, "n": T}


def subperiod_summary(dates, series, breakpoints=DEFAULT_BREAKS, se_method: str = "plain",
                      nw_lags: int = 12) -> list[dict]:
    """Annualized mean (x1200, % per year) and its s.e. for the full sample and subperiods.

    ``breakpoints`` are the last months of each leading subperiod.
    """
    x = np.asarray(series, dtype=float)
    idx = np.array([month_index(d) for d in dates])
    if x.shape[0] != idx.size:
        raise DataError("series and dates disagree on length")
    rows = [{"period": f"{dates[0]}..{dates[-1]}", **_mean_row(x, se_method, nw_lags)}]
    if not breakpoints:
        return rows
    cuts = sorted(month_index(b) for b in breakpoints)
    for c in cuts:
        if not idx[0] <= c < idx[-1]:
            raise DataError(f"breakpoint {month_stamp(c)} outside the sample or at its end")
    edges = [idx[0] - 1, *cuts, idx[-1]]
    for lo, hi in zip(edges, edges[1:]):
        mask = (idx > lo) & (idx <= hi)
        if not mask.any():
            raise DataError("empty subperiod")
        sub_dates = [d for d, keep in zip(dates, mask) if keep]
        rows.append({"period": f"{sub_dates[0]}..{sub_dates[-1]}", **_mean_row(x[mask], se_method, nw_lags)})
    return rows


def premia_table(prem: Premia, breakpoints=DEFAULT_BREAKS, se_method: str = "plain",
                 nw_lags: int = 12) -> list[dict]:
    rows = []
    for i, name in enumerate(prem.names):
        for comp in ("PT", "PRM", "PRC", "PRD"):
            arr = getattr(prem, comp)[:, i]
            for row in subperiod_summary(prem.dates, arr, breakpoints, se_method, nw_lags):
                rows.append({"row": name, "component": comp, "se_method": se_method, **row})
    return rows


def format_premia_table(rows: list[dict], sep: str = "\t") -> str:
    lines = [sep.join(["row", "component", "period", "mean_pct_year", "se", "se_method"])]
    for r in rows:
        lines.append(sep.join([
            r["row"], r["component"], r["period"], f"{r['mean_pct_year']:.3f}{r['star']}",
            f"({r['se']:.3f})", r["se_method"],
        ]))
    return "\n".join(lines) + "\n"


def hp_filter(x, lam: float = DEFAULT_HP_LAMBDA) -> dict:
    """Hodrick-Prescott trend: solve (I + lam D'D) tau = x, D the second difference.

    The system is pentadiagonal and solved in banded symmetric form.
    """
    x = np.asarray(x, dtype=float)
    if lam < 0:
        raise DataError("lambda must be non-negative")
    T = x.size
    if lam == 0:
        return {"trend": x.copy(), "cycle": np.zeros_like(x)}
    if T < 3:
        raise DataError("HP filter needs at least 3 observations")
    ab = hp_banded(T, lam)
    trend = linalg.solveh_banded(ab, x, lower=False)
    return {"trend": trend, "cycle": x - trend}


def hp_banded(T: int, lam: float) -> np.ndarray:
    """Upper banded storage of I + lam D'D (3 x T)."""
    d0 = np.full(T, 6.0)
    d0[[0, -1]] = 1.0
    d0[[1, -2]] = 5.0
    d1 = np.full(T - 1, -4.0)
    d1[[0, -1]] = -2.0
    d2 = np.ones(T - 2)
    if T == 3:
        d0 = np.array([1.0, 4.0, 1.0])
        d1 = np.array([-2.0, -2.0])
    ab = np.zeros((3, T))
    ab[2] = 1.0 + lam * d0
    ab[1, 1:] = lam * d1
    ab[0, 2:] = lam * d2
    return ab


def second_difference_matrix(T: int) -> np.ndarray:
    D = np.zeros((T - 2, T))
    for t in range(T - 2):
        D[t, t:t + 3] = (1.0, -2.0, 1.0)
    return D
