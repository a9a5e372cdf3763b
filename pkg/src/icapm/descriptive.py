"""Univariate diagnostics: moments, Jarque-Bera, Ljung-Box, correlograms."""
from __future__ import annotations

import math

import numpy as np
from scipy import stats

from .errors import DataError


def _series(x, min_len=2) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    if x.size < min_len:
        raise DataError(f"series too short ({x.size} < {min_len})")
    if not np.all(np.isfinite(x)):
        raise DataError("series contains non-finite values")
    return x


def _demeaned(x) -> tuple[np.ndarray, float]:
    dev = x - x.mean()
    ss = float(dev @ dev)
    if ss == 0.0 or np.ptp(x) == 0.0:
        raise DataError("zero variance")
    return dev, ss


def moments(x) -> dict:
    """Mean, sd (n-1 divisor), skewness and excess kurtosis.

    Skewness and kurtosis are the population central-moment ratios
    m3/m2^1.5 and m4/m2^2 - 3, without small-sample correction.
    """
    x = _series(x, 3)
    dev, ss = _demeaned(x)
    n = x.size
    m2 = ss / n
    return {
        "mean": float(x.mean()),
        "sd": math.sqrt(ss / (n - 1)),
        "skewness": float(np.mean(dev**3) / m2**1.5),
        "excess_kurtosis": float(np.mean(dev**4) / m2**2 - 3.0),
    }


def chi2_sf(stat: float, df: int) -> float:
    """Upper chi-square tail via the regularized incomplete gamma function."""
    if stat <= 0.0:
        return 1.0
    return float(stats.chi2.sf(stat, df))


def jarque_bera_from_moments(T: int, skewness: float, excess_kurtosis: float) -> dict:
    stat = T / 6.0 * (skewness**2 + excess_kurtosis**2 / 4.0)
    return {"stat": stat, "p_value": chi2_sf(stat, 2)}


def jarque_bera(x) -> dict:
    x = _series(x, 4)
    m = moments(x)
    return jarque_bera_from_moments(x.size, m["skewness"], m["excess_kurtosis"])


def autocorrelations(x, max_lag: int, include_zero: bool = False) -> np.ndarray:
    """Sample autocorrelations rho_1..rho_max_lag (full-sample mean and denominator)."""
    x = _series(x)
    if max_lag >= x.size:
        raise DataError(f"max_lag {max_lag} must be below series length {x.size}")
    dev, ss = _demeaned(x)
    rho = np.array([float(dev[k:] @ dev[: x.size - k]) / ss for k in range(max_lag + 1)])
    rho[0] = 1.0
    return rho if include_zero else rho[1:]


def ljung_box(x, lags: int = 12) -> dict:
    x = _series(x)
    T = x.size
    if not 1 <= lags < T:
        raise DataError(f"need 1 <= L < T (L={lags}, T={T})")
    rho = autocorrelations(x, lags)
    return ljung_box_from_acf(T, rho)


def ljung_box_from_acf(T: int, rho) -> dict:
    rho = np.asarray(rho, dtype=float)
    k = np.arange(1, rho.size + 1)
    stat = float(T * (T + 2) * np.sum(rho**2 / (T - k)))
    return {"stat": stat, "df": int(rho.size), "p_value": chi2_sf(stat, rho.size)}


def cross_correlations(x, y, max_lag: int) -> dict[int, float]:
    """corr(x_t, y_{t-k}) for k = -max_lag..max_lag on overlapping samples."""
    x = _series(x)
    y = _series(y)
    if x.size != y.size:
        raise DataError(f"length mismatch: {x.size} vs {y.size}")
    _demeaned(x)
    _demeaned(y)
    T = x.size
    if max_lag >= T - 1:
        raise DataError("lag window too wide for the sample")
    out = {}
    for k in range(-max_lag, max_lag + 1):
        if k >= 0:
            xs, ys = x[k:], y[: T - k]
        else:
            xs, ys = x[: T + k], y[-k:]
        xd, yd = xs - xs.mean(), ys - ys.mean()
        denom = math.sqrt(float(xd @ xd) * float(yd @ yd))
        out[k] = float(xd @ yd) / denom if denom > 0 else float("nan")
    return out


def annualize(monthly_mean: float, monthly_sd: float) -> dict:
    return {
        "pct_per_year_mean": monthly_mean * 12 * 100,
        "pct_per_year_sd": monthly_sd * math.sqrt(12) * 100,
    }


def stars(p_value: float) -> str:
    if not np.isfinite(p_value):
        return ""
    if p_value < 0.01:
        return "*"
    if p_value < 0.05:
        return "**"
    return ""


def _normal_p(z: float) -> float:
    return float(2 * stats.norm.sf(abs(z)))


def describe_panel(names, values, market: str | None = None, lags: int = 12,
                   acf_lags: int = 6, cross_lags: int = 6) -> dict:
    """Table-1 style battery for every column of ``values`` (T x k).

    Significance markers: ``*`` at 1%, ``**`` at 5%, two-sided. Skewness and
    kurtosis use their asymptotic s.e. sqrt(6/T) and sqrt(24/T);
    correlograms use the 1/sqrt(T) band.
    """
    values = np.asarray(values, dtype=float)
    T = values.shape[0]
    band = 1.0 / math.sqrt(T)
    summary = {}
    for j, name in enumerate(names):
        x = values[:, j]
        m = moments(x)
        ann = annualize(m["mean"], m["sd"])
        jb = jarque_bera_from_moments(T, m["skewness"], m["excess_kurtosis"])
        lb = ljung_box(x, lags)
        acf = autocorrelations(x, acf_lags)
        acf2 = autocorrelations(x**2, acf_lags)
        summary[name] = {
            "mean_pct_year": ann["pct_per_year_mean"],
            "sd_pct_year": ann["pct_per_year_sd"],
            "skewness": m["skewness"],
            "skewness_star": stars(_normal_p(m["skewness"] / math.sqrt(6 / T))),
            "excess_kurtosis": m["excess_kurtosis"],
            "kurtosis_star": stars(_normal_p(m["excess_kurtosis"] / math.sqrt(24 / T))),
            "jarque_bera": jb["stat"],
            "jarque_bera_p": jb["p_value"],
            "jarque_bera_star": stars(jb["p_value"]),
            "ljung_box": lb["stat"],
            "ljung_box_lags": lb["df"],
            "ljung_box_p": lb["p_value"],
            "ljung_box_star": stars(lb["p_value"]),
            "acf": [float(v) for v in acf],
            "acf_star": [stars(_normal_p(v / band)) for v in acf],
            "acf_squared": [float(v) for v in acf2],
            "acf_squared_star": [stars(_normal_p(v / band)) for v in acf2],
        }
    corr = np.corrcoef(values, rowvar=False).reshape(len(names), len(names))
    report = {
        "T": T,
        "series": list(names),
        "summary": summary,
        "correlations": [[float(v) for v in row] for row in corr],
    }
    if market is not None:
        mk = values[:, list(names).index(market)] ** 2
        cross = {}
        for j, name in enumerate(names):
            if name == market:
                continue
            cc = cross_correlations(values[:, j] ** 2, mk, cross_lags)
            cross[name] = {str(k): v for k, v in cc.items()}
        report["cross_correlations_squared"] = {"market": market, "by_series": cross}
    return report


def format_report(report: dict, sep: str = "\t") -> str:
    """Delimited-text rendering of :func:`describe_panel`."""
    names = report["series"]
    s = report["summary"]
    lines = [sep.join(["statistic", *names])]

    def row(label, fmt, key, star=None):
        cells = []
        for n in names:
            cell = fmt.format(s[n][key])
            if star:
                cell += s[n][star]
            cells.append(cell)
        lines.append(sep.join([label, *cells]))

    row("mean_pct_year", "{:.2f}", "mean_pct_year")
    row("sd_pct_year", "{:.2f}", "sd_pct_year")
    row("skewness", "{:.2f}", "skewness", "skewness_star")
    row("excess_kurtosis", "{:.2f}", "excess_kurtosis", "kurtosis_star")
    row("jarque_bera", "{:.2f}", "jarque_bera", "jarque_bera_star")
    row(f"Q({s[names[0]]['ljung_box_lags']})", "{:.2f}", "ljung_box", "ljung_box_star")
    lines.append("")
    lines.append(sep.join(["correlation", *names]))
    for n, r in zip(names, report["correlations"]):
        lines.append(sep.join([n, *(f"{v:.2f}" for v in r)]))
    for key, title in (("acf", "acf_lag"), ("acf_squared", "acf_squared_lag")):
        lines.append("")
        lines.append(sep.join([title, *names]))
        n_lags = len(s[names[0]][key])
        for k in range(n_lags):
            lines.append(sep.join(
                [str(k + 1), *(f"{s[n][key][k]:.3f}{s[n][key + '_star'][k]}" for n in names)]
            ))
    cc = report.get("cross_correlations_squared")
    if cc:
        others = list(cc["by_series"])
        lines.append("")
        lines.append(sep.join([f"xcorr_sq_vs_{cc['market']}", *others]))
        band = 1.0 / math.sqrt(report["T"])
        for k in cc["by_series"][others[0]] if others else []:
            cells = []
            for n in others:
                v = cc["by_series"][n][k]
                cells.append(f"{v:.3f}{stars(_normal_p(v / band))}")
            lines.append(sep.join([k, *cells]))
    return "\n".join(lines) + "\n"
