"""Robust Wald tests of linear restrictions R psi = r."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .descriptive import chi2_sf
from .errors import DataError, SingularMatrixError
from .model_spec import ModelSpec


@dataclass(frozen=True)
class Restriction:
    R: np.ndarray
    r: np.ndarray = None
    label: str = ""
    key: str = ""

    def __post_init__(self):
        R = np.atleast_2d(np.asarray(self.R, dtype=float))
        q = R.shape[0]
        r = np.zeros(q) if self.r is None else np.asarray(self.r, dtype=float).reshape(q)
        if q < 1:
            raise DataError("a restriction needs at least one row")
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "r", r)

    @property
    def q(self) -> int:
        return self.R.shape[0]

    @classmethod
    def zeros(cls, P: int, indices, label: str, key: str = "") -> "Restriction":
        indices = list(indices)
        R = np.zeros((len(indices), P))
        R[np.arange(len(indices)), indices] = 1.0
        return cls(R, None, label, key)


def _redundant_rows(M: np.ndarray, tol: float) -> list[int]:
    rows, kept = [], []
    for i in range(M.shape[0]):
        trial = kept + [i]
        sub = M[np.ix_(trial, trial)]
        if np.linalg.matrix_rank(sub, tol=tol) < len(trial):
            rows.append(i)
        else:
            kept.append(i)
    return rows


def wald(restriction: Restriction, psi, V) -> dict:
    """stat = (R psi - r)' (R V R')^-1 (R psi - r), chi-square with q df."""
    psi = np.asarray(psi, dtype=float)
    V = np.asarray(V, dtype=float)
    R, r = restriction.R, restriction.r
    if R.shape[1] != psi.size or V.shape != (psi.size, psi.size):
        raise DataError("restriction, estimate and covariance dimensions disagree")
    if not np.all(np.isfinite(V)):
        raise SingularMatrixError("covariance matrix has non-finite entries")
    M = R @ V @ R.T
    M = 0.5 * (M + M.T)
    scale = max(float(np.max(np.abs(np.diag(M)))), np.finfo(float).tiny)
    tol = scale * M.shape[0] * 1e-12
    if np.linalg.matrix_rank(M, tol=tol) < M.shape[0]:
        rows = _redundant_rows(M, tol)
        raise SingularMatrixError(
            f"singular R V R' for {restriction.label or 'restriction'}: redundant rows {rows}"
        )
    d = R @ psi - r
    stat = float(d @ np.linalg.solve(M, d))
    stat = max(stat, 0.0)
    return {"stat": stat, "df": restriction.q, "p_value": chi2_sf(stat, restriction.q)}


def standard_restrictions(spec: ModelSpec) -> list[Restriction]:
    """The hypothesis battery applicable to ``spec``.

    "Constant" hypotheses zero every instrument weight except the constant's.
    """
    P, J, n = spec.n_params, spec.J, spec.n_assets
    b = spec.blocks()
    out = []
    kw = b["kappa_w"]
    if J > 1:
        out.append(Restriction.zeros(P, range(kw.start + 1, kw.stop),
                                     "world price of risk constant", "world_constant"))
    for k in range(spec.n_currencies):
        cur = spec.series_names[n + k]
        sl = spec.currency_slice(k)
        out.append(Restriction.zeros(P, range(sl.start, sl.stop),
                                     f"{cur} price of risk zero", f"currency_zero[{cur}]"))
        if J > 1:
            out.append(Restriction.zeros(P, range(sl.start + 1, sl.stop),
                                         f"{cur} price of risk constant", f"currency_constant[{cur}]"))
    if spec.n_currencies:
        kc = b["kappa_c"]
        out.append(Restriction.zeros(P, range(kc.start, kc.stop),
                                     "currency prices of risk jointly zero", "currency_joint_zero"))
        if J > 1:
            idx = [i for k in range(spec.n_currencies) for i in range(spec.currency_slice(k).start + 1,
                                                                      spec.currency_slice(k).stop)]
            out.append(Restriction.zeros(P, idx, "currency prices of risk jointly constant",
                                         "currency_joint_constant"))
    if spec.has_alpha:
        out.append(Restriction.zeros(P, range(b["alpha"].start, b["alpha"].stop),
                                     "alpha jointly zero", "alpha_zero"))
    if spec.has_domestic:
        out.append(Restriction.zeros(P, range(b["delta_d"].start, b["delta_d"].stop),
                                     "domestic prices of risk jointly zero", "domestic_zero"))
    if spec.has_alpha and spec.n_phi:
        out.append(Restriction.zeros(P, range(b["phi"].start, b["phi"].stop),
                                     "information variables orthogonal to returns", "phi_zero"))
    return out


@dataclass
class TestTable:
    rows: list = field(default_factory=list)
    skipped: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"tests": self.rows, "skipped": self.skipped}

    def format(self, sep: str = "\t") -> str:
        lines = [sep.join(["hypothesis", "chi2", "df", "p_value"])]
        for row in self.rows:
            stat = "nan" if row["stat"] is None else f"{row['stat']:.3f}"
            p = "nan" if row["p_value"] is None else f"{row['p_value']:.3f}"
            lines.append(sep.join([row["label"], stat, str(row["df"]), p]))
        for s in self.skipped:
            lines.append(f"# skipped: {s}")
        return "\n".join(lines) + "\n"


_ALL_KEYS = ("world_constant", "currency_zero", "currency_constant", "currency_joint_zero",
             "currency_joint_constant", "alpha_zero", "domestic_zero", "phi_zero")


def standard_battery(spec: ModelSpec, result, V=None) -> TestTable:
    """Run every applicable restriction; inapplicable ones are listed as skipped.

    ``result`` is an estimation result (``psi`` and ``cov`` are used) or a bare
    estimate vector, in which case ``V`` must be given.
    """
    if V is None:
        psi, V = result.psi, result.cov
    else:
        psi = result
    table = TestTable()
    restrictions = standard_restrictions(spec)
    present = {r.key.split("[")[0] for r in restrictions}
    notes = {
        "world_constant": "world-price constancy needs J > 1",
        "currency_zero": "no currency series",
        "currency_constant": "currency constancy needs currencies and J > 1",
        "currency_joint_zero": "no currency series",
        "currency_joint_constant": "currency constancy needs currencies and J > 1",
        "alpha_zero": f"alpha terms absent in the {spec.variant} variant",
        "domestic_zero": f"domestic prices absent in the {spec.variant} variant",
        "phi_zero": f"information-variable terms absent in the {spec.variant} variant"
        if not spec.has_alpha else "information-variable terms need J > 1",
    }
    for key in _ALL_KEYS:
        if key not in present:
            table.skipped.append(notes[key])
    for restr in restrictions:
        try:
            res = wald(restr, psi, V)
            row = {"key": restr.key, "label": restr.label, **res}
        except SingularMatrixError as exc:
            row = {"key": restr.key, "label": restr.label, "stat": None, "df": restr.q,
                   "p_value": None, "error": str(exc)}
        table.rows.append(row)
    return table
