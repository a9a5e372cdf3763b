"""Return and instrument panels: loading, validation, alignment.

Text format (both directions): delimited text with a header row, first
column ``date`` as ``YYYY-MM``, remaining columns decimal numbers. Floats
are written with ``repr`` so that reading a written panel gives back the
exact same values.
"""
from __future__ import annotations

import csv
import io
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Mapping, Sequence

import numpy as np

from .errors import DataError

ROLES = ("asset", "currency", "market")

_DATE_RE = re.compile(r"^(\d{4})-(\d{2})$")


def month_index(stamp: str) -> int:
    """Map ``YYYY-MM`` to a running month count."""
    m = _DATE_RE.match(stamp.strip())
    if not m:
        raise DataError(f"unparseable date {stamp!r} (expected YYYY-MM)")
    year, month = int(m.group(1)), int(m.group(2))
    if not 1 <= month <= 12:
        raise DataError(f"unparseable date {stamp!r} (month out of range)")
    return year * 12 + month - 1


def month_stamp(index: int) -> str:
    year, month = divmod(index, 12)
    return f"{year:04d}-{month + 1:02d}"


def month_range(start: str, periods: int) -> tuple[str, ...]:
    first = month_index(start)
    return tuple(month_stamp(first + k) for k in range(periods))


def _check_dates(dates: Sequence[str]) -> None:
    idx = [month_index(d) for d in dates]
    for prev, cur, stamp in zip(idx, idx[1:], dates[1:]):
        if cur == prev:
            raise DataError(f"duplicate date {stamp}")
        if cur != prev + 1:
            raise DataError(f"non-consecutive dates at {stamp}")


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ReturnsPanel:
    """Monthly decimal returns, one column per series, each with a role."""

    dates: tuple[str, ...]
    names: tuple[str, ...]
    roles: tuple[str, ...]
    values: np.ndarray  # (T, k)

    def __post_init__(self):
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "roles", tuple(self.roles))
        object.__setattr__(self, "values", _frozen(self.values))
        T = len(self.dates)
        if self.values.ndim != 2 or self.values.shape != (T, len(self.names)):
            raise DataError(
                f"values shape {self.values.shape} does not match "
                f"{T} dates x {len(self.names)} series"
            )
        if len(self.roles) != len(self.names):
            raise DataError("one role per series required")
        if len(set(self.names)) != len(self.names):
            raise DataError("duplicate series names")
        bad = [r for r in self.roles if r not in ROLES]
        if bad:
            raise DataError(f"unknown role {bad[0]!r}; expected one of {ROLES}")
        if self.roles.count("market") != 1:
            raise DataError("exactly one market series required")
        if "asset" not in self.roles:
            raise DataError("at least one asset series required")
        if not np.all(np.isfinite(self.values)):
            raise DataError("missing or non-finite values")
        _check_dates(self.dates)

    @property
    def T(self) -> int:
        return len(self.dates)

    @property
    def N(self) -> int:
        return len(self.names)

    def series(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def __eq__(self, other):
        if not isinstance(other, ReturnsPanel):
            return NotImplemented
        return (
            self.dates == other.dates
            and self.names == other.names
            and self.roles == other.roles
            and np.array_equal(self.values, other.values)
        )


@dataclass(frozen=True, eq=False)
class InstrumentPanel:
    """Global information variables; the first column is the constant."""

    dates: tuple[str, ...]
    names: tuple[str, ...]
    values: np.ndarray  # (T, J)

    def __post_init__(self):
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "values", _frozen(self.values))
        if self.values.ndim != 2 or self.values.shape != (len(self.dates), len(self.names)):
            raise DataError("instrument values do not match dates x variables")
        if not self.names:
            raise DataError("at least the constant instrument is required")
        if not np.all(self.values[:, 0] == 1.0):
            raise DataError("first instrument must be the constant column of ones")
        if not np.all(np.isfinite(self.values)):
            raise DataError("missing or non-finite instrument values")
        _check_dates(self.dates)

    @property
    def J(self) -> int:
        return len(self.names)

    def __eq__(self, other):
        if not isinstance(other, InstrumentPanel):
            return NotImplemented
        return (
            self.dates == other.dates
            and self.names == other.names
            and np.array_equal(self.values, other.values)
        )


@dataclass(frozen=True)
class RealFXInputs:
    """Levels for the real exchange rate of one currency.

    ``nominal_rate`` is the reference-currency price of one unit of the
    local currency (e.g. USD per FRF).
    """

    nominal_rate: np.ndarray
    cpi_local: np.ndarray
    cpi_reference: np.ndarray
    dates: tuple[str, ...] | None = None

    def __post_init__(self):
        for name in ("nominal_rate", "cpi_local", "cpi_reference"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        n = len(self.nominal_rate)
        if len(self.cpi_local) != n or len(self.cpi_reference) != n:
            raise DataError("nominal rate and CPI series must have equal length")
        if self.dates is not None:
            if len(self.dates) != n:
                raise DataError("dates do not match level series")
            _check_dates(self.dates)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Aligned estimation sample.

    Rows of ``r`` follow the model layout: assets, then currencies, then the
    market. ``Z[t]`` holds the instruments dated one month before ``dates[t]``.
    """

    dates: tuple[str, ...]
    names: tuple[str, ...]
    r: np.ndarray  # (T, N)
    Z: np.ndarray  # (T, J)
    instrument_names: tuple[str, ...]
    n_assets: int
    n_currencies: int
    _cov: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "r", _frozen(self.r))
        object.__setattr__(self, "Z", _frozen(self.Z))
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "names", tuple(self.names))
        object.__setattr__(self, "instrument_names", tuple(self.instrument_names))
        if self.r.shape[0] != self.Z.shape[0] or self.r.shape[0] != len(self.dates):
            raise DataError("returns, instruments and dates disagree on T")
        if self.r.shape[1] != self.n_assets + self.n_currencies + 1:
            raise DataError("N must equal n_assets + n_currencies + 1")

    @property
    def T(self) -> int:
        return self.r.shape[0]

    @property
    def N(self) -> int:
        return self.r.shape[1]

    @property
    def J(self) -> int:
        return self.Z.shape[1]

    @property
    def roles(self) -> tuple[str, ...]:
        return ("asset",) * self.n_assets + ("currency",) * self.n_currencies + ("market",)

    def sample_covariance(self) -> np.ndarray:
        """Covariance of demeaned returns (divisor T); the GARCH target."""
        if self._cov is None:
            dev = self.r - self.r.mean(axis=0)
            cov = dev.T @ dev / self.T
            cov = 0.5 * (cov + cov.T)
            cov.setflags(write=False)
            object.__setattr__(self, "_cov", cov)
        return self._cov

    def stacked(self, copies: int = 2) -> "Dataset":
        """Repeat the sample end to end (dates relabelled consecutively)."""
        T = self.T * copies
        return Dataset(
            dates=month_range(self.dates[0], T),
            names=self.names,
            r=np.tile(self.r, (copies, 1)),
            Z=np.tile(self.Z, (copies, 1)),
            instrument_names=self.instrument_names,
            n_assets=self.n_assets,
            n_currencies=self.n_currencies,
        )


# ---------------------------------------------------------------------------
# text IO


def _open_text(source) -> tuple[IO[str], bool]:
    if isinstance(source, (str, Path)):
        return open(source, newline="", encoding="utf-8"), True
    return source, False


def read_table(source) -> tuple[list[str], list[str], list[list[float]]]:
    """Parse a date-indexed CSV into (series names, dates, rows of floats)."""
    stream, owned = _open_text(source)
    try:
        rows = [row for row in csv.reader(stream) if row and any(c.strip() for c in row)]
    finally:
        if owned:
            stream.close()
    if not rows:
        raise DataError("empty input")
    header = [h.strip() for h in rows[0]]
    if len(header) < 2 or header[0].lower() != "date":
        raise DataError("header must start with a 'date' column followed by series")
    dates, values = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise DataError(f"line {lineno}: expected {len(header)} cells, got {len(row)}")
        dates.append(row[0].strip())
        parsed = []
        for name, cell in zip(header[1:], row[1:]):
            cell = cell.strip()
            if cell == "" or cell.lower() in ("na", "nan", "null"):
                raise DataError(f"line {lineno}: missing value for {name}")
            try:
                v = float(cell)
            except ValueError:
                raise DataError(f"line {lineno}: unparseable number {cell!r} for {name}") from None
            if not math.isfinite(v):
                raise DataError(f"line {lineno}: non-finite value for {name}")
            parsed.append(v)
        values.append(parsed)
    for d in dates:
        month_index(d)
    _check_dates(dates)
    return header[1:], dates, values


def load_panel(source, roles: Mapping[str, str]) -> ReturnsPanel:
    """Read a returns panel and tag every column with its role."""
    names, dates, values = read_table(source)
    missing = [n for n in names if n not in roles]
    if missing:
        raise DataError(f"column {missing[0]!r} has no role in the roles map")
    if len(set(names)) != len(names):
        raise DataError("duplicate column names")
    arr = np.array(values, dtype=float).reshape(len(dates), len(names))
    return ReturnsPanel(dates, names, [roles[n] for n in names], arr)


def load_instruments(source, add_constant: bool = True) -> InstrumentPanel:
    """Read instruments; ``add_constant`` prepends a ``const`` column of ones."""
    names, dates, values = read_table(source)
    arr = np.array(values, dtype=float).reshape(len(dates), len(names))
    if add_constant:
        arr = np.column_stack([np.ones(len(dates)), arr])
        names = ["const", *names]
    return InstrumentPanel(dates, names, arr)


def _write_table(stream: IO[str], names, dates, values) -> None:
    writer = csv.writer(stream, lineterminator="\n")
    writer.writerow(["date", *names])
    for d, row in zip(dates, values):
        writer.writerow([d, *(repr(float(v)) for v in row)])


def serialize_table(names, dates, values) -> str:
    """Date-indexed table in the text format (shortest round-trip float repr)."""
    buf = io.StringIO()
    _write_table(buf, names, dates, values)
    return buf.getvalue()


def serialize_panel(panel: ReturnsPanel | InstrumentPanel, stream: IO[str] | None = None) -> str:
    """Write a panel in the text format; returns the text."""
    text = serialize_table(panel.names, panel.dates, panel.values)
    if stream is not None:
        stream.write(text)
    return text


# ---------------------------------------------------------------------------
# transformations


def excess_returns(total, riskfree) -> np.ndarray:
    total = np.asarray(total, dtype=float)
    riskfree = np.asarray(riskfree, dtype=float)
    if total.shape != riskfree.shape:
        raise DataError(f"length mismatch: {total.shape} vs {riskfree.shape}")
    return total - riskfree


def real_fx_returns(inputs: RealFXInputs) -> np.ndarray:
    """Monthly log change of the real exchange rate ``S * I_local / I_ref``."""
    levels = (inputs.nominal_rate, inputs.cpi_local, inputs.cpi_reference)
    if any(np.any(~(x > 0)) for x in levels):
        raise DataError("non-positive level in nominal rate or CPI series")
    if len(inputs.nominal_rate) < 2:
        raise DataError("at least 2 observations required")
    # sum of logs keeps a common CPI rescaling exactly neutral
    log_real = np.log(inputs.nominal_rate) + np.log(inputs.cpi_local) - np.log(inputs.cpi_reference)
    return np.diff(log_real)


def align(returns: ReturnsPanel, instruments: InstrumentPanel) -> Dataset:
    """Pair each return date t with the instruments dated t-1.

    Series are reordered into the model layout (assets, currencies, market),
    keeping file order within a role.
    """
    inst_index = {month_index(d): k for k, d in enumerate(instruments.dates)}
    keep = [
        t for t, d in enumerate(returns.dates) if month_index(d) - 1 in inst_index
    ]
    if not keep:
        raise DataError("empty intersection between return and instrument dates")
    order = [i for role in ROLES for i, r in enumerate(returns.roles) if r == role]
    z_rows = [inst_index[month_index(returns.dates[t]) - 1] for t in keep]
    return Dataset(
        dates=tuple(returns.dates[t] for t in keep),
        names=tuple(returns.names[i] for i in order),
        r=returns.values[np.ix_(keep, order)],
        Z=instruments.values[z_rows],
        instrument_names=instruments.names,
        n_assets=returns.roles.count("asset"),
        n_currencies=returns.roles.count("currency"),
    )
