"""Command-line front end.

Exit codes: 0 success, 1 usage/config/data error, 2 numerical failure.
Errors print one line ``error[CODE]: message`` on stderr.
"""
from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import logging
import platform
import sys
from pathlib import Path
from types import SimpleNamespace

import numpy as np

from . import __version__, garch
from .config import RunConfig, load_config
from .data_model import (
    Dataset, align, load_instruments, load_panel, read_table, serialize_panel, serialize_table,
)
from .descriptive import describe_panel, format_report
from .errors import ConfigError, DataError, ICAPMError, NumericalError
from .inference import standard_battery
from .model_spec import ModelSpec
from .optimizer import SCHEMA_VERSION, estimate
from .premia import decompose, format_premia_table, hp_filter, premia_table
from .simulate import monte_carlo, simulate

logger = logging.getLogger("icapm")


class UsageError(ICAPMError):
    code = "E_USAGE"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


# ---------------------------------------------------------------------------
# output helpers


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _clean(obj):
    """Non-finite floats become null so the output is strict JSON."""
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _dump_json(obj) -> str:
    return json.dumps(_clean(obj), indent=2, allow_nan=False) + "\n"


class _Run:
    """Collects outputs and writes the manifest last."""

    def __init__(self, command: str, argv, out: str, config: RunConfig | None):
        self.command = command
        self.argv = list(argv)
        self.out = Path(out)
        self.config = config
        self.inputs: dict[str, dict] = {}
        self.outputs: list[str] = []
        self.seed = None
        try:
            self.out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise DataError(f"cannot create output directory {out}: {exc.strerror}") from None

    def add_input(self, label: str, path) -> None:
        try:
            digest = _sha256(path)
        except OSError as exc:
            raise DataError(f"cannot read {path}: {exc.strerror}") from None
        self.inputs[label] = {"path": str(path), "sha256": digest}

    def write(self, name: str, text: str) -> Path:
        path = self.out / name
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        self.outputs.append(name)
        return path

    def finish(self) -> None:
        import numba
        import scipy

        manifest = {
            "schema_version": SCHEMA_VERSION,
            "command": self.command,
            "argv": self.argv,
            "config": self.config.text if self.config else None,
            "inputs": self.inputs,
            "outputs": {n: _sha256(self.out / n) for n in self.outputs},
            "seed": self.seed,
            "versions": {
                "icapm": __version__,
                "python": platform.python_version(),
                "numpy": np.__version__,
                "scipy": scipy.__version__,
                "numba": numba.__version__,
            },
            "created_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
        }
        (self.out / "manifest.json").write_text(_dump_json(manifest), encoding="utf-8")


# ---------------------------------------------------------------------------
# data assembly


def _load_dataset(cfg: RunConfig, data_path, inst_path) -> Dataset:
    if not cfg.roles:
        raise ConfigError("[roles] section required to load a panel")
    names, _, _ = read_table(data_path)
    absent = [n for n in cfg.roles if n not in names]
    if absent:
        raise ConfigError(f"series {absent[0]!r} referenced in [roles] is absent from the data")
    returns = load_panel(data_path, cfg.roles)
    inst = load_instruments(inst_path, add_constant=cfg.add_constant())
    cols = cfg.instrument_columns()
    if cols:
        missing = [c for c in cols if c not in inst.names]
        if missing:
            raise ConfigError(f"instrument {missing[0]!r} not in the instrument file")
        keep = [inst.names.index(c) for c in cols]
        if cfg.add_constant() and 0 not in keep:
            keep = [0, *keep]
        inst = type(inst)(inst.dates, [inst.names[k] for k in keep], inst.values[:, keep])
    return align(returns, inst)


def _dataset_from_sample(sample: dict) -> Dataset:
    return Dataset(
        dates=tuple(sample["dates"]), names=tuple(sample["series"]),
        r=np.array(sample["returns"], dtype=float), Z=np.array(sample["Z"], dtype=float),
        instrument_names=tuple(sample["instruments"]), n_assets=sample["n_assets"],
        n_currencies=sample["n_currencies"],
    )


def _load_result(path):
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path} is not valid JSON: {exc.msg}") from None
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise DataError(f"unsupported result schema_version {doc.get('schema_version')!r}")
    spec = ModelSpec(**doc["model"])
    psi = np.array([p["estimate"] for p in doc["parameters"]], dtype=float)
    cov = np.array([[np.nan if v is None else v for v in row] for row in doc["covariance"]], dtype=float)
    H0 = np.array(doc["H0"], dtype=float)
    return doc, spec, psi, cov, H0


def _param_table(names, psi, se) -> str:
    lines = ["parameter\testimate\tse"]
    for n, v, s in zip(names, psi, se):
        lines.append(f"{n}\t{v:.6f}\t{s:.6f}")
    return "\n".join(lines) + "\n"


def _trace_csv(trace) -> str:
    lines = ["stage,iter,loglik,step,grad_inf"]
    for row in trace:
        vals = [row.get("stage", ""), str(row["iter"])]
        for k in ("loglik", "step", "grad_inf"):
            v = row.get(k)
            vals.append("" if v is None or not np.isfinite(v) else repr(float(v)))
        lines.append(",".join(vals))
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# subcommands


def cmd_describe(args, argv) -> int:
    cfg = load_config(args.config) if args.config else None
    run = _Run("describe", argv, args.out, cfg)
    run.add_input("data", args.data)
    names, dates, values = read_table(args.data)
    market = args.market
    if market is None and cfg is not None:
        markets = [n for n, r in cfg.roles.items() if r == "market"]
        market = markets[0] if markets else None
    if market is None:
        market = names[-1]
    if market not in names:
        raise ConfigError(f"market series {market!r} absent from the data")
    report = describe_panel(names, np.array(values), market=market, lags=args.lags,
                            acf_lags=args.acf_lags, cross_lags=args.acf_lags)
    report["dates"] = [dates[0], dates[-1]]
    text = format_report(report)
    run.write("describe.txt", text)
    run.write("describe.json", _dump_json(report))
    run.finish()
    sys.stdout.write(text)
    return 0


def cmd_estimate(args, argv) -> int:
    cfg = load_config(args.config)
    run = _Run("estimate", argv, args.out, cfg)
    run.add_input("config", args.config)
    run.add_input("data", args.data)
    run.add_input("instruments", args.instruments)
    data = _load_dataset(cfg, args.data, args.instruments)
    spec = ModelSpec.from_dataset(data, **cfg.model_kwargs())
    res = estimate(spec, data, cfg.estimation_options(), config_text=cfg.text)
    run.write("estimate.json", _dump_json(res.to_dict(data)))
    run.write("filtered_H.csv", garch.export_long(data.dates, data.names, res.filtered.H))
    run.write("trace.csv", _trace_csv(res.trace))
    run.finish()
    sys.stdout.write(_param_table(res.names, res.psi, res.se))
    sys.stdout.write(f"loglik\t{res.loglik:.6f}\nstatus\t{res.status}\n")
    for w in res.warnings:
        sys.stdout.write(f"# warning: {w}\n")
    return 0


def cmd_test(args, argv) -> int:
    run = _Run("test", argv, args.out, None)
    run.add_input("result", args.result)
    _, spec, psi, cov, _ = _load_result(args.result)
    table = standard_battery(spec, psi, cov)
    text = table.format()
    run.write("tests.txt", text)
    run.write("tests.json", _dump_json({"schema_version": SCHEMA_VERSION, **table.to_dict()}))
    run.finish()
    sys.stdout.write(text)
    return 0


def cmd_premia(args, argv) -> int:
    cfg = load_config(args.config) if args.config else RunConfig(text="")
    run = _Run("premia", argv, args.out, cfg if args.config else None)
    run.add_input("result", args.result)
    if args.config:
        run.add_input("config", args.config)
    doc, spec, psi, _, H0 = _load_result(args.result)
    if "sample" not in doc:
        raise DataError("result file has no sample block; re-run estimate")
    data = _dataset_from_sample(doc["sample"])
    filtered = garch.filter(spec, psi, data, H0)
    prem = decompose(SimpleNamespace(spec=spec, psi=psi, filtered=filtered), data)
    gap = prem.additivity_gap()
    rows = premia_table(prem, cfg.breaks(), cfg.se_method(), cfg.nw_lags())
    run.write("premia_long.csv", prem.to_long())
    run.write("premia_summary.txt", format_premia_table(rows))
    run.write("premia_summary.json", _dump_json({
        "schema_version": SCHEMA_VERSION, "additivity_gap": gap, "rows": rows,
    }))
    lam = cfg.hp_lambda()
    cols = {"delta_m": filtered.delta_m, "delta_m_trend": hp_filter(filtered.delta_m, lam)["trend"]}
    for k in range(spec.n_currencies):
        cur = spec.series_names[spec.n_assets + k]
        cols[f"delta[{cur}]"] = filtered.delta_k[:, k]
        cols[f"delta[{cur}]_trend"] = hp_filter(filtered.delta_k[:, k], lam)["trend"]
    lines = [",".join(["date", *cols])]
    for t, d in enumerate(data.dates):
        lines.append(",".join([d, *(repr(float(v[t])) for v in cols.values())]))
    run.write("prices.csv", "\n".join(lines) + "\n")
    run.finish()
    sys.stdout.write(format_premia_table(rows))
    sys.stdout.write(f"# additivity gap {gap:.3g}\n")
    return 0


def _seed(args, section: dict) -> int:
    if args.seed is not None:
        return args.seed
    try:
        return int(section.get("seed", 0))
    except ValueError:
        raise ConfigError("seed must be an integer") from None


def cmd_simulate(args, argv) -> int:
    cfg = load_config(args.config)
    run = _Run("simulate", argv, args.out, cfg)
    run.add_input("config", args.config)
    spec = cfg.simulation_spec()
    psi, H0 = cfg.true_parameters(spec)
    seed = _seed(args, cfg.simulate)
    run.seed = seed
    T = args.T if args.T is not None else int(cfg.simulate.get("T", 500))
    sim = simulate(spec, psi, H0, T, seed, cfg.instrument_process(),
                   start=cfg.simulate.get("start", "1990-01"))
    inst = sim.instruments
    if spec.J > 1:
        # the constant is implied: estimate adds it back on load
        run.write("instruments.csv", serialize_table(inst.names[1:], inst.dates, inst.values[:, 1:]))
    run.write("returns.csv", serialize_panel(sim.returns))
    run.write("latent_H.csv", garch.export_long(sim.returns.dates, spec.series_names, sim.H))
    run.write("truth.json", _dump_json({
        "schema_version": SCHEMA_VERSION, "model": spec.describe(),
        "parameters": dict(zip(spec.param_names(), psi.tolist())),
        "H0": H0.tolist(), "T": T, "seed": seed,
    }))
    run.finish()
    sys.stdout.write(f"simulated T={T} N={spec.N} J={spec.J} seed={seed} -> {run.out}\n")
    return 0


def cmd_mc(args, argv) -> int:
    cfg = load_config(args.config)
    run = _Run("mc", argv, args.out, cfg)
    run.add_input("config", args.config)
    spec = cfg.simulation_spec()
    psi, H0 = cfg.true_parameters(spec)
    seed = _seed(args, cfg.mc)
    run.seed = seed
    reps = args.reps if args.reps is not None else int(cfg.mc.get("reps", 100))
    T = args.T if args.T is not None else int(cfg.mc.get("T", 2000))
    workers = args.workers if args.workers is not None else int(cfg.mc.get("workers", 1))
    report = monte_carlo(spec, psi, H0, reps, T, seed, cfg.instrument_process(),
                         cfg.estimation_options(), workers=workers)
    text = report.format_table()
    run.write("mc.txt", text)
    run.write("mc.json", _dump_json({"schema_version": SCHEMA_VERSION, **report.to_dict()}))
    run.finish()
    sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="icapm", description="Conditional international CAPM with currency risk.")
    p.add_argument("--version", action="version", version=f"icapm {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = sub.add_parser("describe", help="descriptive statistics of a returns panel")
    d.add_argument("--data", required=True)
    d.add_argument("--config")
    d.add_argument("--market", help="market column (default: from [roles], else the last column)")
    d.add_argument("--lags", type=int, default=12, help="Ljung-Box lags")
    d.add_argument("--acf-lags", type=int, default=6)
    d.add_argument("--out", default="results")
    d.set_defaults(func=cmd_describe)

    e = sub.add_parser("estimate", help="QML estimation")
    e.add_argument("--config", required=True)
    e.add_argument("--data", required=True)
    e.add_argument("--instruments", required=True)
    e.add_argument("--out", default="results")
    e.set_defaults(func=cmd_estimate)

    t = sub.add_parser("test", help="Wald battery on an estimation result")
    t.add_argument("--result", required=True)
    t.add_argument("--out", default="results")
    t.set_defaults(func=cmd_test)

    r = sub.add_parser("premia", help="premium decomposition of an estimation result")
    r.add_argument("--result", required=True)
    r.add_argument("--config")
    r.add_argument("--out", default="results")
    r.set_defaults(func=cmd_premia)

    s = sub.add_parser("simulate", help="simulate a panel from known parameters")
    s.add_argument("--config", required=True)
    s.add_argument("--seed", type=int)
    s.add_argument("--T", type=int)
    s.add_argument("--out", default="results")
    s.set_defaults(func=cmd_simulate)

    m = sub.add_parser("mc", help="Monte Carlo recovery experiment")
    m.add_argument("--config", required=True)
    m.add_argument("--seed", type=int)
    m.add_argument("--reps", type=int)
    m.add_argument("--T", type=int)
    m.add_argument("--workers", type=int)
    m.add_argument("--out", default="results")
    m.set_defaults(func=cmd_mc)
    return p


def _fail(exc: ICAPMError, code: int) -> int:
    msg = " ".join(str(exc).split())
    sys.stderr.write(f"error[{exc.code}]: {msg}\n")
    return code


def run(argv=None) -> int:
    """Run the CLI; returns the exit code."""
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail(exc, 1)
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args, argv)
    except NumericalError as exc:
        return _fail(exc, 2)
    except ICAPMError as exc:
        return _fail(exc, 1)
    except OSError as exc:
        err = DataError(f"{exc.filename or ''}: {exc.strerror or exc}".strip(": "))
        return _fail(err, 1)


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
