"""Command line entry point: ``slowdown {analyze,simulate,sweep,fetch}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .data import EndpointConfig, fetch_remote, write_csv
from .errors import SlowdownError
from .model import ModelParams, SweepSpec
from .pipeline import AnalysisConfig, run_analyze, run_simulate, run_sweep
from .preprocess import SmootherConfig

log = logging.getLogger("slowdown")

EXIT_OK, EXIT_FAIL, EXIT_PARTIAL = 0, 1, 2


class UsageError(Exception):
    pass


def _csv_list(text: str) -> list[str]:
    return [t.strip() for t in text.split(",") if t.strip()]


def parse_grid(text: str) -> list[float]:
    """``a:b:n`` (n evenly spaced points, inclusive) or a comma list."""
    if ":" in text:
        parts = text.split(":")
        if len(parts) != 3:
            raise argparse.ArgumentTypeError(f"grid {text!r} is not a:b:n")
        a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
        if n < 1:
            raise argparse.ArgumentTypeError("grid needs at least one point")
        return np.linspace(a, b, n).tolist()
    try:
        return [float(t) for t in _csv_list(text)]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from exc


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="slowdown", description=__doc__)
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="residuals, stationarity, AR1/Std and warnings per asset")
    a.add_argument("--config", type=Path, help="YAML/JSON file with AnalysisConfig fields")
    a.add_argument("--assets", type=_csv_list)
    a.add_argument("--from", dest="start")
    a.add_argument("--to", dest="end")
    a.add_argument("--data-dir", help="directory holding <ASSET>.csv files (date,close)")
    a.add_argument("--bandwidth", type=float)
    a.add_argument("--truncation", type=float, dest="truncation_multiple")
    a.add_argument("--windows", type=lambda s: [int(x) for x in _csv_list(s)])
    a.add_argument("--step", type=int, dest="step_days")
    a.add_argument("--delta", type=int, dest="delta_days")
    a.add_argument("--delta-mode", choices=["rolling", "block"])
    a.add_argument("--theta-mult", type=float, dest="theta_multiplier")
    a.add_argument("--merge-gap", type=int, dest="merge_gap_days")
    a.add_argument("--alpha", type=float)
    a.add_argument("--forward-fill", action="store_true", default=None)
    a.add_argument("--fetch", action="store_true", default=None, help="fetch assets with no local CSV")
    a.add_argument("--out", dest="out_dir")
    a.add_argument("--format", dest="formats", type=_csv_list)
    a.add_argument("--jobs", type=int)

    s = sub.add_parser("simulate", help="one Euler-Maruyama path of the price model")
    _model_args(s)
    s.add_argument("--out", default="out")
    s.add_argument("--format", dest="formats", type=_csv_list, default=["csv", "svg"])

    w = sub.add_parser("sweep", help="ensemble AR1/Std over a parameter grid")
    w.add_argument("--param", choices=["m", "r", "D"], required=True)
    w.add_argument("--grid", type=parse_grid, required=True)
    w.add_argument("--realizations", type=int, default=100)
    w.add_argument("--window", type=int, default=400, help="samples per indicator window (0: whole record)")
    w.add_argument("--burn-in", type=float, default=100.0)
    w.add_argument("--sample-interval", type=float, default=0.1)
    w.add_argument("--no-detrend", action="store_true")
    w.add_argument("--bandwidth", type=float, default=30.0)
    w.add_argument("--u0-policy", choices=["good", "fixed"], default="good")
    _model_args(w)
    w.add_argument("--jobs", type=int, default=1)
    w.add_argument("--out", default="out")
    w.add_argument("--format", dest="formats", type=_csv_list, default=["csv", "svg", "json"])

    f = sub.add_parser("fetch", help="download daily closes into <out>/<ASSET>.csv")
    f.add_argument("--asset", required=True)
    f.add_argument("--from", dest="start", required=True)
    f.add_argument("--to", dest="end", required=True)
    f.add_argument("--api-base")
    f.add_argument("--out", default="data")
    return p


def _model_args(p: argparse.ArgumentParser) -> None:
    d = ModelParams()
    p.add_argument("--m", type=float, default=d.m)
    p.add_argument("--r", type=float, default=d.r)
    p.add_argument("--D", type=float, default=d.D)
    p.add_argument("--dt", type=float, default=d.dt)
    p.add_argument("--tmax", type=float, default=d.t_max)
    p.add_argument("--u0", type=float, default=d.u0)
    p.add_argument("--seed", type=int, default=d.seed)


def _params(ns) -> ModelParams:
    return ModelParams(m=ns.m, r=ns.r, D=ns.D, dt=ns.dt, t_max=ns.tmax, u0=ns.u0, seed=ns.seed)


def config_from_args(ns) -> AnalysisConfig:
    fields: dict = {}
    if ns.config:
        loaded = yaml.safe_load(ns.config.read_text()) or {}
        if not isinstance(loaded, dict):
            raise UsageError(f"{ns.config}: expected a mapping")
        fields.update(loaded)
    for key in ("assets", "start", "end", "data_dir", "bandwidth", "truncation_multiple", "windows",
                "step_days", "delta_days", "delta_mode", "theta_multiplier", "merge_gap_days", "alpha",
                "forward_fill", "fetch", "out_dir", "formats", "jobs"):
        value = getattr(ns, key)
        if value is not None:
            fields[key] = value
    if not fields.get("assets"):
        raise UsageError("no assets given (use --assets or a config file)")
    return AnalysisConfig.from_dict(fields)


def cmd_analyze(ns) -> int:
    cfg = config_from_args(ns)
    report, _ = run_analyze(cfg)
    for r in report.records:
        print(f"{r['asset_id']}: {r['status']}" + (f" ({r['reason']})" if r.get("reason") else ""))
    return report.exit_code()


def cmd_simulate(ns) -> int:
    summary = run_simulate(_params(ns), ns.out, ns.formats)
    print(json.dumps({k: summary[k] for k in ("final_value", "tail_mean", "equilibria", "files")}, indent=2))
    return EXIT_OK


def cmd_sweep(ns) -> int:
    spec = SweepSpec(
        swept_parameter=ns.param,
        grid=tuple(ns.grid),
        base=_params(ns),
        n_realizations=ns.realizations,
        window=ns.window or None,
        burn_in=ns.burn_in,
        sample_interval=ns.sample_interval,
        detrend=not ns.no_detrend,
        smoother=SmootherConfig(ns.bandwidth),
        u0_policy=ns.u0_policy,
    )
    result, files = run_sweep(spec, ns.out, ns.formats, jobs=ns.jobs)
    for g, a, s in zip(result.grid, result.mean_ar1, result.mean_std):
        print(f"{ns.param}={g:.6g}  mean_ar1={a:.6f}  mean_std={s:.6f}")
    for f in files:
        print(f)
    return EXIT_OK


def cmd_fetch(ns) -> int:
    cfg = EndpointConfig.from_env(base_url=ns.api_base)
    series = fetch_remote(ns.asset, ns.start, ns.end, cfg)
    path = Path(ns.out) / f"{ns.asset}.csv"
    write_csv(series, path)
    print(f"{path}: {len(series)} rows")
    return EXIT_OK


COMMANDS = {"analyze": cmd_analyze, "simulate": cmd_simulate, "sweep": cmd_sweep, "fetch": cmd_fetch}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        ns = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_FAIL
    logging.basicConfig(level=logging.DEBUG if ns.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[ns.command](ns)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    except SlowdownError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
