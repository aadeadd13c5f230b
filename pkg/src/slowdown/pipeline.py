"""End-to-end analysis: load -> detrend -> stationarity gate -> indicators -> warnings.

Also hosts the file-emitting wrappers used by the ``simulate`` and ``sweep``
commands. Every output is a deterministic function of config and inputs.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .data import EndpointConfig, fetch_remote, load_csv
from .errors import PreconditionError, SlowdownError
from .indicators import (
    IndicatorSeries,
    ThresholdConfig,
    WindowConfig,
    detect_warnings,
    rolling_indicators,
)
from .model import ModelParams, SweepResult, SweepSpec, equilibria, simulate_em, sweep
from .preprocess import PriceSeries, SmootherConfig, detrend, log_transform
from .stationarity import adf_test, is_stationary, kpss_test
from .svg import figure, stacked

log = logging.getLogger(__name__)

SCHEMA_VERSION = "1.0"
FORMATS = ("json", "csv", "svg")

# fields that do not change results and so stay out of the config hash
_UNHASHED = ("data_dir", "out_dir", "formats", "jobs", "fetch")


@dataclass
class AnalysisConfig:
    assets: list[str]
    start: str | None = "2016-01-01"
    end: str | None = "2018-03-31"
    bandwidth: float = 30.0
    truncation_multiple: float = 3.0
    windows: list[int] = field(default_factory=lambda: [410, 60])
    step_days: int = 1
    delta_days: int = 20
    theta_multiplier: float = 1.0
    merge_gap_days: int = 3
    delta_mode: str = "rolling"
    alpha: float = 0.05
    forward_fill: bool = False
    data_dir: str = "data"
    out_dir: str = "out"
    formats: list[str] = field(default_factory=lambda: list(FORMATS))
    jobs: int = 1
    fetch: bool = False

    def __post_init__(self):
        if not self.assets:
            raise PreconditionError("no assets given")
        if not self.windows:
            raise PreconditionError("at least one window must be configured")
        if self.start and self.end and np.datetime64(self.start, "D") > np.datetime64(self.end, "D"):
            raise PreconditionError(f"empty date range {self.start}..{self.end}")
        unknown = set(self.formats) - set(FORMATS)
        if unknown:
            raise PreconditionError(f"unknown output formats {sorted(unknown)}")
        self.windows = [int(w) for w in self.windows]
        # build the sub-configs once so bad values fail here, not mid-run
        self.smoother, self.threshold, self.window_configs

    @classmethod
    def from_dict(cls, d: dict) -> "AnalysisConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise PreconditionError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)

    @property
    def smoother(self) -> SmootherConfig:
        return SmootherConfig(self.bandwidth, self.truncation_multiple)

    @property
    def window_configs(self) -> list[WindowConfig]:
        return [WindowConfig(w, self.step_days) for w in self.windows]

    @property
    def threshold(self) -> ThresholdConfig:
        return ThresholdConfig(self.delta_days, self.theta_multiplier, self.merge_gap_days, self.delta_mode)

    @property
    def warning_window(self) -> int:
        return min(self.windows)

    def hashed_fields(self) -> dict:
        d = dataclasses.asdict(self)
        return {k: v for k, v in d.items() if k not in _UNHASHED}

    def config_hash(self) -> str:
        blob = json.dumps(self.hashed_fields(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class AnalysisReport:
    config: AnalysisConfig
    records: list[dict]
    inputs: dict[str, str]

    @property
    def n_ok(self) -> int:
        return sum(r["status"] == "ok" for r in self.records)

    def exit_code(self) -> int:
        if self.n_ok == len(self.records):
            return 0
        return 1 if self.n_ok == 0 else 2

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "provenance": {
                "config_hash": self.config.config_hash(),
                "config": self.config.hashed_fields(),
                "code_version": __version__,
                "inputs": dict(sorted(self.inputs.items())),
                "fill_counts": {
                    r["asset_id"]: r["fill_count"] for r in sorted(self.records, key=lambda r: r["asset_id"])
                    if "fill_count" in r
                },
            },
            "assets": self.records,
        }


REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema_version", "provenance", "assets"],
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "provenance": {
            "type": "object",
            "required": ["config_hash", "config", "code_version", "inputs"],
            "properties": {
                "config_hash": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
                "config": {"type": "object"},
                "code_version": {"type": "string"},
                "inputs": {"type": "object", "additionalProperties": {"type": "string"}},
                "fill_counts": {"type": "object", "additionalProperties": {"type": "integer", "minimum": 0}},
            },
        },
        "assets": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["asset_id", "status"],
                "properties": {
                    "asset_id": {"type": "string"},
                    "status": {"enum": ["ok", "skipped", "failed"]},
                    "reason": {"type": ["string", "null"]},
                    "n_points": {"type": "integer"},
                    "fill_count": {"type": "integer"},
                    "residual": {
                        "type": "object",
                        "required": ["mean", "std"],
                        "properties": {"mean": {"type": "number"}, "std": {"type": "number"}},
                    },
                    "adf": {"$ref": "#/$defs/test"},
                    "kpss": {"$ref": "#/$defs/test"},
                    "stationary": {"type": "boolean"},
                    "theta": {"type": "number"},
                    "indicators": {
                        "type": "object",
                        "additionalProperties": {
                            "type": "object",
                            "required": ["end_dates", "ar1", "std"],
                            "properties": {
                                "end_dates": {"type": "array", "items": {"type": "string"}},
                                "ar1": {"type": "array", "items": {"type": "number"}},
                                "std": {"type": "array", "items": {"type": "number"}},
                            },
                        },
                    },
                    "warnings": {
                        "type": "array",
                        "items": {
                            "type": "object",
                            "required": ["start_date", "end_date", "peak_abs_delta_std", "theta"],
                        },
                    },
                },
            },
        },
    },
    "$defs": {
        "test": {
            "type": "object",
            "required": ["test_name", "statistic", "p_value", "lags_used", "reject_null"],
            "properties": {
                "test_name": {"enum": ["ADF", "KPSS"]},
                "p_value": {"type": "number", "minimum": 0, "maximum": 1},
                "lags_used": {"type": "integer", "minimum": 0},
                "reject_null": {"type": "boolean"},
            },
        }
    },
}


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _load_asset(asset: str, cfg: AnalysisConfig) -> tuple[PriceSeries, str]:
    path = Path(cfg.data_dir) / f"{asset}.csv"
    if path.exists():
        series = load_csv(path, asset, forward_fill=cfg.forward_fill)
        return series.between(cfg.start, cfg.end), file_sha256(path)
    if cfg.fetch:
        if not (cfg.start and cfg.end):
            raise PreconditionError("fetching needs an explicit date range")
        series = fetch_remote(asset, cfg.start, cfg.end, EndpointConfig.from_env())
        digest = hashlib.sha256(
            "\n".join(f"{d},{p!r}" for d, p in zip(series.dates, series.prices)).encode()
        ).hexdigest()
        return series, digest
    raise SlowdownError(f"no price file {path}")


def _indicator_dict(ind: IndicatorSeries) -> dict:
    return {
        "end_dates": [str(d) for d in ind.end_dates],
        "ar1": [float(v) for v in ind.ar1],
        "std": [float(v) for v in ind.std],
        "n_clamped": ind.n_clamped,
    }


def analyze_series(series: PriceSeries, cfg: AnalysisConfig) -> tuple[dict, dict]:
    """Steps 1-4 for one asset. Returns the JSON record and in-memory artefacts."""
    record: dict = {
        "asset_id": series.asset_id,
        "status": "ok",
        "reason": None,
        "n_points": len(series),
        "fill_count": series.fill_count,
    }
    residuals = detrend(series, cfg.smoother)
    record["residual"] = {"mean": residuals.mean, "std": residuals.std}
    adf = adf_test(residuals.values, alpha=cfg.alpha)
    kpss = kpss_test(residuals.values, alpha=cfg.alpha)
    record["adf"], record["kpss"] = adf.to_dict(), kpss.to_dict()
    record["stationary"] = is_stationary(adf, kpss)
    artefacts = {"series": series, "residuals": residuals, "indicators": {}, "warnings": []}
    if not record["stationary"]:
        record["status"] = "skipped"
        record["reason"] = "skipped: non-stationary residuals"
        return record, artefacts
    record["indicators"] = {}
    for w in cfg.window_configs:
        ind = rolling_indicators(residuals, w)
        artefacts["indicators"][w.window_days] = ind
        record["indicators"][str(w.window_days)] = _indicator_dict(ind)
    warn_ind = artefacts["indicators"][cfg.warning_window]
    events = detect_warnings(residuals, warn_ind, cfg.threshold)
    artefacts["warnings"] = events
    record["theta"] = cfg.theta_multiplier * residuals.std
    record["warnings"] = [e.to_dict() for e in events]
    return record, artefacts


def _analyze_asset(asset: str, cfg: AnalysisConfig):
    try:
        series, digest = _load_asset(asset, cfg)
        record, artefacts = analyze_series(series, cfg)
        return record, artefacts, digest
    except SlowdownError as exc:
        log.error("%s: %s", asset, exc)
        return {"asset_id": asset, "status": "failed", "reason": str(exc)}, None, None


def run_analyze(cfg: AnalysisConfig, write: bool = True) -> tuple[AnalysisReport, dict]:
    """Analyze every configured asset; per-asset failures are recorded, not raised."""
    if cfg.jobs > 1 and len(cfg.assets) > 1:
        with ProcessPoolExecutor(max_workers=cfg.jobs) as pool:
            results = list(pool.map(_analyze_asset, cfg.assets, [cfg] * len(cfg.assets)))
    else:
        results = [_analyze_asset(a, cfg) for a in cfg.assets]
    records = [r[0] for r in results]
    artefacts = {a: r[1] for a, r in zip(cfg.assets, results) if r[1] is not None}
    inputs = {a: r[2] for a, r in zip(cfg.assets, results) if r[2] is not None}
    report = AnalysisReport(cfg, records, inputs)
    if write:
        emit_report(report, artefacts, cfg.out_dir, cfg.formats)
    return report, artefacts


# ---------------------------------------------------------------- emission


def dumps_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _write(path: Path, text: str) -> Path:
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise SlowdownError(f"cannot write {path}: {exc}") from exc
    return path


def _csv_text(header: list[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _num(v) -> str:
    return "" if v is None else repr(float(v))


def table1_csv(report: AnalysisReport) -> str:
    rows = []
    for r in report.records:
        res, adf, kpss = r.get("residual", {}), r.get("adf", {}), r.get("kpss", {})
        rows.append([
            r["asset_id"], r["status"], _num(res.get("mean")), _num(res.get("std")),
            _num(adf.get("statistic")), _num(adf.get("p_value")), adf.get("lags_used", ""),
            _num(kpss.get("statistic")), _num(kpss.get("p_value")), kpss.get("lags_used", ""),
            r.get("stationary", ""), r.get("reason") or "",
        ])
    return _csv_text(
        ["asset", "status", "mean", "std", "adf_stat", "adf_p", "adf_lags",
         "kpss_stat", "kpss_p", "kpss_lags", "stationary", "reason"],
        rows,
    )


def table2_csv(report: AnalysisReport) -> str:
    rows, k = [], 0
    for r in report.records:
        for e in r.get("warnings", []):
            k += 1
            rows.append([k, r["asset_id"], e["start_date"], e["end_date"],
                         _num(e["peak_abs_delta_std"]), _num(e["theta"])])
    return _csv_text(["number", "asset", "start_date", "end_date", "peak_abs_delta_std", "theta"], rows)


def indicators_csv(record: dict, window: str) -> str:
    ind = record["indicators"][window]
    rows = zip(ind["end_dates"], map(_num, ind["ar1"]), map(_num, ind["std"]))
    return _csv_text(["end_date", "ar1", "std"], rows)


def _day_numbers(dates, origin) -> np.ndarray:
    return (np.asarray(dates, dtype="datetime64[D]") - origin) / np.timedelta64(1, "D")


def asset_svg(artefacts: dict, cfg: AnalysisConfig) -> str:
    series, residuals = artefacts["series"], artefacts["residuals"]
    origin = series.dates[0]
    x = _day_numbers(series.dates, origin)
    panels, height = stacked(
        [f"log(price + 1) with trend", "residuals", "AR1", "Std (shaded: warning events)"]
    )
    logp = log_transform(series)
    panels[0].line(x, logp, "log(price+1)")
    if residuals.trend is not None:
        panels[0].line(x, residuals.trend, "trend")
    panels[1].line(x, residuals.values, "residual")
    for w, ind in sorted(artefacts["indicators"].items(), reverse=True):
        xi = _day_numbers(ind.end_dates, origin)
        panels[2].line(xi, ind.ar1, f"window {w}")
        panels[3].line(xi, ind.std, f"window {w}")
    for e in artefacts["warnings"]:
        a, b = _day_numbers([e.start_date, e.end_date], origin)
        panels[3].band(a, b + 1)
    title = f"{series.asset_id} {series.dates[0]} to {series.dates[-1]}"
    return figure(panels, 900, height, title)


def output_stem(asset: str | None, cfg_hash: str) -> str:
    return f"{asset}-{cfg_hash[:12]}" if asset else f"report-{cfg_hash[:12]}"


def emit_report(report: AnalysisReport, artefacts: dict, out_dir, formats=FORMATS) -> list[Path]:
    """Write JSON / CSV / SVG outputs; names derive from asset and config hash."""
    out = Path(out_dir)
    h = report.config.config_hash()
    written: list[Path] = []
    if "json" in formats:
        written.append(_write(out / f"{output_stem(None, h)}.json", dumps_json(report.to_dict())))
    if "csv" in formats:
        written.append(_write(out / f"table1-{h[:12]}.csv", table1_csv(report)))
        written.append(_write(out / f"table2-{h[:12]}.csv", table2_csv(report)))
        for r in report.records:
            for w in sorted(r.get("indicators", {}), key=int):
                written.append(_write(out / f"{output_stem(r['asset_id'], h)}-w{w}.csv", indicators_csv(r, w)))
    if "svg" in formats:
        for r in report.records:
            a = artefacts.get(r["asset_id"])
            if r["status"] == "ok" and a is not None:
                written.append(_write(out / f"{output_stem(r['asset_id'], h)}.svg", asset_svg(a, report.config)))
    return written


# ---------------------------------------------------------------- model runs


def run_simulate(params: ModelParams, out_dir, formats=("csv", "svg")) -> dict:
    """Simulate one path; write ``times,values`` CSV and an SVG trace."""
    path = simulate_em(params)
    eq = equilibria(params.m, params.r)
    tail = path.values[-max(1, path.values.size // 10):]
    summary = {
        "params": dataclasses.asdict(params),
        "final_value": float(path.values[-1]),
        "tail_mean": float(tail.mean()),
        "equilibria": [{"root": u, "stability": s} for u, s in zip(eq.roots, eq.stability)],
    }
    stem = "sim-" + hashlib.sha256(
        json.dumps(summary["params"], sort_keys=True).encode()
    ).hexdigest()[:12]
    out = Path(out_dir)
    files = []
    if "csv" in formats:
        text = _csv_text(["time", "u"], ((_num(t), _num(u)) for t, u in zip(path.times, path.values)))
        files.append(_write(out / f"{stem}.csv", text))
    if "svg" in formats:
        panels, height = stacked(["u(t)"])
        stride = max(1, path.values.size // 4000)
        panels[0].line(path.times[::stride], path.values[::stride], "u")
        for u, s in zip(eq.roots, eq.stability):
            panels[0].line([path.times[0], path.times[-1]], [u, u], f"{s} {u:.4f}", "#999999")
        p = params
        title = f"m={p.m:g} r={p.r:g} D={p.D:g} seed={p.seed}"
        files.append(_write(out / f"{stem}.svg", figure(panels, 900, height, title)))
    if "json" in formats:
        files.append(_write(out / f"{stem}.json", dumps_json(summary)))
    summary["files"] = [str(f) for f in files]
    return summary


def sweep_csv(result: SweepResult) -> str:
    rows = zip(
        map(_num, result.grid), map(_num, result.mean_ar1), map(_num, result.stderr_ar1),
        map(_num, result.mean_std), map(_num, result.stderr_std),
        result.n_used, result.n_transitioned, result.n_exploded,
    )
    return _csv_text(
        [result.swept_parameter, "mean_ar1", "stderr_ar1", "mean_std", "stderr_std",
         "n_used", "n_transitioned", "n_exploded"],
        rows,
    )


def run_sweep(spec: SweepSpec, out_dir, formats=("csv", "svg", "json"), jobs: int = 1) -> tuple[SweepResult, list[Path]]:
    result = sweep(spec, jobs=jobs)
    spec_dict = spec.to_dict()
    h = hashlib.sha256(json.dumps(spec_dict, sort_keys=True).encode()).hexdigest()
    stem = f"sweep-{spec.swept_parameter}-{h[:12]}"
    out = Path(out_dir)
    files = []
    if "csv" in formats:
        files.append(_write(out / f"{stem}.csv", sweep_csv(result)))
    if "json" in formats:
        payload = {
            "schema_version": SCHEMA_VERSION,
            "spec": spec_dict,
            "spec_hash": h,
            "code_version": __version__,
            "grid": result.grid.tolist(),
            "mean_ar1": result.mean_ar1.tolist(),
            "stderr_ar1": [None if not np.isfinite(v) else float(v) for v in result.stderr_ar1],
            "mean_std": result.mean_std.tolist(),
            "stderr_std": [None if not np.isfinite(v) else float(v) for v in result.stderr_std],
            "n_used": result.n_used.tolist(),
            "n_transitioned": result.n_transitioned.tolist(),
            "n_exploded": result.n_exploded.tolist(),
        }
        files.append(_write(out / f"{stem}.json", dumps_json(payload)))
    if "svg" in formats:
        panels, height = stacked([f"mean AR1 vs {spec.swept_parameter}", f"mean Std vs {spec.swept_parameter}"])
        panels[0].errorbar(result.grid, result.mean_ar1, result.stderr_ar1)
        panels[1].errorbar(result.grid, result.mean_std, result.stderr_std)
        title = f"{spec.swept_parameter}-sweep, {spec.n_realizations} realizations per point"
        files.append(_write(out / f"{stem}.svg", figure(panels, 900, height, title)))
    return result, files
