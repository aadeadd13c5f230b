"""Rolling lag-1 autocorrelation / standard deviation and Std-jump warnings."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DegenerateSeriesError, PreconditionError
from .preprocess import ResidualSeries, as_dates

AR1_EPS = 1e-9


@dataclass(frozen=True)
class WindowConfig:
    window_days: int
    step_days: int = 1

    def __post_init__(self):
        if int(self.window_days) != self.window_days or self.window_days < 3:
            raise PreconditionError(f"window_days must be an integer >= 3, got {self.window_days}")
        if int(self.step_days) != self.step_days or self.step_days < 1:
            raise PreconditionError(f"step_days must be an integer >= 1, got {self.step_days}")


@dataclass(frozen=True)
class ThresholdConfig:
    delta_days: int = 20
    theta_multiplier: float = 1.0
    merge_gap_days: int = 3
    delta_mode: str = "rolling"  # or "block"

    def __post_init__(self):
        if int(self.delta_days) != self.delta_days or self.delta_days < 1:
            raise PreconditionError(f"delta_days must be an integer >= 1, got {self.delta_days}")
        if not self.theta_multiplier > 0:
            raise PreconditionError("theta_multiplier must be positive")
        if self.merge_gap_days < 0:
            raise PreconditionError("merge_gap_days must be non-negative")
        if self.delta_mode not in ("rolling", "block"):
            raise PreconditionError(f"unknown delta_mode {self.delta_mode!r}")


@dataclass(frozen=True, eq=False)
class IndicatorSeries:
    asset_id: str
    window_days: int
    end_dates: np.ndarray
    ar1: np.ndarray
    std: np.ndarray
    n_clamped: int = 0

    def __len__(self) -> int:
        return len(self.end_dates)


@dataclass(frozen=True)
class WarningEvent:
    asset_id: str
    start_date: np.datetime64
    end_date: np.datetime64
    peak_abs_delta_std: float
    theta: float

    def to_dict(self) -> dict:
        return {
            "asset_id": self.asset_id,
            "start_date": str(self.start_date),
            "end_date": str(self.end_date),
            "peak_abs_delta_std": self.peak_abs_delta_std,
            "theta": self.theta,
        }


def _ar1_rows(w: np.ndarray) -> np.ndarray:
    """AR1 of each row of ``w`` (shape ``(k, n)``), n-1 normalization on both sides."""
    n = w.shape[1]
    d = w - w.mean(axis=1, keepdims=True)
    var = np.einsum("ij,ij->i", d, d) / (n - 1)
    cov = np.einsum("ij,ij->i", d[:, :-1], d[:, 1:]) / (n - 1)
    with np.errstate(divide="ignore", invalid="ignore"):
        return cov / var, var


def ar1(x) -> float:
    """Lag-1 autocorrelation ``sum (x_t - mu)(x_{t+1} - mu) / (n-1) / s^2``."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 3:
        raise PreconditionError("ar1 needs a 1-D window of at least 3 values")
    rho, var = _ar1_rows(x[None, :])
    if not var[0] > 0:
        raise DegenerateSeriesError("degenerate window: zero variance")
    return float(np.clip(rho[0], -1.0, 1.0))


def rolling_indicators(r: ResidualSeries, w: WindowConfig) -> IndicatorSeries:
    """Trailing-window AR1 and Std; each value is dated by its window's last day."""
    x = np.asarray(r.values, dtype=float)
    if w.window_days > x.size:
        raise PreconditionError(
            f"{r.asset_id}: series of length {x.size} is shorter than window {w.window_days}"
        )
    windows = sliding_window_view(x, w.window_days)[:: w.step_days]
    ends = np.arange(w.window_days - 1, x.size, w.step_days)
    rho, var = _ar1_rows(windows)
    bad = np.flatnonzero(~(var > 0))
    if bad.size:
        raise DegenerateSeriesError(
            f"{r.asset_id}: degenerate window ending {as_dates(r.dates)[ends[bad[0]]]}"
        )
    outside = np.abs(rho) > 1.0
    if np.any(np.abs(rho) > 1.0 + AR1_EPS):
        raise DegenerateSeriesError(f"{r.asset_id}: AR1 estimate outside [-1, 1]")
    return IndicatorSeries(
        asset_id=r.asset_id,
        window_days=w.window_days,
        end_dates=as_dates(r.dates)[ends],
        ar1=np.clip(rho, -1.0, 1.0),
        std=np.sqrt(var),
        n_clamped=int(outside.sum()),
    )


def delta_std(ind: IndicatorSeries, cfg: ThresholdConfig | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Change of the Std track over ``delta_days``.

    Returns ``(dates, deltas)``. In ``rolling`` mode (default)
    ``delta(t) = std(t) - std(t - delta_days)`` for every indicator date with a
    partner ``delta_days`` earlier. In ``block`` mode the track is sampled every
    ``delta_days`` and consecutive samples are differenced.
    """
    cfg = cfg or ThresholdConfig()
    dates = as_dates(ind.end_dates)
    if len(dates) <= cfg.delta_days:
        raise PreconditionError(
            f"{ind.asset_id}: indicator track of length {len(dates)} is not longer than "
            f"delta_days={cfg.delta_days}"
        )
    std = np.asarray(ind.std, dtype=float)
    # lag in samples; indicator tracks may be stepped
    step = int((dates[1] - dates[0]) / np.timedelta64(1, "D")) if len(dates) > 1 else 1
    if cfg.delta_days % step:
        raise PreconditionError("delta_days must be a multiple of the indicator step")
    lag = cfg.delta_days // step
    if cfg.delta_mode == "rolling":
        return dates[lag:], std[lag:] - std[:-lag]
    idx = np.arange(0, len(std), lag)
    return dates[idx[1:]], np.diff(std[idx])


def _runs(mask: np.ndarray) -> list[tuple[int, int]]:
    """Inclusive (start, end) index pairs of maximal True runs."""
    padded = np.concatenate(([False], mask, [False]))
    edges = np.flatnonzero(np.diff(padded.astype(np.int8)))
    return [(int(a), int(b) - 1) for a, b in zip(edges[::2], edges[1::2])]


def detect_warnings(
    r: ResidualSeries, ind: IndicatorSeries, cfg: ThresholdConfig | None = None
) -> list[WarningEvent]:
    """Maximal date runs where ``|delta_std| > theta_multiplier * std(residuals)``.

    Runs separated by fewer than ``merge_gap_days`` days are merged.
    """
    cfg = cfg or ThresholdConfig()
    theta = cfg.theta_multiplier * float(np.std(np.asarray(r.values, dtype=float), ddof=1))
    dates, delta = delta_std(ind, cfg)
    above = np.abs(delta) > theta
    merged: list[list[int]] = []
    for a, b in _runs(above):
        if merged:
            prev_end = dates[merged[-1][1]]
            gap = int((dates[a] - prev_end) / np.timedelta64(1, "D")) - 1
            if gap < cfg.merge_gap_days:
                merged[-1][1] = b
                continue
        merged.append([a, b])
    events = []
    for a, b in merged:
        seg = np.abs(delta[a : b + 1])
        events.append(
            WarningEvent(
                asset_id=r.asset_id,
                start_date=dates[a],
                end_date=dates[b],
                peak_abs_delta_std=float(seg.max()),
                theta=theta,
            )
        )
    return events
