"""Log-transform and Gaussian-kernel detrending of daily price series.

The residual series produced here is what every downstream indicator and
stationarity test consumes.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateSeriesError, PreconditionError

ONE_DAY = np.timedelta64(1, "D")


def as_dates(dates) -> np.ndarray:
    """Coerce an iterable of dates / ISO strings to a ``datetime64[D]`` array."""
    return np.asarray([np.datetime64(d, "D") for d in dates], dtype="datetime64[D]")


@dataclass(frozen=True, eq=False)
class PriceSeries:
    """Strictly daily close prices for one asset.

    ``fill_count`` records how many dates were forward-filled by the loader.
    """

    asset_id: str
    dates: np.ndarray
    prices: np.ndarray
    fill_count: int = 0

    def __post_init__(self):
        dates = as_dates(self.dates)
        prices = np.asarray(self.prices, dtype=float)
        if dates.ndim != 1 or prices.ndim != 1 or len(dates) != len(prices):
            raise PreconditionError(
                f"{self.asset_id}: dates and prices must be 1-D of equal length "
                f"(got {len(dates)} and {len(prices)})"
            )
        if len(dates) > 1:
            steps = np.diff(dates)
            bad = np.flatnonzero(steps != ONE_DAY)
            if bad.size:
                i = int(bad[0])
                raise PreconditionError(
                    f"{self.asset_id}: dates must advance by exactly one day; "
                    f"{dates[i]} is followed by {dates[i + 1]}"
                )
        _check_prices(prices, self.asset_id)
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "prices", prices)

    def __len__(self) -> int:
        return len(self.prices)

    def between(self, start=None, end=None) -> "PriceSeries":
        """Restrict to the inclusive date range ``[start, end]``."""
        mask = np.ones(len(self), dtype=bool)
        if start is not None:
            mask &= self.dates >= np.datetime64(start, "D")
        if end is not None:
            mask &= self.dates <= np.datetime64(end, "D")
        return PriceSeries(self.asset_id, self.dates[mask], self.prices[mask], self.fill_count)


@dataclass(frozen=True)
class SmootherConfig:
    """Gaussian kernel with std ``bandwidth_days`` cut at ``truncation_multiple`` stds."""

    bandwidth_days: float = 30.0
    truncation_multiple: float = 3.0

    def __post_init__(self):
        if not (self.bandwidth_days > 0 and math.isfinite(self.bandwidth_days)):
            raise PreconditionError(f"bandwidth_days must be positive, got {self.bandwidth_days}")
        if not self.truncation_multiple >= 1:
            raise PreconditionError(
                f"truncation_multiple must be >= 1, got {self.truncation_multiple}"
            )

    @property
    def radius(self) -> int:
        """Half-width of the kernel support in samples."""
        return int(math.floor(self.truncation_multiple * self.bandwidth_days))

    def kernel(self) -> np.ndarray:
        k = np.arange(-self.radius, self.radius + 1, dtype=float)
        return np.exp(-(k * k) / (2.0 * self.bandwidth_days**2))


@dataclass(frozen=True, eq=False)
class ResidualSeries:
    asset_id: str
    dates: np.ndarray
    values: np.ndarray
    mean: float
    std: float
    trend: np.ndarray | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.values)

    @classmethod
    def from_values(cls, asset_id: str, dates, values, trend=None) -> "ResidualSeries":
        values = np.asarray(values, dtype=float)
        mean, std = _moments(values)
        if not std > 0:
            raise DegenerateSeriesError(f"{asset_id}: degenerate series, residual std is 0")
        return cls(asset_id, as_dates(dates), values, mean, std, trend)


def _check_prices(prices: np.ndarray, label: str = "series") -> None:
    bad = np.flatnonzero(~np.isfinite(prices) | (prices < 0))
    if bad.size:
        i = int(bad[0])
        raise PreconditionError(
            f"{label}: price at index {i} is {prices[i]!r}; prices must be finite and >= 0"
        )


def log_transform(prices) -> np.ndarray:
    """Natural ``log(z + 1)`` of a price series or array.

    Raises ``PreconditionError`` naming the first negative or non-finite index.
    """
    if isinstance(prices, PriceSeries):
        z = prices.prices
    else:
        z = np.asarray(prices, dtype=float)
        _check_prices(z)
    return np.log1p(z)


def gaussian_smooth(x, cfg: SmootherConfig | None = None) -> np.ndarray:
    """Truncated Gaussian kernel smoother, renormalized at the boundaries.

    ``trend[i] = sum_j w(i-j) x[j] / sum_j w(i-j)`` where ``j`` ranges over the
    kernel support clipped to the series. No padding or reflection is used.
    """
    cfg = cfg or SmootherConfig()
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise PreconditionError("gaussian_smooth needs a non-empty 1-D series")
    if x.size == 1:
        raise PreconditionError("gaussian_smooth needs more than one sample")
    w = cfg.kernel()
    num = np.convolve(x, w, mode="full")
    den = np.convolve(np.ones_like(x), w, mode="full")
    r = cfg.radius
    return num[r : r + x.size] / den[r : r + x.size]


def kernel_weights(n: int, i: int, cfg: SmootherConfig | None = None) -> np.ndarray:
    """Normalized weights applied to each of ``n`` samples when smoothing at index ``i``."""
    cfg = cfg or SmootherConfig()
    j = np.arange(n)
    d = j - i
    w = np.where(np.abs(d) <= cfg.radius, np.exp(-(d * d) / (2.0 * cfg.bandwidth_days**2)), 0.0)
    return w / w.sum()


def detrend(prices: PriceSeries, cfg: SmootherConfig | None = None) -> ResidualSeries:
    """Residuals of ``log(z+1)`` about its Gaussian-smoothed trend."""
    cfg = cfg or SmootherConfig()
    if len(prices) < 2 * cfg.radius:
        raise PreconditionError(
            f"{prices.asset_id}: {len(prices)} points is shorter than twice the "
            f"smoother radius ({2 * cfg.radius})"
        )
    logp = log_transform(prices)
    if np.ptp(logp) == 0:
        # a flat input leaves only rounding noise after subtracting the trend
        raise DegenerateSeriesError(f"{prices.asset_id}: degenerate series, constant prices")
    trend = gaussian_smooth(logp, cfg)
    return ResidualSeries.from_values(prices.asset_id, prices.dates, logp - trend, trend)


def _moments(values: np.ndarray) -> tuple[float, float]:
    if values.size < 2:
        raise PreconditionError("summary statistics need at least 2 values")
    mean = float(np.mean(values))
    std = float(np.std(values, ddof=1))
    return mean, std


def summary_stats(r) -> tuple[float, float]:
    """Sample mean and n-1 standard deviation of a residual series or array."""
    values = r.values if isinstance(r, ResidualSeries) else np.asarray(r, dtype=float)
    return _moments(values)
