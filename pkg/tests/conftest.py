import os
from pathlib import Path

import numpy as np
import pytest

from slowdown.data import write_csv
from slowdown.preprocess import PriceSeries

REFERENCE_ASSETS = ("BTC", "XRP", "LTC", "XLM", "XEM", "DASH")


def fixtures_dir() -> Path:
    env = os.environ.get("SLOWDOWN_FIXTURES_DIR")
    return Path(env) if env else Path(__file__).parent / "fixtures" / "prices"


def synthetic_prices(asset="SYN", n=820, seed=0, start="2016-01-01", phi=0.8, sigma=0.05,
                     level=3.0, burst=None) -> PriceSeries:
    """Smooth trend plus AR(1) residual in log(price+1) space.

    ``burst=(day, length, factor)`` multiplies the innovations over a block.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(n)
    trend = level + 1.5 * np.sin(t / 160.0) + t / 400.0
    eps = rng.standard_normal(n) * sigma
    if burst is not None:
        day, length, factor = burst
        eps[day : day + length] *= factor
    resid = np.zeros(n)
    for i in range(1, n):
        resid[i] = phi * resid[i - 1] + eps[i]
    logp = trend + resid
    dates = np.arange(np.datetime64(start, "D"), np.datetime64(start, "D") + n)
    return PriceSeries(asset, dates, np.expm1(logp))


def random_walk_prices(asset="RW", n=820, seed=0, start="2016-01-01") -> PriceSeries:
    """Log-price random walk whose steps are themselves integrated, so residuals keep a unit root."""
    rng = np.random.default_rng(seed)
    drift = np.cumsum(np.cumsum(rng.standard_normal(n))) * 0.002
    logp = 4.0 + drift - drift.min()
    dates = np.arange(np.datetime64(start, "D"), np.datetime64(start, "D") + n)
    return PriceSeries(asset, dates, np.expm1(logp))


@pytest.fixture
def synthetic_data_dir(tmp_path):
    d = tmp_path / "data"
    for k, name in enumerate(("AAA", "BBB", "CCC")):
        write_csv(synthetic_prices(name, seed=k), d / f"{name}.csv")
    return d


# ---------------------------------------------------------------- acceptance lines

_criteria: list[tuple[str, str]] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        status = "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL")
        _criteria.append((marker.args[0], status))


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for label, status in _criteria:
        terminalreporter.write_line(f"{status:4}  {label}")
