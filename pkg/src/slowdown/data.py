"""Price ingestion: ``date,close`` CSV files and a cached HTTP client.

The remote endpoint is any server speaking this JSON contract::

    GET {base}/v1/history?asset=BTC&start=2016-01-01&end=2018-03-31&page=1
    -> {"asset": "BTC",
        "data": [{"date": "2016-01-01", "close": 434.33}, ...],
        "next_page": 2}            # null on the last page

An API key, when configured, is sent in the ``X-API-Key`` header.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import os
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import requests

from .errors import DataError, FetchError
from .preprocess import PriceSeries

log = logging.getLogger(__name__)

MAX_ATTEMPTS = 5
DEFAULT_CACHE = Path.home() / ".cache" / "slowdown"


def load_csv(path, asset_id: str, forward_fill: bool = False, max_fill_gap: int = 3) -> PriceSeries:
    """Read a ``date,close`` file into a strictly daily :class:`PriceSeries`.

    Rows may come in any order. Missing days are an error unless
    ``forward_fill`` is set, in which case runs of at most ``max_fill_gap``
    missing days take the previous close.
    """
    path = Path(path)
    rows: dict[np.datetime64, float] = {}
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip().lower() for h in header] != ["date", "close"]:
            raise DataError(f"{path}: expected header 'date,close', got {header!r}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 2:
                raise DataError(f"{path}:{lineno}: expected 2 fields, got {len(row)}")
            try:
                day = np.datetime64(row[0].strip(), "D")
                if str(day) != row[0].strip():
                    raise ValueError(row[0])
                close = float(row[1])
            except ValueError as exc:
                raise DataError(f"{path}:{lineno}: malformed row {row!r}") from exc
            if day in rows:
                raise DataError(f"{path}:{lineno}: duplicate date {day}")
            rows[day] = close
    if not rows:
        raise DataError(f"{path}: no data rows")
    days = np.array(sorted(rows), dtype="datetime64[D]")
    closes = np.array([rows[d] for d in days])
    days, closes, filled = _fill_gaps(days, closes, forward_fill, max_fill_gap, str(path))
    return PriceSeries(asset_id, days, closes, fill_count=filled)


def _fill_gaps(days, closes, forward_fill, max_fill_gap, label):
    gaps = (np.diff(days) / np.timedelta64(1, "D")).astype(int) - 1
    bad = np.flatnonzero(gaps > 0)
    if not bad.size:
        return days, closes, 0
    if not forward_fill:
        i = int(bad[0])
        raise DataError(f"{label}: {gaps[i]} missing day(s) after {days[i]}")
    too_long = bad[gaps[bad] > max_fill_gap]
    if too_long.size:
        i = int(too_long[0])
        raise DataError(
            f"{label}: gap of {gaps[i]} days after {days[i]} exceeds forward-fill limit {max_fill_gap}"
        )
    full = np.arange(days[0], days[-1] + np.timedelta64(1, "D"), dtype="datetime64[D]")
    pos = np.searchsorted(days, full, side="right") - 1
    return full, closes[pos], int(gaps[bad].sum())


def write_csv(series: PriceSeries, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", "close"])
        for d, p in zip(series.dates, series.prices):
            w.writerow([str(d), repr(float(p))])


@dataclass
class EndpointConfig:
    base_url: str | None = None
    api_key: str | None = None
    cache_dir: Path | None = None
    timeout: float = 30.0
    backoff: float = 1.0

    @classmethod
    def from_env(cls, **overrides) -> "EndpointConfig":
        cfg = cls(
            base_url=os.environ.get("SLOWDOWN_API_BASE"),
            api_key=os.environ.get("SLOWDOWN_API_KEY"),
            cache_dir=Path(os.environ["SLOWDOWN_CACHE_DIR"]) if os.environ.get("SLOWDOWN_CACHE_DIR") else None,
        )
        for k, v in overrides.items():
            if v is not None:
                setattr(cfg, k, v)
        return cfg


def _cache_path(cfg: EndpointConfig, asset_id: str, start: str, end: str) -> Path:
    key = hashlib.sha256(f"{cfg.base_url}|{asset_id}|{start}|{end}".encode()).hexdigest()[:16]
    return Path(cfg.cache_dir or DEFAULT_CACHE) / f"{asset_id}_{start}_{end}_{key}.json"


def _get(session: requests.Session, url: str, params: dict, cfg: EndpointConfig, sleep) -> dict:
    headers = {"X-API-Key": cfg.api_key} if cfg.api_key else {}
    for attempt in range(1, MAX_ATTEMPTS + 1):
        try:
            resp = session.get(url, params=params, headers=headers, timeout=cfg.timeout)
        except requests.RequestException as exc:
            raise FetchError(f"request to {url} failed: {exc}") from exc
        if resp.status_code == 429:
            if attempt == MAX_ATTEMPTS:
                raise FetchError(f"rate limited by {url} after {MAX_ATTEMPTS} attempts", 429)
            delay = cfg.backoff * 2 ** (attempt - 1)
            log.warning("rate limited (attempt %d), retrying in %.2fs", attempt, delay)
            sleep(delay)
            continue
        if resp.status_code != 200:
            raise FetchError(f"GET {url} returned HTTP {resp.status_code}", resp.status_code)
        try:
            return resp.json()
        except ValueError as exc:
            raise FetchError(f"GET {url} returned invalid JSON") from exc
    raise AssertionError("unreachable")


def fetch_remote(
    asset_id: str,
    start,
    end,
    cfg: EndpointConfig | None = None,
    session: requests.Session | None = None,
    sleep=time.sleep,
) -> PriceSeries:
    """Download daily closes for ``[start, end]``, caching the payload on disk."""
    cfg = cfg or EndpointConfig.from_env()
    start, end = str(np.datetime64(start, "D")), str(np.datetime64(end, "D"))
    cache = _cache_path(cfg, asset_id, start, end)
    if cache.exists():
        records = json.loads(cache.read_text())
    else:
        if not cfg.base_url:
            raise FetchError("no API base URL configured (set SLOWDOWN_API_BASE)")
        session = session or requests.Session()
        url = cfg.base_url.rstrip("/") + "/v1/history"
        records, page = [], 1
        while page is not None:
            payload = _get(session, url, {"asset": asset_id, "start": start, "end": end, "page": page}, cfg, sleep)
            if not isinstance(payload, dict) or "data" not in payload:
                raise FetchError(f"response from {url} lacks a 'data' field")
            for item in payload["data"]:
                if not isinstance(item, dict) or "date" not in item or "close" not in item:
                    raise FetchError(f"record {item!r} lacks 'date'/'close'")
                records.append({"date": str(item["date"]), "close": float(item["close"])})
            page = payload.get("next_page")
        cache.parent.mkdir(parents=True, exist_ok=True)
        cache.write_text(json.dumps(records))
    if not records:
        raise FetchError(f"no records for {asset_id} in {start}..{end}")
    records = sorted(records, key=lambda r: r["date"])
    dates = [r["date"] for r in records]
    if len(set(dates)) != len(dates):
        raise DataError(f"{asset_id}: duplicate dates in remote payload")
    return PriceSeries(asset_id, dates, [r["close"] for r in records])
