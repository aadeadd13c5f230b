"""Unit-root (ADF) and stationarity (KPSS) tests on residual series.

Both tests run on a small QR-based OLS engine. ADF p-values come from the
MacKinnon (1994) response surface for the constant-only regression; KPSS
p-values are interpolated from the level-stationarity critical values of
Kwiatkowski et al. (1992). Both are clamped to the range of their tables.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular
from scipy.stats import norm

from .errors import DegenerateSeriesError, PreconditionError, SingularDesignError

ADF_P_RANGE = (0.001, 0.999)
KPSS_P_RANGE = (0.01, 0.10)
MIN_OBS = 20

# MacKinnon (1994) response surface, one I(1) series, constant only.
_TAU_STAR = -1.61
_TAU_MIN = -18.83
_TAU_MAX = 2.74
_SMALLP = (2.1659, 1.4412, 0.038269)
_LARGEP = (1.7339, 0.93202, -0.12745, -0.010368)

# MacKinnon (2010) finite-sample critical values, constant only:
# cv(T) = b0 + b1/T + b2/T^2 + b3/T^3
_ADF_CV_COEFS = {
    0.01: (-3.43035, -6.5393, -16.786, -79.433),
    0.05: (-2.86154, -2.8903, -4.234, -40.040),
    0.10: (-2.56677, -1.5384, -2.809, 0.0),
}

# Level-stationarity KPSS critical values (upper tail).
KPSS_CRITICAL = {0.10: 0.347, 0.05: 0.463, 0.025: 0.574, 0.01: 0.739}

_LAG_T_CUTOFF = float(norm.ppf(0.95))  # two-sided 10% on the last lag


@dataclass(frozen=True)
class OlsFit:
    coefficients: np.ndarray
    standard_errors: np.ndarray
    residual_variance: float
    t_statistics: np.ndarray
    n_obs: int
    residuals: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class StationarityReport:
    test_name: str
    statistic: float
    p_value: float
    lags_used: int
    reject_null: bool
    n_effective: int
    alpha: float = 0.05
    critical_values: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "test_name": self.test_name,
            "statistic": self.statistic,
            "p_value": self.p_value,
            "lags_used": self.lags_used,
            "reject_null": self.reject_null,
            "n_effective": self.n_effective,
            "alpha": self.alpha,
            "critical_values": {str(k): v for k, v in sorted(self.critical_values.items())},
        }


def ols_fit(design, response) -> OlsFit:
    """Least squares via a thin QR factorization.

    Raises ``SingularDesignError`` when the design is (numerically) rank
    deficient and ``PreconditionError`` when there are not more rows than columns.
    """
    X = np.asarray(design, dtype=float)
    y = np.asarray(response, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, k = X.shape
    if y.shape != (n,):
        raise PreconditionError(f"response has shape {y.shape}, expected ({n},)")
    if n < k + 1:
        raise PreconditionError(f"need at least {k + 1} rows for {k} regressors, got {n}")
    q, r = np.linalg.qr(X, mode="reduced")
    diag = np.abs(np.diag(r))
    scale = max(float(np.max(np.linalg.norm(X, axis=0))), 1e-300)
    if diag.min() <= max(n, k) * np.finfo(float).eps * scale:
        raise SingularDesignError("design matrix is rank deficient")
    beta = solve_triangular(r, q.T @ y)
    resid = y - X @ beta
    sigma2 = float(resid @ resid) / (n - k)
    r_inv = solve_triangular(r, np.eye(k))
    xtx_inv_diag = np.sum(r_inv * r_inv, axis=1)
    se = np.sqrt(sigma2 * xtx_inv_diag)
    with np.errstate(divide="ignore", invalid="ignore"):
        tstat = beta / se
    return OlsFit(beta, se, sigma2, tstat, n, resid)


def schwert_max_lag(n: int) -> int:
    return int(math.floor(12.0 * (n / 100.0) ** 0.25))


def kpss_default_lags(n: int) -> int:
    return int(math.floor(4.0 * (n / 100.0) ** 0.25))


def _adf_design(x: np.ndarray, p: int, start: int) -> tuple[np.ndarray, np.ndarray]:
    """Regression of dx_t on [1, x_{t-1}, dx_{t-1..t-p}] for t >= start."""
    dx = np.diff(x)
    # dx[t-1] = x[t] - x[t-1]; observation rows are indexed by dx position j >= start
    rows = np.arange(start, dx.size)
    cols = [np.ones(rows.size), x[rows]]
    for lag in range(1, p + 1):
        cols.append(dx[rows - lag])
    return np.column_stack(cols), dx[rows]


def adf_pvalue(stat: float) -> float:
    """Unclamped MacKinnon (1994) approximate p-value for the constant-only ADF."""
    if stat > _TAU_MAX:
        return 1.0
    if stat < _TAU_MIN:
        return 0.0
    coefs = _SMALLP if stat <= _TAU_STAR else _LARGEP
    return float(norm.cdf(sum(c * stat**i for i, c in enumerate(coefs))))


def adf_critical_values(nobs: int) -> dict[float, float]:
    return {
        level: b[0] + b[1] / nobs + b[2] / nobs**2 + b[3] / nobs**3
        for level, b in _ADF_CV_COEFS.items()
    }


def adf_test(x, max_lag: int | None = None, alpha: float = 0.05, autolag: bool | None = None) -> StationarityReport:
    """Augmented Dickey-Fuller test with a constant and no trend.

    With ``max_lag=None`` the maximum lag is Schwert's ``12 (n/100)^(1/4)`` and
    the order is chosen by backward elimination on the last lag's t-ratio at
    the 10% level, on a common sample. An explicit ``max_lag`` is used as a
    fixed order unless ``autolag=True``.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise PreconditionError("adf_test expects a 1-D series")
    if not np.all(np.isfinite(x)):
        raise PreconditionError("adf_test: series contains non-finite values")
    n = x.size
    if n > 0 and np.ptp(x) == 0:
        raise DegenerateSeriesError("adf_test: constant series")
    select = max_lag is None if autolag is None else autolag
    pmax = schwert_max_lag(n) if max_lag is None else int(max_lag)
    if pmax < 0:
        raise PreconditionError("max_lag must be non-negative")
    # shrink the automatic maximum so the common sample keeps MIN_OBS rows
    if max_lag is None:
        pmax = max(0, min(pmax, n - 1 - MIN_OBS))
    if n - 1 - pmax < MIN_OBS:
        raise PreconditionError(
            f"adf_test: series of length {n} leaves fewer than {MIN_OBS} observations at lag {pmax}"
        )

    p = pmax
    if select:
        while p > 0:
            X, y = _adf_design(x, p, pmax)
            fit = ols_fit(X, y)
            if abs(fit.t_statistics[-1]) >= _LAG_T_CUTOFF:
                break
            p -= 1

    X, y = _adf_design(x, p, p)
    try:
        fit = ols_fit(X, y)
    except SingularDesignError as exc:
        raise DegenerateSeriesError(f"adf_test: degenerate regression ({exc})") from exc
    if fit.residual_variance == 0:
        raise DegenerateSeriesError("adf_test: exact fit, series is degenerate")
    stat = float(fit.t_statistics[1])
    pval = min(max(adf_pvalue(stat), ADF_P_RANGE[0]), ADF_P_RANGE[1])
    return StationarityReport(
        test_name="ADF",
        statistic=stat,
        p_value=pval,
        lags_used=p,
        reject_null=pval < alpha,
        n_effective=fit.n_obs,
        alpha=alpha,
        critical_values=adf_critical_values(fit.n_obs),
    )


def long_run_variance(e: np.ndarray, lags: int) -> float:
    """Newey-West estimate with Bartlett weights ``1 - h/(lags+1)``."""
    n = e.size
    s2 = float(e @ e) / n
    for h in range(1, lags + 1):
        s2 += 2.0 * (1.0 - h / (lags + 1.0)) * float(e[h:] @ e[:-h]) / n
    return s2


def kpss_pvalue(stat: float) -> float:
    """Linear interpolation in the critical-value table, clamped to [0.01, 0.10]."""
    crit = sorted(KPSS_CRITICAL.items(), key=lambda kv: kv[1])
    cvs = [cv for _, cv in crit]
    ps = [p for p, _ in crit]
    return float(np.interp(stat, cvs, ps))


def kpss_test(x, lag_truncation: int | None = None, alpha: float = 0.05) -> StationarityReport:
    """KPSS test of level stationarity."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise PreconditionError("kpss_test expects a 1-D series")
    if not np.all(np.isfinite(x)):
        raise PreconditionError("kpss_test: series contains non-finite values")
    n = x.size
    if n < MIN_OBS:
        raise PreconditionError(f"kpss_test needs at least {MIN_OBS} points, got {n}")
    lags = kpss_default_lags(n) if lag_truncation is None else int(lag_truncation)
    if not 0 <= lags < n:
        raise PreconditionError(f"lag truncation {lags} outside [0, {n})")
    e = x - x.mean()
    s2 = long_run_variance(e, lags)
    if not s2 > 0 or np.ptp(x) == 0:
        raise DegenerateSeriesError("kpss_test: long-run variance is zero")
    partial = np.cumsum(e)
    stat = float(partial @ partial) / (n * n * s2)
    pval = kpss_pvalue(stat)
    return StationarityReport(
        test_name="KPSS",
        statistic=stat,
        p_value=pval,
        lags_used=lags,
        reject_null=pval < alpha,
        n_effective=n,
        alpha=alpha,
        critical_values=dict(KPSS_CRITICAL),
    )


def is_stationary(adf: StationarityReport, kpss: StationarityReport) -> bool:
    """ADF rejects its unit-root null and KPSS keeps its stationarity null."""
    return bool(adf.reject_null and not kpss.reject_null)
