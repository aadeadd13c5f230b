"""Bistable price model ``du = (-m + r u - u^3) dt + sqrt(D) u dW``.

Covers the deterministic skeleton (equilibria, folds, bifurcation tables),
seeded Euler-Maruyama simulation and ensemble-averaged AR1/Std sweeps.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .errors import ExplosionError, PreconditionError, SlowdownError
from .indicators import _ar1_rows
from .preprocess import SmootherConfig, gaussian_smooth

EXPLOSION_BOUND = 1e6
MAX_EXPLOSION_FRACTION = 0.2
SWEEP_PARAMS = ("m", "r", "D")


@dataclass(frozen=True)
class ModelParams:
    m: float = 1.0
    r: float = 3.0
    D: float = 0.01
    dt: float = 0.01
    t_max: float = 500.0
    u0: float = 1.0
    seed: int = 0

    def __post_init__(self):
        for name in ("m", "r", "D", "dt", "t_max", "u0"):
            if not math.isfinite(getattr(self, name)):
                raise PreconditionError(f"{name} must be finite")
        if not self.dt > 0:
            raise PreconditionError(f"dt must be positive, got {self.dt}")
        if not self.t_max >= self.dt:
            raise PreconditionError("t_max must be at least dt")
        if self.D < 0:
            raise PreconditionError(f"noise strength D must be >= 0, got {self.D}")
        if not 0 <= int(self.seed) < 2**64:
            raise PreconditionError("seed must fit in an unsigned 64-bit integer")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_max / self.dt))


@dataclass(frozen=True)
class EquilibriumSet:
    roots: tuple[float, ...]
    stability: tuple[str, ...]

    def stable(self) -> tuple[float, ...]:
        return tuple(u for u, s in zip(self.roots, self.stability) if s == "stable")


@dataclass(frozen=True, eq=False)
class Path:
    times: np.ndarray
    values: np.ndarray
    params: ModelParams


def drift(u, m, r):
    """``-m + r u - u^3``; written with explicit products so it is exactly odd."""
    return (-m + r * u) - u * u * u


def drift_slope(u, r):
    return r - 3.0 * u * u


# ---------------------------------------------------------------- equilibria


def _newton(u: float, m: float, r: float) -> float:
    f = drift(u, m, r)
    g = drift_slope(u, r)
    if g == 0.0:
        return u
    v = u - f / g
    return v if abs(drift(v, m, r)) <= abs(f) else u


def _classify(u: float, r: float, fold: bool) -> str:
    if fold:
        return "fold"
    g = drift_slope(u, r)
    if g < 0:
        return "stable"
    if g > 0:
        return "unstable"
    return "fold"


def equilibria(m: float, r: float) -> EquilibriumSet:
    """Real roots of ``u^3 - r u + m = 0`` with their stability.

    Closed forms: trigonometric when the discriminant ``4r^3 - 27m^2`` is
    positive, Cardano when negative; each root gets one guarded Newton step.
    """
    m, r = float(m), float(r)
    disc = 4.0 * r**3 - 27.0 * m * m
    if disc > 0:
        # three distinct real roots, r > 0 necessarily
        a = 2.0 * math.sqrt(r / 3.0)
        arg = (3.0 * m / (2.0 * r)) * math.sqrt(3.0 / r)
        phi = math.acos(max(-1.0, min(1.0, -arg)))
        roots = [a * math.cos(phi / 3.0 - 2.0 * math.pi * k / 3.0) for k in range(3)]
        roots = sorted(_newton(u, m, r) for u in roots)
        return EquilibriumSet(tuple(roots), tuple(_classify(u, r, False) for u in roots))
    if disc < 0:
        s = math.sqrt(m * m / 4.0 - r**3 / 27.0)
        u = np.cbrt(-m / 2.0 + s) + np.cbrt(-m / 2.0 - s)
        u = _newton(float(u), m, r)
        return EquilibriumSet((u,), (_classify(u, r, False),))
    if r == 0.0:
        return EquilibriumSet((0.0,), ("fold",))
    # double root at 3m/(2r) (a fold) and simple root at -3m/r
    simple, double = -3.0 * m / r, 1.5 * m / r
    pairs = sorted([(simple, False), (double, True)])
    return EquilibriumSet(
        tuple(u for u, _ in pairs), tuple(_classify(u, r, fold) for u, fold in pairs)
    )


def fold_points(r: float) -> list[tuple[float, float]]:
    """Saddle-node points ``(m, u)`` where ``f = f' = 0`` for fixed ``r``, ordered by m."""
    if r <= 0:
        return []
    u = math.sqrt(r / 3.0)
    m = r * u - u**3
    return [(-m, -u), (m, u)]


def fold_points_in_r(m: float) -> list[tuple[float, float]]:
    """Fold location ``(r, u)`` for fixed ``m`` (``4 r^3 = 27 m^2``)."""
    if m == 0:
        return [(0.0, 0.0)]
    r = (27.0 * m * m / 4.0) ** (1.0 / 3.0)
    return [(r, 1.5 * m / r)]


@dataclass(frozen=True)
class BranchPoint:
    parameter: float
    root: float
    stability: str
    branch: str  # "good", "unstable", "bad" (upper stable / middle / lower stable)


def bifurcation_diagram(swept: str, grid, fixed: float) -> list[BranchPoint]:
    """Equilibria across ``grid`` for ``swept`` in {"m", "r"} with the other fixed.

    Stable roots above the unstable one (or the larger of two stable roots)
    are tagged ``good``; the lower stable state is ``bad``.
    """
    if swept not in ("m", "r"):
        raise PreconditionError("bifurcation_diagram sweeps 'm' or 'r'")
    rows: list[BranchPoint] = []
    for value in np.asarray(grid, dtype=float):
        if not math.isfinite(value):
            raise PreconditionError("grid values must be finite")
        m, r = (value, fixed) if swept == "m" else (fixed, value)
        eq = equilibria(m, r)
        good = good_equilibrium(eq)
        for u, s in zip(eq.roots, eq.stability):
            if s != "stable":
                branch = "unstable"
            else:
                branch = "good" if u == good else "bad"
            rows.append(BranchPoint(float(value), u, s, branch))
    return rows


def good_equilibrium(eq: EquilibriumSet) -> float | None:
    """The upper stable state; with a single stable root it is only "good" if positive."""
    stable = eq.stable()
    if not stable:
        return None
    if len(stable) == 1 and len(eq.roots) == 1 and stable[0] < 0:
        return None
    return max(stable)


# ---------------------------------------------------------------- simulation


def realization_rng(master_seed: int, *counters: int) -> np.random.Generator:
    """Independent stream for ``(master_seed, grid index, realization index)``."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(master_seed), *map(int, counters)])))


def _integrate(u0: np.ndarray, noise: np.ndarray, p: ModelParams, bound: float) -> np.ndarray:
    """Euler-Maruyama over the columns of ``noise`` (shape ``(n_paths, n_steps)``).

    Returns the state array of shape ``(n_paths, n_steps + 1)``; paths that
    leave ``|u| <= bound`` are frozen at NaN from that step on.
    """
    n_paths, n_steps = noise.shape
    out = np.empty((n_paths, n_steps + 1))
    u = np.array(u0, dtype=float)
    out[:, 0] = u
    dt = p.dt
    amp = math.sqrt(p.D) * math.sqrt(dt)
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(n_steps):
            u = u + drift(u, p.m, p.r) * dt + amp * u * noise[:, k]
            if not np.all(np.abs(u) <= bound):
                u = np.where(np.abs(u) <= bound, u, np.nan)
            out[:, k + 1] = u
    return out


def _first_explosion(values: np.ndarray, bound: float) -> int | None:
    bad = np.flatnonzero(~(np.abs(values) <= bound))
    return int(bad[0]) if bad.size else None


def simulate_em(p: ModelParams, explosion_bound: float = EXPLOSION_BOUND) -> Path:
    """Seeded Euler-Maruyama path; the same params and seed give a bit-identical path."""
    noise = realization_rng(p.seed).standard_normal(p.n_steps)
    values = _integrate(np.array([p.u0]), noise[None, :], p, explosion_bound)[0]
    step = _first_explosion(values, explosion_bound)
    if step is not None:
        raise ExplosionError(f"path exceeded |u| <= {explosion_bound:g} at step {step}", step)
    times = np.arange(values.size) * p.dt
    return Path(times, values, p)


# ---------------------------------------------------------------- ensembles


@dataclass(frozen=True)
class EnsembleResult:
    mean_ar1: float
    mean_std: float
    stderr_ar1: float
    stderr_std: float
    n_used: int
    n_exploded: int
    n_transitioned: int
    n_too_short: int


@dataclass(frozen=True)
class SweepSpec:
    swept_parameter: str
    grid: tuple[float, ...]
    base: ModelParams = field(default_factory=ModelParams)
    n_realizations: int = 100
    window: int | None = 400
    burn_in: float = 100.0
    sample_interval: float = 0.1
    detrend: bool = True
    smoother: SmootherConfig = field(default_factory=SmootherConfig)
    u0_policy: str = "good"  # "good" equilibrium per grid point, or "fixed" (base.u0)

    def __post_init__(self):
        if self.swept_parameter not in SWEEP_PARAMS:
            raise PreconditionError(f"swept_parameter must be one of {SWEEP_PARAMS}")
        object.__setattr__(self, "grid", tuple(float(g) for g in self.grid))
        if not self.grid:
            raise PreconditionError("sweep grid is empty")
        if self.n_realizations < 2:
            raise PreconditionError("n_realizations must be >= 2 for standard errors")
        if self.u0_policy not in ("good", "fixed"):
            raise PreconditionError(f"unknown u0_policy {self.u0_policy!r}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["grid"] = list(self.grid)
        return d


@dataclass(frozen=True, eq=False)
class SweepResult:
    swept_parameter: str
    grid: np.ndarray
    mean_ar1: np.ndarray
    mean_std: np.ndarray
    stderr_ar1: np.ndarray
    stderr_std: np.ndarray
    n_used: np.ndarray
    n_transitioned: np.ndarray
    n_exploded: np.ndarray


def _stride(dt: float, sample_interval: float) -> int:
    stride = sample_interval / dt
    k = int(round(stride))
    if k < 1 or abs(stride - k) > 1e-9 * max(1.0, stride):
        raise PreconditionError("sample_interval must be a positive multiple of dt")
    return k


def _segment_indicators(seg: np.ndarray, detrend: bool, smoother: SmootherConfig) -> tuple[float, float]:
    x = np.log1p(seg) if detrend else seg
    if detrend:
        x = x - gaussian_smooth(x, smoother)
    rho, var = _ar1_rows(x[None, :])
    # a flat record has Std 0 and no defined AR1
    a = float(rho[0]) if var[0] > 0 else math.nan
    return a, float(math.sqrt(var[0]))


def simulate_ensemble(
    p: ModelParams, n_realizations: int, grid_index: int = 0, explosion_bound: float = EXPLOSION_BOUND
) -> np.ndarray:
    """``(n_realizations, n_steps + 1)`` paths, one independent stream per row.

    Row ``i`` is driven by ``realization_rng(p.seed, grid_index, i)``; rows that
    explode hold NaN/inf from the offending step on.
    """
    noise = np.stack(
        [realization_rng(p.seed, grid_index, i).standard_normal(p.n_steps) for i in range(n_realizations)]
    )
    return _integrate(np.full(n_realizations, p.u0), noise, p, explosion_bound)


def ensemble_indicators(
    p: ModelParams,
    n_realizations: int = 100,
    window: int | None = 400,
    burn_in: float = 100.0,
    *,
    sample_interval: float = 0.1,
    detrend: bool = True,
    smoother: SmootherConfig | None = None,
    grid_index: int = 0,
    explosion_bound: float = EXPLOSION_BOUND,
) -> EnsembleResult:
    """Ensemble mean AR1 and Std of sampled paths after ``burn_in``.

    Each realization is sampled every ``sample_interval`` time units. When the
    model is bistable the record is cut at the first crossing of the unstable
    equilibrium, so indicators describe the state before a transition. The
    indicators are computed on the trailing ``window`` samples of what remains
    (the whole remainder if ``window`` is None); realizations with fewer
    samples are excluded and counted. With ``detrend`` the samples go through
    ``log(u+1)`` and the Gaussian smoother first.
    """
    smoother = smoother or SmootherConfig()
    if n_realizations < 1:
        raise PreconditionError("n_realizations must be positive")
    stride = _stride(p.dt, sample_interval)
    first = int(round(burn_in / p.dt))
    if first > p.n_steps:
        raise PreconditionError("burn_in exceeds t_max")
    n_samples = (p.n_steps - first) // stride + 1
    need = window if window is not None else 3
    if n_samples < need:
        raise PreconditionError(
            f"t_max - burn_in yields {n_samples} samples, fewer than the window {need}"
        )
    if detrend and window is not None and window < 2 * smoother.radius:
        raise PreconditionError("indicator window is shorter than twice the smoother radius")

    paths = simulate_ensemble(p, n_realizations, grid_index, explosion_bound)
    sampled = paths[:, first::stride]

    eq = equilibria(p.m, p.r)
    barrier = None
    unstable = [u for u, s in zip(eq.roots, eq.stability) if s == "unstable"]
    if unstable and p.u0 > unstable[0]:
        barrier = unstable[0]

    ar1s, stds = [], []
    exploded = transitioned = too_short = 0
    for i in range(n_realizations):
        if _first_explosion(paths[i], explosion_bound) is not None:
            exploded += 1
            continue
        seg = sampled[i]
        if barrier is not None:
            crossed = np.flatnonzero(paths[i, first:] < barrier)
            if crossed.size:
                transitioned += 1
                seg = seg[: -(-int(crossed[0]) // stride)]
        if window is not None:
            if seg.size < window:
                too_short += 1
                continue
            seg = seg[-window:]
        elif seg.size < 3:
            too_short += 1
            continue
        if detrend and np.any(seg <= -1.0):
            too_short += 1
            continue
        a, s = _segment_indicators(seg, detrend, smoother)
        ar1s.append(a)
        stds.append(s)

    if exploded > MAX_EXPLOSION_FRACTION * n_realizations:
        raise ExplosionError(
            f"{exploded} of {n_realizations} realizations exploded (limit "
            f"{MAX_EXPLOSION_FRACTION:.0%})",
            step=-1,
        )
    n_used = len(ar1s)
    if n_used == 0:
        raise SlowdownError("no realization produced a usable pre-transition segment")
    a, s = np.asarray(ar1s), np.asarray(stds)

    def se(v):
        return float(np.std(v, ddof=1) / math.sqrt(v.size)) if v.size > 1 else math.nan

    return EnsembleResult(
        mean_ar1=float(a.mean()),
        mean_std=float(s.mean()),
        stderr_ar1=se(a),
        stderr_std=se(s),
        n_used=n_used,
        n_exploded=exploded,
        n_transitioned=transitioned,
        n_too_short=too_short,
    )


def _point_params(spec: SweepSpec, index: int) -> ModelParams:
    value = spec.grid[index]
    p = replace(spec.base, **{spec.swept_parameter: value})
    if spec.u0_policy == "good":
        good = good_equilibrium(equilibria(p.m, p.r))
        if good is None:
            raise PreconditionError(
                f"no good stable equilibrium at {spec.swept_parameter}={value}; "
                "keep the grid on the upper branch"
            )
        p = replace(p, u0=good)
    return p


def _sweep_point(spec: SweepSpec, index: int) -> EnsembleResult:
    return ensemble_indicators(
        _point_params(spec, index),
        spec.n_realizations,
        spec.window,
        spec.burn_in,
        sample_interval=spec.sample_interval,
        detrend=spec.detrend,
        smoother=spec.smoother,
        grid_index=index,
    )


def sweep(spec: SweepSpec, jobs: int = 1) -> SweepResult:
    """Ensemble indicators at every grid point.

    Streams are keyed by (base seed, grid index, realization index), so the
    result does not depend on ``jobs`` or scheduling order.
    """
    indices = range(len(spec.grid))
    if jobs > 1 and len(spec.grid) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_sweep_point, [spec] * len(spec.grid), indices))
    else:
        results = [_sweep_point(spec, i) for i in indices]
    col = lambda name, dtype=float: np.array([getattr(r, name) for r in results], dtype=dtype)
    return SweepResult(
        swept_parameter=spec.swept_parameter,
        grid=np.asarray(spec.grid),
        mean_ar1=col("mean_ar1"),
        mean_std=col("mean_std"),
        stderr_ar1=col("stderr_ar1"),
        stderr_std=col("stderr_std"),
        n_used=col("n_used", int),
        n_transitioned=col("n_transitioned", int),
        n_exploded=col("n_exploded", int),
    )
