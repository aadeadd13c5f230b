import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from slowdown.errors import ExplosionError, PreconditionError
from slowdown.model import (
    ModelParams,
    SweepSpec,
    _integrate,
    bifurcation_diagram,
    drift,
    ensemble_indicators,
    equilibria,
    fold_points,
    fold_points_in_r,
    good_equilibrium,
    realization_rng,
    simulate_em,
    simulate_ensemble,
    sweep,
)


def numpy_roots(m, r):
    z = np.roots([1.0, 0.0, -r, m])
    return np.sort(z[np.abs(z.imag) < 1e-7].real)


class TestDrift:
    def test_values(self):
        assert drift(0.0, 0.0, 5.0) == 0.0
        assert drift(1.0, 0.5, 3.0) == 1.5

    @settings(max_examples=200)
    @given(st.floats(-100, 100), st.floats(-100, 100), st.floats(-100, 100))
    def test_odd_exactly(self, u, m, r):
        assert drift(-u, -m, r) == -drift(u, m, r)


class TestEquilibria:
    def test_symmetric(self):
        eq = equilibria(0.0, 3.0)
        np.testing.assert_allclose(eq.roots, [-math.sqrt(3), 0.0, math.sqrt(3)], atol=1e-14)
        assert eq.stability == ("stable", "unstable", "stable")

    def test_single_lower_root(self):
        eq = equilibria(3.0, 3.0)
        assert len(eq.roots) == 1
        assert eq.roots[0] == pytest.approx(-2.1038, abs=1e-4)
        assert eq.stability == ("stable",)
        assert good_equilibrium(eq) is None

    def test_bistable(self):
        eq = equilibria(0.5, 3.0)
        assert eq.stability == ("stable", "unstable", "stable")
        np.testing.assert_allclose(eq.roots, numpy_roots(0.5, 3.0), atol=1e-12)
        assert good_equilibrium(eq) == pytest.approx(1.641783527, abs=1e-9)

    def test_random_draws(self):
        rng = np.random.default_rng(0)
        for m, r in zip(rng.uniform(-10, 10, 10_000), rng.uniform(-10, 10, 10_000)):
            eq = equilibria(m, r)
            assert list(eq.roots) == sorted(eq.roots)
            disc = 4 * r**3 - 27 * m * m
            assert len(eq.roots) == (3 if disc > 0 else 1)
            for u, s in zip(eq.roots, eq.stability):
                assert abs(drift(u, m, r)) < 1e-10
                slope = r - 3 * u * u
                assert s == ("stable" if slope < 0 else "unstable")
            np.testing.assert_allclose(eq.roots, numpy_roots(m, r), atol=1e-6)

    def test_fold_case(self):
        eq = equilibria(2.0, 3.0)
        assert "fold" in eq.stability
        np.testing.assert_allclose(eq.roots, [-2.0, 1.0], atol=1e-12)
        assert eq.stability == ("stable", "fold")
        assert equilibria(0.0, 0.0).stability == ("fold",)


class TestFolds:
    def test_r3(self):
        (m1, u1), (m2, u2) = fold_points(3.0)
        assert (m1, u1) == pytest.approx((-2.0, -1.0), abs=1e-12)
        assert (m2, u2) == pytest.approx((2.0, 1.0), abs=1e-12)

    def test_quarter(self):
        assert fold_points(0.75) == [pytest.approx((-0.25, -0.5)), pytest.approx((0.25, 0.5))]

    @pytest.mark.parametrize("r", [0.0, -1.0])
    def test_none(self, r):
        assert fold_points(r) == []

    def test_count_changes_by_two(self):
        rng = np.random.default_rng(1)
        for r in rng.uniform(0.5, 8.0, 200):
            for fm, _ in fold_points(r):
                inner = fm - 1e-3 * math.copysign(1, fm)
                outer = fm + 1e-3 * math.copysign(1, fm)
                assert len(equilibria(inner, r).roots) - len(equilibria(outer, r).roots) == 2

    def test_fold_in_r(self):
        (r, u), = fold_points_in_r(0.5)
        assert 4 * r**3 == pytest.approx(27 * 0.25)
        assert abs(drift(u, 0.5, r)) < 1e-12 and abs(r - 3 * u * u) < 1e-12


class TestBifurcation:
    def test_m_sweep_counts(self):
        grid = np.linspace(-4, 4, 801)
        rows = bifurcation_diagram("m", grid, 3.0)
        counts = {g: 0 for g in grid}
        for row in rows:
            counts[row.parameter] += 1
            assert abs(drift(row.root, row.parameter, 3.0)) < 1e-10
        for g, c in counts.items():
            if abs(abs(g) - 2) > 1e-9:
                assert c == (3 if abs(g) < 2 else 1), g

    def test_r_sweep_shape(self):
        grid = np.linspace(-4, 4, 81)
        rows = bifurcation_diagram("r", grid, 0.5)
        r_fold = fold_points_in_r(0.5)[0][0]
        for g in grid:
            n = sum(row.parameter == g for row in rows)
            assert n == (3 if g > r_fold else 1)

    def test_branch_labels(self):
        rows = bifurcation_diagram("m", [0.5], 3.0)
        assert [r.branch for r in rows] == ["bad", "unstable", "good"]

    def test_bad_axis(self):
        with pytest.raises(PreconditionError):
            bifurcation_diagram("D", [1.0], 3.0)


class TestSimulate:
    def test_deterministic_converges(self):
        p = ModelParams(m=0.5, r=3.0, D=0.0, dt=0.01, t_max=20.0, u0=2.0)
        path = simulate_em(p)
        assert abs(path.values[-1] - good_equilibrium(equilibria(0.5, 3.0))) < 1e-6
        assert path.times[0] == 0.0
        np.testing.assert_allclose(np.diff(path.times), 0.01, rtol=1e-9)

    def test_ode_oracle(self):
        # at D=0 EM is first-order in dt against the exact ODE
        p = ModelParams(m=0.5, r=3.0, D=0.0, dt=1e-4, t_max=2.0, u0=0.2)
        path = simulate_em(p)
        sol = solve_ivp(lambda t, u: drift(u, 0.5, 3.0), (0, 2.0), [0.2], rtol=1e-11, atol=1e-12,
                        t_eval=path.times[::1000])
        np.testing.assert_allclose(path.values[::1000], sol.y[0], atol=5e-4)

    def test_fixed_point_stays(self):
        u = equilibria(0.5, 3.0).roots[1]
        path = simulate_em(ModelParams(m=0.5, r=3.0, D=0.0, t_max=5.0, u0=u))
        assert np.max(np.abs(path.values - u)) < 1e-12

    def test_seeds(self):
        p = ModelParams(t_max=5.0, seed=3)
        a, b = simulate_em(p), simulate_em(p)
        assert np.array_equal(a.values, b.values)
        c = simulate_em(replace(p, seed=4))
        assert c.values[0] == a.values[0] and c.values[1] != a.values[1]

    def test_explosion(self):
        p = ModelParams(m=0.0, r=3.0, D=0.0, dt=1.0, t_max=50.0, u0=5.0)
        with pytest.raises(ExplosionError) as exc:
            simulate_em(p)
        assert exc.value.step > 0

    @pytest.mark.parametrize("kw", [{"dt": 0.0}, {"D": -1.0}, {"t_max": 0.001}, {"m": math.nan}])
    def test_invalid_params(self, kw):
        with pytest.raises(PreconditionError):
            ModelParams(**kw)

    def test_streams_independent_of_count(self):
        p = ModelParams(t_max=2.0, seed=9)
        a = simulate_ensemble(p, 3, grid_index=4)
        b = simulate_ensemble(p, 7, grid_index=4)
        assert np.array_equal(a, b[:3])
        first = realization_rng(9, 4, 2).standard_normal(3)
        assert not np.array_equal(first, realization_rng(9, 5, 2).standard_normal(3))

    def test_no_nan_over_many_runs(self):
        p = ModelParams(m=0.5, r=3.0, D=0.16, t_max=50.0, u0=0.05, seed=1)
        paths = simulate_ensemble(p, 1000)
        assert np.all(np.isfinite(paths))

    def test_negation_symmetry_exact(self):
        p = ModelParams(m=0.5, r=3.0, D=0.04, t_max=20.0, u0=1.6)
        q = replace(p, m=-0.5, u0=-1.6)
        np.testing.assert_array_equal(simulate_ensemble(q, 50), -simulate_ensemble(p, 50))

    def test_weak_convergence(self):
        p = ModelParams(m=0.5, r=3.0, D=0.01, dt=0.02, t_max=10.0, u0=good_equilibrium(equilibria(0.5, 3.0)))
        fine = replace(p, dt=0.01)
        rng = np.random.default_rng(2)
        xi = rng.standard_normal((1000, fine.n_steps))
        coarse_xi = (xi[:, 0::2] + xi[:, 1::2]) / math.sqrt(2.0)
        uf = _integrate(np.full(1000, p.u0), xi, fine, 1e6)[:, -1]
        uc = _integrate(np.full(1000, p.u0), coarse_xi, p, 1e6)[:, -1]
        se = np.std(uf, ddof=1) / math.sqrt(1000)
        assert abs(uf.mean() - uc.mean()) < se


class TestEnsemble:
    def test_zero_noise(self):
        u = good_equilibrium(equilibria(1.0, 3.0))
        res = ensemble_indicators(ModelParams(m=1.0, r=3.0, D=0.0, u0=u), 5)
        assert res.mean_std == pytest.approx(0.0, abs=1e-12)
        assert res.n_used == 5

    def test_std_grows_with_noise(self):
        u = good_equilibrium(equilibria(1.0, 3.0))
        lo = ensemble_indicators(ModelParams(m=1.0, r=3.0, D=0.01, u0=u), 30)
        hi = ensemble_indicators(ModelParams(m=1.0, r=3.0, D=0.16, u0=u), 30)
        assert hi.mean_std > lo.mean_std

    def test_both_grow_toward_fold(self):
        lo_u = good_equilibrium(equilibria(1.0, 3.0))
        hi_u = good_equilibrium(equilibria(1.9, 3.0))
        lo = ensemble_indicators(ModelParams(m=1.0, r=3.0, D=0.01, u0=lo_u), 30)
        hi = ensemble_indicators(ModelParams(m=1.9, r=3.0, D=0.01, u0=hi_u), 30)
        assert hi.mean_ar1 > lo.mean_ar1
        assert hi.mean_std > lo.mean_std

    def test_window_too_long(self):
        with pytest.raises(PreconditionError):
            ensemble_indicators(ModelParams(t_max=120.0), 3, window=400, burn_in=100.0)

    def test_explosion_fraction(self):
        p = ModelParams(m=0.0, r=3.0, D=4.0, dt=0.1, t_max=200.0, u0=1.7)
        with pytest.raises(ExplosionError):
            ensemble_indicators(p, 20, window=None, detrend=False)


class TestSweep:
    def spec(self, **kw):
        base = ModelParams(m=1.0, r=3.0, D=0.01, t_max=200.0, seed=5)
        return SweepSpec("m", kw.pop("grid", (0.5, 1.0, 1.5)), base=base, n_realizations=kw.pop("n", 8),
                         window=kw.pop("window", 200), **kw)

    def test_deterministic_and_jobs_independent(self):
        a = sweep(self.spec())
        b = sweep(self.spec())
        c = sweep(self.spec(), jobs=3)
        for name in ("mean_ar1", "mean_std", "stderr_ar1", "stderr_std"):
            assert np.array_equal(getattr(a, name), getattr(b, name))
            assert np.array_equal(getattr(a, name), getattr(c, name))

    def test_single_point(self):
        res = sweep(self.spec(grid=(1.0,)))
        assert res.mean_ar1.shape == (1,) and np.isfinite(res.stderr_std[0])

    def test_r_sweep_toward_fold(self):
        r_fold = fold_points_in_r(0.5)[0][0]
        base = ModelParams(m=0.5, r=3.0, D=0.01, seed=2)
        grid = tuple(np.linspace(3.0, r_fold + 0.05, 5))
        res = sweep(SweepSpec("r", grid, base=base, n_realizations=30))
        assert res.mean_std[-1] > res.mean_std[0]
        assert res.mean_ar1[-1] > res.mean_ar1[0]

    def test_grid_past_fold_rejected(self):
        with pytest.raises(PreconditionError, match="good stable equilibrium"):
            sweep(self.spec(grid=(2.5,)))

    @pytest.mark.parametrize("kw", [{"swept_parameter": "x"}, {"grid": ()}, {"n_realizations": 1}])
    def test_spec_validation(self, kw):
        args = {"swept_parameter": "m", "grid": (1.0,), "n_realizations": 10} | kw
        with pytest.raises(PreconditionError):
            SweepSpec(**args)
