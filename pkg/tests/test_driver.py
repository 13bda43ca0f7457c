import dataclasses

import numpy as np
import pytest

from panellp import (
    HorizonCell,
    IRFResult,
    LPSpec,
    ValidationError,
    compare_estimators,
    from_columns,
    from_wide,
    run_lp,
)


def synthetic_var_panel(seed=50, n_units=8, n_periods=60):
    """Persistent two-variable panel with unit effects and a mild time drift."""
    rng = np.random.default_rng(seed)
    mu = rng.normal(0, 2, size=(n_units, 1))
    gt = 0.05 * np.arange(n_periods)
    x = np.zeros((n_units, n_periods))
    y = np.zeros((n_units, n_periods))
    for t in range(1, n_periods):
        x[:, t] = 0.6 * x[:, t - 1] + rng.normal(size=n_units)
        y[:, t] = mu[:, 0] + gt[t] + 0.4 * y[:, t - 1] - 0.5 * x[:, t] + rng.normal(size=n_units)
    units = [f"c{i:02d}" for i in range(n_units)]
    return from_wide(units, np.arange(1, n_periods + 1), {"y": y, "x": x})


def cells_of(result, estimator):
    return [c for c in result.cells if c.estimator == estimator]


class TestLPSpecValidation:
    def test_shock_in_controls_rejected(self):
        spec = LPSpec(response="y", shock="x", horizons=(0, 2),
                      extra_controls=(("x", (1,)),))
        with pytest.raises(ValidationError):
            spec.validate()

    def test_db_requires_prototype_shape(self):
        spec = LPSpec(response="y", shock="x", horizons=(0, 2),
                      shock_lags=2, estimators=("FE", "DB"))
        with pytest.raises(ValidationError):
            spec.validate()

    def test_db_requires_unit_fixed_effects(self):
        spec = LPSpec(response="y", shock="x", horizons=(0, 2),
                      fixed_effects="unit+time", estimators=("DB",))
        with pytest.raises(ValidationError):
            spec.validate()

    def test_bad_horizons(self):
        with pytest.raises(ValidationError):
            LPSpec(response="y", shock="x", horizons=(3, 1)).validate()

    def test_unknown_estimator(self):
        with pytest.raises(ValidationError):
            LPSpec(response="y", shock="x", horizons=(0, 1),
                   estimators=("FE", "GMM")).validate()


class TestRunLp:
    def test_row_structure(self):
        data = synthetic_var_panel()
        spec = LPSpec(response="y", shock="x", horizons=(0, 2), estimators=("FE",))
        result = run_lp(data, spec)
        assert [c.horizon for c in result.cells] == [0, 1, 2]
        assert all(c.ok for c in result.cells)

    def test_estimator_order_is_fixed(self):
        data = synthetic_var_panel()
        spec = LPSpec(response="y", shock="x", horizons=(0, 1),
                      estimators=("DB", "FE", "SPJ"))
        result = run_lp(data, spec)
        assert [c.estimator for c in result.cells] == ["FE", "SPJ", "DB"] * 2

    def test_irf_scale_linearity(self):
        data = synthetic_var_panel()
        base = LPSpec(response="y", shock="x", horizons=(0, 3), estimators=("FE", "SPJ"))
        scaled = dataclasses.replace(base, irf_scale=7.0)
        r1 = run_lp(data, base)
        r7 = run_lp(data, scaled)
        for c1, c7 in zip(r1.cells, r7.cells):
            assert c7.coefficient == pytest.approx(7.0 * c1.coefficient, rel=1e-12)
            assert c7.se == pytest.approx(7.0 * c1.se, rel=1e-12)
            assert c7.t_stat == pytest.approx(c1.t_stat, rel=1e-12)

    def test_rich_spec_h0_matches_dummy_ols(self):
        # four shock lags, four response lags, unit+time effects, unit cluster
        data = synthetic_var_panel()
        spec = LPSpec(
            response="y", shock="x", horizons=(0, 10),
            shock_lags=4, response_lags=(1, 2, 3, 4),
            fixed_effects="unit+time", cluster="unit",
            estimators=("FE", "SPJ"),
        )
        result = run_lp(data, spec)
        assert len(result.cells) == 22
        assert all(c.ok for c in result.cells)

        from panellp import build_sample
        sample = build_sample(data, spec, 0)
        n = sample.n_rows
        times, tcode = np.unique(sample.time, return_inverse=True)
        d_unit = np.zeros((n, sample.n_units))
        d_unit[np.arange(n), sample.unit_code] = 1.0
        d_time = np.zeros((n, times.size))
        d_time[np.arange(n), tcode] = 1.0
        design = np.hstack([sample.w, d_unit, d_time[:, 1:]])
        coef, *_ = np.linalg.lstsq(design, sample.y, rcond=None)
        assert result.cell(0, "FE").coefficient == pytest.approx(coef[0], abs=1e-8)

    def test_deterministic(self):
        data = synthetic_var_panel()
        spec = LPSpec(response="y", shock="x", horizons=(0, 4),
                      estimators=("FE", "SPJ", "DB"))
        r1 = run_lp(data, spec)
        r2 = run_lp(data, spec)
        for c1, c2 in zip(r1.cells, r2.cells):
            assert (c1.horizon, c1.estimator) == (c2.horizon, c2.estimator)
            assert c1.coefficient == c2.coefficient
            assert c1.se == c2.se
            assert c1.ci_lo == c2.ci_lo and c1.ci_hi == c2.ci_hi
            np.testing.assert_array_equal(c1.coefficients_full, c2.coefficients_full)

    def test_horizon_independence(self):
        data = synthetic_var_panel()
        wide = run_lp(data, LPSpec(response="y", shock="x", horizons=(0, 6)))
        narrow = run_lp(data, LPSpec(response="y", shock="x", horizons=(3, 3)))
        c_wide = wide.cell(3, "FE")
        c_narrow = narrow.cell(3, "FE")
        assert c_wide.coefficient == c_narrow.coefficient
        assert c_wide.se == c_narrow.se

    def test_unit_relabeling_changes_nothing(self):
        data = synthetic_var_panel(n_units=5)
        mapping = {u: f"zz_{9 - i}" for i, u in enumerate(data.units)}
        renamed = data.rename_units(mapping)
        spec = LPSpec(response="y", shock="x", horizons=(0, 3), estimators=("FE", "SPJ"))
        r1 = run_lp(data, spec)
        r2 = run_lp(renamed, spec)
        for c1, c2 in zip(r1.cells, r2.cells):
            assert c2.coefficient == pytest.approx(c1.coefficient, rel=1e-10)
            assert c2.se == pytest.approx(c1.se, rel=1e-10)

    def test_failed_horizon_yields_gap_row(self):
        # 14 periods: at h = 9 only 5 rows per unit remain, below d + 2 = 3?
        # use lags so that long horizons run out of rows entirely
        data = synthetic_var_panel(n_periods=14)
        spec = LPSpec(response="y", shock="x", horizons=(0, 12), shock_lags=1)
        result = run_lp(data, spec)
        assert any(not c.ok for c in result.cells)
        assert all(c.error and f"h={c.horizon}" in c.error
                   for c in result.cells if not c.ok)
        assert any(c.ok for c in result.cells)  # early horizons still fine

    def test_h0_response_lag0_excluded_with_warning(self):
        data = synthetic_var_panel()
        spec = LPSpec(response="y", shock="x", horizons=(0, 1), response_lags=(0,))
        result = run_lp(data, spec)
        c0 = result.cell(0, "FE")
        assert c0.ok
        assert any("regress the response on itself" in w for w in c0.warnings)
        assert c0.col_names == ("x",)
        c1 = result.cell(1, "FE")
        assert c1.col_names == ("x", "y")

    def test_collinear_controls_gap_all_horizons(self):
        data = synthetic_var_panel()
        dup = from_columns(
            np.array([data.units[c] for c in data.unit_code]), data.time,
            {**data.variables, "xcopy": data.variable("x").copy()},
        )
        spec = LPSpec(response="y", shock="x", horizons=(0, 2),
                      extra_controls=(("xcopy", (0,)),))
        result = run_lp(dup, spec)
        assert all(not c.ok for c in result.cells)


class TestCompareEstimators:
    @staticmethod
    def fabricate(values):
        """IRFResult with prescribed {estimator: {h: coef}}."""
        cells = []
        horizons = sorted({h for d in values.values() for h in d})
        for h in horizons:
            for est in ("FE", "SPJ", "DB"):
                if est in values and h in values[est]:
                    cells.append(HorizonCell(
                        horizon=h, estimator=est, ok=True,
                        coefficient=values[est][h], se=0.1, t_stat=0.0,
                        ci_lo=0.0, ci_hi=0.0, n_units=10, n_rows=100,
                    ))
        spec = LPSpec(response="y", shock="x", horizons=(min(horizons), max(horizons)),
                      estimators=tuple(values))
        return IRFResult(spec=spec, cells=tuple(cells))

    def test_published_style_relative_difference(self):
        result = self.fabricate({
            "FE": {6: -5.0, 7: -5.432, 8: -5.1},
            "SPJ": {6: -5.5, 7: -6.285, 8: -5.9},
        })
        table = compare_estimators(result, "most-negative")
        peaks = {p.estimator: p for p in table.peaks}
        assert peaks["FE"].h_peak == 7
        assert peaks["SPJ"].h_peak == 7
        (diff,) = table.diffs
        assert diff.horizon == 7
        assert diff.rel_diff_pct == pytest.approx(15.69, abs=0.02)

    def test_identical_estimators_zero_difference(self):
        result = self.fabricate({
            "FE": {0: -1.0, 1: -2.0}, "SPJ": {0: -1.0, 1: -2.0},
        })
        table = compare_estimators(result, "most-negative")
        assert all(d.rel_diff_pct == 0.0 for d in table.diffs)

    def test_zero_baseline_flagged_undefined(self):
        result = self.fabricate({
            "FE": {0: 0.0, 1: 0.0}, "SPJ": {0: -1.0, 1: -2.0},
        })
        table = compare_estimators(result, "most-negative")
        assert all(not d.defined for d in table.diffs)

    def test_differing_peaks_report_both_horizons(self):
        result = self.fabricate({
            "FE": {0: -3.0, 1: -1.0}, "SPJ": {0: -1.0, 1: -4.0},
        })
        table = compare_estimators(result, "most-negative")
        assert sorted(d.horizon for d in table.diffs) == [0, 1]

    def test_peak_rules(self):
        result = self.fabricate({
            "FE": {0: -3.0, 1: 5.0, 2: -4.0},
            "SPJ": {0: -3.0, 1: 5.0, 2: -4.0},
        })
        assert compare_estimators(result, "most-negative").peaks[0].h_peak == 2
        assert compare_estimators(result, "most-positive").peaks[0].h_peak == 1
        assert compare_estimators(result, "max-abs").peaks[0].h_peak == 1

    def test_needs_two_estimators(self):
        result = self.fabricate({"FE": {0: -1.0}})
        with pytest.raises(ValidationError):
            compare_estimators(result)


class TestDbPrerequisites:
    def test_db_runs_when_horizon_zero_not_requested(self):
        from panellp import SimConfig, generate
        cfg = SimConfig(dgp="prototype", beta0=-0.6, rho=0.8, n_units=20,
                        n_periods=60, replications=1, seed=9)
        data = generate(cfg, 0)
        spec = LPSpec(response="y", shock="x", horizons=(2, 4),
                      estimators=("FE", "DB"))
        result = run_lp(data, spec)
        assert [c.horizon for c in result.cells] == [2, 2, 3, 3, 4, 4]
        assert all(c.ok for c in result.cells)
        # the correction moved DB away from FE at positive horizons
        assert result.cell(3, "DB").coefficient != result.cell(3, "FE").coefficient
