import numpy as np
import pytest

from bmim.analysis import SurfaceEstimate
from bmim.data import DataError, Dataset
from bmim.simulation import (FitMetrics, GAMMA_TRUE, QgcMethod, ScenarioTruth,
                             block_correlated_exposures, evaluate_fit,
                             generate_scenario, kfold_cv, run_simulation_study,
                             simulated_covariates, summarize_study,
                             train_test_split)


def scenario_inputs(n=200, seed=0, p=18):
    return block_correlated_exposures(n, seed, p=p), simulated_covariates(n, seed)


class TestGeneration:
    def test_pure_function_of_inputs(self):
        X, Z = scenario_inputs(n=120, seed=1)
        a_data, a_truth = generate_scenario("B", X, Z, 0.5, 7)
        b_data, b_truth = generate_scenario("B", X, Z, 0.5, 7)
        np.testing.assert_array_equal(a_data.y, b_data.y)
        np.testing.assert_array_equal(a_truth.h, b_truth.h)

    def test_index_standardized(self):
        X, Z = scenario_inputs(n=150, seed=2)
        for kind in ("A", "B", "A-linear"):
            _, truth = generate_scenario(kind, X, Z, 0.5, 3)
            np.testing.assert_allclose(truth.index_values.mean(axis=0), 0.0,
                                       atol=1e-12)
            np.testing.assert_allclose(truth.index_values.std(axis=0, ddof=1),
                                       1.0, atol=1e-12)

    def test_null_index_swap_symmetry(self):
        # The second group's weights are equal and its response is flat, so
        # swapping its two exposure columns changes nothing at all.
        X, Z = scenario_inputs(n=100, seed=4)
        _, truth = generate_scenario("B", X, Z, 0.5, 5)
        X_swapped = X.copy()
        X_swapped[:, [8, 9]] = X_swapped[:, [9, 8]]
        _, truth_swapped = generate_scenario("B", X_swapped, Z, 0.5, 5)
        np.testing.assert_array_equal(truth.h, truth_swapped.h)

    def test_noise_variance(self):
        X, Z = scenario_inputs(n=500, seed=6)
        data, truth = generate_scenario("A", X, Z, 0.5, 9)
        resid = data.y - truth.h - data.Z @ np.concatenate([[0.0], GAMMA_TRUE])
        var = resid.var(ddof=1)
        se = 0.25 * np.sqrt(2.0 / (500 - 1))
        assert abs(var - 0.25) < 3.0 * se

    def test_linear_variant_uses_identity(self):
        X, Z = scenario_inputs(n=80, seed=7)
        _, truth = generate_scenario("A-linear", X, Z, 0.5, 2)
        np.testing.assert_array_equal(truth.h, truth.index_values[:, 0])

    def test_wrong_exposure_count_rejected(self):
        gen = np.random.default_rng(1)
        with pytest.raises(DataError):
            generate_scenario("A", gen.normal(size=(50, 7)),
                              simulated_covariates(50, 1), 0.5, 1)

    def test_interaction_scale_zero_is_additive(self):
        X, Z = scenario_inputs(n=100, seed=8)
        _, truth = generate_scenario("B", X, Z, 0.5, 3, interaction=0.0)
        from bmim.simulation import shape_bump, shape_sigmoid

        direct = shape_bump(truth.index_values[:, 0]) + \
            shape_sigmoid(truth.index_values[:, 2])
        np.testing.assert_allclose(truth.h, direct, atol=1e-12)

    def test_mini_layout(self):
        X, Z = scenario_inputs(n=60, seed=9, p=9)
        data, truth = generate_scenario("B", X, Z, 0.5, 4)
        assert data.n_exposures == 9
        assert truth.groups.sizes == (4, 1, 4)

    def test_exposure_correlation_structure(self):
        X = block_correlated_exposures(20000, 3, p=18)
        corr = np.corrcoef(X.T)
        assert abs(corr[0, 1] - 0.6) < 0.05
        assert abs(corr[0, 10] - 0.2) < 0.05


class TestEvaluateFit:
    def _truth(self, h):
        return ScenarioTruth(scenario="A", sigma=0.5, h=np.asarray(h, float),
                             index_values=np.zeros((len(h), 1)),
                             weights=(np.ones(1),), gamma=GAMMA_TRUE,
                             groups=None)

    def _surface(self, mean, sd=None, lo=None, hi=None):
        mean = np.asarray(mean, float)
        sd = np.zeros_like(mean) if sd is None else np.asarray(sd, float)
        lo = mean if lo is None else np.asarray(lo, float)
        hi = mean if hi is None else np.asarray(hi, float)
        return SurfaceEstimate(grid=np.zeros((mean.size, 1)), mean=mean, sd=sd,
                               lower=lo, upper=hi, draw_means=mean[None, :])

    def test_perfect_prediction(self):
        truth = self._truth([0.0, 1.0, 2.0])
        m = evaluate_fit(truth, self._surface([0.0, 1.0, 2.0]),
                         np.zeros(3), np.zeros(3))
        assert m.mse_h == 0.0

    def test_total_coverage(self):
        truth = self._truth([0.0, 1.0, 2.0])
        surf = self._surface([0.0, 0.0, 0.0], lo=[-9, -9, -9], hi=[9, 9, 9])
        assert evaluate_fit(truth, surf, np.zeros(3), np.zeros(3)).coverage == 1.0

    def test_hand_mse(self):
        truth = self._truth([0.0, 1.0, 2.0])
        m = evaluate_fit(truth, self._surface([0.0, 1.0, 4.0]),
                         np.zeros(3), np.zeros(3))
        np.testing.assert_allclose(m.mse_h, 4.0 / 3.0, rtol=1e-15)

    def test_misaligned_rejected(self):
        truth = self._truth([0.0, 1.0])
        with pytest.raises(DataError):
            evaluate_fit(truth, self._surface([0.0, 1.0, 2.0]),
                         np.zeros(3), np.zeros(3))

    def test_metric_bounds(self):
        with pytest.raises(DataError):
            FitMetrics(mse_h=-1.0, mse_y=0.0, coverage=0.5, avg_se=0.0)
        with pytest.raises(DataError):
            FitMetrics(mse_h=0.0, mse_y=0.0, coverage=1.5, avg_se=0.0)


class _ConstantMethod:
    """Predicts the training-outcome mean, whatever the inputs."""

    name = "const"

    def fit(self, data):
        value = float(data.y.mean())

        class _F:
            def predict_outcome(self, X_new, Z_new, surface=None):
                return np.full(np.atleast_2d(X_new).shape[0], value)

        return _F()


class _IndexOls:
    """Least squares on a fixed linear index of the exposures."""

    name = "index_ols"

    def fit(self, data):
        idx = data.X.sum(axis=1)
        design = np.column_stack([idx, data.Z])
        coef = np.linalg.lstsq(design, data.y, rcond=None)[0]

        class _F:
            def predict_outcome(self, X_new, Z_new, surface=None):
                X_new = np.atleast_2d(X_new)
                d = np.column_stack([X_new.sum(axis=1), np.atleast_2d(Z_new)])
                return d @ coef

        return _F()


class TestKfold:
    def test_constant_outcome_gives_zero(self):
        gen = np.random.default_rng(5)
        data = Dataset.from_arrays(np.full(24, 3.25), gen.normal(size=(24, 2)))
        assert kfold_cv(data, _ConstantMethod(), 4, seed=0) == 0.0

    def test_leave_one_out_pools_pointwise_errors(self):
        gen = np.random.default_rng(6)
        n = 12
        data = Dataset.from_arrays(gen.normal(size=n), gen.normal(size=(n, 2)))
        method = _ConstantMethod()
        loo = kfold_cv(data, method, n, seed=1)
        errors = []
        for i in range(n):
            rest = np.delete(np.arange(n), i)
            errors.append((data.y[i] - data.y[rest].mean()) ** 2)
        np.testing.assert_allclose(loo, np.mean(errors), rtol=1e-12)

    def test_noiseless_linear_index_recovers_exactly(self):
        gen = np.random.default_rng(7)
        n = 40
        X = gen.normal(size=(n, 3))
        y = 2.0 * X.sum(axis=1) + 0.5
        data = Dataset.from_arrays(y, X)
        assert kfold_cv(data, _IndexOls(), 5, seed=2) < 1e-10

    def test_too_few_folds_rejected(self):
        gen = np.random.default_rng(8)
        data = Dataset.from_arrays(gen.normal(size=10), gen.normal(size=(10, 2)))
        with pytest.raises(DataError):
            kfold_cv(data, _ConstantMethod(), 1, seed=0)


class TestStudyHarness:
    def test_split_shapes(self):
        X, Z = scenario_inputs(n=50, seed=3, p=9)
        data, truth = generate_scenario("A", X, Z, 0.5, 1)
        tr, te, tr_truth, te_truth = train_test_split(data, truth, 30)
        assert tr.n_obs == 30 and te.n_obs == 20
        assert tr_truth.h.shape == (30,) and te_truth.h.shape == (20,)

    def test_qgc_study_rows_and_determinism(self):
        methods = {"qgc": QgcMethod(q=4)}
        kwargs = dict(n_replicates=2, sigma=0.5, seed=11, n_train=60, n_test=30,
                      p=9)
        df1 = run_simulation_study(["A", "B"], methods, **kwargs)
        df2 = run_simulation_study(["A", "B"], methods, **kwargs)
        assert len(df1) == 4
        np.testing.assert_array_equal(df1["mse_h"].to_numpy(),
                                      df2["mse_h"].to_numpy())
        table = summarize_study(df1)
        assert set(table.columns) >= {"sigma", "scenario", "method",
                                      "mse_h_mean", "cvg_h", "cv_mse_mean"}
        assert len(table) == 2

    def test_parallel_matches_serial(self):
        methods = {"qgc": QgcMethod(q=4)}
        kwargs = dict(n_replicates=2, sigma=0.5, seed=13, n_train=60, n_test=30,
                      p=9)
        serial = run_simulation_study(["B"], methods, n_jobs=1, **kwargs)
        parallel = run_simulation_study(["B"], methods, n_jobs=2, **kwargs)
        np.testing.assert_array_equal(serial["mse_h"].to_numpy(),
                                      parallel["mse_h"].to_numpy())
