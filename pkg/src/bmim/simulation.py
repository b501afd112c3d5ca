"""Synthetic mixture scenarios, method wrappers, fit metrics, and the
method-comparison study harness."""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from zlib import crc32
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from .analysis import SurfaceEstimate, predict_surface
from .comparators import QgcFit, qgc_fit
from .data import DataError, Dataset, IndexSpec, standardize
from .kernels import KernelConfig
from .likelihood import Hyperparameters
from .sampler import SamplerSettings, run_chains

GAMMA_TRUE = np.array([-0.43, 0.00, -0.25, 0.12, 0.08])


def shape_s(u):
    """S-shaped response, centered, with a sharp transition so a model that
    is linear on the quantile scale leaves real curvature unexplained."""
    u = np.asarray(u, dtype=float)
    return 2.0 / (1.0 + np.exp(-4.0 * u)) - 1.0


def shape_bump(u):
    """Unimodal response, centered under a standard normal input."""
    u = np.asarray(u, dtype=float)
    return 2.0 * np.exp(-u ** 2) - 2.0 / np.sqrt(3.0)


def shape_flat(u):
    return np.zeros_like(np.asarray(u, dtype=float))


def shape_sigmoid(u):
    return 1.5 * np.tanh(1.5 * np.asarray(u, dtype=float))


def _design_for(p: int):
    """Grouping and generating weights for the standard 18-exposure layout
    or its documented 9-exposure mini analogue (groups 4/1/4)."""
    if p == 18:
        groups = IndexSpec(groups=(tuple(range(8)), (8, 9), tuple(range(10, 18))))
        w1 = np.array([8.0, 7.0, 6.0, 5.0, 4.0, 3.0, 2.0, 1.0])
        w3 = -2.0 * np.ones(8)
    elif p == 9:
        groups = IndexSpec(groups=(tuple(range(4)), (4,), tuple(range(5, 9))))
        w1 = np.array([4.0, 3.0, 2.0, 1.0])
        w3 = -2.0 * np.ones(4)
    else:
        raise DataError(f"scenarios are defined for 18 or 9 exposures, got {p}")
    return groups, w1, w3


def block_correlated_exposures(n: int, seed: int, p: int = 18) -> np.ndarray:
    """Correlated exposure draws: unit marginals with correlation 0.6 inside
    each exposure group and 0.2 across groups."""
    groups, _, _ = _design_for(p)
    corr = np.full((p, p), 0.2)
    for g in groups.groups:
        for a in g:
            for b in g:
                corr[a, b] = 0.6
    np.fill_diagonal(corr, 1.0)
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(1,)))
    chol = np.linalg.cholesky(corr)
    return rng.standard_normal((n, p)) @ chol.T


def simulated_covariates(n: int, seed: int) -> np.ndarray:
    """Covariate draws shaped like the case-study adjustment set:
    standardized age, its square, a binary indicator, and two body-mass
    category indicators."""
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(2,)))
    age = rng.standard_normal(n)
    male = (rng.random(n) < 0.5).astype(float)
    bmi_cat = rng.choice(3, size=n, p=[0.35, 0.35, 0.30])
    return np.column_stack([age, age ** 2, male,
                            (bmi_cat == 1).astype(float),
                            (bmi_cat == 2).astype(float)])


@dataclass(frozen=True)
class ScenarioTruth:
    """Generating truth for one synthetic dataset: the surface values, the
    index projections, and the weights/noise/covariate effects behind them."""

    scenario: str
    sigma: float
    h: np.ndarray
    index_values: np.ndarray
    weights: tuple[np.ndarray, ...]
    gamma: np.ndarray
    groups: IndexSpec

    def subset(self, rows) -> "ScenarioTruth":
        rows = np.asarray(rows)
        return replace(self, h=self.h[rows], index_values=self.index_values[rows])


def _standardize_1d(v: np.ndarray) -> np.ndarray:
    return (v - v.mean()) / v.std(ddof=1)


def generate_scenario(kind: str, X, Z, sigma: float, seed: int, *,
                      interaction: float = 0.5) -> tuple[Dataset, ScenarioTruth]:
    """Generate outcomes for one scenario on the supplied exposures.

    'A' runs a single S-shaped index through all exposures, 'B' three
    indices (unimodal, flat null, sigmoidal) with a product interaction
    between the first and third, and 'A-linear' replaces A's shape with the
    identity. The outcome adds covariate effects and N(0, sigma^2) noise;
    everything is a pure function of (X, Z, sigma, seed).
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    n, p = X.shape
    if sigma <= 0:
        raise DataError("noise sd must be positive")
    groups, w1, w3 = _design_for(p)
    l2 = groups.sizes[1]
    if kind in ("A", "A-linear"):
        w2 = np.zeros(l2)
        w = np.concatenate([w1, w2, w3])
        x_star = _standardize_1d(X @ w)
        h = x_star.copy() if kind == "A-linear" else shape_s(x_star)
        index_values = x_star[:, None]
        weights = (w1, w2, w3)
    elif kind == "B":
        w2 = np.ones(l2)
        weights = (w1, w2, w3)
        cols = [np.asarray(list(g)) for g in groups.groups]
        idx = np.column_stack([
            _standardize_1d(X[:, cols[0]] @ w1),
            _standardize_1d(X[:, cols[1]] @ w2),
            _standardize_1d(X[:, cols[2]] @ w3),
        ])
        h = (shape_bump(idx[:, 0]) + shape_flat(idx[:, 1]) + shape_sigmoid(idx[:, 2])
             + interaction * shape_bump(idx[:, 0]) * shape_sigmoid(idx[:, 2]))
        index_values = idx
    else:
        raise DataError(f"unknown scenario '{kind}'")

    Z = np.atleast_2d(np.asarray(Z, dtype=float))
    if Z.shape[0] != n or Z.shape[1] != GAMMA_TRUE.shape[0]:
        raise DataError("covariates must match the five-column adjustment set")
    rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(3,)))
    y = h + Z @ GAMMA_TRUE + sigma * rng.standard_normal(n)
    data = Dataset.from_arrays(y, X, Z, add_intercept=True)
    truth = ScenarioTruth(scenario=kind, sigma=sigma, h=h, index_values=index_values,
                          weights=weights, gamma=GAMMA_TRUE.copy(), groups=groups)
    return data, truth


def train_test_split(data: Dataset, truth: ScenarioTruth,
                     n_train: int) -> tuple[Dataset, Dataset, ScenarioTruth, ScenarioTruth]:
    """Leading rows train, remaining rows test (rows are exchangeable)."""
    n = data.n_obs
    if not 0 < n_train < n:
        raise DataError("train size must leave a nonempty test set")
    tr = np.arange(n_train)
    te = np.arange(n_train, n)
    return data.subset(tr), data.subset(te), truth.subset(tr), truth.subset(te)


@dataclass(frozen=True)
class FitMetrics:
    """Test-set quality summary for one fitted method on one replicate."""

    mse_h: float
    mse_y: float
    coverage: float
    avg_se: float
    cv_mse: float = float("nan")

    def __post_init__(self):
        if self.mse_h < 0 or self.mse_y < 0 or self.avg_se < 0:
            raise DataError("squared errors cannot be negative")
        if not 0.0 <= self.coverage <= 1.0:
            raise DataError("coverage is a proportion")


def evaluate_fit(truth: ScenarioTruth, surface: SurfaceEstimate, y_test,
                 predictions, cv_mse: float = float("nan")) -> FitMetrics:
    """Score a surface estimate and outcome predictions against the truth."""
    y_test = np.asarray(y_test, dtype=float).reshape(-1)
    predictions = np.asarray(predictions, dtype=float).reshape(-1)
    h_true = truth.h
    if not (h_true.shape == surface.mean.shape and y_test.shape == predictions.shape
            and y_test.shape == h_true.shape):
        raise DataError("test rows are misaligned across truth and estimates")
    covered = (surface.lower <= h_true) & (h_true <= surface.upper)
    return FitMetrics(
        mse_h=float(np.mean((surface.mean - h_true) ** 2)),
        mse_y=float(np.mean((y_test - predictions) ** 2)),
        coverage=float(covered.mean()),
        avg_se=float(surface.sd.mean()),
        cv_mse=cv_mse,
    )


# -- method wrappers -------------------------------------------------------


@dataclass(frozen=True)
class QgcMethod:
    """Quantile g-computation wrapper for the study harness."""

    q: int = 10
    quadratic: bool = False

    name: str = "qgc"

    def fit(self, data: Dataset) -> "FittedQgc":
        return FittedQgc(fit=qgc_fit(data, self.q, quadratic=self.quadratic),
                         train=data)


@dataclass(frozen=True)
class FittedQgc:
    fit: QgcFit
    train: Dataset

    def predict_outcome(self, X_new, Z_new, surface=None) -> np.ndarray:
        return self.fit.predict(X_new, Z_new, self.train.X)

    def h_surface(self, X_new, rng=None) -> SurfaceEstimate:
        """Centered quantile-score surface with classical pointwise bands.

        The linear model identifies the surface only up to a constant that
        the intercept absorbs, so scores are centered at their training
        means before aggregation.
        """
        from .data import quantile_score_matrix

        q = self.fit.n_quantiles
        levels = np.arange(1, q) / q
        X_new = np.atleast_2d(np.asarray(X_new, dtype=float))
        scores = np.empty_like(X_new)
        for j in range(X_new.shape[1]):
            cuts = np.quantile(self.train.X[:, j], levels)
            scores[:, j] = (cuts[None, :] < X_new[:, j][:, None]).sum(axis=1)
        center = quantile_score_matrix(self.train.X, q).mean(axis=0)
        sc = scores - center
        mean = sc @ self.fit.beta
        # Pointwise variance from the OLS coefficient covariance.
        resid_design = np.column_stack([
            quantile_score_matrix(self.train.X, q).astype(float), self.train.Z])
        xtx_inv = np.linalg.inv(resid_design.T @ resid_design)
        p = self.fit.beta.shape[0]
        dof = self.train.n_obs - resid_design.shape[1]
        resid = self.train.y - resid_design @ np.concatenate(
            [self.fit.beta, [self.fit.intercept], self.fit.covariate_coef])
        s2 = float(resid @ resid) / dof
        cov_b = s2 * xtx_inv[:p, :p]
        sd = np.sqrt(np.einsum("ij,jk,ik->i", sc, cov_b, sc))
        return SurfaceEstimate(grid=X_new, mean=mean, sd=sd,
                               lower=mean - 1.959963984540054 * sd,
                               upper=mean + 1.959963984540054 * sd,
                               draw_means=mean[None, :], samples=None,
                               meta={"method": "qgc"})


@dataclass(frozen=True)
class KernelMethod:
    """Kernel index-model wrapper: one of the named configurations fit by
    the sampler, with internal exposure standardization."""

    kind: str = "bmim"
    groups: str | None = None
    kernel: KernelConfig = field(default_factory=KernelConfig)
    hyper: Hyperparameters = field(default_factory=Hyperparameters)
    settings: SamplerSettings = field(default_factory=SamplerSettings)
    standardize_exposures: bool = True

    @property
    def name(self) -> str:
        return self.kind

    def fit(self, data: Dataset) -> "FittedKernel":
        from .comparators import named_configuration

        index_spec, config = named_configuration(
            self.kind, data.n_exposures, self.groups,
            kernel=self.kernel.kind, degree=self.kernel.degree)
        if self.standardize_exposures:
            X_std, record = standardize(data.X)
            fit_data = Dataset(y=data.y, X=X_std, Z=data.Z,
                               exposure_names=data.exposure_names,
                               covariate_names=data.covariate_names,
                               outcome_name=data.outcome_name)
        else:
            record = None
            fit_data = data
        chain = run_chains(fit_data, index_spec, config, self.hyper, self.settings)
        return FittedKernel(chain=chain, data=fit_data, index_spec=index_spec,
                            config=config, record=record)


@dataclass(frozen=True)
class FittedKernel:
    chain: object
    data: Dataset
    index_spec: IndexSpec
    config: KernelConfig
    record: object = None

    def _transform(self, X_new) -> np.ndarray:
        X_new = np.atleast_2d(np.asarray(X_new, dtype=float))
        return self.record.apply(X_new) if self.record is not None else X_new

    def h_surface(self, X_new, rng=None) -> SurfaceEstimate:
        return predict_surface(self.chain, self.data, self.index_spec, self.config,
                               self._transform(X_new), rng=rng)

    def predict_outcome(self, X_new, Z_new, surface: SurfaceEstimate | None = None
                        ) -> np.ndarray:
        if surface is None:
            surface = self.h_surface(X_new)
        Z_new = np.atleast_2d(np.asarray(Z_new, dtype=float))
        per_draw = surface.draw_means + (Z_new @ self.chain.gamma.T).T
        return per_draw.mean(axis=0)


def kfold_cv(data: Dataset, method, k: int, seed: int) -> float:
    """Pooled held-out mean squared prediction error over k seeded folds."""
    n = data.n_obs
    if not 2 <= k <= n:
        raise DataError("fold count must lie in [2, N]")
    order = np.random.default_rng(seed).permutation(n)
    folds = np.array_split(order, k)
    sq_errors = []
    for fold in folds:
        mask = np.ones(n, dtype=bool)
        mask[fold] = False
        fitted = method.fit(data.subset(np.flatnonzero(mask)))
        preds = fitted.predict_outcome(data.X[fold], data.Z[fold])
        sq_errors.append((data.y[fold] - preds) ** 2)
    return float(np.concatenate(sq_errors).mean())


# -- study harness ---------------------------------------------------------


def run_replicate(scenario: str, methods: dict, sigma: float, seed: int,
                  n_train: int = 300, n_test: int = 200, p: int = 18,
                  cv_folds: int | None = None) -> dict[str, FitMetrics]:
    """Generate one synthetic dataset and score every method on it."""
    n = n_train + n_test
    X = block_correlated_exposures(n, seed, p=p)
    Z = simulated_covariates(n, seed)
    data, truth = generate_scenario(scenario, X, Z, sigma, seed)
    data_tr, data_te, _, truth_te = train_test_split(data, truth, n_train)
    out = {}
    for name, method in methods.items():
        fitted = method.fit(data_tr)
        rng = np.random.default_rng(np.random.SeedSequence(
            entropy=seed, spawn_key=(4, crc32(name.encode()))))
        surface = fitted.h_surface(data_te.X, rng=rng)
        preds = fitted.predict_outcome(data_te.X, data_te.Z, surface=surface)
        cv = kfold_cv(data_tr, method, cv_folds, seed) if cv_folds else float("nan")
        out[name] = evaluate_fit(truth_te, surface, data_te.y, preds, cv_mse=cv)
    return out


def _replicate_job(args):
    scenario, methods, sigma, seed, n_train, n_test, p, cv_folds, replicate = args
    metrics = run_replicate(scenario, methods, sigma, seed, n_train=n_train,
                            n_test=n_test, p=p, cv_folds=cv_folds)
    rows = []
    for name, m in metrics.items():
        rows.append({"sigma": sigma, "scenario": scenario, "method": name,
                     "replicate": replicate, "mse_h": m.mse_h, "mse_y": m.mse_y,
                     "coverage": m.coverage, "avg_se": m.avg_se, "cv_mse": m.cv_mse})
    return rows


def run_simulation_study(scenarios, methods: dict, n_replicates: int, sigma: float,
                         seed: int, n_train: int = 300, n_test: int = 200,
                         p: int = 18, cv_folds: int | None = None,
                         n_jobs: int = 1) -> pd.DataFrame:
    """Replicate the scenario comparison and return per-replicate metrics.

    Replicates are independent jobs with seeds spawned from the master seed;
    aggregation order is fixed by (scenario, replicate), so results do not
    depend on scheduling.
    """
    jobs = []
    for scenario in scenarios:
        for r in range(n_replicates):
            rep_seed = int(np.random.SeedSequence(
                entropy=seed, spawn_key=(5, crc32(scenario.encode()), r)
            ).generate_state(1)[0])
            jobs.append((scenario, methods, sigma, rep_seed, n_train, n_test, p,
                         cv_folds, r))
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            results = list(pool.map(_replicate_job, jobs))
    else:
        results = [_replicate_job(j) for j in jobs]
    rows = [row for chunk in results for row in chunk]
    return pd.DataFrame(rows)


def summarize_study(per_replicate: pd.DataFrame) -> pd.DataFrame:
    """Aggregate per-replicate metrics into one row per (sigma, scenario,
    method) with the usual mean/sd columns."""
    grouped = per_replicate.groupby(["sigma", "scenario", "method"], sort=True)
    table = grouped.agg(
        mse_h_mean=("mse_h", "mean"), mse_h_sd=("mse_h", "std"),
        se_h=("avg_se", "mean"), cvg_h=("coverage", "mean"),
        mse_y_mean=("mse_y", "mean"), mse_y_sd=("mse_y", "std"),
        cv_mse_mean=("cv_mse", "mean"), cv_mse_sd=("cv_mse", "std"),
    ).reset_index()
    return table
