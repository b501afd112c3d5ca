"""Posterior reportables: weight decomposition, inclusion summaries,
predictive surfaces, index-wise curves, contrasts, and interaction grids."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd
import scipy.linalg as sla

from .data import DataError, Dataset, IndexSpec
from .kernels import (KernelConfig, WeightSet, cross_from_projections,
                      gram_from_projections, jittered_cholesky, project_indices)
from .sampler import PosteriorChain


def decompose_weights(theta_star_m) -> tuple[float, np.ndarray | None]:
    """Split one index's kernel-scale weights into a nonnegative feature
    scale (the squared norm) and unit-norm component weights.

    A zero vector means the index is excluded; its component weights are
    undefined and None is returned for them.
    """
    v = np.asarray(theta_star_m, dtype=float).reshape(-1)
    rho = float(v @ v)
    if rho == 0.0:
        return 0.0, None
    return rho, v / np.sqrt(rho)


@dataclass(frozen=True)
class WeightSummary:
    """Per-index and per-component inclusion and weight summaries.

    Component arrays are in flat component order (group by group). The
    display estimate renormalizes each index's conditional mean vector to
    unit norm, matching how weight tables are reported; intervals are
    equal-tailed 95% bands of the conditional unit-norm weight draws.
    """

    index_pip: np.ndarray
    cond_pip: np.ndarray
    marginal_pip: np.ndarray
    theta_mean: np.ndarray
    theta_display: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    n_included: np.ndarray

    def table(self, index_spec: IndexSpec, exposure_names=None) -> pd.DataFrame:
        cols = index_spec.flat_columns()
        comp_index = index_spec.flat_index_of_component()
        names = ([f"x{c + 1}" for c in cols] if exposure_names is None
                 else [exposure_names[c] for c in cols])
        return pd.DataFrame({
            "group": comp_index + 1,
            "exposure": names,
            "index_pip": self.index_pip[comp_index],
            "component_pip": self.cond_pip,
            "marginal_pip": self.marginal_pip,
            "weight_est": self.theta_display,
            "weight_lower": self.ci_lower,
            "weight_upper": self.ci_upper,
        })


def compute_pips(chain: PosteriorChain, index_spec: IndexSpec) -> WeightSummary:
    """Index-level and component-level posterior inclusion summaries.

    The index PIP is the fraction of draws with a nonzero feature scale;
    component summaries condition on those draws, and the marginal PIP is
    the exact product of the two.
    """
    if chain.n_draws == 0:
        raise DataError("cannot summarize an empty chain")
    m_count = index_spec.n_indices
    p = index_spec.n_components
    comp_index = index_spec.flat_index_of_component()
    slices = []
    k = 0
    for size in index_spec.sizes:
        slices.append(slice(k, k + size))
        k += size

    included = np.column_stack([chain.delta[:, sl].any(axis=1) for sl in slices])
    index_pip = included.mean(axis=0)
    n_included = included.sum(axis=0)

    cond_pip = np.full(p, np.nan)
    theta_mean = np.full(p, np.nan)
    theta_display = np.full(p, np.nan)
    ci_lower = np.full(p, np.nan)
    ci_upper = np.full(p, np.nan)
    for m, sl in enumerate(slices):
        rows = included[:, m]
        if not rows.any():
            continue
        block = chain.theta_star[rows, sl]
        norms = np.sqrt((block ** 2).sum(axis=1))
        unit = block / norms[:, None]
        cond_pip[sl] = chain.delta[rows, sl].mean(axis=0)
        mean_vec = unit.mean(axis=0)
        theta_mean[sl] = mean_vec
        scale = np.sqrt(mean_vec @ mean_vec)
        theta_display[sl] = mean_vec / scale if scale > 0 else mean_vec
        ci_lower[sl] = np.quantile(unit, 0.025, axis=0)
        ci_upper[sl] = np.quantile(unit, 0.975, axis=0)

    marginal = index_pip[comp_index] * cond_pip
    return WeightSummary(index_pip=index_pip, cond_pip=cond_pip,
                         marginal_pip=marginal, theta_mean=theta_mean,
                         theta_display=theta_display, ci_lower=ci_lower,
                         ci_upper=ci_upper, n_included=n_included)


def conditional_surface_moments(y, Z, K, K_no, K_nn, lam_inv, sigma2, gamma):
    """Predictive mean and covariance of the surface at query points, given
    one draw of the kernel state, noise variance, and covariate effects."""
    y = np.asarray(y, dtype=float).reshape(-1)
    if Z is None or np.size(Z) == 0:
        resid = y.copy()
    else:
        resid = y - np.atleast_2d(np.asarray(Z, dtype=float)) @ np.asarray(gamma,
                                                                           dtype=float)
    K = np.asarray(K, dtype=float)
    K_no = np.atleast_2d(np.asarray(K_no, dtype=float))
    K_nn = np.asarray(K_nn, dtype=float)
    n = y.shape[0]
    if lam_inv == 0.0:
        g = K_no.shape[0]
        return np.zeros(g), np.zeros((g, g))
    V = lam_inv * K
    V.flat[:: n + 1] += 1.0
    L, _ = jittered_cholesky(V)
    rhs = np.column_stack([resid, K_no.T])
    half = sla.solve_triangular(L, rhs, lower=True, check_finite=False)
    solved = sla.solve_triangular(L.T, half, lower=False, check_finite=False)
    mean = lam_inv * (K_no @ solved[:, 0])
    cov = sigma2 * lam_inv * (K_nn - lam_inv * (K_no @ solved[:, 1:]))
    return mean, cov


@dataclass(frozen=True)
class SurfaceEstimate:
    """Pooled posterior summary of the surface over a query grid.

    draw_means holds the per-draw predictive means; samples additionally
    carries one joint draw of the surface per posterior draw, so the pooled
    sd and equal-tailed interval combine between-draw and within-draw
    variability.
    """

    grid: np.ndarray
    mean: np.ndarray
    sd: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    draw_means: np.ndarray
    samples: np.ndarray | None = None
    axis: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def frame(self) -> pd.DataFrame:
        axis = self.axis if self.axis is not None else np.arange(self.mean.shape[0])
        return pd.DataFrame({
            "grid_value": axis,
            "mean": self.mean,
            "lower": self.lower,
            "upper": self.upper,
            "label": self.meta.get("label", ""),
        })


def _pool(grid, draw_means, samples, axis=None, meta=None) -> SurfaceEstimate:
    mean = draw_means.mean(axis=0)
    if samples is not None:
        sd = samples.std(axis=0, ddof=1)
        lower = np.quantile(samples, 0.025, axis=0)
        upper = np.quantile(samples, 0.975, axis=0)
    else:
        sd = draw_means.std(axis=0, ddof=1)
        lower = np.quantile(draw_means, 0.025, axis=0)
        upper = np.quantile(draw_means, 0.975, axis=0)
    return SurfaceEstimate(grid=grid, mean=mean, sd=sd, lower=lower, upper=upper,
                           draw_means=draw_means, samples=samples, axis=axis,
                           meta=meta or {})


def _default_rng(chain: PosteriorChain, tag: int) -> np.random.Generator:
    seq = np.random.SeedSequence(entropy=chain.settings.seed, spawn_key=(77, tag))
    return np.random.Generator(np.random.PCG64(seq))


def _sample_from_moments(mean, cov, rng) -> np.ndarray:
    if not np.any(cov):
        return mean.copy()
    scale = float(np.mean(np.diagonal(cov)))
    if scale <= 0:
        return mean.copy()
    L, _ = jittered_cholesky(cov / scale)
    return mean + np.sqrt(scale) * (L @ rng.standard_normal(mean.shape[0]))


def predict_surface(chain: PosteriorChain, data: Dataset, index_spec: IndexSpec,
                    config: KernelConfig, e_new, *, as_index_points: bool = False,
                    fixed_weights: WeightSet | None = None, sample: bool = True,
                    rng: np.random.Generator | None = None) -> SurfaceEstimate:
    """Posterior predictive surface at query points.

    Queries are raw exposure rows (projected per draw, so weight uncertainty
    propagates) or kernel-scale index points. Passing fixed_weights freezes
    the kernel weights across draws, which isolates shape uncertainty.
    """
    if chain.n_draws == 0:
        raise DataError("cannot predict from an empty chain")
    rng = rng if rng is not None else _default_rng(chain, 1)
    e_new = np.atleast_2d(np.asarray(e_new, dtype=float))
    n_draws = chain.n_draws
    g = e_new.shape[0]
    draw_means = np.empty((n_draws, g))
    samples = np.empty((n_draws, g)) if sample else None

    fixed = fixed_weights is not None
    if fixed:
        U = project_indices(data.X, index_spec, fixed_weights)
        K = gram_from_projections(U, config)
        E = e_new if as_index_points else project_indices(e_new, index_spec,
                                                          fixed_weights)
        K_no = cross_from_projections(E, U, config)
        K_nn = gram_from_projections(E, config)
    for t in range(n_draws):
        if not fixed:
            w = chain.weights_at(t)
            U = project_indices(data.X, index_spec, w)
            K = gram_from_projections(U, config)
            E = e_new if as_index_points else project_indices(e_new, index_spec, w)
            K_no = cross_from_projections(E, U, config)
            K_nn = gram_from_projections(E, config)
        mean, cov = conditional_surface_moments(
            data.y, data.Z, K, K_no, K_nn, chain.lam_inv[t], chain.sigma2[t],
            chain.gamma[t])
        draw_means[t] = mean
        if sample:
            samples[t] = _sample_from_moments(mean, cov, rng)
    return _pool(e_new, draw_means, samples)


def _conditional_weight_means(chain: PosteriorChain,
                              index_spec: IndexSpec) -> list[np.ndarray]:
    """Conditional posterior mean of each index's kernel-scale weights,
    zero for indices never included."""
    out = []
    k = 0
    for size in index_spec.sizes:
        sl = slice(k, k + size)
        rows = chain.delta[:, sl].any(axis=1)
        if rows.any():
            out.append(chain.theta_star[rows, sl].mean(axis=0))
        else:
            out.append(np.zeros(size))
        k += size
    return out


def _curve_fixed_weights(chain, data, index_spec, config, m, overrides,
                         fix_quantile, n_grid, sample, rng):
    """Index-m curve with kernel weights frozen at conditional means; other
    indices sit at quantiles of their own posterior-mean index values."""
    w_means = _conditional_weight_means(chain, index_spec)
    norm_m = float(np.sqrt(w_means[m] @ w_means[m]))
    if norm_m == 0.0:
        raise DataError(f"index {m} is never included; its curve is undefined")
    weights = WeightSet(vectors=tuple(w_means))
    # Display-scale index values: projections onto unit-norm mean weights.
    display = np.full((data.n_obs, index_spec.n_indices), np.nan)
    norms = np.zeros(index_spec.n_indices)
    for mm, (g, w) in enumerate(zip(index_spec.groups, w_means)):
        norms[mm] = float(np.sqrt(w @ w))
        if norms[mm] > 0:
            display[:, mm] = (data.X[:, list(g)] @ w) / norms[mm]
    lo, hi = np.quantile(display[:, m], [0.05, 0.95])
    axis = np.linspace(lo, hi, n_grid)

    E = np.zeros((n_grid, index_spec.n_indices))
    E[:, m] = norms[m] * axis
    for mm in range(index_spec.n_indices):
        if mm == m or norms[mm] == 0.0:
            continue
        quant = overrides.get(mm, fix_quantile)
        E[:, mm] = norms[mm] * np.quantile(display[:, mm], quant)
    est = predict_surface(chain, data, index_spec, config, E,
                          as_index_points=True, fixed_weights=weights,
                          sample=sample, rng=rng)
    label = ";".join(f"m{mm + 1}@{q:g}" for mm, q in sorted(overrides.items())) \
        or f"others@{fix_quantile:g}"
    return SurfaceEstimate(grid=E, mean=est.mean, sd=est.sd, lower=est.lower,
                           upper=est.upper, draw_means=est.draw_means,
                           samples=est.samples, axis=axis,
                           meta={"index": m, "label": label,
                                 "fix_quantile": fix_quantile})


def _curve_propagated(chain, data, index_spec, config, m, overrides,
                      fix_quantile, n_grid, sample, rng):
    """Fully propagated alternative: per-draw weights set both the training
    projections and the query coordinates, so weight uncertainty widens the
    bands. The display axis still comes from the conditional mean weights."""
    w_means = _conditional_weight_means(chain, index_spec)
    norm_m = float(np.sqrt(w_means[m] @ w_means[m]))
    if norm_m == 0.0:
        raise DataError(f"index {m} is never included; its curve is undefined")
    disp_m = data.X[:, list(index_spec.groups[m])] @ (w_means[m] / norm_m)
    lo, hi = np.quantile(disp_m, [0.05, 0.95])
    axis = np.linspace(lo, hi, n_grid)

    n_draws = chain.n_draws
    draw_means = np.empty((n_draws, n_grid))
    samples = np.empty((n_draws, n_grid)) if sample else None
    for t in range(n_draws):
        w = chain.weights_at(t)
        U = project_indices(data.X, index_spec, w)
        K = gram_from_projections(U, config)
        E = np.zeros((n_grid, index_spec.n_indices))
        rho_m = float(w.vectors[m] @ w.vectors[m])
        E[:, m] = np.sqrt(rho_m) * axis
        for mm in range(index_spec.n_indices):
            if mm == m:
                continue
            quant = overrides.get(mm, fix_quantile)
            E[:, mm] = np.quantile(U[:, mm], quant)
        K_no = cross_from_projections(E, U, config)
        K_nn = gram_from_projections(E, config)
        mean, cov = conditional_surface_moments(
            data.y, data.Z, K, K_no, K_nn, chain.lam_inv[t], chain.sigma2[t],
            chain.gamma[t])
        draw_means[t] = mean
        if sample:
            samples[t] = _sample_from_moments(mean, cov, rng)
    return _pool(None, draw_means, samples, axis=axis,
                 meta={"index": m, "label": "propagated",
                       "fix_quantile": fix_quantile})


def indexwise_curve(chain: PosteriorChain, data: Dataset, index_spec: IndexSpec,
                    config: KernelConfig, m: int, n_grid: int = 50,
                    fix_quantile: float = 0.5, *, propagate_weights: bool = False,
                    sample: bool = True,
                    rng: np.random.Generator | None = None) -> SurfaceEstimate:
    """Exposure-response curve along index m.

    The grid spans the 5th to 95th percentile of the posterior-mean index
    values; other indices sit at fix_quantile of theirs. By default the
    kernel weights stay fixed at their conditional posterior means, so the
    bands isolate uncertainty in the curve's shape.
    """
    if not 0 <= m < index_spec.n_indices:
        raise DataError(f"index {m} out of range")
    if n_grid < 2:
        raise DataError("need at least a 2-point grid")
    rng = rng if rng is not None else _default_rng(chain, 2)
    fn = _curve_propagated if propagate_weights else _curve_fixed_weights
    return fn(chain, data, index_spec, config, m, {}, fix_quantile, n_grid,
              sample, rng)


def interaction_grid(chain: PosteriorChain, data: Dataset, index_spec: IndexSpec,
                     config: KernelConfig, m: int, m_other: int,
                     percentiles=(0.1, 0.5, 0.9), n_grid: int = 50, *,
                     sample: bool = True,
                     rng: np.random.Generator | None = None
                     ) -> dict[float, SurfaceEstimate]:
    """Index-m curves recomputed with index m_other pinned at each listed
    percentile (remaining indices at their medians). Parallel curves mean no
    interaction between the two indices."""
    if index_spec.n_indices < 2:
        raise DataError("interaction grids need at least two indices")
    if m == m_other:
        raise DataError("pick two distinct indices")
    rng = rng if rng is not None else _default_rng(chain, 3)
    out = {}
    for pct in percentiles:
        out[pct] = _curve_fixed_weights(chain, data, index_spec, config, m,
                                        {m_other: pct}, 0.5, n_grid, sample, rng)
    return out


def overall_contrast(chain: PosteriorChain, data: Dataset, index_spec: IndexSpec,
                     config: KernelConfig, q_hi: float, q_lo: float, *,
                     only_index: int | None = None, sample: bool = True,
                     rng: np.random.Generator | None = None):
    """Posterior contrast of the surface between two exposure profiles.

    Both profiles start at the columnwise medians; the targeted exposures
    (all of them, or one index's group) move to their empirical q_hi and
    q_lo percentiles. Returns (estimate, (lower, upper)) where the interval
    is the equal-tailed 95% band of the sampled contrast draws.
    """
    if not (0.0 < q_hi < 1.0 and 0.0 < q_lo < 1.0):
        raise DataError("contrast percentiles must lie strictly inside (0, 1)")
    rng = rng if rng is not None else _default_rng(chain, 4)
    med = np.median(data.X, axis=0)
    cols = (np.arange(data.n_exposures) if only_index is None
            else np.array(list(index_spec.groups[only_index])))
    row_hi = med.copy()
    row_lo = med.copy()
    row_hi[cols] = np.quantile(data.X[:, cols], q_hi, axis=0)
    row_lo[cols] = np.quantile(data.X[:, cols], q_lo, axis=0)
    rows = np.vstack([row_hi, row_lo])

    n_draws = chain.n_draws
    c_mean = np.empty(n_draws)
    c_draw = np.empty(n_draws)
    for t in range(n_draws):
        w = chain.weights_at(t)
        U = project_indices(data.X, index_spec, w)
        K = gram_from_projections(U, config)
        E = project_indices(rows, index_spec, w)
        K_no = cross_from_projections(E, U, config)
        K_nn = gram_from_projections(E, config)
        mean, cov = conditional_surface_moments(
            data.y, data.Z, K, K_no, K_nn, chain.lam_inv[t], chain.sigma2[t],
            chain.gamma[t])
        c_mean[t] = mean[0] - mean[1]
        var = max(cov[0, 0] + cov[1, 1] - 2.0 * cov[0, 1], 0.0)
        c_draw[t] = c_mean[t] + np.sqrt(var) * rng.standard_normal() if sample \
            else c_mean[t]
    estimate = float(c_mean.mean())
    lower = float(np.quantile(c_draw, 0.025))
    upper = float(np.quantile(c_draw, 0.975))
    return estimate, (lower, upper)


def format_contrast(estimate: float, interval) -> str:
    lo, hi = interval
    return f"{estimate:.3f} (95% CI [{lo:.3f}, {hi:.3f}])"
