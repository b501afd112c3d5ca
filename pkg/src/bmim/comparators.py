"""Quantile g-computation comparator and the named kernel-model
configurations (single index, grouped indices, one index per exposure)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import stats

from .data import (DataError, Dataset, IndexSpec, quantile_score_matrix,
                   validate_index_spec)
from .kernels import KernelConfig

_Z975 = float(stats.norm.ppf(0.975))


def qgc_weights(beta) -> tuple[np.ndarray | None, np.ndarray | None]:
    """Decompose exposure coefficients into positive and negative weight
    sets, each summing to one over its own sign. Entries of the opposite
    sign are NaN; a side with no coefficients at all is None."""
    beta = np.asarray(beta, dtype=float).reshape(-1)
    pos_mask = beta > 0
    neg_mask = beta < 0
    pos = None
    neg = None
    if pos_mask.any():
        pos = np.full(beta.shape, np.nan)
        pos[pos_mask] = beta[pos_mask] / beta[pos_mask].sum()
    if neg_mask.any():
        neg = np.full(beta.shape, np.nan)
        neg[neg_mask] = beta[neg_mask] / beta[neg_mask].sum()
    return pos, neg


@dataclass(frozen=True)
class QgcFit:
    """Least-squares fit on quantile-scored exposures.

    psi aggregates the per-exposure coefficients into the overall mixture
    effect (the mean outcome shift when every exposure moves up one quantile
    group); pos_weights/neg_weights give each exposure's share of the
    positive and negative parts. Weights come without uncertainty, matching
    the comparator's convention.
    """

    intercept: float
    beta: np.ndarray
    covariate_coef: np.ndarray
    beta_se: np.ndarray
    psi: float
    psi_se: float
    ci_lower: float
    ci_upper: float
    pos_weights: np.ndarray | None
    neg_weights: np.ndarray | None
    n_quantiles: int
    quadratic: bool
    exposure_names: tuple[str, ...]
    quad_coef: np.ndarray | None = None

    def summary(self) -> str:
        return f"{self.psi:.3f} (95% confidence interval: [{self.ci_lower:.3f}, {self.ci_upper:.3f}])"

    def weight_table(self) -> pd.DataFrame:
        p = self.beta.shape[0]
        pos = self.pos_weights if self.pos_weights is not None else np.full(p, np.nan)
        neg = self.neg_weights if self.neg_weights is not None else np.full(p, np.nan)
        return pd.DataFrame({"exposure": list(self.exposure_names),
                             "weight_pos": pos, "weight_neg": neg})

    def predict(self, X_new, Z_new, score_reference) -> np.ndarray:
        """Predicted outcome for new rows, scoring exposures against the
        reference (training) exposure matrix's quantile cut points."""
        X_new = np.atleast_2d(np.asarray(X_new, dtype=float))
        ref = np.atleast_2d(np.asarray(score_reference, dtype=float))
        q = self.n_quantiles
        levels = np.arange(1, q) / q
        scores = np.empty_like(X_new)
        for j in range(X_new.shape[1]):
            cuts = np.quantile(ref[:, j], levels)
            scores[:, j] = (cuts[None, :] < X_new[:, j][:, None]).sum(axis=1)
        pred = scores @ self.beta
        if self.quadratic:
            pred = pred + (scores ** 2) @ self.quad_coef
        Z_new = np.atleast_2d(np.asarray(Z_new, dtype=float))
        return pred + Z_new @ np.concatenate([[self.intercept], self.covariate_coef])


def qgc_fit(data: Dataset, q: int, *, quadratic: bool = False) -> QgcFit:
    """Ordinary least squares on quantile-scored exposures plus covariates.

    The optional quadratic flag adds squared score terms for extra
    flexibility; weights then keep their linear-term definition but lose
    their clean share interpretation, so interpret them cautiously.
    """
    if q < 2:
        raise DataError(f"need at least 2 quantile groups, got {q}")
    scores = quantile_score_matrix(data.X, q).astype(float)
    p = scores.shape[1]
    blocks = [scores]
    if quadratic:
        blocks.append(scores ** 2)
    design = np.column_stack(blocks + [data.Z])
    n, k = design.shape
    if n <= k:
        raise DataError("not enough observations for the quantile design")
    coef, residuals, rank, _ = np.linalg.lstsq(design, data.y, rcond=None)
    if rank < k:
        raise DataError("quantile-score design matrix is rank deficient")
    resid = data.y - design @ coef
    s2 = float(resid @ resid) / (n - k)
    cov = s2 * np.linalg.inv(design.T @ design)
    beta = coef[:p]
    beta_se = np.sqrt(np.diag(cov)[:p])
    psi = float(beta.sum())
    psi_var = float(np.ones(p) @ cov[:p, :p] @ np.ones(p))
    psi_se = float(np.sqrt(psi_var))
    pos, neg = qgc_weights(beta)
    cov_start = 2 * p if quadratic else p
    return QgcFit(
        intercept=float(coef[cov_start]),
        beta=beta,
        covariate_coef=coef[cov_start + 1:],
        beta_se=beta_se,
        psi=psi,
        psi_se=psi_se,
        ci_lower=psi - _Z975 * psi_se,
        ci_upper=psi + _Z975 * psi_se,
        pos_weights=pos,
        neg_weights=neg,
        n_quantiles=q,
        quadratic=quadratic,
        exposure_names=data.exposure_names,
        quad_coef=coef[p:2 * p] if quadratic else None,
    )


def named_configuration(kind: str, n_exposures: int, groups: IndexSpec | str | None = None,
                        kernel: str = "gaussian",
                        degree: int | None = None) -> tuple[IndexSpec, KernelConfig]:
    """Model family shorthand: 'bsim' puts every exposure in one index,
    'bkmr' gives each exposure its own index, and 'bmim' takes the supplied
    grouping. The kernel defaults to Gaussian."""
    kind = kind.lower()
    if kind == "bsim":
        index_spec = IndexSpec.single(n_exposures)
    elif kind == "bkmr":
        index_spec = IndexSpec.singletons(n_exposures)
    elif kind == "bmim":
        if groups is None:
            raise DataError("bmim needs an exposure grouping")
        index_spec = IndexSpec.from_string(groups) if isinstance(groups, str) else groups
    else:
        raise DataError(f"unknown model kind '{kind}'")
    validate_index_spec(index_spec, n_exposures)
    config = KernelConfig(kind=kernel, degree=degree)
    return index_spec, config
