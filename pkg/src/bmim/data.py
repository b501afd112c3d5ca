"""Data containers, exposure transforms, and index-group validation."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pandas as pd


class DataError(ValueError):
    """Input data violate a documented requirement."""


def _check_finite_columns(arr: np.ndarray, names) -> None:
    bad = ~np.isfinite(arr)
    if bad.any():
        col = int(np.flatnonzero(bad.any(axis=0))[0])
        raise DataError(f"missing or non-finite values in column '{names[col]}'")


@dataclass(frozen=True)
class Dataset:
    """Immutable analysis input.

    y is the outcome vector (length N), X the N x P exposure matrix and
    Z the N x q covariate matrix whose first column is the constant 1
    (intercept). Rows with missing values are rejected, not imputed.
    """

    y: np.ndarray
    X: np.ndarray
    Z: np.ndarray
    exposure_names: tuple[str, ...]
    covariate_names: tuple[str, ...]
    outcome_name: str = "y"

    def __post_init__(self):
        y = np.asarray(self.y, dtype=float).reshape(-1)
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        Z = np.atleast_2d(np.asarray(self.Z, dtype=float))
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "exposure_names", tuple(self.exposure_names))
        object.__setattr__(self, "covariate_names", tuple(self.covariate_names))
        n = y.shape[0]
        if X.shape[0] != n or Z.shape[0] != n:
            raise DataError("y, X and Z must have the same number of rows")
        if X.shape[1] != len(self.exposure_names):
            raise DataError("exposure_names must match the number of exposure columns")
        if Z.shape[1] != len(self.covariate_names):
            raise DataError("covariate_names must match the number of covariate columns")
        if not np.isfinite(y).all():
            raise DataError(f"missing or non-finite values in column '{self.outcome_name}'")
        _check_finite_columns(X, self.exposure_names)
        _check_finite_columns(Z, self.covariate_names)
        if n <= Z.shape[1]:
            raise DataError(f"need more observations ({n}) than covariate columns ({Z.shape[1]})")
        # A covariate-free dataset (q = 0) is allowed for prior-validation
        # harnesses; otherwise the first column must be the intercept.
        if Z.shape[1] > 0 and not np.all(Z[:, 0] == 1.0):
            raise DataError("first covariate column must be the constant 1 (intercept)")
        labels = list(self.exposure_names) + list(self.covariate_names) + [self.outcome_name]
        if len(set(labels)) != len(labels):
            raise DataError("column labels must be unique")
        for a in (y, X, Z):
            a.setflags(write=False)

    @property
    def n_obs(self) -> int:
        return self.y.shape[0]

    @property
    def n_exposures(self) -> int:
        return self.X.shape[1]

    @property
    def n_covariates(self) -> int:
        return self.Z.shape[1]

    @classmethod
    def from_arrays(cls, y, X, Z=None, exposure_names=None, covariate_names=None,
                    outcome_name="y", add_intercept=True) -> "Dataset":
        """Build a Dataset, prepending an intercept column to Z by default.
        Passing Z=None with add_intercept=False gives a covariate-free set."""
        y = np.asarray(y, dtype=float).reshape(-1)
        X = np.atleast_2d(np.asarray(X, dtype=float))
        n = y.shape[0]
        if Z is None:
            Z = np.empty((n, 0))
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        if Z.shape[0] != n and Z.size == 0:
            Z = np.empty((n, 0))
        cov_names = list(covariate_names) if covariate_names is not None else [
            f"z{j + 1}" for j in range(Z.shape[1])]
        if add_intercept:
            Z = np.column_stack([np.ones(n), Z]) if Z.size else np.ones((n, 1))
            cov_names = ["intercept"] + cov_names
        exp_names = list(exposure_names) if exposure_names is not None else [
            f"x{j + 1}" for j in range(X.shape[1])]
        return cls(y=y, X=X, Z=Z, exposure_names=tuple(exp_names),
                   covariate_names=tuple(cov_names), outcome_name=outcome_name)

    def subset(self, rows) -> "Dataset":
        """Row-subset view (copying) preserving all labels."""
        rows = np.asarray(rows)
        return Dataset(y=self.y[rows].copy(), X=self.X[rows].copy(), Z=self.Z[rows].copy(),
                       exposure_names=self.exposure_names, covariate_names=self.covariate_names,
                       outcome_name=self.outcome_name)


def load_csv(path, outcome: str, exposures, covariates=(), add_intercept=True) -> Dataset:
    """Read a header-ed CSV and assemble a Dataset from named columns."""
    frame = pd.read_csv(path)
    for col in [outcome, *exposures, *covariates]:
        if col not in frame.columns:
            raise DataError(f"column '{col}' not found in {path}")
    if frame[[outcome, *exposures, *covariates]].isna().any().any():
        bad = frame[[outcome, *exposures, *covariates]].isna().any()
        name = bad.index[np.argmax(bad.to_numpy())]
        raise DataError(f"missing or non-finite values in column '{name}'")
    return Dataset.from_arrays(
        y=frame[outcome].to_numpy(),
        X=frame[list(exposures)].to_numpy(),
        Z=frame[list(covariates)].to_numpy() if covariates else None,
        exposure_names=list(exposures),
        covariate_names=list(covariates),
        outcome_name=outcome,
        add_intercept=add_intercept,
    )


@dataclass(frozen=True)
class IndexSpec:
    """Partition of the exposure columns into M disjoint index groups.

    Column indices are 0-based. Validation against the exposure count
    happens in validate_index_spec.
    """

    groups: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        groups = tuple(tuple(int(c) for c in g) for g in self.groups)
        object.__setattr__(self, "groups", groups)
        if len(groups) == 0:
            raise DataError("need at least one index group")
        for g in groups:
            if len(g) == 0:
                raise DataError("every index group needs at least one column")

    @property
    def n_indices(self) -> int:
        return len(self.groups)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(len(g) for g in self.groups)

    @property
    def n_components(self) -> int:
        return sum(self.sizes)

    def flat_columns(self) -> np.ndarray:
        """Exposure column of each component, in flat component order."""
        return np.array([c for g in self.groups for c in g], dtype=int)

    def flat_index_of_component(self) -> np.ndarray:
        """Index id of each component, in flat component order."""
        return np.array([m for m, g in enumerate(self.groups) for _ in g], dtype=int)

    @classmethod
    def single(cls, p: int) -> "IndexSpec":
        return cls(groups=(tuple(range(p)),))

    @classmethod
    def singletons(cls, p: int) -> "IndexSpec":
        return cls(groups=tuple((j,) for j in range(p)))

    @classmethod
    def from_string(cls, text: str) -> "IndexSpec":
        """Parse 1-based ranges like "1-8;9-10;11-18" into 0-based groups."""
        groups = []
        for part in text.split(";"):
            part = part.strip()
            if not part:
                continue
            cols: list[int] = []
            for piece in part.split(","):
                piece = piece.strip()
                if "-" in piece[1:]:
                    lo, hi = piece.split("-")
                    cols.extend(range(int(lo) - 1, int(hi)))
                else:
                    cols.append(int(piece) - 1)
            groups.append(tuple(cols))
        return cls(groups=tuple(groups))


def validate_index_spec(index_spec: IndexSpec, n_exposures: int) -> None:
    """Check the groups partition {0..P-1}; raise naming the offending column."""
    seen: set[int] = set()
    for g in index_spec.groups:
        for col in g:
            if col < 0 or col >= n_exposures:
                raise DataError(f"index group column {col} is outside 0..{n_exposures - 1}")
            if col in seen:
                raise DataError(f"column {col} appears in more than one index group")
            seen.add(col)
    missing = set(range(n_exposures)) - seen
    if missing:
        raise DataError(f"column {min(missing)} is not assigned to any index group")


@dataclass(frozen=True)
class StandardizationRecord:
    """Per-column centering/scaling used on an exposure matrix."""

    mean: np.ndarray
    sd: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).reshape(-1)
        sd = np.asarray(self.sd, dtype=float).reshape(-1)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "sd", sd)
        if np.any(sd <= 0):
            raise DataError("standardization record requires positive sds")

    def apply(self, X) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.mean) / self.sd

    def invert(self, X_std) -> np.ndarray:
        return np.asarray(X_std, dtype=float) * self.sd + self.mean


def standardize(X) -> tuple[np.ndarray, StandardizationRecord]:
    """Center and scale columns to sample mean 0 and sample sd 1 (ddof=1)."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    sd = X.std(axis=0, ddof=1)
    if np.any(sd == 0):
        col = int(np.flatnonzero(sd == 0)[0])
        raise DataError(f"constant column {col} cannot be standardized")
    mean = X.mean(axis=0)
    record = StandardizationRecord(mean=mean, sd=sd)
    return (X - mean) / sd, record


def quantile_score(x, q: int) -> np.ndarray:
    """Score values by how many interior empirical quantile cuts lie below them.

    Cut points sit at levels j/q (j = 1..q-1) of the empirical distribution
    of x itself, with linearly interpolated order statistics. Scores land in
    {0, .., q-1}, are monotone in the value, and depend on ranks only, so any
    strictly increasing transform of x leaves them unchanged.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    if x.size == 0:
        raise DataError("cannot quantile-score an empty vector")
    if not np.isfinite(x).all():
        raise DataError("cannot quantile-score non-finite values")
    q = int(q)
    if q < 2:
        raise DataError(f"need at least 2 quantile groups, got {q}")
    levels = np.arange(1, q) / q
    cuts = np.quantile(x, levels)
    return (cuts[None, :] < x[:, None]).sum(axis=1).astype(int)


def quantile_score_matrix(X, q: int) -> np.ndarray:
    """Column-wise quantile_score of an exposure matrix."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    return np.column_stack([quantile_score(X[:, j], q) for j in range(X.shape[1])])
