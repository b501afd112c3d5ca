"""Index-projection kernels: Gaussian and polynomial Gram/cross matrices."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .data import DataError, IndexSpec

JITTER_START = 1e-10
JITTER_MAX = 1e-6


class NumericalError(RuntimeError):
    """A dense factorization failed even after jitter escalation."""


def jittered_cholesky(A: np.ndarray, *, start: float = 0.0) -> tuple[np.ndarray, float]:
    """Lower Cholesky factor of A, adding escalating diagonal jitter on failure.

    Jitter starts at 1e-10 (or `start` if larger) and grows tenfold up to
    1e-6 before giving up. Returns (L, jitter_used).
    """
    A = np.asarray(A, dtype=float)
    jitter = float(start)
    while True:
        try:
            if jitter == 0.0:
                L = sla.cholesky(A, lower=True, check_finite=False)
            else:
                L = sla.cholesky(A + jitter * np.eye(A.shape[0]), lower=True,
                                 check_finite=False)
            return L, jitter
        except sla.LinAlgError:
            jitter = JITTER_START if jitter == 0.0 else jitter * 10.0
            if jitter > JITTER_MAX:
                raise NumericalError(
                    f"Cholesky failed at maximum jitter {JITTER_MAX:g}") from None


@dataclass(frozen=True)
class KernelConfig:
    """Kernel family and, for the polynomial family, its degree."""

    kind: str = "gaussian"
    degree: int | None = None

    def __post_init__(self):
        if self.kind not in ("gaussian", "polynomial"):
            raise DataError(f"unknown kernel kind '{self.kind}'")
        if self.kind == "polynomial":
            if self.degree is None or int(self.degree) < 1:
                raise DataError("polynomial kernel needs an integer degree >= 1")
            object.__setattr__(self, "degree", int(self.degree))
        elif self.degree is not None:
            raise DataError("degree is only meaningful for the polynomial kernel")


@dataclass(frozen=True)
class WeightSet:
    """Kernel-scale index weights, one unconstrained vector per index.

    Each vector is the product of the index's nonnegative feature scale
    (square root) and its unit-norm component weights, so the kernel can be
    evaluated without handling the constraints explicitly.
    """

    vectors: tuple[np.ndarray, ...]

    def __post_init__(self):
        vectors = tuple(np.asarray(v, dtype=float).reshape(-1) for v in self.vectors)
        object.__setattr__(self, "vectors", vectors)
        for v in vectors:
            if not np.isfinite(v).all():
                raise DataError("kernel weights must be finite")
            v.setflags(write=False)

    @property
    def n_indices(self) -> int:
        return len(self.vectors)

    def flat(self) -> np.ndarray:
        return np.concatenate([v for v in self.vectors]) if self.vectors else np.empty(0)

    @classmethod
    def from_flat(cls, flat, index_spec: IndexSpec) -> "WeightSet":
        flat = np.asarray(flat, dtype=float).reshape(-1)
        if flat.size != index_spec.n_components:
            raise DataError("flat weight length does not match the index groups")
        out, k = [], 0
        for size in index_spec.sizes:
            out.append(flat[k:k + size].copy())
            k += size
        return cls(vectors=tuple(out))

    def check_conforms(self, index_spec: IndexSpec) -> None:
        if tuple(len(v) for v in self.vectors) != index_spec.sizes:
            raise DataError("weight vector lengths do not match the index groups")


def project_indices(X, index_spec: IndexSpec, weights: WeightSet) -> np.ndarray:
    """Project exposure rows onto the M weighted indices, giving an N x M matrix."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    weights.check_conforms(index_spec)
    cols = []
    for g, v in zip(index_spec.groups, weights.vectors):
        if max(g) >= X.shape[1]:
            raise DataError("exposure row has fewer columns than the index groups need")
        cols.append(X[:, list(g)] @ v)
    return np.column_stack(cols)


def _sqdist_accumulate(u: np.ndarray, v: np.ndarray, out: np.ndarray) -> None:
    """out += squared differences between entries of u (rows) and v (columns)."""
    d = u[:, None] - v[None, :]
    np.square(d, out=d)
    out += d


def gram_from_projections(U: np.ndarray, config: KernelConfig) -> np.ndarray:
    """Kernel Gram matrix from pre-projected index values (N x M)."""
    U = np.atleast_2d(np.asarray(U, dtype=float))
    n = U.shape[0]
    if config.kind == "gaussian":
        D = np.zeros((n, n))
        for m in range(U.shape[1]):
            _sqdist_accumulate(U[:, m], U[:, m], D)
        np.negative(D, out=D)
        return np.exp(D, out=D)
    G = U @ U.T
    G += 1.0
    if config.degree == 1:
        return G
    return G ** config.degree


def cross_from_projections(E: np.ndarray, U: np.ndarray, config: KernelConfig) -> np.ndarray:
    """Kernel matrix between query index values (G x M) and observed ones (N x M)."""
    E = np.atleast_2d(np.asarray(E, dtype=float))
    U = np.atleast_2d(np.asarray(U, dtype=float))
    if E.shape[1] != U.shape[1]:
        raise DataError("query points and observations live in different index spaces")
    if E.shape[0] == 0:
        return np.empty((0, U.shape[0]))
    if config.kind == "gaussian":
        D = np.zeros((E.shape[0], U.shape[0]))
        for m in range(U.shape[1]):
            _sqdist_accumulate(E[:, m], U[:, m], D)
        np.negative(D, out=D)
        return np.exp(D, out=D)
    G = E @ U.T
    G += 1.0
    if config.degree == 1:
        return G
    return G ** config.degree


def gaussian_entry(x_row, x2_row, index_spec: IndexSpec, weights: WeightSet) -> float:
    """Gaussian kernel between two exposure rows under the weighted indices."""
    u = project_indices(np.asarray(x_row, dtype=float)[None, :], index_spec, weights)
    v = project_indices(np.asarray(x2_row, dtype=float)[None, :], index_spec, weights)
    return float(np.exp(-np.sum((u - v) ** 2)))


def polynomial_entry(x_row, x2_row, index_spec: IndexSpec, weights: WeightSet,
                     degree: int) -> float:
    """Polynomial kernel (1 + sum of index-projection products)^degree."""
    if int(degree) < 1:
        raise DataError("polynomial degree must be >= 1")
    u = project_indices(np.asarray(x_row, dtype=float)[None, :], index_spec, weights)
    v = project_indices(np.asarray(x2_row, dtype=float)[None, :], index_spec, weights)
    return float((1.0 + (u @ v.T).item()) ** int(degree))


def gram_matrix(X, index_spec: IndexSpec, weights: WeightSet,
                config: KernelConfig) -> np.ndarray:
    """N x N kernel matrix over the observed exposure rows."""
    U = project_indices(X, index_spec, weights)
    return gram_from_projections(U, config)


def cross_matrix(queries, X, index_spec: IndexSpec, weights: WeightSet,
                 config: KernelConfig, *, as_index_points: bool = False) -> np.ndarray:
    """G x N kernel matrix of query points against observed exposure rows.

    Queries are raw exposure rows by default; pass as_index_points=True when
    they already are M-dimensional index values on the kernel scale.
    """
    U = project_indices(X, index_spec, weights)
    queries = np.atleast_2d(np.asarray(queries, dtype=float))
    if queries.shape[0] == 0:
        return np.empty((0, U.shape[0]))
    if as_index_points:
        E = queries
    else:
        E = project_indices(queries, index_spec, weights)
    return cross_from_projections(E, U, config)
