"""Marginal Gaussian likelihood and the posterior with noise scale and
covariate effects integrated out analytically."""

from __future__ import annotations

from dataclasses import dataclass
from math import lgamma, log, pi

import numpy as np
import scipy.linalg as sla

from .data import DataError
from .kernels import NumericalError, jittered_cholesky

_LOG_2PI = log(2.0 * pi)


@dataclass(frozen=True)
class Hyperparameters:
    """Prior settings for the variance, smoothness and inclusion parameters.

    a_sigma/b_sigma parameterize the Gamma prior on the noise precision,
    a_lambda/b_lambda the Gamma prior on the kernel scale, a_0/b_0 the Beta
    prior on the shared inclusion probability, and slab_variance the slab of
    the spike-and-slab prior on each kernel-scale weight component.
    """

    a_sigma: float = 0.001
    b_sigma: float = 0.001
    a_lambda: float = 1.0
    b_lambda: float = 0.1
    a_0: float = 1.0
    b_0: float = 1.0
    slab_variance: float = 0.25

    def __post_init__(self):
        for name in ("a_sigma", "b_sigma", "a_lambda", "b_lambda", "a_0", "b_0",
                     "slab_variance"):
            if not getattr(self, name) > 0:
                raise DataError(f"hyperparameter {name} must be strictly positive")


class LikelihoodWorkspace:
    """Preallocated buffers and LAPACK handles for repeated marginal
    evaluations on one dataset.

    Large temporaries are expensive to allocate afresh, so the sampler keeps
    one of these per chain and threads it through every MarginalCache build.
    """

    __slots__ = ("yz", "v", "c", "potrf", "trtrs")

    def __init__(self, y, Z):
        y = np.asarray(y, dtype=float).reshape(-1)
        n = y.shape[0]
        if Z is None or np.size(Z) == 0:
            self.yz = np.ascontiguousarray(y[:, None])
        else:
            self.yz = np.column_stack([y, np.atleast_2d(np.asarray(Z, dtype=float))])
        self.v = np.empty((n, n))
        self.c = np.empty((n, n))
        self.potrf, self.trtrs = sla.lapack.get_lapack_funcs(
            ("potrf", "trtrs"), (self.v,))


def _factor_with_jitter(V: np.ndarray, ws: LikelihoodWorkspace | None,
                        start: float) -> tuple[np.ndarray, float]:
    """Cholesky of V with diagonal jitter escalation, optionally factoring
    inside a reusable buffer so V survives for retries.

    The buffered path hands LAPACK the transposed view of the buffer: V is
    symmetric, so the Fortran-order reinterpretation factors the same matrix
    without a copy."""
    if ws is None:
        return jittered_cholesky(V, start=start)
    n = V.shape[0]
    buf = ws.c
    jitter = float(start)
    while True:
        np.copyto(buf, V)
        if jitter:
            buf.flat[:: n + 1] += jitter
        L, info = ws.potrf(buf.T, lower=1, overwrite_a=1, clean=0)
        if info == 0:
            return L, jitter
        if info < 0:
            raise NumericalError(f"illegal value in factorization (arg {-info})")
        jitter = 1e-10 if jitter == 0.0 else jitter * 10.0
        if jitter > 1e-6:
            raise NumericalError(
                "Cholesky failed at maximum jitter 1e-06") from None


class MarginalCache:
    """Factorized quantities for one (kernel, lambda) state.

    Projects y and Z through V = I + lambda_inv * K once; every downstream
    quantity (integrated posterior, conditional noise/covariate draws,
    explicit marginal likelihood) reuses the projections. Build once per
    state; never shared mutably.
    """

    __slots__ = ("n", "q", "logdet_v", "y_v_y", "z_v_y", "gamma_hat", "chol_a",
                 "logdet_a", "resid_ss", "_w_y", "_w_z", "jitter")

    def __init__(self, y, Z, K, lam_inv, *, jitter_start: float = 0.0,
                 workspace: LikelihoodWorkspace | None = None):
        y = np.asarray(y, dtype=float).reshape(-1)
        n = y.shape[0]
        if Z is None:
            Z = np.empty((n, 0))
        Z = np.atleast_2d(np.asarray(Z, dtype=float))
        q = Z.shape[1]
        if Z.shape[0] != n:
            raise DataError("y and Z row counts differ")
        if n <= q:
            raise DataError("need more observations than covariate columns")
        if lam_inv < 0:
            raise DataError("lambda_inv must be nonnegative")
        K = np.asarray(K, dtype=float)
        if K.shape != (n, n):
            raise DataError("kernel matrix shape does not match y")

        if workspace is None:
            V = K * lam_inv
            V.flat[:: n + 1] += 1.0
            L, jitter = _factor_with_jitter(V, None, jitter_start)
            yz = np.column_stack([y, Z]) if q else y[:, None]
            W = sla.solve_triangular(L, yz, lower=True, check_finite=False)
        else:
            V = workspace.v
            np.multiply(K, lam_inv, out=V)
            V.flat[:: n + 1] += 1.0
            L, jitter = _factor_with_jitter(V, workspace, jitter_start)
            W, info = workspace.trtrs(L, workspace.yz, lower=1)
            if info != 0:
                raise NumericalError("triangular solve failed")
        self.jitter = jitter
        self.n = n
        self.q = q
        self.logdet_v = 2.0 * np.log(np.diagonal(L)).sum()
        w_y = W[:, 0]
        self._w_y = w_y
        self.y_v_y = float(w_y @ w_y)
        if q:
            w_z = W[:, 1:]
            self._w_z = w_z
            self.z_v_y = w_z.T @ w_y
            A = w_z.T @ w_z
            try:
                chol_a = sla.cholesky(A, lower=True, check_finite=False)
            except sla.LinAlgError:
                raise DataError("covariate matrix is rank deficient "
                                "(or numerically so) after projection") from None
            # A pivot at sqrt(machine eps) relative scale means the projected
            # covariates are numerically collinear.
            pivots = np.diagonal(chol_a)
            if pivots.min() <= 1e-7 * pivots.max():
                raise DataError("covariate matrix is rank deficient "
                                "(or numerically so) after projection")
            self.chol_a = chol_a
            self.logdet_a = 2.0 * np.log(np.diagonal(chol_a)).sum()
            half = sla.solve_triangular(chol_a, self.z_v_y, lower=True,
                                        check_finite=False)
            self.gamma_hat = sla.solve_triangular(chol_a.T, half, lower=False,
                                                  check_finite=False)
            self.resid_ss = self.y_v_y - float(half @ half)
        else:
            self._w_z = np.empty((n, 0))
            self.z_v_y = np.empty(0)
            self.chol_a = np.empty((0, 0))
            self.logdet_a = 0.0
            self.gamma_hat = np.empty(0)
            self.resid_ss = self.y_v_y

    def integrated_log_posterior(self, hyper: Hyperparameters) -> float:
        """Log marginal density of y given the kernel state, with the
        covariate effects (flat prior) and noise precision (Gamma prior)
        integrated out. Fully normalized, so quadrature can check it."""
        df = self.n - self.q
        a_post = hyper.a_sigma + 0.5 * df
        return (-0.5 * df * _LOG_2PI
                - 0.5 * self.logdet_v
                - 0.5 * self.logdet_a
                + hyper.a_sigma * log(hyper.b_sigma) - lgamma(hyper.a_sigma)
                + lgamma(a_post)
                - a_post * log(hyper.b_sigma + 0.5 * max(self.resid_ss, 0.0)))

    def marginal_log_likelihood(self, gamma, sigma2: float) -> float:
        """Log density of y under N(Z gamma, sigma2 * (I + lambda_inv K))."""
        if sigma2 <= 0:
            raise DataError("sigma2 must be strictly positive")
        gamma = np.asarray(gamma, dtype=float).reshape(-1)
        if gamma.shape[0] != self.q:
            raise DataError("gamma length does not match the covariate count")
        w_r = self._w_y - (self._w_z @ gamma if self.q else 0.0)
        quad = float(w_r @ w_r)
        return -0.5 * (self.n * (_LOG_2PI + log(sigma2)) + self.logdet_v
                       + quad / sigma2)

    def draw_sigma_gamma(self, hyper: Hyperparameters, rng: np.random.Generator,
                         size: int | None = None):
        """Conditional draws of (sigma2, gamma) given the kernel state.

        The noise precision is Gamma(a_sigma + (N-q)/2, b_sigma + S/2) and
        gamma given sigma2 is normal around the generalized least squares
        estimate. A scalar `size` vectorizes the draws.
        """
        df = self.n - self.q
        shape = hyper.a_sigma + 0.5 * df
        rate = hyper.b_sigma + 0.5 * max(self.resid_ss, 0.0)
        m = 1 if size is None else int(size)
        precision = rng.gamma(shape, 1.0 / rate, size=m)
        sigma2 = 1.0 / precision
        if self.q:
            noise = rng.standard_normal((self.q, m))
            scaled = sla.solve_triangular(self.chol_a.T, noise, lower=False,
                                          check_finite=False)
            gamma = self.gamma_hat[:, None] + np.sqrt(sigma2)[None, :] * scaled
            gamma = gamma.T
        else:
            gamma = np.empty((m, 0))
        if size is None:
            return float(sigma2[0]), gamma[0]
        return sigma2, gamma


def marginal_log_likelihood(y, Z, K, gamma, sigma2, lam_inv) -> float:
    """Log density of y under the mixed-model marginal with explicit
    covariate effects and noise variance."""
    cache = MarginalCache(y, Z, K, lam_inv)
    return cache.marginal_log_likelihood(gamma, sigma2)


def integrated_log_posterior(y, Z, K, lam_inv, hyper: Hyperparameters) -> float:
    """Log posterior density of the kernel state with (gamma, sigma2)
    integrated out analytically."""
    cache = MarginalCache(y, Z, K, lam_inv)
    return cache.integrated_log_posterior(hyper)


def draw_sigma_gamma(y, Z, K, lam_inv, hyper: Hyperparameters,
                     rng: np.random.Generator, size: int | None = None):
    """Draw (sigma2, gamma) from their conditional posterior given the state."""
    cache = MarginalCache(y, Z, K, lam_inv)
    return cache.draw_sigma_gamma(hyper, rng, size=size)


__all__ = [
    "Hyperparameters", "MarginalCache", "NumericalError",
    "marginal_log_likelihood", "integrated_log_posterior", "draw_sigma_gamma",
]
