"""Metropolis-within-Gibbs sampler over kernel weights, inclusion
indicators, and the kernel scale, with post-hoc noise/covariate draws."""

from __future__ import annotations

import json
import os
from dataclasses import asdict, dataclass, field
from math import log, pi, sqrt

import numpy as np

from .data import DataError, Dataset, IndexSpec, validate_index_spec
from .kernels import KernelConfig, NumericalError, WeightSet
from .likelihood import Hyperparameters, LikelihoodWorkspace, MarginalCache

try:
    from threadpoolctl import threadpool_limits
except ImportError:  # pragma: no cover
    from contextlib import nullcontext

    def threadpool_limits(limits=None):
        return nullcontext()

_CHAIN_FORMAT_VERSION = 1
_P_WITHIN = 0.5  # probability of a random-walk move (vs death) for an included component
_ADAPT_TARGET = 0.40


@dataclass
class SamplerSettings:
    """Run-length, proposal, and adaptation knobs for one sampler run.

    likelihood_tempering scales the data term in every acceptance ratio;
    0 turns the sampler into a prior sampler (used by correctness checks).
    """

    iterations: int = 24000
    burnin: int = 4000
    thin: int = 10
    chains: int = 2
    seed: int = 0
    prop_sd_theta: float = 0.3
    prop_sd_loglambda: float = 0.5
    adapt_window: int = 50
    likelihood_tempering: float = 1.0

    def __post_init__(self):
        if self.iterations < 1:
            raise DataError("need at least one iteration")
        if not 0 <= self.burnin < self.iterations:
            raise DataError("burn-in must be shorter than the run")
        if self.thin < 1:
            raise DataError("thinning must be >= 1")
        if self.chains < 1:
            raise DataError("need at least one chain")
        if self.prop_sd_theta <= 0 or self.prop_sd_loglambda <= 0:
            raise DataError("proposal sds must be positive")
        if self.adapt_window < 1:
            raise DataError("adaptation window must be >= 1")
        if not 0.0 <= self.likelihood_tempering <= 1.0:
            raise DataError("likelihood_tempering must lie in [0, 1]")


@dataclass
class ParamState:
    """One sampler state: flat kernel-scale weights, inclusion flags, and
    the kernel scale. Excluded components carry an exact zero weight."""

    theta_star: np.ndarray
    delta: np.ndarray
    lam_inv: float

    def __post_init__(self):
        theta = np.asarray(self.theta_star, dtype=float).reshape(-1).copy()
        delta = np.asarray(self.delta, dtype=bool).reshape(-1).copy()
        if theta.shape != delta.shape:
            raise DataError("theta_star and delta must align")
        if np.any(theta[~delta] != 0.0):
            raise DataError("excluded components must have weight exactly zero")
        if not np.isfinite(theta).all():
            raise DataError("weights must be finite")
        if not self.lam_inv > 0:
            raise DataError("lam_inv must be strictly positive")
        object.__setattr__(self, "theta_star", theta)
        object.__setattr__(self, "delta", delta)

    def copy(self) -> "ParamState":
        return ParamState(self.theta_star.copy(), self.delta.copy(), float(self.lam_inv))

    def weights(self, index_spec: IndexSpec) -> WeightSet:
        return WeightSet.from_flat(self.theta_star, index_spec)


def canonicalize_sign(theta_star_m: np.ndarray) -> np.ndarray:
    """Flip the sign of one index's weight vector when its component sum is
    negative; exact kernel sign-invariance leaves the posterior untouched.
    A zero sum keeps the input unchanged."""
    v = np.asarray(theta_star_m, dtype=float)
    return -v if v.sum() < 0 else v.copy()


def _log_slab(x: float, variance: float) -> float:
    return -0.5 * (log(2.0 * pi * variance) + x * x / variance)


class _Engine:
    """Per-chain mutable workspace with incremental kernel updates.

    For the Gaussian kernel it caches per-index squared-difference matrices
    and their sum; for the polynomial kernel, the projection Gram matrix.
    Proposals touch one index column at a time, so a component update costs
    one rank-style O(N^2) refresh plus the dense factorization.
    """

    def __init__(self, data: Dataset, index_spec: IndexSpec, config: KernelConfig,
                 hyper: Hyperparameters, settings: SamplerSettings):
        validate_index_spec(index_spec, data.n_exposures)
        self.data = data
        self.index_spec = index_spec
        self.config = config
        self.hyper = hyper
        self.settings = settings
        self.n = data.n_obs
        self.p = index_spec.n_components
        self.m = index_spec.n_indices
        self.comp_col = index_spec.flat_columns()
        self.comp_index = index_spec.flat_index_of_component()
        self.group_slices = []
        k = 0
        for size in index_spec.sizes:
            self.group_slices.append(slice(k, k + size))
            k += size
        self.tempering = settings.likelihood_tempering
        # Per-component proposal sds and adaptation bookkeeping.
        self.sd_theta = np.full(self.p, settings.prop_sd_theta)
        self.sd_loglam = settings.prop_sd_loglambda
        self._win_prop = np.zeros(self.p, dtype=int)
        self._win_acc = np.zeros(self.p, dtype=int)
        self._win_count = np.zeros(self.p, dtype=int)
        self._lam_win = [0, 0, 0]
        self.lambda_window_rates: list[float] = []
        self.counts = {kind: [0, 0] for kind in ("within", "birth", "death", "lambda")}
        self.failures = 0
        self.state: ParamState | None = None
        self._u: np.ndarray | None = None
        self._dm: list[np.ndarray] | None = None
        self._dsum: np.ndarray | None = None
        self._gram: np.ndarray | None = None
        self.current_ilp = 0.0
        # Reused dense buffers: fresh page-backed allocations dominate the
        # per-proposal cost otherwise.
        self._lw = LikelihoodWorkspace(data.y, data.Z)
        self._b_d = np.empty((self.n, self.n))
        self._b_agg = np.empty((self.n, self.n))
        self._b_k = np.empty((self.n, self.n))

    # -- kernel caches --------------------------------------------------

    def attach(self, state: ParamState) -> None:
        if state.theta_star.shape[0] != self.p:
            raise DataError("state size does not match the index groups")
        self.state = state
        X = self.data.X
        U = np.empty((self.n, self.m))
        for m, (sl, g) in enumerate(zip(self.group_slices, self.index_spec.groups)):
            U[:, m] = X[:, list(g)] @ state.theta_star[sl]
        self._u = U
        if self.config.kind == "gaussian":
            self._dm = []
            dsum = np.zeros((self.n, self.n))
            for m in range(self.m):
                d = U[:, m][:, None] - U[:, m][None, :]
                np.square(d, out=d)
                self._dm.append(d)
                dsum += d
            self._dsum = dsum
        else:
            self._gram = U @ U.T
        self.current_ilp = self._ilp_current(state.lam_inv)

    def _kernel_into_buffer(self, source: np.ndarray) -> np.ndarray:
        """Kernel values from a distance-sum (Gaussian) or projection Gram
        (polynomial) matrix, written into the shared kernel buffer."""
        K = self._b_k
        if self.config.kind == "gaussian":
            np.negative(source, out=K)
            return np.exp(K, out=K)
        np.add(source, 1.0, out=K)
        if self.config.degree > 1:
            np.power(K, self.config.degree, out=K)
        return K

    def _ilp_of_kernel(self, K: np.ndarray, lam_inv: float) -> float:
        cache = MarginalCache(self.data.y, self.data.Z, K, lam_inv,
                              workspace=self._lw)
        return cache.integrated_log_posterior(self.hyper)

    def _ilp_current(self, lam_inv: float) -> float:
        if self.tempering == 0.0:
            return 0.0
        source = self._dsum if self.config.kind == "gaussian" else self._gram
        return self._ilp_of_kernel(self._kernel_into_buffer(source), lam_inv)

    def _candidate_column(self, j: int, new_value: float):
        """Stage the index-column caches for setting component j; the
        candidate aggregate lands in the shared buffers."""
        m = self.comp_index[j]
        state = self.state
        delta_val = new_value - state.theta_star[j]
        u_new = self._u[:, m] + delta_val * self.data.X[:, self.comp_col[j]]
        if self.config.kind == "gaussian":
            np.subtract(u_new[:, None], u_new[None, :], out=self._b_d)
            np.square(self._b_d, out=self._b_d)
            np.subtract(self._dsum, self._dm[m], out=self._b_agg)
            self._b_agg += self._b_d
        else:
            u_old = self._u[:, m]
            np.multiply(u_old[:, None], u_old[None, :], out=self._b_d)
            np.subtract(self._gram, self._b_d, out=self._b_agg)
            np.multiply(u_new[:, None], u_new[None, :], out=self._b_d)
            self._b_agg += self._b_d
        return m, u_new

    def _ilp_candidate(self) -> float:
        if self.tempering == 0.0:
            return 0.0
        return self._ilp_of_kernel(self._kernel_into_buffer(self._b_agg),
                                   self.state.lam_inv)

    def _commit(self, j: int, new_value: float, cand, new_ilp: float) -> None:
        m, u_new = cand
        self._u[:, m] = u_new
        if self.config.kind == "gaussian":
            self._dm[m], self._b_d = self._b_d, self._dm[m]
            self._dsum, self._b_agg = self._b_agg, self._dsum
        else:
            self._gram, self._b_agg = self._b_agg, self._gram
        self.state.theta_star[j] = new_value
        self.current_ilp = new_ilp

    # -- inclusion prior -------------------------------------------------

    def _log_inclusion_odds(self, included_among_others: int) -> float:
        """Log odds of including one more component under the marginalized
        Beta(a_0, b_0)-Bernoulli inclusion prior."""
        h = self.hyper
        return log(h.a_0 + included_among_others) - log(
            h.b_0 + self.p - 1 - included_among_others)

    # -- moves ------------------------------------------------------------

    def component_move(self, j: int, rng: np.random.Generator, adapt: bool) -> None:
        state = self.state
        h = self.hyper
        if not state.delta[j]:
            # Birth: propose from the slab so the proposal density cancels
            # the slab prior in the ratio.
            proposal = rng.normal(0.0, sqrt(h.slab_variance))
            try:
                cand = self._candidate_column(j, proposal)
                new_ilp = self._ilp_candidate()
            except NumericalError:
                self.failures += 1
                return
            k_others = int(state.delta.sum())
            log_alpha = (self.tempering * (new_ilp - self.current_ilp)
                         + self._log_inclusion_odds(k_others) + log(1.0 - _P_WITHIN))
            self.counts["birth"][0] += 1
            if log(1.0 - rng.random()) < log_alpha:
                self.counts["birth"][1] += 1
                self._commit(j, proposal, cand, new_ilp)
                state.delta[j] = True
            return
        if rng.random() < _P_WITHIN:
            # Random-walk move inside the slab.
            old = state.theta_star[j]
            proposal = old + self.sd_theta[j] * rng.standard_normal()
            try:
                cand = self._candidate_column(j, proposal)
                new_ilp = self._ilp_candidate()
            except NumericalError:
                self.failures += 1
                return
            log_alpha = (self.tempering * (new_ilp - self.current_ilp)
                         + _log_slab(proposal, h.slab_variance)
                         - _log_slab(old, h.slab_variance))
            self.counts["within"][0] += 1
            accepted = log(1.0 - rng.random()) < log_alpha
            if accepted:
                self.counts["within"][1] += 1
                self._commit(j, proposal, cand, new_ilp)
            if adapt:
                self._adapt_component(j, accepted)
            return
        # Death: drop the component to an exact zero.
        old = state.theta_star[j]
        try:
            cand = self._candidate_column(j, 0.0)
            new_ilp = self._ilp_candidate()
        except NumericalError:
            self.failures += 1
            return
        k_others = int(state.delta.sum()) - 1
        log_alpha = (self.tempering * (new_ilp - self.current_ilp)
                     - self._log_inclusion_odds(k_others) - log(1.0 - _P_WITHIN))
        self.counts["death"][0] += 1
        if log(1.0 - rng.random()) < log_alpha:
            self.counts["death"][1] += 1
            self._commit(j, 0.0, cand, new_ilp)
            state.delta[j] = False

    def lambda_move(self, rng: np.random.Generator, adapt: bool) -> None:
        state = self.state
        h = self.hyper
        old = state.lam_inv
        proposal = old * np.exp(self.sd_loglam * rng.standard_normal())
        try:
            new_ilp = self._ilp_current(proposal)
        except NumericalError:
            self.failures += 1
            return
        # Gamma prior plus the log-scale proposal Jacobian.
        log_alpha = (self.tempering * (new_ilp - self.current_ilp)
                     + h.a_lambda * (log(proposal) - log(old))
                     - h.b_lambda * (proposal - old))
        self.counts["lambda"][0] += 1
        accepted = log(1.0 - rng.random()) < log_alpha
        if accepted:
            self.counts["lambda"][1] += 1
            state.lam_inv = float(proposal)
            self.current_ilp = new_ilp
        if adapt:
            self._lam_win[0] += 1
            self._lam_win[1] += int(accepted)
            if self._lam_win[0] >= self.settings.adapt_window:
                rate = self._lam_win[1] / self._lam_win[0]
                self._lam_win[2] += 1
                self.sd_loglam *= np.exp((rate - _ADAPT_TARGET) / sqrt(self._lam_win[2]))
                self.sd_loglam = float(np.clip(self.sd_loglam, 1e-3, 10.0))
                self.lambda_window_rates.append(rate)
                self._lam_win[0] = self._lam_win[1] = 0

    def _adapt_component(self, j: int, accepted: bool) -> None:
        self._win_prop[j] += 1
        self._win_acc[j] += int(accepted)
        if self._win_prop[j] >= self.settings.adapt_window:
            rate = self._win_acc[j] / self._win_prop[j]
            self._win_count[j] += 1
            self.sd_theta[j] *= np.exp((rate - _ADAPT_TARGET) / sqrt(self._win_count[j]))
            self.sd_theta[j] = float(np.clip(self.sd_theta[j], 1e-3, 10.0))
            self._win_prop[j] = self._win_acc[j] = 0

    def sweep(self, rng: np.random.Generator, adapt: bool) -> None:
        for j in rng.permutation(self.p):
            self.component_move(int(j), rng, adapt)

    def refresh(self) -> None:
        """Rebuild projection/distance caches exactly from the current state."""
        self.attach(self.state)

    def canonicalize_state(self) -> None:
        """Apply the sign constraint per index; kernel caches stay valid
        because every cached quantity is invariant under the flip."""
        state = self.state
        for m, sl in enumerate(self.group_slices):
            if state.theta_star[sl].sum() < 0:
                state.theta_star[sl] = -state.theta_star[sl]
                self._u[:, m] = -self._u[:, m]

    def acceptance_summary(self) -> dict:
        out = {}
        for kind, (prop, acc) in self.counts.items():
            out[kind] = {"proposed": int(prop), "accepted": int(acc),
                         "rate": (acc / prop) if prop else float("nan")}
        out["lambda_window_rates"] = [float(r) for r in self.lambda_window_rates]
        out["final_sd_theta"] = [float(s) for s in self.sd_theta]
        out["final_sd_loglambda"] = float(self.sd_loglam)
        out["likelihood_failures"] = int(self.failures)
        return out


@dataclass
class PosteriorChain:
    """Stored post-burn-in, thinned draws with paired noise/covariate draws.

    Arrays are row-aligned: draw t has weights theta_star[t], inclusion
    delta[t], kernel scale lam_inv[t], noise variance sigma2[t], covariate
    effects gamma[t], plus the originating iteration and chain id.
    """

    theta_star: np.ndarray
    delta: np.ndarray
    lam_inv: np.ndarray
    sigma2: np.ndarray
    gamma: np.ndarray
    iteration: np.ndarray
    chain_id: np.ndarray
    index_spec: IndexSpec
    kernel_config: KernelConfig
    hyper: Hyperparameters
    settings: SamplerSettings
    acceptance: dict = field(default_factory=dict)

    @property
    def n_draws(self) -> int:
        return self.theta_star.shape[0]

    def weights_at(self, t: int) -> WeightSet:
        return WeightSet.from_flat(self.theta_star[t], self.index_spec)

    def column_names(self, exposure_names=None) -> list[str]:
        p = self.theta_star.shape[1]
        q = self.gamma.shape[1]
        cols = self.index_spec.flat_columns()
        if exposure_names is None:
            comp = [f"c{cols[j] + 1}" for j in range(p)]
        else:
            comp = [exposure_names[cols[j]] for j in range(p)]
        return ([f"theta_star_{c}" for c in comp]
                + [f"delta_{c}" for c in comp]
                + ["lambda_inv", "sigma2"]
                + [f"gamma_{k + 1}" for k in range(q)]
                + ["iteration", "chain"])

    def to_matrix(self) -> np.ndarray:
        return np.column_stack([
            self.theta_star, self.delta.astype(float), self.lam_inv, self.sigma2,
            self.gamma, self.iteration.astype(float), self.chain_id.astype(float)])


def merge_chains(chains: list[PosteriorChain]) -> PosteriorChain:
    """Concatenate same-model chains, preserving chain ids."""
    first = chains[0]
    return PosteriorChain(
        theta_star=np.concatenate([c.theta_star for c in chains]),
        delta=np.concatenate([c.delta for c in chains]),
        lam_inv=np.concatenate([c.lam_inv for c in chains]),
        sigma2=np.concatenate([c.sigma2 for c in chains]),
        gamma=np.concatenate([c.gamma for c in chains]),
        iteration=np.concatenate([c.iteration for c in chains]),
        chain_id=np.concatenate([c.chain_id for c in chains]),
        index_spec=first.index_spec, kernel_config=first.kernel_config,
        hyper=first.hyper, settings=first.settings,
        acceptance={"chains": [c.acceptance for c in chains]})


def initial_state(index_spec: IndexSpec, hyper: Hyperparameters,
                  rng: np.random.Generator) -> ParamState:
    """All components included, weights drawn at half slab scale, kernel
    scale at its prior mean."""
    p = index_spec.n_components
    theta = rng.normal(0.0, 0.5 * sqrt(hyper.slab_variance), size=p)
    k = 0
    for size in index_spec.sizes:
        theta[k:k + size] = canonicalize_sign(theta[k:k + size])
        k += size
    return ParamState(theta_star=theta, delta=np.ones(p, dtype=bool),
                      lam_inv=hyper.a_lambda / hyper.b_lambda)


def update_theta_delta(state: ParamState, data: Dataset, index_spec: IndexSpec,
                       config: KernelConfig, hyper: Hyperparameters,
                       rng: np.random.Generator,
                       settings: SamplerSettings | None = None) -> ParamState:
    """One sweep of per-component birth/death/random-walk moves."""
    settings = settings or SamplerSettings()
    engine = _Engine(data, index_spec, config, hyper, settings)
    engine.attach(state.copy())
    engine.sweep(rng, adapt=False)
    return engine.state


def update_lambda(state: ParamState, data: Dataset, index_spec: IndexSpec,
                  config: KernelConfig, hyper: Hyperparameters,
                  rng: np.random.Generator,
                  settings: SamplerSettings | None = None) -> ParamState:
    """One log-scale random-walk step on the kernel scale."""
    settings = settings or SamplerSettings()
    engine = _Engine(data, index_spec, config, hyper, settings)
    engine.attach(state.copy())
    engine.lambda_move(rng, adapt=False)
    return engine.state


def run_chain(data: Dataset, index_spec: IndexSpec, config: KernelConfig,
              hyper: Hyperparameters, settings: SamplerSettings,
              chain_id: int = 0) -> PosteriorChain:
    """Run one chain: per iteration a randomized component sweep followed by
    a kernel-scale step; thinned post-burn-in states are sign-canonicalized
    at storage and later paired with conditional (sigma2, gamma) draws."""
    child = np.random.SeedSequence(entropy=settings.seed, spawn_key=(chain_id,))
    ss_moves, ss_post = child.spawn(2)
    rng = np.random.Generator(np.random.PCG64(ss_moves))
    rng_post = np.random.Generator(np.random.PCG64(ss_post))

    engine = _Engine(data, index_spec, config, hyper, settings)
    engine.attach(initial_state(index_spec, hyper, rng))

    n_keep = (settings.iterations - settings.burnin) // settings.thin
    p = index_spec.n_components
    kept_theta = np.empty((n_keep, p))
    kept_delta = np.empty((n_keep, p), dtype=bool)
    kept_lam = np.empty(n_keep)
    kept_iter = np.empty(n_keep, dtype=int)
    k = 0
    with threadpool_limits(limits=1):
        for it in range(1, settings.iterations + 1):
            adapt = it <= settings.burnin
            engine.sweep(rng, adapt)
            engine.lambda_move(rng, adapt)
            if it % 1000 == 0:
                engine.refresh()  # cap incremental floating-point drift
            if it > settings.burnin and (it - settings.burnin) % settings.thin == 0:
                engine.canonicalize_state()
                kept_theta[k] = engine.state.theta_star
                kept_delta[k] = engine.state.delta
                kept_lam[k] = engine.state.lam_inv
                kept_iter[k] = it
                k += 1
    if engine.failures > 0.01 * settings.iterations * (p + 1):
        raise NumericalError(
            f"{engine.failures} likelihood evaluations failed "
            f"across {settings.iterations} iterations; aborting")

    q = data.n_covariates
    sigma2 = np.empty(n_keep)
    gamma = np.empty((n_keep, q))
    if settings.likelihood_tempering == 0.0:
        with np.errstate(divide="ignore", over="ignore"):
            sigma2[:] = 1.0 / rng_post.gamma(hyper.a_sigma, 1.0 / hyper.b_sigma,
                                             size=n_keep)
        gamma[:] = np.nan  # flat prior: no proper draw exists without data
    else:
        from .kernels import gram_matrix

        for t in range(n_keep):
            w = WeightSet.from_flat(kept_theta[t], index_spec)
            K = gram_matrix(data.X, index_spec, w, config)
            cache = MarginalCache(data.y, data.Z, K, kept_lam[t])
            s2, g = cache.draw_sigma_gamma(hyper, rng_post)
            sigma2[t] = s2
            gamma[t] = g

    return PosteriorChain(
        theta_star=kept_theta, delta=kept_delta, lam_inv=kept_lam,
        sigma2=sigma2, gamma=gamma, iteration=kept_iter,
        chain_id=np.full(n_keep, chain_id, dtype=int),
        index_spec=index_spec, kernel_config=config, hyper=hyper,
        settings=settings, acceptance=engine.acceptance_summary())


def run_chains(data: Dataset, index_spec: IndexSpec, config: KernelConfig,
               hyper: Hyperparameters, settings: SamplerSettings) -> PosteriorChain:
    """Run the configured number of chains sequentially and merge them.
    Chains draw from private streams spawned off the master seed, so the
    result is bit-reproducible for a given settings object."""
    chains = [run_chain(data, index_spec, config, hyper, settings, chain_id=c)
              for c in range(settings.chains)]
    return merge_chains(chains) if len(chains) > 1 else chains[0]


# -- persistence ----------------------------------------------------------


def save_chain(chain: PosteriorChain, directory: str,
               exposure_names=None, extra_meta: dict | None = None) -> tuple[str, str]:
    """Write the draw matrix as .npy plus a JSON metadata sidecar.

    The matrix holds one row per stored draw; the sidecar pins the column
    order, model structure, settings, and acceptance log. Both files are
    byte-stable for identical inputs, and values round-trip exactly.
    """
    os.makedirs(directory, exist_ok=True)
    matrix = chain.to_matrix()
    meta = {
        "format_version": _CHAIN_FORMAT_VERSION,
        "columns": chain.column_names(exposure_names),
        "groups": [list(g) for g in chain.index_spec.groups],
        "kernel": {"kind": chain.kernel_config.kind,
                   "degree": chain.kernel_config.degree},
        "hyper": asdict(chain.hyper),
        "settings": asdict(chain.settings),
        "acceptance": chain.acceptance,
        "n_components": int(chain.theta_star.shape[1]),
        "n_covariates": int(chain.gamma.shape[1]),
    }
    if extra_meta:
        meta.update(extra_meta)
    npy_path = os.path.join(directory, "chain.npy")
    meta_path = os.path.join(directory, "chain_meta.json")
    _atomic_save_npy(npy_path, matrix)
    _atomic_write_text(meta_path, json.dumps(meta, indent=1, sort_keys=True))
    return npy_path, meta_path


def load_chain(directory: str) -> PosteriorChain:
    matrix = np.load(os.path.join(directory, "chain.npy"))
    with open(os.path.join(directory, "chain_meta.json")) as fh:
        meta = json.load(fh)
    if meta.get("format_version") != _CHAIN_FORMAT_VERSION:
        raise DataError(f"unsupported chain format {meta.get('format_version')}")
    p = meta["n_components"]
    q = meta["n_covariates"]
    theta = matrix[:, :p]
    delta = matrix[:, p:2 * p] != 0.0
    lam = matrix[:, 2 * p]
    sigma2 = matrix[:, 2 * p + 1]
    gamma = matrix[:, 2 * p + 2:2 * p + 2 + q]
    iteration = matrix[:, 2 * p + 2 + q].astype(int)
    chain_col = matrix[:, 2 * p + 3 + q].astype(int)
    kernel = KernelConfig(kind=meta["kernel"]["kind"], degree=meta["kernel"]["degree"])
    return PosteriorChain(
        theta_star=theta, delta=delta, lam_inv=lam, sigma2=sigma2, gamma=gamma,
        iteration=iteration, chain_id=chain_col,
        index_spec=IndexSpec(groups=tuple(tuple(g) for g in meta["groups"])),
        kernel_config=kernel, hyper=Hyperparameters(**meta["hyper"]),
        settings=SamplerSettings(**meta["settings"]),
        acceptance=meta.get("acceptance", {}))


def export_chain_csv(chain: PosteriorChain, path: str, exposure_names=None) -> None:
    """Optional flat CSV export of the draw matrix for external checks."""
    import pandas as pd

    frame = pd.DataFrame(chain.to_matrix(), columns=chain.column_names(exposure_names))
    _atomic_write_text(path, frame.to_csv(index=False))


def _atomic_save_npy(path: str, arr: np.ndarray) -> None:
    tmp = path + ".tmp"
    with open(tmp, "wb") as fh:
        np.save(fh, arr)
    os.replace(tmp, path)


def _atomic_write_text(path: str, text: str) -> None:
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)
