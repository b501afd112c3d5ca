import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from bmim.data import Dataset, IndexSpec  # noqa: E402
from bmim.kernels import KernelConfig, WeightSet  # noqa: E402


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


def toy_dataset(n=40, p=4, q=1, seed=0, signal=None):
    """Small synthetic dataset with an intercept plus q extra covariates."""
    gen = np.random.default_rng(seed)
    X = gen.standard_normal((n, p))
    Z = gen.standard_normal((n, q)) if q else None
    h = signal(X) if signal is not None else np.zeros(n)
    zq = (Z @ np.linspace(0.5, -0.5, q)) if q else 0.0
    y = h + zq + 0.3 * gen.standard_normal(n)
    return Dataset.from_arrays(y, X, Z)


def random_weights(index_spec: IndexSpec, gen: np.random.Generator) -> WeightSet:
    return WeightSet(vectors=tuple(gen.standard_normal(size) * 0.7
                                   for size in index_spec.sizes))


GAUSS = KernelConfig()
