"""Index-wise response curves, an overall mixture contrast, and an
interaction grid on a two-index dataset with a known interaction."""

import numpy as np

from bmim import (Hyperparameters, IndexSpec, KernelConfig, SamplerSettings,
                  format_contrast, indexwise_curve, interaction_grid,
                  overall_contrast, run_chains)
from bmim.data import Dataset

rng = np.random.default_rng(3)
n = 220
X = rng.standard_normal((n, 4))
u1 = (X[:, 0] + X[:, 1]) / np.sqrt(2)
u2 = (X[:, 2] + X[:, 3]) / np.sqrt(2)
h = np.tanh(u1) + 0.5 * u2 + 0.4 * np.tanh(u1) * u2
y = h + 0.4 * rng.standard_normal(n)
data = Dataset.from_arrays(y, X)

index_spec = IndexSpec(groups=((0, 1), (2, 3)))
settings = SamplerSettings(iterations=3000, burnin=1000, thin=2, chains=1, seed=5)
chain = run_chains(data, index_spec, KernelConfig(), Hyperparameters(), settings)

for m in range(2):
    curve = indexwise_curve(chain, data, index_spec, KernelConfig(), m, n_grid=9)
    print(f"index {m + 1} curve (others at their median):")
    print(curve.frame().round(3).to_string(index=False))
    print()

estimate, interval = overall_contrast(chain, data, index_spec, KernelConfig(),
                                      q_hi=0.6, q_lo=0.5)
print("all exposures at their 60th vs 50th percentile:",
      format_contrast(estimate, interval))
print()

curves = interaction_grid(chain, data, index_spec, KernelConfig(), 0, 1,
                          n_grid=7)
print("index-1 curve with index 2 pinned at each percentile")
print("(non-parallel lines indicate interaction):")
for pct, est in curves.items():
    print(f"  index2 @ {pct:.1f}:", np.round(est.mean, 3))
