"""Small-scale method comparison on the synthetic scenarios.

Uses the 9-exposure mini layout and short chains so it finishes in a couple
of minutes; the full-scale study lives behind `bmim simulate` and the
acceptance suite.
"""

from bmim import Hyperparameters, SamplerSettings
from bmim.simulation import (KernelMethod, QgcMethod, run_simulation_study,
                             summarize_study)

settings = SamplerSettings(iterations=1200, burnin=400, thin=2, chains=1, seed=0)
methods = {
    "qgc": QgcMethod(q=4),
    "bsim": KernelMethod(kind="bsim", settings=settings,
                         hyper=Hyperparameters()),
    "bmim": KernelMethod(kind="bmim", groups="1-4;5;6-9", settings=settings,
                         hyper=Hyperparameters()),
}
per_replicate = run_simulation_study(["A", "B"], methods, n_replicates=3,
                                     sigma=0.5, seed=42, n_train=120,
                                     n_test=80, p=9, n_jobs=2)
print(summarize_study(per_replicate).round(4).to_string(index=False))
print()
print("expected pattern: bsim leads scenario A, bmim leads scenario B, and")
print("the linear quantile comparator trails in both.")
