"""One wide scout keeps an unexplored mode alive.

The double well log pi(x) = -(2 - x^2)^2 / 0.2 - x^2 / 0.5 has modes near
+-1.34 separated by a deep barrier. Start every member on the right-hand
mode: the all-local ensemble never finds the left one, while handing a
single slot a 10x step length lets it bridge the barrier, after which the
mixture weights pull the ensemble into both wells. Run with

    python demos/bimodal_scout.py      (~15 s)
"""

import numpy as np

from pais.engine import RunConfig, ScoutConfig, pooled_weights, run_pais
from pais.kernels import make_kernel
from pais.targets import make_bimodal_target

target = make_bimodal_target(tau2=0.25, sigma2=0.1, data=2.0)
start = np.full((50, 1), np.sqrt(1.8))

for scouts in (0, 1):
    config = RunConfig(
        target=target,
        kernel=make_kernel("rw_gaussian", 0.058),
        ensemble_size=50,
        iterations=5000,
        scouts=ScoutConfig(count=scouts, multiplier=10.0),
        seed=7003,
        init_states=start,
    )
    samples, weights = pooled_weights(run_pais(config))
    left = float(weights[samples[:, 0] < 0].sum())
    label = "one 10x scout" if scouts else "all local    "
    print(f"{label}: left-mode mass {left:.3f}, right-mode mass {1 - left:.3f}")
