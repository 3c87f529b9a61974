"""Smallest end-to-end run: the conjugate 1-D problem.

The prior N(0, 0.01) and likelihood N(x, 0.01) with observation 4.0 give
the posterior N(2.0, 0.005) in closed form, so the pooled estimate can be
checked by eye. Run with

    python demos/gaussian_basics.py
"""

import numpy as np

from pais.engine import RunConfig, pooled_weights, run_pais
from pais.kernels import make_kernel
from pais.targets import make_gaussian_target

target = make_gaussian_target(tau2=0.01, sigma2=0.01, data=4.0)
config = RunConfig(
    target=target,
    kernel=make_kernel("rw_gaussian", 0.047),
    ensemble_size=50,
    iterations=4000,
    seed=7,
)
output = run_pais(config)
samples, weights = pooled_weights(output)
mean = float(weights @ samples[:, 0])
var = float(weights @ samples[:, 0] ** 2) - mean**2

burn = output.burn_in or 0
print(f"burn-in detected at iteration {output.burn_in}")
print(f"mean post-burn ESS {np.mean(output.ess[burn:]):.1f} of 50")
print(f"posterior mean {mean:.5f} (exact 2.0)")
print(f"posterior variance {var:.6f} (exact 0.005)")
