"""Watch the step-size adapter walk beta from 1.0 down to the plateau.

Golden-section probes shrink a log-scale bracket using the mean effective
sample size of each adaptation epoch; epochs space out geometrically so
late probes average over long windows. Run with

    python demos/adaptive_tuning.py    (~10 s)
"""

from pais.engine import AdaptationConfig, RunConfig, run_pais
from pais.kernels import make_kernel
from pais.targets import make_gaussian_target

config = RunConfig(
    target=make_gaussian_target(tau2=0.01, sigma2=0.01, data=4.0),
    kernel=make_kernel("rw_gaussian", 1.0),
    ensemble_size=50,
    iterations=8000,
    adaptation=AdaptationConfig(enabled=True),
    seed=11,
)
output = run_pais(config)
print("epoch  iteration  beta")
for k, (i, beta) in enumerate(output.adaptation_events):
    print(f"{k:5d}  {i:9d}  {beta:.4f}")
print(f"terminal beta {output.beta_trace[-1]:.4f} "
      f"(a fixed sweep puts the optimum near 0.04)")
