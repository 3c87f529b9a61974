"""Build the packaged reference statistics for the chemical posterior.

The two 1-D benchmark targets get their references from quadrature at
construction time; the 2-D chemical posterior is too expensive for that,
so this script precomputes the same quantities once and freezes them into
src/pais/data/chemical_reference_v1.npz.

Method: midpoint quadrature of the unnormalized posterior on the default
diagnostic grid (0, 400)^2, with enough midpoints per grid cell to resolve
the likelihood ridge.  A shorter independent MH run with mean-centered
gamma proposals cross-checks the first moments and the binned masses
before anything is written; the script aborts if the two disagree.

Run from the repository root:

    python3 tools/make_chemical_reference.py
"""

import pathlib
import sys
import time

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from pais.engine import RunConfig, run_mh
from pais.kernels import make_kernel
from pais.targets import CHEMICAL_GRID, default_chemical_model, make_chemical_target

OUT = pathlib.Path(__file__).resolve().parents[1] / "src" / "pais" / "data"

# Midpoints per grid cell per dimension; 100 cells x 20 points = 2000^2 total.
SUBDIV = 20
CHECK_SEED = 61409
CHECK_MEMBERS = 2000
CHECK_WARMUP = 1500
CHECK_ITERS = 4000
CHECK_BETA = 2.7


def quadrature_reference(target):
    (lo0, hi0, bins0), (lo1, hi1, bins1) = CHEMICAL_GRID
    n0, n1 = bins0 * SUBDIV, bins1 * SUBDIV
    d0, d1 = (hi0 - lo0) / n0, (hi1 - lo1) / n1
    x0 = lo0 + (np.arange(n0) + 0.5) * d0
    x1 = lo1 + (np.arange(n1) + 0.5) * d1

    # Row-chunked evaluation keeps the (points, n_obs) trajectory arrays small.
    dens = np.empty((n0, n1))
    chunk = 100
    for start in range(0, n0, chunk):
        rows = x0[start : start + chunk]
        pts = np.stack(
            [np.repeat(rows, n1), np.tile(x1, rows.size)], axis=1
        )
        dens[start : start + chunk] = target.log_density(pts).reshape(rows.size, n1)
    dens = np.exp(dens - dens.max())

    z = dens.sum()
    moments = np.empty((2, 3))
    for m in (1, 2, 3):
        moments[0, m - 1] = (dens.sum(axis=1) @ x0**m) / z
        moments[1, m - 1] = (dens.sum(axis=0) @ x1**m) / z
    masses = dens.reshape(bins0, SUBDIV, bins1, SUBDIV).sum(axis=(1, 3)) / z
    return moments, masses


def mh_check_run(target):
    config = RunConfig(
        target=target,
        kernel=make_kernel("gamma_mean_centered", CHECK_BETA),
        ensemble_size=CHECK_MEMBERS,
        iterations=CHECK_WARMUP,
        seed=CHECK_SEED,
    )
    warm = run_mh(config, keep_stream=False)

    (lo0, hi0, bins0), (lo1, hi1, bins1) = CHEMICAL_GRID
    edges0 = np.linspace(lo0, hi0, bins0 + 1)
    edges1 = np.linspace(lo1, hi1, bins1 + 1)
    counts = np.zeros((bins0, bins1))
    sums = np.zeros((2, 3))

    def accumulate(_, states):
        counts.__iadd__(
            np.histogram2d(states[:, 0], states[:, 1], bins=(edges0, edges1))[0]
        )
        for m in (1, 2, 3):
            sums[:, m - 1] += (states**m).sum(axis=0)

    config = RunConfig(
        target=target,
        kernel=make_kernel("gamma_mean_centered", CHECK_BETA),
        ensemble_size=CHECK_MEMBERS,
        iterations=CHECK_ITERS,
        seed=CHECK_SEED + 1,
        init_states=warm.final_states,
    )
    run_mh(config, keep_stream=False, state_callback=accumulate)
    total = CHECK_MEMBERS * CHECK_ITERS
    return sums / total, counts / total


def main():
    target = make_chemical_target(default_chemical_model(), reference=None)

    t0 = time.time()
    moments, masses = quadrature_reference(target)
    print(f"quadrature: {time.time() - t0:.1f}s  mass on grid = {masses.sum():.6f}")
    print(f"  m1 = {moments[:, 0]}")

    t0 = time.time()
    mc_moments, mc_masses = mh_check_run(target)
    print(f"mh check:   {time.time() - t0:.1f}s")
    print(f"  m1 = {mc_moments[:, 0]}")

    m1_gap = np.abs(mc_moments[:, 0] / moments[:, 0] - 1.0)
    l2_gap = np.linalg.norm(mc_masses - masses) / np.linalg.norm(masses)
    print(f"  relative m1 gap = {m1_gap}, bin-mass l2 gap = {l2_gap:.4f}")
    if m1_gap.max() > 0.02 or l2_gap > 0.10:
        raise SystemExit("cross-check failed; reference not written")

    (lo0, hi0, bins0), (lo1, hi1, bins1) = CHEMICAL_GRID
    OUT.mkdir(parents=True, exist_ok=True)
    np.savez_compressed(
        OUT / "chemical_reference_v1.npz",
        edges0=np.linspace(lo0, hi0, bins0 + 1),
        edges1=np.linspace(lo1, hi1, bins1 + 1),
        moments=moments,
        bin_masses=masses,
    )
    print(f"wrote {OUT / 'chemical_reference_v1.npz'}")


if __name__ == "__main__":
    main()
