"""Experiment runner.

    pais <run|tune|bench-resamplers|generate-data> --config cfg.json
         [--seed N] [--out DIR] [--threads N]

Seed precedence: a seed in the config always wins, then --seed, then the
PAIS_SEED environment variable, then 1. --out overrides the config's output
directory (a location, not part of the experiment identity). Every CSV
starts with a comment line carrying the config hash and seed; rows use
full-precision repr floats, so fixed (config, seed) reproduces artifacts
byte for byte regardless of thread count.
"""

import argparse
import json
import os
import sys
import time
from dataclasses import replace

import numpy as np

from ._streams import INIT_LANE, fresh_stream
from .config import SCHEMA_VERSION, parse_config, serialize_config
from .diagnostics import build_histogram, relative_l2_error
from .engine import pooled_weights, run_mh, run_pais
from .errors import ConfigError, IterationError, PaisError
from .kernels import make_kernel
from .resamplers import amr_resample, bootstrap_resample, etpf_resample

__all__ = [
    "main",
    "cmd_run",
    "cmd_tune",
    "cmd_bench_resamplers",
    "cmd_generate_data",
]


def _fmt(value):
    if value is None:
        return ""
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, str):
        return value
    return repr(float(value))


def _write_csv(path, comment, header, rows):
    lines = [f"# {comment}", ",".join(header)]
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def _write_json(path, payload):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _comment(spec, seed=None):
    return f"config={spec.config_hash} seed={spec.seed if seed is None else seed}"


def _summary_base(spec, command):
    return {
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "name": spec.name,
        "config_hash": spec.config_hash,
        "seed": spec.seed,
    }


def _post_burn_mean(values, burn_in):
    start = burn_in if burn_in is not None else 0
    seg = np.asarray(values, dtype=float)[start:]
    return float(seg.mean()) if seg.size else None


def _run_sampler(spec, run_config):
    if spec.sampler == "pais":
        return run_pais(run_config)
    return run_mh(run_config)


def _reference_errors(target, output):
    """L2 and moment errors of the pooled stream against the analytic
    reference, when the target carries one."""
    ref = target.reference
    if ref is None or output.proposals is None or output.iterations == 0:
        return None
    samples, weights = pooled_weights(output)
    hist = build_histogram(samples, weights=weights, edges=ref.bin_edges)
    result = {
        "l2": relative_l2_error(hist, ref),
        "out_of_range_mass": hist.out_of_range,
    }
    moments = np.asarray(ref.moments, dtype=float)
    errors = []
    kinds = []
    for dim in range(moments.shape[0]):
        dim_err = []
        dim_kind = []
        for order in (1, 2, 3):
            est = float(np.sum(weights * samples[:, dim] ** order))
            expected = float(moments[dim, order - 1])
            if expected == 0.0:
                dim_err.append(abs(est - expected))
                dim_kind.append("absolute")
            else:
                dim_err.append(abs(est - expected) / abs(expected))
                dim_kind.append("relative")
        errors.append(dim_err)
        kinds.append(dim_kind)
    result["moment_errors"] = errors
    result["moment_error_kinds"] = kinds
    return result


def _diagnostics_rows(output):
    burned = output.burned_in_mask()
    m = output.final_states.shape[0]
    for i in range(output.iterations):
        acc = (
            float(output.acceptance_counts[i]) / m
            if output.acceptance_counts is not None
            else None
        )
        yield (
            i,
            float(output.ess[i]),
            float(output.weight_variance[i]),
            float(output.beta_trace[i]),
            acc,
            bool(burned[i]),
        )


def _sample_rows(output):
    if output.proposals is None:
        return
    n, m, d = output.proposals.shape
    for i in range(n):
        block = output.proposals[i]
        logw = (
            output.log_weights[i]
            if output.log_weights is not None
            else np.zeros(m)
        )
        for j in range(m):
            yield (i, j, *block[j], float(logw[j]))


def _write_run_artifacts(spec, out_dir, output, wall_time, failure=None):
    os.makedirs(out_dir, exist_ok=True)
    comment = _comment(spec, output.seed)
    _write_csv(
        os.path.join(out_dir, "diagnostics.csv"),
        comment,
        ("iter", "ess", "var_w", "beta", "acc_rate", "burned_in"),
        _diagnostics_rows(output),
    )
    if spec.write_samples:
        d = output.final_states.shape[1]
        header = ("iter", "member", *[f"x{k}" for k in range(d)], "log_w")
        _write_csv(
            os.path.join(out_dir, "weighted_samples.csv"),
            comment,
            header,
            _sample_rows(output),
        )
    summary = _summary_base(spec, "run")
    summary["seed"] = output.seed
    summary.update(
        {
            "sampler": spec.sampler,
            "ensemble_size": int(output.final_states.shape[0]),
            "iterations": output.iterations,
            "burn_in": output.burn_in,
            "wall_time_s": wall_time,
            "terminal_beta": (
                float(output.beta_trace[-1]) if output.iterations else None
            ),
            "adaptation_events": [
                [int(i), float(b)] for i, b in output.adaptation_events
            ],
            "langevin_fallbacks": output.langevin_fallbacks,
            "mean_post_burn_ess": _post_burn_mean(output.ess, output.burn_in),
        }
    )
    if output.acceptance_counts is not None and output.iterations:
        total = output.acceptance_counts.sum()
        summary["acceptance_rate"] = float(
            total / (output.iterations * output.final_states.shape[0])
        )
    if output.proposals is not None and output.iterations:
        samples, weights = pooled_weights(output)
        mean = samples.T @ weights
        second = (samples**2).T @ weights
        summary["pooled_mean"] = [float(v) for v in mean]
        summary["pooled_variance"] = [float(v) for v in second - mean**2]
    errors = _reference_errors(spec.run_config.target, output)
    if errors is not None:
        summary["reference_errors"] = errors
    if failure is not None:
        summary["failed"] = True
        summary["error"] = failure
    _write_json(os.path.join(out_dir, "summary.json"), summary)


def cmd_run(spec):
    """Execute the configured sampler; repeats > 1 fan out into per-run
    directories with seeds seed + index."""
    if spec.repeats == 1:
        return _run_once(spec, spec.output_dir, spec.run_config)
    status = 0
    runs = []
    for r in range(spec.repeats):
        sub = os.path.join(spec.output_dir, f"run_{r}")
        cfg = replace(spec.run_config, seed=spec.seed + r)
        status = max(status, _run_once(spec, sub, cfg))
        runs.append(f"run_{r}")
    os.makedirs(spec.output_dir, exist_ok=True)
    summary = _summary_base(spec, "run")
    summary.update({"repeats": spec.repeats, "runs": runs, "status": status})
    _write_json(os.path.join(spec.output_dir, "summary.json"), summary)
    return status


def _run_once(spec, out_dir, run_config):
    start = time.perf_counter()
    try:
        output = _run_sampler(spec, run_config)
    except IterationError as exc:
        if exc.partial is None:
            raise
        _write_run_artifacts(
            spec, out_dir, exc.partial, time.perf_counter() - start,
            failure=str(exc),
        )
        print(f"error: {exc}", file=sys.stderr)
        return 1
    _write_run_artifacts(spec, out_dir, output, time.perf_counter() - start)
    return 0


def _geometric_mean(values):
    arr = np.asarray(values, dtype=float)
    if np.any(arr == 0.0):
        return 0.0
    return float(np.exp(np.mean(np.log(arr))))


def _tune_point(spec, beta):
    """Geometric means of the per-repeat run statistics at one grid beta."""
    base = spec.run_config
    kernel = make_kernel(
        base.kernel.kind, float(beta), covariance=base.kernel.covariance
    )
    ess_vals, var_vals, acc_vals, l2_vals = [], [], [], []
    for r in range(spec.sweep.repeats):
        cfg = replace(
            base,
            kernel=kernel,
            iterations=spec.sweep.iterations,
            seed=spec.seed + r,
        )
        output = _run_sampler(spec, cfg)
        ess_vals.append(_post_burn_mean(output.ess, output.burn_in))
        var_vals.append(_post_burn_mean(output.weight_variance, output.burn_in))
        if output.acceptance_counts is not None:
            total = output.acceptance_counts.sum()
            acc_vals.append(
                float(total / (output.iterations * cfg.ensemble_size))
            )
        errors = _reference_errors(cfg.target, output)
        if errors is not None:
            l2_vals.append(errors["l2"])
    return {
        "mean_ess": _geometric_mean(ess_vals),
        "var_w": _geometric_mean(var_vals),
        "acc_rate": _geometric_mean(acc_vals) if acc_vals else None,
        "l2_error": _geometric_mean(l2_vals) if l2_vals else None,
    }


def _plateau_bracket(betas, scores, frac=0.95):
    """Connected beta interval around the winner whose score stays at or
    above frac * peak; edges are interpolated linearly in log beta, so the
    bracket reads the curve between grid points instead of snapping to
    them."""
    b = np.log(np.asarray(betas, dtype=float))
    s = np.asarray(scores, dtype=float)
    k = int(np.argmax(s))
    cut = frac * s[k]
    i = k
    while i > 0 and s[i - 1] >= cut:
        i -= 1
    if i == 0:
        lo = b[0]
    else:
        t = (cut - s[i - 1]) / (s[i] - s[i - 1])
        lo = b[i - 1] + t * (b[i] - b[i - 1])
    j = k
    while j < s.size - 1 and s[j + 1] >= cut:
        j += 1
    if j == s.size - 1:
        hi = b[-1]
    else:
        t = (s[j] - cut) / (s[j] - s[j + 1])
        hi = b[j] + t * (b[j + 1] - b[j])
    return float(np.exp(lo)), float(np.exp(hi))


def cmd_tune(spec):
    """Sweep the beta grid and report the winning beta (max mean ESS for
    the ensemble sampler, closest acceptance to target for MH).

    For the ESS criterion the summary also records bracket_95, the beta
    interval sustaining at least 95% of the peak mean ESS: the efficiency
    plateau within which any choice is near-optimal."""
    if spec.sweep is None:
        raise ConfigError("sweep: section required for the tune subcommand")
    grid = spec.sweep.grid()
    rows = []
    stats = []
    for beta in grid:
        point = _tune_point(spec, float(beta))
        stats.append(point)
        rows.append(
            (
                float(beta),
                point["mean_ess"],
                point["var_w"],
                point["acc_rate"],
                point["l2_error"],
            )
        )
    os.makedirs(spec.output_dir, exist_ok=True)
    _write_csv(
        os.path.join(spec.output_dir, "sweep.csv"),
        _comment(spec),
        ("beta", "mean_ess", "var_w", "acc_rate", "l2_error"),
        rows,
    )
    if spec.sampler == "pais":
        criterion = "max_mean_ess"
        scores = [p["mean_ess"] for p in stats]
        best = int(np.argmax(scores))
        bracket = _plateau_bracket(grid, scores)
    else:
        criterion = "min_acceptance_distance"
        target_acc = spec.run_config.adaptation.target_acceptance
        best = int(
            np.argmin([abs(p["acc_rate"] - target_acc) for p in stats])
        )
        bracket = None
    summary = _summary_base(spec, "tune")
    summary.update(
        {
            "sampler": spec.sampler,
            "criterion": criterion,
            "best_beta": float(grid[best]),
            "best_index": best,
            "bracket_95": list(bracket) if bracket is not None else None,
            "betas": [float(b) for b in grid],
            "repeats": spec.sweep.repeats,
            "iterations": spec.sweep.iterations,
        }
    )
    _write_json(os.path.join(spec.output_dir, "summary.json"), summary)
    print(f"best beta: {float(grid[best])!r} ({criterion})")
    return 0


_BENCH_SCHEMES = ("etpf", "amr", "bootstrap")


def _bench_log_weights(y):
    # proposal N(1, 2) reweighted to target N(2, 3)
    return (
        -0.5 * (y - 2.0) ** 2 / 3.0
        - 0.5 * np.log(3.0)
        + 0.5 * (y - 1.0) ** 2 / 2.0
        + 0.5 * np.log(2.0)
    )


def _bench_resample(scheme, y, log_w, rng):
    if scheme == "etpf":
        return etpf_resample(y, log_w, pricing="dantzig")
    if scheme == "amr":
        return amr_resample(y, log_w)
    return bootstrap_resample(y, log_w, rng)


def cmd_bench_resamplers(spec):
    """Resampler shoot-out on the N(1,2) -> N(2,3) reweighting problem:
    relative errors of moments 1-3 against the weighted-sample moments,
    plus wall time, averaged over repeats."""
    results = []
    for size in spec.bench.sizes:
        errs = {s: np.zeros(3) for s in _BENCH_SCHEMES}
        times = {s: 0.0 for s in _BENCH_SCHEMES}
        for r in range(spec.bench.repeats):
            rng = fresh_stream(spec.seed, INIT_LANE, size, r)
            y = 1.0 + np.sqrt(2.0) * rng.standard_normal(size)
            log_w = _bench_log_weights(y)
            w = np.exp(log_w - log_w.max())
            w /= w.sum()
            ref = np.array([np.sum(w * y**k) for k in (1, 2, 3)])
            for scheme in _BENCH_SCHEMES:
                start = time.perf_counter()
                x = _bench_resample(scheme, y, log_w, rng)
                times[scheme] += time.perf_counter() - start
                est = np.array([np.mean(x[:, 0] ** k) for k in (1, 2, 3)])
                errs[scheme] += np.abs(est - ref) / np.abs(ref)
        for scheme in _BENCH_SCHEMES:
            err = errs[scheme] / spec.bench.repeats
            results.append(
                (
                    scheme,
                    size,
                    err[0],
                    err[1],
                    err[2],
                    times[scheme] / spec.bench.repeats,
                )
            )
    os.makedirs(spec.output_dir, exist_ok=True)
    _write_csv(
        os.path.join(spec.output_dir, "resampler_bench.csv"),
        _comment(spec),
        ("scheme", "size", "err_m1", "err_m2", "err_m3", "seconds"),
        results,
    )
    summary = _summary_base(spec, "bench-resamplers")
    summary.update(
        {"sizes": list(spec.bench.sizes), "repeats": spec.bench.repeats}
    )
    _write_json(os.path.join(spec.output_dir, "summary.json"), summary)
    return 0


def cmd_generate_data(spec):
    """Synthetic observations for the configured target family."""
    from .targets import generate_data

    tcfg = spec.canonical["target"]
    family = tcfg["family"]
    gen = spec.generation
    if family == "chemical":
        values = generate_data(
            "chemical",
            true_k=gen.true_k,
            k1=tcfg["k1"],
            k4=tcfg["k4"],
            sigma2=tcfg["sigma2"],
            obs_times=tuple(tcfg["obs_times"]),
            noise=gen.noise,
            seed=spec.seed,
        )
        rows = [
            (i, float(t), float(v))
            for i, (t, v) in enumerate(zip(tcfg["obs_times"], np.atleast_1d(values)))
        ]
        header = ("index", "time", "value")
    else:
        if gen.x_ref is None:
            raise ConfigError(
                "data_generation.x_ref: required for the "
                f"{family} family"
            )
        value = generate_data(
            family,
            x_ref=gen.x_ref,
            sigma2=tcfg["sigma2"],
            noise=gen.noise,
            seed=spec.seed,
        )
        rows = [(0, float(value))]
        header = ("index", "value")
    os.makedirs(spec.output_dir, exist_ok=True)
    _write_csv(
        os.path.join(spec.output_dir, "data.csv"), _comment(spec), header, rows
    )
    summary = _summary_base(spec, "generate-data")
    summary.update({"family": family, "noise": gen.noise, "rows": len(rows)})
    _write_json(os.path.join(spec.output_dir, "summary.json"), summary)
    return 0


_COMMANDS = {
    "run": (cmd_run, "execute the configured sampler"),
    "tune": (cmd_tune, "sweep a beta grid and report the best beta"),
    "bench-resamplers": (cmd_bench_resamplers, "time and score the resamplers"),
    "generate-data": (cmd_generate_data, "write synthetic observations"),
}


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="pais",
        description="Parallel adaptive importance sampling experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, (_, help_text) in _COMMANDS.items():
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--seed", type=int, default=None,
                       help="seed when the config sets none")
        p.add_argument("--out", default=None,
                       help="output directory (overrides config)")
        p.add_argument("--threads", type=int, default=1,
                       help="proposal worker threads (results are identical)")
    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        spec = parse_config(
            args.config,
            cli_seed=args.seed,
            out_override=args.out,
            threads=args.threads,
        )
        return _COMMANDS[args.command][0](spec)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except PaisError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
