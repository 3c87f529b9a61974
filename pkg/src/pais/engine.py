"""Samplers and their run-time machinery.

run_pais iterates the ensemble importance sampler: every member proposes
from its kernel, the ensemble mixture prices all proposals, and a resampler
returns the ensemble to uniform weights. The analyzed output is the pooled
weighted proposal stream, not the resampled states. run_mh drives M
independent Metropolis-Hastings chains with matched bookkeeping so the two
samplers are comparable at equal density-evaluation budgets.

Randomness is addressed, not sequential: member j of iteration i always
draws from the counter-keyed stream (lane, j, i), so a run is bit-identical
for a fixed seed regardless of thread count.

Beta adaptation is a golden-section search on log beta driven by a noisy
per-epoch statistic (mean ESS for the ensemble sampler, distance of the
acceptance rate from its target for MH). Epochs are scheduled at
n_k ~ n0 * growth^k so updates become geometrically rarer; each epoch
measures one fresh interior point, the other is remembered from earlier.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from ._streams import (
    INIT_LANE,
    MH_LANE,
    PROPOSAL_LANE,
    RESAMPLER_LANE,
    StreamFactory,
    fresh_stream,
)
from .diagnostics import DiagnosticsRecord, ess_from_log, weight_variance_from_log
from .errors import IterationError, ParameterError
from .kernels import (
    KINDS,
    ProposalKernel,
    _chol_for,
    _log_density_matrix,
    _pairwise_log_density,
    _prepare,
    drifted_means,
    gamma_shape_rate,
    normalize_log_weights,
)
from .resamplers import amr_resample, bootstrap_resample, etpf_resample
from .targets import TargetPosterior

__all__ = [
    "AdaptationConfig",
    "ScoutConfig",
    "RunConfig",
    "SamplerOutput",
    "GoldenSectionAdapter",
    "epoch_schedule",
    "adapt_beta",
    "detect_burn_in",
    "pais_step",
    "run_pais",
    "run_mh",
    "pooled_stream",
    "pooled_weights",
]

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

RESAMPLERS = ("etpf", "amr", "bootstrap")


@dataclass(frozen=True)
class AdaptationConfig:
    """Golden-section schedule; bounds are the log-scale search bracket."""

    enabled: bool = False
    n0: int = 50
    growth: float = 1.5
    beta_lo: float = 1e-5
    beta_hi: float = 2.0
    resolution: float = 0.05
    overdispersion: float = 1.1
    target_acceptance: float = 0.5

    def __post_init__(self):
        if self.n0 < 1:
            raise ParameterError("adaptation n0 must be >= 1")
        if not self.growth > 1.0:
            raise ParameterError("adaptation growth must exceed 1")
        if not 0.0 < self.beta_lo < self.beta_hi:
            raise ParameterError("adaptation bounds need 0 < beta_lo < beta_hi")
        if not self.resolution > 0.0:
            raise ParameterError("adaptation resolution must be positive")
        if not self.overdispersion > 0.0:
            raise ParameterError("overdispersion factor must be positive")
        if not 0.0 < self.target_acceptance < 1.0:
            raise ParameterError("target acceptance must lie in (0, 1)")


@dataclass(frozen=True)
class ScoutConfig:
    """The first `count` ensemble slots run a widened kernel
    (beta * multiplier); roles attach to slots, not to states."""

    count: int = 0
    multiplier: float = 10.0

    def __post_init__(self):
        if self.count < 0:
            raise ParameterError("scout count must be >= 0")
        if not self.multiplier > 0.0:
            raise ParameterError("scout multiplier must be positive")


@dataclass(frozen=True)
class RunConfig:
    target: TargetPosterior
    kernel: ProposalKernel
    ensemble_size: int
    iterations: int
    resampler: str = "etpf"
    resampler_mode: str = "deterministic"
    pricing: str = "block"
    scouts: ScoutConfig = field(default_factory=ScoutConfig)
    adaptation: AdaptationConfig = field(default_factory=AdaptationConfig)
    seed: int = 1
    init_states: Optional[np.ndarray] = None
    threads: int = 1

    def __post_init__(self):
        if self.ensemble_size < 1:
            raise ParameterError("ensemble size must be >= 1")
        if self.iterations < 0:
            raise ParameterError("iteration count must be >= 0")
        if self.kernel.kind not in KINDS:
            raise ParameterError(f"unknown kernel kind {self.kernel.kind!r}")
        if not self.kernel.beta > 0.0:
            raise ParameterError("runs need a strictly positive kernel beta")
        if self.resampler not in RESAMPLERS:
            raise ParameterError(f"unknown resampler {self.resampler!r}")
        if self.resampler_mode not in ("deterministic", "stochastic"):
            raise ParameterError(
                f"unknown resampler mode {self.resampler_mode!r}"
            )
        if self.pricing not in ("dantzig", "block"):
            raise ParameterError(f"unknown pricing rule {self.pricing!r}")
        if self.scouts.count >= self.ensemble_size:
            raise ParameterError("scout count must be below the ensemble size")
        if not 1 <= self.threads <= 64:
            raise ParameterError("threads must lie in [1, 64]")
        if self.init_states is not None:
            states = np.asarray(self.init_states, dtype=float)
            if states.shape != (self.ensemble_size, self.target.dim):
                raise ParameterError(
                    "init_states must be (ensemble_size, target.dim), got "
                    f"{states.shape}"
                )
            if not np.all(np.isfinite(states)):
                raise ParameterError("init_states must be finite")
            object.__setattr__(self, "init_states", states)


@dataclass(frozen=True)
class SamplerOutput:
    """Everything a run produced.

    proposals is the weighted sample stream for the ensemble sampler
    ((N, M, d) proposals with (N, M) log weights) and the post-update chain
    states for MH (whose weights are uniform; log_weights is None then).
    burn_in is the first iteration index considered converged, or None.
    """

    sampler: str
    proposals: Optional[np.ndarray]
    log_weights: Optional[np.ndarray]
    ess: np.ndarray
    weight_variance: np.ndarray
    beta_trace: np.ndarray
    acceptance_counts: Optional[np.ndarray]
    burn_in: Optional[int]
    final_states: np.ndarray
    adaptation_events: tuple
    langevin_fallbacks: int
    seed: int

    @property
    def iterations(self):
        return int(self.ess.shape[0])

    def burned_in_mask(self):
        n = self.iterations
        if self.burn_in is None:
            return np.zeros(n, dtype=bool)
        return np.arange(n) >= self.burn_in

    def records(self):
        out = []
        for i in range(self.iterations):
            acc = (
                int(self.acceptance_counts[i])
                if self.acceptance_counts is not None
                else None
            )
            out.append(
                DiagnosticsRecord(
                    iteration=i,
                    ess=float(self.ess[i]),
                    weight_variance=float(self.weight_variance[i]),
                    beta=float(self.beta_trace[i]),
                    acceptance_count=acc,
                )
            )
        return out


def pooled_stream(output, include_burn_in=False):
    """Flatten the stream across iterations into (samples, log_weights).

    Burn-in iterations are dropped by default; when detection never fired
    the whole stream is returned (callers can inspect output.burn_in).
    """
    if output.proposals is None:
        raise ParameterError("this run did not keep its sample stream")
    start = 0
    if not include_burn_in and output.burn_in is not None:
        start = output.burn_in
    y = output.proposals[start:]
    y = y.reshape(-1, y.shape[2] if y.ndim == 3 else 1)
    if output.log_weights is None:
        lw = np.zeros(y.shape[0])
    else:
        lw = output.log_weights[start:].reshape(-1)
    return y, lw


def pooled_weights(output, include_burn_in=False):
    """Pooled samples with globally self-normalized weights."""
    y, lw = pooled_stream(output, include_burn_in=include_burn_in)
    return y, normalize_log_weights(lw)


def epoch_schedule(n0=50, growth=1.5):
    """Yield adaptation iterations n_k ~ round(n0 * growth^k).

    Gaps between consecutive events are forced to grow strictly, so the
    schedule stays diminishing even where rounding would stall it.
    """
    k = 0
    prev = None
    gap = 0
    while True:
        raw = int(n0 * growth**k + 0.5)
        val = raw if prev is None else max(raw, prev + gap + 1)
        if prev is not None:
            gap = val - prev
        yield val
        prev = val
        k += 1


class GoldenSectionAdapter:
    """Golden-section search on log beta fed by one noisy measurement per
    epoch.

    The two interior points of the bracket take turns being measured; a
    shrink happens only once both carry a value. Exact ties re-measure the
    staler point instead of shrinking, so a flat objective leaves the
    bracket (and beta) parked on the initial interior points. When the
    bracket's log width drops below `resolution` the best interior point,
    inflated by `overdispersion`, becomes the frozen running beta.

    With `initial_beta` set, the first update is treated as a warm-up block
    measured at that beta and discarded.
    """

    def __init__(self, beta_lo, beta_hi, *, resolution=0.05,
                 overdispersion=1.1, minimize=False, initial_beta=None):
        if not 0.0 < beta_lo < beta_hi:
            raise ParameterError("adapter needs 0 < beta_lo < beta_hi")
        if not resolution > 0.0:
            raise ParameterError("adapter resolution must be positive")
        self._lo = math.log(beta_lo)
        self._hi = math.log(beta_hi)
        width = self._hi - self._lo
        self._c = self._hi - GOLDEN * width
        self._d = self._lo + GOLDEN * width
        self._fc = None
        self._fd = None
        self._age_c = -1
        self._age_d = -1
        self._epoch = 0
        self._sign = -1.0 if minimize else 1.0
        self._over = float(overdispersion)
        self._resolution = float(resolution)
        self._converged = False
        if initial_beta is not None:
            if not initial_beta > 0.0:
                raise ParameterError("initial beta must be positive")
            self._pending = "warmup"
            self._beta = float(initial_beta)
        else:
            self._pending = "c"
            self._beta = math.exp(self._c)

    @property
    def beta(self):
        return self._beta

    @property
    def converged(self):
        return self._converged

    @property
    def best_beta(self):
        """Best interior point seen so far (the frozen beta once converged)."""
        if self._converged:
            return self._beta
        if self._fc is None and self._fd is None:
            return None
        if self._fd is None or (self._fc is not None and self._fc >= self._fd):
            return math.exp(self._c)
        return math.exp(self._d)

    def update(self, stat):
        """Record the epoch statistic measured at the current beta; returns
        the beta for the next epoch."""
        if self._converged:
            return self._beta
        self._epoch += 1
        if self._pending == "warmup":
            self._pending = "c"
            self._beta = math.exp(self._c)
            return self._beta
        value = self._sign * float(stat)
        if self._pending == "c":
            self._fc = value
            self._age_c = self._epoch
        else:
            self._fd = value
            self._age_d = self._epoch
        if self._fc is None:
            self._pending = "c"
            self._beta = math.exp(self._c)
            return self._beta
        if self._fd is None:
            self._pending = "d"
            self._beta = math.exp(self._d)
            return self._beta
        if self._fc == self._fd:
            if self._age_c <= self._age_d:
                self._fc = None
                self._pending = "c"
                self._beta = math.exp(self._c)
            else:
                self._fd = None
                self._pending = "d"
                self._beta = math.exp(self._d)
            return self._beta
        if self._fc > self._fd:
            self._hi = self._d
            self._d = self._c
            self._fd = self._fc
            self._age_d = self._age_c
            self._c = self._hi - GOLDEN * (self._hi - self._lo)
            self._fc = None
            self._pending = "c"
            fresh = self._c
        else:
            self._lo = self._c
            self._c = self._d
            self._fc = self._fd
            self._age_c = self._age_d
            self._d = self._lo + GOLDEN * (self._hi - self._lo)
            self._fd = None
            self._pending = "d"
            fresh = self._d
        if self._hi - self._lo < self._resolution:
            kept = self._d if self._fd is not None else self._c
            self._beta = math.exp(kept) * self._over
            self._converged = True
        else:
            self._beta = math.exp(fresh)
        return self._beta


def adapt_beta(adapter, stats):
    """Feed one epoch's per-iteration statistics to the adapter."""
    arr = np.asarray(stats, dtype=float).ravel()
    if arr.size == 0:
        raise ParameterError("adapt_beta needs at least one measurement")
    return adapter.update(float(arr.mean()))


def detect_burn_in(series, scale=None, *, window=20, slope_frac=0.01,
                   rise_frac=0.1):
    """First iteration count after which the series is flat.

    Flat means the least-squares slope over the trailing `window` points is
    below slope_frac * scale in magnitude, accepted once the series has
    risen by rise_frac * scale from its start (waived when the running
    maximum never exceeded the start by that much). scale defaults to the
    series range; pass the ensemble size when the series is an ESS trace.
    Returns None when no window qualifies.
    """
    s = np.asarray(series, dtype=float).ravel()
    if s.size < window:
        raise ParameterError(f"series shorter than the window ({window})")
    if scale is None:
        spread = float(s.max() - s.min())
        scale = spread if spread > 0.0 else 1.0
    if not scale > 0.0:
        raise ParameterError("scale must be positive")
    xc = np.arange(window) - (window - 1) / 2.0
    slopes = np.correlate(s, xc, mode="valid") / np.sum(xc**2)
    run_max = np.maximum.accumulate(s)[window - 1 :]
    last = s[window - 1 :]
    rise = rise_frac * scale
    ok = (np.abs(slopes) < slope_frac * scale) & (
        (last - s[0] >= rise) | (run_max - s[0] <= rise)
    )
    if not ok.any():
        return None
    return int(np.argmax(ok)) + window


class _AdaptationDriver:
    """Buffers per-iteration statistics and runs the adapter at scheduled
    epochs. stat_fn maps the epoch mean onto the adapter's objective."""

    def __init__(self, cfg, initial_beta, minimize, stat_fn):
        self.events = []
        self._buffer = []
        self._stat_fn = stat_fn
        if cfg.enabled:
            self.adapter = GoldenSectionAdapter(
                cfg.beta_lo,
                cfg.beta_hi,
                resolution=cfg.resolution,
                overdispersion=cfg.overdispersion,
                minimize=minimize,
                initial_beta=initial_beta,
            )
            self._schedule = epoch_schedule(cfg.n0, cfg.growth)
            self._next = next(self._schedule)
        else:
            self.adapter = None
            self._schedule = None
            self._next = None

    def record(self, value):
        if self.adapter is not None and self._next is not None:
            self._buffer.append(value)

    def poll(self, iteration):
        """New base beta when `iteration` is a scheduled epoch, else None."""
        if self._next is None or iteration != self._next:
            return None
        # The first half of an epoch still reflects the previous beta: the
        # ensemble needs a few resampling steps to re-equilibrate after a
        # step change, and a contraction right after a wide probe reads as
        # spuriously uniform weights. Score the probe on its second half.
        settled = self._buffer[len(self._buffer) // 2 :]
        beta = self.adapter.update(self._stat_fn(float(np.mean(settled))))
        self._buffer = []
        self.events.append((iteration, beta))
        self._next = None if self.adapter.converged else next(self._schedule)
        return beta


def _initial_ensemble(config, factory):
    if config.init_states is not None:
        return np.array(config.init_states, dtype=float)
    if config.target.sample_prior is None:
        raise ParameterError(
            "target has no prior sampler; supply init_states explicitly"
        )
    rng = factory.stream(INIT_LANE, 0, 0)
    states = np.asarray(
        config.target.sample_prior(rng, config.ensemble_size), dtype=float
    )
    return states.reshape(config.ensemble_size, config.target.dim)


def _member_betas(config, base_beta):
    betas = np.full(config.ensemble_size, float(base_beta))
    if config.scouts.count:
        betas[: config.scouts.count] *= config.scouts.multiplier
    return betas


def _draw_member(kind, center, beta, chol, mean, rng):
    if kind == "rw_gaussian":
        return center + beta * (chol @ rng.standard_normal(center.shape[0]))
    shape, rate = gamma_shape_rate(mean, beta)
    return rng.gamma(shape, 1.0 / rate)


def _propose_ensemble(out, states, kind, betas, chol, means, factory,
                      iteration, executor, threads, seed):
    m = states.shape[0]
    if executor is None:
        for j in range(m):
            rng = factory.stream(PROPOSAL_LANE, j, iteration)
            out[j] = _draw_member(kind, states[j], betas[j], chol, means[j], rng)
        return
    # Workers re-key fresh generators; addressing makes the result
    # identical to the sequential loop.
    def work(lo, hi):
        for j in range(lo, hi):
            rng = fresh_stream(seed, PROPOSAL_LANE, j, iteration)
            out[j] = _draw_member(kind, states[j], betas[j], chol, means[j], rng)

    bounds = np.linspace(0, m, threads + 1).astype(int)
    futures = [
        executor.submit(work, bounds[t], bounds[t + 1]) for t in range(threads)
    ]
    for f in futures:
        f.result()


def _proposal_means(kind, betas, states, target):
    """Per-member proposal means and the langevin fallback count."""
    if kind == "gamma_langevin":
        return drifted_means(betas, states, target)
    return states, 0


def _resample(config, proposals, log_w, rng):
    if config.resampler == "etpf":
        if config.resampler_mode == "deterministic":
            return etpf_resample(proposals, log_w, pricing=config.pricing)
        return etpf_resample(
            proposals, log_w, mode="stochastic", rng=rng, pricing=config.pricing
        )
    if config.resampler == "amr":
        if config.resampler_mode == "deterministic":
            return amr_resample(proposals, log_w)
        return amr_resample(proposals, log_w, mode="stochastic", rng=rng)
    return bootstrap_resample(proposals, log_w, rng)


def _log_mixture_weights(kind, betas, proposals, states, target, chol):
    mat = _log_density_matrix(kind, betas, proposals, states, target, chol)
    log_chi = logsumexp(mat, axis=1) - np.log(states.shape[0])
    with np.errstate(invalid="ignore"):
        return target.log_density(proposals) - log_chi


def pais_step(states, kernels, target, resampler="etpf", rng=None, *,
              resampler_mode="deterministic", pricing="dantzig",
              iteration=None):
    """One ensemble iteration with a caller-supplied generator.

    Draws member proposals sequentially from `rng`, weights them against
    the ensemble mixture and resamples back to uniform weights. Returns
    ((proposals, log_weights), next_states). `resampler` may be a name or a
    callable (proposals, log_weights, rng) -> states.
    """
    states = np.asarray(states, dtype=float)
    if states.ndim != 2:
        raise ParameterError("ensemble states must be an (M, d) array")
    if rng is None:
        raise ParameterError("pais_step needs an explicit generator")
    kind, betas, chol = _prepare(kernels, states)
    if np.any(betas <= 0):
        raise ParameterError("pais_step needs strictly positive betas")
    means, _ = _proposal_means(kind, betas, states, target)
    proposals = np.empty_like(states)
    for j in range(states.shape[0]):
        proposals[j] = _draw_member(
            kind, states[j], betas[j], chol, means[j], rng
        )
    log_w = _log_mixture_weights(kind, betas, proposals, states, target, chol)
    if not np.any(np.isfinite(log_w)):
        where = f"iteration {iteration}" if iteration is not None else "step"
        raise IterationError(f"{where}: every proposal weight is zero")
    if callable(resampler):
        next_states = resampler(proposals, log_w, rng)
    else:
        if resampler not in RESAMPLERS:
            raise ParameterError(f"unknown resampler {resampler!r}")
        if resampler == "etpf":
            if resampler_mode == "deterministic":
                next_states = etpf_resample(proposals, log_w, pricing=pricing)
            else:
                next_states = etpf_resample(
                    proposals, log_w, mode="stochastic", rng=rng,
                    pricing=pricing,
                )
        elif resampler == "amr":
            next_states = amr_resample(
                proposals, log_w, mode=resampler_mode,
                rng=rng if resampler_mode == "stochastic" else None,
            )
        else:
            next_states = bootstrap_resample(proposals, log_w, rng)
    return (proposals, log_w), next_states


def _pais_output(config, arrays, iterations, states, events, fallbacks):
    proposals, log_weights, ess_arr, var_arr, beta_arr = arrays
    n = iterations
    ess_view = ess_arr[:n]
    burn = None
    if n >= 20:
        burn = detect_burn_in(ess_view, scale=config.ensemble_size)
    return SamplerOutput(
        sampler="pais",
        proposals=proposals[:n],
        log_weights=log_weights[:n],
        ess=ess_view,
        weight_variance=var_arr[:n],
        beta_trace=beta_arr[:n],
        acceptance_counts=None,
        burn_in=burn,
        final_states=states,
        adaptation_events=tuple(events),
        langevin_fallbacks=fallbacks,
        seed=config.seed,
    )


def run_pais(config):
    """Iterate the ensemble sampler per its run configuration."""
    target = config.target
    m = config.ensemble_size
    n = config.iterations
    d = target.dim
    kind = config.kernel.kind
    chol = _chol_for(config.kernel, d)
    factory = StreamFactory(config.seed)
    states = _initial_ensemble(config, factory)
    if kind != "rw_gaussian" and np.any(states <= 0):
        raise ParameterError("gamma kernels need strictly positive initial states")
    base_beta = config.kernel.beta
    betas = _member_betas(config, base_beta)
    driver = _AdaptationDriver(
        config.adaptation, base_beta, minimize=False, stat_fn=lambda s: s
    )
    proposals = np.empty((n, m, d))
    log_weights = np.empty((n, m))
    ess_arr = np.empty(n)
    var_arr = np.empty(n)
    beta_arr = np.empty(n)
    arrays = (proposals, log_weights, ess_arr, var_arr, beta_arr)
    fallbacks = 0
    executor = (
        ThreadPoolExecutor(max_workers=config.threads)
        if config.threads > 1
        else None
    )
    try:
        for i in range(n):
            new_beta = driver.poll(i)
            if new_beta is not None:
                base_beta = new_beta
                betas = _member_betas(config, base_beta)
            beta_arr[i] = base_beta
            means, fb = _proposal_means(kind, betas, states, target)
            fallbacks += fb
            _propose_ensemble(
                proposals[i], states, kind, betas, chol, means, factory,
                i, executor, config.threads, config.seed,
            )
            log_w = _log_mixture_weights(
                kind, betas, proposals[i], states, target, chol
            )
            if not np.any(np.isfinite(log_w)):
                partial = _pais_output(
                    config, arrays, i, states, driver.events, fallbacks
                )
                raise IterationError(
                    f"iteration {i}: every proposal weight is zero",
                    partial=partial,
                )
            log_weights[i] = log_w
            ess_arr[i] = ess_from_log(log_w)
            var_arr[i] = weight_variance_from_log(log_w)
            driver.record(ess_arr[i])
            states = _resample(
                config, proposals[i], log_w, factory.stream(RESAMPLER_LANE, 0, i)
            )
    finally:
        if executor is not None:
            executor.shutdown(wait=False)
    return _pais_output(config, arrays, n, states, driver.events, fallbacks)


def run_mh(config, *, keep_stream=True, state_callback=None):
    """M independent Metropolis-Hastings chains under the PAIS bookkeeping.

    Chains share one vectorized per-iteration stream (lane 3); acceptance
    uses the exact kernel density ratio for the asymmetric gamma kinds and
    cancels it for the symmetric random walk. The recorded stream holds the
    post-update states; ESS is reported as M (uniform weights) so records
    stay comparable with the ensemble sampler. state_callback(i, states),
    when given, sees every iteration even with keep_stream=False.
    """
    if config.scouts.count:
        raise ParameterError("MH baselines do not take scout slots")
    target = config.target
    m = config.ensemble_size
    n = config.iterations
    d = target.dim
    kind = config.kernel.kind
    chol = _chol_for(config.kernel, d)
    factory = StreamFactory(config.seed)
    states = _initial_ensemble(config, factory)
    if kind != "rw_gaussian" and np.any(states <= 0):
        raise ParameterError("gamma kernels need strictly positive initial states")
    base_beta = config.kernel.beta
    driver = _AdaptationDriver(
        config.adaptation,
        base_beta,
        minimize=True,
        stat_fn=lambda s: abs(s - config.adaptation.target_acceptance),
    )
    stream = np.empty((n, m, d)) if keep_stream else None
    acc_arr = np.zeros(n, dtype=np.int64)
    beta_arr = np.empty(n)
    mean_logpi = np.empty(n)
    fallbacks = 0
    log_pi = np.asarray(target.log_density(states), dtype=float)
    for i in range(n):
        new_beta = driver.poll(i)
        if new_beta is not None:
            base_beta = new_beta
        beta_arr[i] = base_beta
        rng = factory.stream(MH_LANE, 0, i)
        betas = np.full(m, base_beta)
        if kind == "rw_gaussian":
            noise = rng.standard_normal((m, d))
            proposals = states + base_beta * (noise @ chol.T)
            log_q_diff = 0.0
        else:
            means, fb = _proposal_means(kind, betas, states, target)
            fallbacks += fb
            shape, rate = gamma_shape_rate(means, betas[:, None])
            proposals = rng.gamma(shape, 1.0 / rate)
            log_q_diff = _pairwise_log_density(
                kind, betas, states, proposals, target, chol
            ) - _pairwise_log_density(
                kind, betas, proposals, states, target, chol
            )
        log_pi_prop = np.asarray(target.log_density(proposals), dtype=float)
        with np.errstate(invalid="ignore"):
            log_alpha = log_pi_prop - log_pi + log_q_diff
        # NaN comparisons are False, so undefined ratios reject.
        accept = np.log(rng.random(m)) < log_alpha
        states = np.where(accept[:, None], proposals, states)
        log_pi = np.where(accept, log_pi_prop, log_pi)
        acc_arr[i] = int(accept.sum())
        mean_logpi[i] = float(log_pi.mean())
        driver.record(acc_arr[i] / m)
        if keep_stream:
            stream[i] = states
        if state_callback is not None:
            state_callback(i, states)
    burn = detect_burn_in(mean_logpi) if n >= 20 else None
    return SamplerOutput(
        sampler="mh",
        proposals=stream,
        log_weights=None,
        ess=np.full(n, float(m)),
        weight_variance=np.zeros(n),
        beta_trace=beta_arr,
        acceptance_counts=acc_arr,
        burn_in=burn,
        final_states=states,
        adaptation_events=tuple(driver.events),
        langevin_fallbacks=fallbacks,
        seed=config.seed,
    )
