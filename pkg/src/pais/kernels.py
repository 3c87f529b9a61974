"""Proposal kernels, the ensemble mixture density, and importance weights.

Three kernel families:

- rw_gaussian: y = x + beta * L * omega with omega ~ N(0, I) and L the
  Cholesky factor of the scale matrix Sigma.
- gamma_mean_centered: per coordinate, y ~ Gamma(shape, rate) moment-matched
  to mean x and variance beta^2.
- gamma_langevin: the same Gamma family recentered at the drifted mean
  m = x + (beta^2 / 2) * grad log pi(x). Coordinates whose drifted mean is
  nonpositive fall back to the undrifted x; the event count is surfaced so
  runs can report it.

All weight arithmetic stays in log space. Scout ensembles mix members with
different beta values, so every vectorized entry point takes either one
kernel for the whole ensemble or a per-member sequence of the same kind.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.linalg import solve_triangular
from scipy.special import gammaln, logsumexp

from .errors import DiagnosticError, ParameterError

KINDS = ("rw_gaussian", "gamma_mean_centered", "gamma_langevin")

_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class ProposalKernel:
    kind: str
    beta: float
    covariance: Optional[np.ndarray] = None
    chol: Optional[np.ndarray] = None


def make_kernel(kind, beta, covariance=None, dim=None):
    """Validated kernel constructor.

    beta = 0 is accepted (degenerate kernel: sampling returns the center)
    but density evaluation on such a kernel raises.
    """
    if kind not in KINDS:
        raise ParameterError(f"unknown kernel kind {kind!r}")
    beta = float(beta)
    if beta < 0:
        raise ParameterError(f"kernel.beta must be >= 0, got {beta}")
    chol = None
    if kind == "rw_gaussian":
        if covariance is not None:
            covariance = np.asarray(covariance, dtype=float)
            if covariance.ndim != 2 or covariance.shape[0] != covariance.shape[1]:
                raise ParameterError("kernel.covariance must be a square matrix")
            sym_err = np.abs(covariance - covariance.T).max()
            if sym_err > 1e-12 * max(1.0, np.abs(covariance).max()):
                raise ParameterError("kernel.covariance must be symmetric")
            try:
                chol = np.linalg.cholesky(covariance)
            except np.linalg.LinAlgError:
                raise ParameterError("kernel.covariance must be positive definite")
        elif dim is not None:
            covariance = np.eye(dim)
            chol = np.eye(dim)
    elif covariance is not None:
        raise ParameterError(f"kernel.covariance is only valid for rw_gaussian")
    return ProposalKernel(kind=kind, beta=beta, covariance=covariance, chol=chol)


def _prepare(kernels, states):
    """Normalize the one-kernel / per-member-kernel calling conventions.

    Returns (kind, betas (M,), chol or None) for the ensemble in `states`.
    """
    states = np.asarray(states, dtype=float)
    if states.ndim != 2:
        raise ParameterError("ensemble states must be an (M, d) array")
    m, dim = states.shape
    if isinstance(kernels, ProposalKernel):
        seq = None
        kind = kernels.kind
        betas = np.full(m, kernels.beta)
        chol = _chol_for(kernels, dim)
    else:
        seq = list(kernels)
        if len(seq) != m:
            raise ParameterError(
                f"got {len(seq)} kernels for an ensemble of {m} members"
            )
        kind = seq[0].kind
        if any(k.kind != kind for k in seq):
            raise ParameterError("per-member kernels must share one kind")
        betas = np.array([k.beta for k in seq])
        chol = _chol_for(seq[0], dim)
    return kind, betas, chol


def _chol_for(kernel, dim):
    if kernel.kind != "rw_gaussian":
        return None
    if kernel.chol is not None:
        if kernel.chol.shape[0] != dim:
            raise ParameterError(
                f"kernel.covariance is {kernel.chol.shape[0]}x{kernel.chol.shape[0]} "
                f"but the target dimension is {dim}"
            )
        return kernel.chol
    return np.eye(dim)


def gamma_shape_rate(mean, beta):
    """Moment-matching: shape/rate = mean, shape/rate^2 = beta^2."""
    mean = np.asarray(mean, dtype=float)
    return mean**2 / beta**2, mean / beta**2


def drifted_means(kernel_or_beta, states, target):
    """Langevin means x + (beta^2/2) grad log pi(x) with positivity fallback.

    Returns (means, fallback_count); coordinates with nonpositive drifted
    mean are reset to the undrifted center so the proposal stays supported.
    """
    beta = (
        kernel_or_beta.beta
        if isinstance(kernel_or_beta, ProposalKernel)
        else kernel_or_beta
    )
    states = np.asarray(states, dtype=float)
    if target is None or target.gradient is None:
        raise ParameterError("gamma_langevin requires a target gradient")
    drift = 0.5 * np.asarray(beta, dtype=float).reshape(-1, 1) ** 2 * target.gradient(
        states
    )
    means = states + drift
    bad = ~(means > 0)
    count = int(bad.sum())
    if count:
        means = np.where(bad, states, means)
    return means, count


def sample_kernel(kernel, center, target, rng):
    """One proposal from nu(.; center). Positive-support kinds require a
    strictly positive center."""
    center = np.asarray(center, dtype=float).reshape(-1)
    if kernel.kind == "rw_gaussian":
        if kernel.beta == 0.0:
            return center.copy()
        chol = _chol_for(kernel, center.shape[0])
        omega = rng.standard_normal(center.shape[0])
        return center + kernel.beta * (chol @ omega)
    if np.any(center <= 0):
        raise ParameterError("gamma kernels need a strictly positive center")
    if kernel.kind == "gamma_mean_centered":
        mean = center
    else:
        mean, _ = drifted_means(kernel, center[None, :], target)
        mean = mean[0]
    shape, rate = gamma_shape_rate(mean, kernel.beta)
    return rng.gamma(shape, 1.0 / rate)


def log_kernel_density(kernel, y, center, target=None):
    """Exact log nu(y; center) for the distribution sample_kernel draws from.

    y may be (d,) or (n, d); returns a scalar or (n,).
    """
    if kernel.beta == 0.0:
        raise ParameterError("beta = 0 kernels have no density")
    center = np.asarray(center, dtype=float).reshape(1, -1)
    y_arr = np.asarray(y, dtype=float)
    single = y_arr.ndim == 1
    y2 = y_arr.reshape(1, -1) if single else y_arr
    kind, betas, chol = _prepare(kernel, center)
    mat = _log_density_matrix(kind, betas, y2, center, target, chol)
    out = mat[:, 0]
    return float(out[0]) if single else out


def _log_density_matrix(kind, betas, y, states, target, chol):
    """log nu(y_i; x_j): (n, M) matrix; the workhorse behind mixtures/weights."""
    n, dim = y.shape
    m = states.shape[0]
    if np.any(betas <= 0):
        raise ParameterError("density evaluation requires beta > 0 for all members")
    if kind == "rw_gaussian":
        diff = y[:, None, :] - states[None, :, :]
        if chol is None or (dim == 1 and chol[0, 0] == 1.0):
            quad = np.sum(diff**2, axis=2)
            logdet = 0.0
        else:
            flat = solve_triangular(chol, diff.reshape(-1, dim).T, lower=True).T
            quad = np.sum(flat**2, axis=1).reshape(n, m)
            logdet = np.sum(np.log(np.diag(chol)))
        return (
            -0.5 * quad / betas[None, :] ** 2
            - dim * np.log(betas)[None, :]
            - logdet
            - 0.5 * dim * _LOG_2PI
        )

    if np.any(states <= 0):
        raise ParameterError("gamma kernels need strictly positive centers")
    if kind == "gamma_mean_centered":
        means = states
    else:
        means, _ = drifted_means(betas, states, target)
    shape, rate = gamma_shape_rate(means, betas[:, None])
    base = np.sum(shape * np.log(rate) - gammaln(shape), axis=1)
    out = np.full((n, m), -np.inf)
    ok = np.all(y > 0, axis=1)
    if np.any(ok):
        log_y = np.log(y[ok])
        out[ok] = base[None, :] + log_y @ (shape - 1.0).T - y[ok] @ rate.T
    return out


def _pairwise_log_density(kind, betas, y, states, target, chol):
    """log nu(y_j; x_j) member by member: the diagonal of
    _log_density_matrix without building the matrix."""
    y = np.asarray(y, dtype=float)
    states = np.asarray(states, dtype=float)
    m, dim = states.shape
    if np.any(betas <= 0):
        raise ParameterError("density evaluation requires beta > 0 for all members")
    if kind == "rw_gaussian":
        diff = y - states
        if chol is None or (dim == 1 and chol[0, 0] == 1.0):
            quad = np.sum(diff**2, axis=1)
            logdet = 0.0
        else:
            flat = solve_triangular(chol, diff.T, lower=True).T
            quad = np.sum(flat**2, axis=1)
            logdet = np.sum(np.log(np.diag(chol)))
        return (
            -0.5 * quad / betas**2
            - dim * np.log(betas)
            - logdet
            - 0.5 * dim * _LOG_2PI
        )
    if np.any(states <= 0):
        raise ParameterError("gamma kernels need strictly positive centers")
    if kind == "gamma_mean_centered":
        means = states
    else:
        means, _ = drifted_means(betas, states, target)
    shape, rate = gamma_shape_rate(means, betas[:, None])
    out = np.full(m, -np.inf)
    ok = np.all(y > 0, axis=1)
    if np.any(ok):
        out[ok] = np.sum(
            shape[ok] * np.log(rate[ok])
            - gammaln(shape[ok])
            + (shape[ok] - 1.0) * np.log(y[ok])
            - rate[ok] * y[ok],
            axis=1,
        )
    return out


def mixture_log_density(kernels, y, states, target=None):
    """log chi(y; X) = log (1/M) sum_j nu(y; x_j), max-shifted for stability.

    Exactly -inf only when every component vanishes at y.
    """
    states = np.asarray(states, dtype=float)
    kind, betas, chol = _prepare(kernels, states)
    y_arr = np.asarray(y, dtype=float)
    single = y_arr.ndim == 1
    y2 = y_arr.reshape(1, -1) if single else y_arr
    mat = _log_density_matrix(kind, betas, y2, states, target, chol)
    out = logsumexp(mat, axis=1) - np.log(states.shape[0])
    return float(out[0]) if single else out


def compute_weights(target, proposals, states, kernels):
    """Unnormalized log w_j = log pi(y_j) - log chi(y_j; X).

    Proposals outside the target support get weight zero (-inf), never an
    abort; normalization happens on demand via normalize_log_weights.
    """
    proposals = np.asarray(proposals, dtype=float)
    log_chi = mixture_log_density(kernels, proposals, states, target)
    log_pi = np.asarray(target.log_density(proposals), dtype=float)
    # A proposal outside both supports must stay at weight zero, not NaN.
    with np.errstate(invalid="ignore"):
        log_w = log_pi - log_chi
    return np.where(np.isneginf(log_pi), -np.inf, log_w)


def normalize_log_weights(log_w):
    """Self-normalized weights summing to 1; needs >= 1 finite entry."""
    log_w = np.asarray(log_w, dtype=float)
    if not np.any(np.isfinite(log_w)):
        raise DiagnosticError("no finite weight to normalize")
    shifted = np.exp(log_w - np.max(log_w[np.isfinite(log_w)]))
    return shifted / shifted.sum()
