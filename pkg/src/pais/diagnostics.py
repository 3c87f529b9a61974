"""Weighted-sample statistics: ESS, weight variance, histograms and the
error measures used to compare samplers against analytic references.

All weight-based quantities have a linear-input form (`ess`,
`weight_variance`) and a log-input form (`ess_from_log`, ...). The log forms
are the primitive ones; the linear forms defer to them so both agree to
rounding on well-scaled vectors.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import logsumexp

from .errors import DiagnosticError, ParameterError

__all__ = [
    "DiagnosticsRecord",
    "HistogramGrid",
    "ess",
    "ess_from_log",
    "weight_variance",
    "weight_variance_from_log",
    "build_histogram",
    "relative_l2_error",
    "relative_moment_error",
    "kl_divergence",
]


@dataclass(frozen=True)
class DiagnosticsRecord:
    """Per-iteration sampler health snapshot."""

    iteration: int
    ess: float
    weight_variance: float
    beta: float
    acceptance_count: Optional[int] = None


@dataclass(frozen=True)
class HistogramGrid:
    """Normalized weighted histogram on a fixed uniform grid.

    masses holds densities B_i: sum(B_i) * bin_volume = 1 over the grid
    whenever any weight landed in range. Mass falling outside the grid is
    tracked as a fraction of the total, not folded into edge bins.
    """

    edges: tuple
    masses: np.ndarray
    out_of_range: float

    @property
    def bin_volume(self):
        return float(np.prod([e[1] - e[0] for e in self.edges]))


def _log_from_linear(weights):
    w = np.asarray(weights, dtype=float).ravel()
    if w.size == 0:
        raise DiagnosticError("empty weight vector")
    if np.any(~np.isfinite(w)) or np.any(w < 0):
        raise DiagnosticError("weights must be finite and nonnegative")
    with np.errstate(divide="ignore"):
        return np.log(w)


def ess(weights):
    """(sum w)^2 / sum w^2, evaluated in log space."""
    return ess_from_log(_log_from_linear(weights))


def ess_from_log(log_weights):
    lw = np.asarray(log_weights, dtype=float).ravel()
    if lw.size == 0 or not np.any(lw > -np.inf):
        raise DiagnosticError("effective sample size needs a nonzero weight")
    return float(np.exp(2.0 * logsumexp(lw) - logsumexp(2.0 * lw)))


def weight_variance(weights):
    """Sample variance of the weights after normalizing them to mean 1."""
    return weight_variance_from_log(_log_from_linear(weights))


def weight_variance_from_log(log_weights):
    lw = np.asarray(log_weights, dtype=float).ravel()
    if lw.size == 0 or not np.any(lw > -np.inf):
        raise DiagnosticError("weight variance needs a nonzero weight")
    if lw.size == 1:
        return 0.0
    w = np.exp(lw - logsumexp(lw)) * lw.size
    return float(np.sum((w - 1.0) ** 2) / (lw.size - 1))


def _resolve_edges(edges):
    out = []
    for e in edges:
        if isinstance(e, tuple) and len(e) == 3:
            low, high, bins = e
            width = (high - low) / bins
            arr = low + width * np.arange(bins + 1)
        else:
            arr = np.asarray(e, dtype=float)
        if arr.ndim != 1 or arr.size < 2 or np.any(np.diff(arr) <= 0):
            raise ParameterError("bin edges must be increasing 1-D arrays")
        widths = np.diff(arr)
        if widths.max() - widths.min() > 1e-9 * widths.mean():
            raise ParameterError("histogram bins must have uniform width")
        out.append(arr)
    return tuple(out)


def build_histogram(samples, weights=None, *, edges):
    """Weighted histogram normalized to a density over the grid.

    samples: (n,) or (n, d) with d in {1, 2}; edges: one (low, high, bins)
    triple or explicit edge array per dimension.
    """
    x = np.asarray(samples, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or x.shape[1] not in (1, 2):
        raise ParameterError("histograms support 1-D and 2-D samples only")
    grid = _resolve_edges(edges)
    if len(grid) != x.shape[1]:
        raise ParameterError("edge count does not match sample dimension")
    if weights is None:
        w = np.ones(x.shape[0])
    else:
        w = np.asarray(weights, dtype=float).ravel()
        if w.shape[0] != x.shape[0]:
            raise ParameterError("weights length does not match samples")
        if np.any(~np.isfinite(w)) or np.any(w < 0):
            raise ParameterError("histogram weights must be finite and nonnegative")
        if w.sum() == 0.0:
            raise DiagnosticError("histogram needs positive total weight")
    if x.shape[1] == 1:
        counts, _ = np.histogram(x[:, 0], bins=grid[0], weights=w)
    else:
        counts, _, _ = np.histogram2d(
            x[:, 0], x[:, 1], bins=[grid[0], grid[1]], weights=w
        )
    volume = float(np.prod([g[1] - g[0] for g in grid]))
    total = float(w.sum())
    in_range = float(counts.sum())
    if in_range > 0.0:
        masses = counts / (in_range * volume)
    else:
        masses = np.zeros_like(counts)
    out = 0.0 if total == 0.0 else 1.0 - in_range / total
    return HistogramGrid(edges=grid, masses=masses, out_of_range=out)


def _reference_masses(reference, hist):
    bin_edges = getattr(reference, "bin_edges", None)
    if bin_edges is not None:
        if len(bin_edges) != len(hist.edges):
            raise DiagnosticError("histogram and reference dimensions differ")
        for ge, re_ in zip(hist.edges, bin_edges):
            if len(ge) != len(re_) or not np.allclose(ge, re_, atol=1e-9):
                raise DiagnosticError("histogram and reference grids differ")
        return np.asarray(reference.bin_masses, dtype=float)
    ref = np.asarray(reference, dtype=float)
    if ref.shape != hist.masses.shape:
        raise DiagnosticError("reference mass shape does not match histogram")
    return ref


def relative_l2_error(hist, reference):
    """e with e^2 = sum_i (m_i - v B_i)^2 / sum_i m_i^2, m_i the reference
    posterior mass of bin i and v B_i the histogram's mass there."""
    ref = _reference_masses(reference, hist)
    est = hist.masses * hist.bin_volume
    denom = float(np.sum(ref**2))
    if denom == 0.0:
        raise DiagnosticError("reference has zero mass on the grid")
    return float(np.sqrt(np.sum((ref - est) ** 2) / denom))


def relative_moment_error(samples, weights, order, reference, *, absolute=False):
    """|sum w_bar x^m - E[X^m]| / |E[X^m]| for scalar samples; the absolute
    variant drops the denominator (needed when the reference moment is 0)."""
    x = np.asarray(samples, dtype=float).ravel()
    if order not in (1, 2, 3):
        raise ParameterError("moment order must be 1, 2 or 3")
    if weights is None:
        w = np.full(x.shape[0], 1.0 / max(x.shape[0], 1))
    else:
        w = np.asarray(weights, dtype=float).ravel()
        if w.shape != x.shape:
            raise ParameterError("weights length does not match samples")
        s = w.sum()
        if not np.isfinite(s) or s <= 0:
            raise DiagnosticError("weights must have positive finite sum")
        w = w / s
    est = float(np.sum(w * x**order))
    ref = float(reference)
    if absolute:
        return abs(est - ref)
    if ref == 0.0:
        raise DiagnosticError(
            "reference moment is zero; use the absolute error variant"
        )
    return abs(est - ref) / abs(ref)


def kl_divergence(x, posterior, log_prior, *, log_posterior=None):
    """Trapezoid quadrature of integral pi log(pi / pi0) on the grid x.

    posterior: normalized density values on x, or a callable evaluated
    there. log_prior: callable or array. log_posterior may be supplied
    (callable or array) to avoid log(0) in regions where the normalized
    density underflowed; zero-density nodes contribute nothing either way.
    Returns +inf where the prior vanishes on the posterior's support.
    """
    x = np.asarray(x, dtype=float).ravel()
    p = posterior(x[:, None]) if callable(posterior) else posterior
    p = np.asarray(p, dtype=float).ravel()
    if x.shape != p.shape or x.size < 2:
        raise ParameterError("need matching grid and density arrays")
    if np.any(p < 0):
        raise ParameterError("posterior density must be nonnegative")
    lp0 = log_prior(x[:, None]) if callable(log_prior) else np.asarray(log_prior)
    lp0 = np.asarray(lp0, dtype=float).ravel()
    if log_posterior is None:
        with np.errstate(divide="ignore"):
            lp = np.log(p)
    else:
        lp = log_posterior(x[:, None]) if callable(log_posterior) else log_posterior
        lp = np.asarray(lp, dtype=float).ravel()
    support = p > 0
    if np.any(support & (lp0 == -np.inf)):
        return float("inf")
    integrand = np.zeros_like(p)
    integrand[support] = p[support] * (lp[support] - lp0[support])
    return float(np.sum((integrand[1:] + integrand[:-1]) * 0.5 * np.diff(x)))
