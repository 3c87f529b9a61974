import math

import numpy as np
import pytest
from scipy import stats

import _oracles as oracle
from pais.diagnostics import (
    DiagnosticsRecord,
    build_histogram,
    ess,
    ess_from_log,
    kl_divergence,
    relative_l2_error,
    relative_moment_error,
    weight_variance,
    weight_variance_from_log,
)
from pais.errors import DiagnosticError, ParameterError
from pais.targets import make_gaussian_target


def test_ess_hand_value_and_bounds():
    assert ess(np.array([2.0, 1.0, 1.0])) == pytest.approx(oracle.ESS_211, rel=1e-14)
    assert ess(np.ones(7)) == pytest.approx(7.0, rel=1e-14)
    assert ess(np.array([5.0, 0.0, 0.0])) == pytest.approx(1.0, rel=1e-14)
    rng = np.random.default_rng(0)
    for _ in range(20):
        w = rng.random(30)
        v = ess(w)
        assert 1.0 <= v <= 30.0


def test_ess_log_space_matches_and_survives_extremes():
    lw = np.log(np.array([2.0, 1.0, 1.0]))
    assert ess_from_log(lw) == pytest.approx(oracle.ESS_211, rel=1e-12)
    extreme = np.array([-1000.0, 0.0])
    assert ess_from_log(extreme) == pytest.approx(1.0, rel=1e-12)
    shifted = ess_from_log(extreme - 5000.0)
    assert shifted == pytest.approx(1.0, rel=1e-12)
    assert ess_from_log(np.array([-np.inf, -2.0])) == pytest.approx(1.0)


def test_ess_rejects_all_zero():
    with pytest.raises(DiagnosticError):
        ess(np.zeros(3))
    with pytest.raises(DiagnosticError):
        ess_from_log(np.full(3, -np.inf))


def test_weight_variance_hand_value():
    assert weight_variance(np.array([2.0, 1.0, 1.0])) == pytest.approx(
        oracle.VARW_211, rel=1e-14
    )
    lw = np.log(np.array([2.0, 1.0, 1.0])) + 40.0
    assert weight_variance_from_log(lw) == pytest.approx(oracle.VARW_211, rel=1e-12)
    assert weight_variance(np.ones(5)) == 0.0
    assert weight_variance(np.array([3.0])) == 0.0


def test_ess_variance_identity():
    # For mean-one weights, ess = M / mean(w^2) and var uses ddof=1, so
    # ess * (1 + var * (M-1)/M) = M exactly.
    rng = np.random.default_rng(8)
    for m in (2, 5, 50, 400):
        w = rng.random(m) + 0.05
        v = weight_variance(w)
        e = ess(w)
        assert e * (1.0 + v * (m - 1) / m) == pytest.approx(m, rel=1e-10)


def test_histogram_counts_and_normalization():
    samples = np.array([[0.5], [1.5], [1.6], [2.5], [9.0]])
    hist = build_histogram(samples, edges=((0.0, 3.0, 3),))
    assert hist.masses.shape == (3,)
    # 4 of 5 samples in range; densities are count/(in_range * width).
    assert np.allclose(hist.masses, np.array([1, 2, 1]) / 4.0)
    assert hist.out_of_range == pytest.approx(0.2)
    assert hist.masses.sum() * hist.bin_volume == pytest.approx(1.0)


def test_histogram_weighted_and_2d():
    samples = np.array([[0.5, 0.5], [0.5, 1.5], [1.5, 1.5]])
    weights = np.array([1.0, 1.0, 2.0])
    hist = build_histogram(
        samples, weights, edges=((0.0, 2.0, 2), (0.0, 2.0, 2))
    )
    assert hist.masses.shape == (2, 2)
    expect = np.array([[1.0, 1.0], [0.0, 2.0]]) / 4.0 / 1.0
    assert np.allclose(hist.masses, expect)
    assert hist.out_of_range == 0.0
    assert hist.masses.sum() * hist.bin_volume == pytest.approx(1.0)


def test_histogram_edge_validation():
    samples = np.zeros((3, 1))
    with pytest.raises(ParameterError):
        build_histogram(samples, edges=(np.array([0.0, 0.5, 2.0]),))
    with pytest.raises(ParameterError):
        build_histogram(np.zeros((3, 3)), edges=((0, 1, 2),) * 3)
    with pytest.raises(DiagnosticError):
        build_histogram(samples, weights=np.zeros(3), edges=((0.0, 1.0, 2),))


def test_relative_l2_error_two_bin_oracle():
    hist = build_histogram(
        np.array([[0.25], [0.75]]), edges=((0.0, 1.0, 2),)
    )
    assert np.allclose(hist.masses, [1.0, 1.0])
    err = relative_l2_error(hist, np.array([0.6, 0.4]))
    assert err == pytest.approx(oracle.TWO_BIN_L2, rel=1e-12)


def test_relative_l2_error_perfect_match_is_zero():
    t = make_gaussian_target(0.01, 0.01, 4.0)
    ref = t.reference
    edges = ref.bin_edges[0]
    centers = 0.5 * (edges[:-1] + edges[1:])
    # Feed the exact reference masses back as a weighted point cloud.
    hist = build_histogram(
        centers[:, None], ref.bin_masses, edges=(edges,)
    )
    assert relative_l2_error(hist, ref) < 1e-12


def test_relative_l2_error_accepts_reference_object_and_checks_grid():
    t = make_gaussian_target(0.01, 0.01, 4.0)
    hist = build_histogram(np.full((10, 1), 2.0), edges=((0.0, 4.0, 200),))
    direct = relative_l2_error(hist, t.reference)
    raw = relative_l2_error(hist, t.reference.bin_masses)
    assert direct == pytest.approx(raw, rel=1e-14)
    other = build_histogram(np.full((10, 1), 2.0), edges=((0.0, 4.0, 100),))
    with pytest.raises(DiagnosticError):
        relative_l2_error(other, t.reference)


def test_relative_moment_error_hand_values():
    samples = np.array([[1.0], [3.0]])
    weights = np.array([0.25, 0.75])
    # Weighted raw moments: m1 = 2.5, m2 = 7, m3 = 20.5.
    assert relative_moment_error(samples, weights, 1, 2.0) == pytest.approx(0.25)
    assert relative_moment_error(samples, weights, 2, 8.0) == pytest.approx(0.125)
    assert relative_moment_error(samples, weights, 3, 20.5) == pytest.approx(0.0)
    with pytest.raises(ParameterError):
        relative_moment_error(samples, weights, 4, 1.0)


def test_relative_moment_error_zero_reference_needs_absolute():
    samples = np.array([[1.0], [-1.0]])
    weights = np.ones(2)
    with pytest.raises(DiagnosticError):
        relative_moment_error(samples, weights, 1, 0.0)
    val = relative_moment_error(samples, weights, 1, 0.0, absolute=True)
    assert val == pytest.approx(0.0, abs=1e-15)


def test_relative_moment_error_vector_reference():
    t = make_gaussian_target(0.01, 0.01, 4.0)
    rng = np.random.default_rng(2)
    samples = rng.normal(2.0, np.sqrt(0.005), size=(200_000, 1))
    w = np.ones(len(samples))
    for order in (1, 2, 3):
        ref = t.reference.moments[0][order - 1]
        assert relative_moment_error(samples, w, order, ref) < 0.01


def test_kl_divergence_gaussian_closed_form():
    mu, s2, tau2 = 1.2, 0.3, 2.0
    x = np.linspace(mu - 8 * math.sqrt(s2), mu + 8 * math.sqrt(s2), 40_001)
    post = stats.norm(mu, math.sqrt(s2)).pdf(x)
    log_prior = stats.norm(0.0, math.sqrt(tau2)).logpdf(x)
    closed = 0.5 * (math.log(tau2 / s2) + (s2 + mu**2) / tau2 - 1.0)
    assert kl_divergence(x, post, log_prior) == pytest.approx(closed, abs=1e-6)
    # Callable arguments behave identically to arrays.
    via_callables = kl_divergence(
        x,
        lambda q: stats.norm(mu, math.sqrt(s2)).pdf(q),
        lambda q: stats.norm(0.0, math.sqrt(tau2)).logpdf(q),
    )
    assert via_callables == pytest.approx(closed, abs=1e-6)


def test_kl_divergence_vanishing_prior_is_infinite():
    x = np.linspace(-1.0, 1.0, 2001)
    post = stats.norm(0.0, 0.2).pdf(x)
    log_prior = np.where(x > 0.0, 0.0, -np.inf)
    assert kl_divergence(x, post, log_prior) == np.inf


def test_diagnostics_record_fields():
    rec = DiagnosticsRecord(iteration=3, ess=12.5, weight_variance=0.7, beta=0.05)
    assert rec.acceptance_count is None
    rec2 = DiagnosticsRecord(
        iteration=0, ess=50.0, weight_variance=0.0, beta=0.1, acceptance_count=27
    )
    assert rec2.acceptance_count == 27
