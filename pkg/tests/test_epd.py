import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from epq.epd import (KAPPA_GRID, EpdParams, RateDistortionPoint, cdf_diagnostic, epd_cdf,
                     epd_cell_moments, epd_diff_entropy, epd_icdf, epd_loglik_bits,
                     epd_logpdf_bits, epd_mle, epd_pdf, epd_quant_rd_numeric, epd_sample,
                     epd_variance, kappa_profile, laplace_quant_entropy, laplace_quant_mse,
                     smooth_rate_approx)

kappas = st.floats(0.3, 3.0)
sigmas = st.floats(0.05, 20.0)


def gennorm(p):
    # scipy's generalized normal uses exp(-|x/s|^beta); ours divides the power by kappa
    return stats.gennorm(p.kappa, loc=p.mu, scale=p.sigma * p.kappa ** (1.0 / p.kappa))


def test_params_validation():
    with pytest.raises(ValueError):
        EpdParams(0.0, 1.0)
    with pytest.raises(ValueError):
        EpdParams(1.0, -1.0)
    with pytest.raises(ValueError):
        EpdParams(1.0, 1.0, float("nan"))
    with pytest.raises(ValueError):
        RateDistortionPoint(-1.0, 0.0)


def test_named_cases():
    lap = EpdParams(1.0, 2.0)
    x = np.linspace(-5, 5, 11)
    np.testing.assert_allclose(epd_pdf(lap, x), np.exp(-np.abs(x) / 2) / 4, rtol=1e-14)
    gau = EpdParams(2.0, 1.5, 0.3)
    np.testing.assert_allclose(epd_pdf(gau, x), stats.norm(0.3, 1.5).pdf(x), rtol=1e-13)


@pytest.mark.parametrize("kappa,var", [(0.5, 7.5), (1.0, 2.0), (2.0, 1.0)])
def test_variance_constants(kappa, var):
    assert epd_variance(EpdParams(kappa, 1.0)) == pytest.approx(var, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(k=kappas, s=sigmas, mu=st.floats(-5, 5))
def test_against_scipy(k, s, mu):
    p = EpdParams(k, s, mu)
    ref = gennorm(p)
    x = mu + s * np.array([-7.0, -1.3, -0.1, 0.0, 0.4, 2.2, 9.0])
    np.testing.assert_allclose(epd_pdf(p, x), ref.pdf(x), rtol=1e-10)
    np.testing.assert_allclose(epd_cdf(p, x), ref.cdf(x), rtol=1e-10, atol=1e-300)
    assert epd_variance(p) == pytest.approx(ref.var(), rel=1e-10)
    assert epd_diff_entropy(p) == pytest.approx(ref.entropy() / math.log(2), rel=1e-9, abs=1e-9)


@settings(max_examples=60, deadline=None)
@given(k=kappas, s=sigmas, u=st.floats(1e-12, 1 - 1e-12))
def test_icdf_inverts_cdf(k, s, u):
    p = EpdParams(k, s, 1.0)
    x = epd_icdf(p, u)
    tol = 1e-10 * min(u, 1 - u) + 1e-15
    assert epd_cdf(p, x) == pytest.approx(u, abs=tol)


def test_icdf_rejects_endpoints():
    with pytest.raises(ValueError):
        epd_icdf(EpdParams(1, 1), [0.0, 0.5])


def test_logpdf_finite_in_far_tail():
    p = EpdParams(2.0, 1.0)
    assert epd_pdf(p, 60.0) == 0.0
    assert epd_logpdf_bits(p, 60.0) == pytest.approx(math.log2(epd_pdf(p, 0.0)) - 1800 / math.log(2))


def test_integrates_to_one():
    for k in (0.3, 0.5, 1.0, 2.0, 3.0):
        p = EpdParams(k, 1.0)
        tot = 2 * integrate.quad(lambda x: epd_pdf(p, x), 0, np.inf, limit=200)[0]
        assert tot == pytest.approx(1.0, abs=1e-9)


def test_entropy_closed_forms():
    s = 1.7
    lap = math.log2(2 * math.e * s)
    gau = 0.5 * math.log2(2 * math.pi * math.e * s * s)
    assert epd_diff_entropy(EpdParams(1.0, s)) == pytest.approx(lap, abs=1e-12)
    assert epd_diff_entropy(EpdParams(2.0, s)) == pytest.approx(gau, abs=1e-12)


def test_loglik_matches_pdf():
    p = EpdParams(0.7, 2.0)
    x = epd_sample(p, 1000, seed=3)
    assert epd_loglik_bits(p, x) == pytest.approx(np.mean(np.log2(epd_pdf(p, x))), rel=1e-12)


def test_sample_is_seeded_and_distributed():
    p = EpdParams(0.5, 1.0)
    a = epd_sample(p, 20000, seed=5)
    assert np.array_equal(a, epd_sample(p, 20000, seed=5))
    assert stats.kstest(a, gennorm(p).cdf).pvalue > 1e-3


def test_mle_recovers_parameters():
    p = EpdParams(0.8, 3.0)
    x = epd_sample(p, 200_000, seed=11)
    fit, ll = epd_mle(x)
    assert fit.kappa == pytest.approx(0.8, abs=0.02)
    assert fit.sigma == pytest.approx(3.0, rel=0.02)
    assert ll == pytest.approx(epd_loglik_bits(fit, x), abs=1e-9)
    assert ll >= epd_loglik_bits(p, x) - 1e-9


def test_mle_scale_closed_form():
    x = np.array([-2.0, -1.0, 0.5, 3.0])
    fit, _ = epd_mle(x, kappa_policy=1.0)
    assert fit.sigma == pytest.approx(np.mean(np.abs(x)))
    fit, _ = epd_mle(x, kappa_policy=2.0, mu_policy="mean")
    assert fit.mu == pytest.approx(0.125)
    assert fit.sigma == pytest.approx(np.std(x))


def test_mle_rejects_degenerate():
    with pytest.raises(ValueError):
        epd_mle([1.0, 1.0, 1.0])
    with pytest.raises(ValueError):
        epd_mle([1.0, 2.0], mu_policy="mode")


def test_kappa_profile_peaks_at_truth():
    x = epd_sample(EpdParams(2.0, 1.0), 50_000, seed=2)
    prof = kappa_profile(x)
    assert prof.shape == KAPPA_GRID.shape
    assert abs(KAPPA_GRID[np.argmax(prof)] - 2.0) <= 0.15


def test_cell_moments_against_quadrature():
    p = EpdParams(0.6, 1.3, 0.2)
    edges = np.array([-np.inf, -2.0, -0.3, 0.1, 1.5, np.inf])
    nodes = np.array([-3.0, -1.0, 0.0, 0.7, 2.9])
    prob, sq = epd_cell_moments(p, edges, nodes)
    for i in range(5):
        a, b = edges[i], edges[i + 1]
        pr = integrate.quad(lambda x: epd_pdf(p, x), a, b, points=[0.2] if a < 0.2 < b else None)[0]
        se = integrate.quad(lambda x: (x - nodes[i]) ** 2 * epd_pdf(p, x), a, b)[0]
        assert prob[i] == pytest.approx(pr, rel=1e-8)
        assert sq[i] == pytest.approx(se, rel=1e-7)
    assert prob.sum() == pytest.approx(1.0, abs=1e-14)


def test_laplace_closed_forms_match_numeric():
    for q in (0.05, 0.5, 2.0, 20.0):
        rd = epd_quant_rd_numeric(EpdParams(1.0, 1.0), q)
        assert rd.distortion == pytest.approx(laplace_quant_mse(1.0, q), rel=1e-9)
        assert rd.rate == pytest.approx(laplace_quant_entropy(q), abs=1e-9)


def test_laplace_limits():
    # fine quantization: q^2/12 error and h - lg q entropy
    q = 1e-3
    assert laplace_quant_mse(1.0, q) == pytest.approx(q * q / 12, rel=1e-5)
    assert laplace_quant_entropy(q) == pytest.approx(math.log2(2 * math.e) - math.log2(q), abs=1e-5)
    # coarse: everything in the zero cell
    assert laplace_quant_mse(1.0, 1e4) == pytest.approx(2.0)
    assert laplace_quant_entropy(1e4) == pytest.approx(0.0, abs=1e-12)
    assert np.isfinite(laplace_quant_entropy(5000.0))


def test_smooth_rate():
    assert smooth_rate_approx(5.0, 2.0 ** -3) == pytest.approx(8.0, abs=1e-4)
    assert smooth_rate_approx(-5.0, 1.0) == pytest.approx(0.0, abs=1e-3)
    assert smooth_rate_approx(0.0, 1.0) == pytest.approx(0.5)
    with pytest.raises(ValueError):
        smooth_rate_approx(1.0, 0.0)


def test_cdf_diagnostic_small_for_true_model():
    p = EpdParams(0.5, 1.0)
    x = epd_sample(p, 10_000, seed=4)
    ranks, dev = cdf_diagnostic(x, p)
    assert ranks.shape == dev.shape == (10_000,)
    assert np.max(np.abs(dev)) < 3 / math.sqrt(10_000)
    _, dev_wrong = cdf_diagnostic(x, EpdParams(2.0, 1.0))
    assert np.max(np.abs(dev_wrong)) > 0.05
    with pytest.raises(ValueError):
        cdf_diagnostic(x[:5], p)
