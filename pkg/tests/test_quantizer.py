import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from epq.epd import EpdParams, epd_cdf, epd_pdf
from epq.quantizer import (QuantizerN, asymptotic_distortion, asymptotic_entropy,
                           density_distortion_optimal, density_from_values, density_rd,
                           dequantize, eval_rd, nodes_from_density, predicted_distortion,
                           quantize, uniform_density)


def lloyd_max(p, N, iters=3000):
    """Classic Lloyd iteration on an EPD, as an independent optimum."""
    nodes = np.asarray(density_distortion_optimal(p).icdf((np.arange(N) + 0.5) / N))
    grid = np.linspace(p.mu - 40 * p.sigma, p.mu + 40 * p.sigma, 200001)
    w = epd_pdf(p, grid)
    for _ in range(iters):
        b = 0.5 * (nodes[1:] + nodes[:-1])
        idx = np.searchsorted(b, grid)
        m = np.bincount(idx, w, N)
        s = np.bincount(idx, w * grid, N)
        new = s / m
        if np.max(np.abs(new - nodes)) < 1e-12:
            break
        nodes = new
    return QuantizerN(nodes, 0.5 * (nodes[1:] + nodes[:-1]))


def test_uniform_nodes_exact():
    Q = uniform_density(0.0, 1.0)
    q = nodes_from_density(Q, 4)
    np.testing.assert_allclose(q.nodes, [0.125, 0.375, 0.625, 0.875], atol=1e-12)
    np.testing.assert_allclose(q.boundaries, [0.25, 0.5, 0.75], atol=1e-12)
    assert q.N == 4 and q.edges[0] == -np.inf


def test_density_validation():
    with pytest.raises(ValueError):
        density_from_values([0, 1, 2], [1, -1, 1])
    with pytest.raises(ValueError):
        density_from_values([0, 1, 2], [0, 0, 0])
    with pytest.raises(ValueError):
        uniform_density(1.0, 1.0)
    with pytest.raises(ValueError):
        density_distortion_optimal(EpdParams(1, 1), p=0.5)
    with pytest.raises(ValueError):
        density_distortion_optimal(lambda x: x)
    with pytest.raises(ValueError):
        density_rd(EpdParams(1, 1), 1.0, p=3)
    with pytest.raises(ValueError):
        density_rd(EpdParams(1, 1), -1.0)
    with pytest.raises(ValueError):
        nodes_from_density(uniform_density(0, 1), 0)
    with pytest.raises(ValueError):
        QuantizerN(np.array([1.0, 0.5]), np.array([0.7]))


@settings(max_examples=30, deadline=None)
@given(k=st.floats(0.4, 2.5), s=st.floats(0.2, 5.0), p=st.sampled_from([1.0, 2.0, 3.0]))
def test_optimal_density_ratio_constant(k, s, p):
    rho = EpdParams(k, s)
    d = density_distortion_optimal(rho, p)
    assert d.total == pytest.approx(1.0, abs=1e-12)
    r = epd_pdf(rho, d.x)
    ok = r > 1e-200
    ratio = r[ok] / d.q[ok] ** (p + 1)
    assert np.ptp(ratio) / ratio.mean() < 1e-9


def test_optimal_density_tabulated_route_agrees():
    rho = EpdParams(0.5, 1.0)
    a = density_distortion_optimal(rho, 2.0)
    b = density_distortion_optimal((a.x, epd_pdf(rho, a.x)), 2.0)
    np.testing.assert_allclose(a.q, b.q, rtol=1e-9)


def test_gaussian_optimal_density_is_sqrt3_wider():
    d = density_distortion_optimal(EpdParams(2.0, 1.0), 2.0)
    np.testing.assert_allclose(d.q, stats.norm(0, math.sqrt(3)).pdf(d.x), rtol=1e-6, atol=1e-300)


@pytest.mark.parametrize("p", [1, 2])
def test_rd_lambda_zero_is_distortion_optimal(p):
    rho = EpdParams(0.5, 1.0)
    a = density_rd(rho, 0.0, p)
    b = density_distortion_optimal(rho, p)
    np.testing.assert_allclose(a.q, b.q, atol=1e-9)


@pytest.mark.parametrize("p", [1, 2])
def test_rd_density_solves_stationarity(p):
    rho = EpdParams(1.0, 1.0)
    lam = 3.0
    d = density_rd(rho, lam, p)
    r = epd_pdf(rho, d.x)
    lhs = d.mu_mult * r / d.q ** (p + 1) - 2 * lam * r / d.q
    ok = d.q > 1e-6
    np.testing.assert_allclose(lhs[ok], 1.0, rtol=1e-8)
    assert d.total == pytest.approx(1.0, abs=1e-10)


def test_rd_density_flattens_with_lambda():
    rho = EpdParams(1.0, 1.0)
    dom = (-10.0, 10.0)
    peaks = [density_rd(rho, lam, 1, domain=dom).q.max() for lam in (0, 1, 10, 100)]
    assert all(a > b for a, b in zip(peaks, peaks[1:]))
    assert peaks[-1] < 0.1


def test_icdf_inverts_cdf():
    d = density_distortion_optimal(EpdParams(2.0, 1.0))
    u = np.linspace(0.001, 0.999, 101)
    np.testing.assert_allclose(d.cdf(d.icdf(u)), u, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(N=st.integers(1, 40), x=st.lists(st.floats(-30, 30), min_size=1, max_size=20))
def test_quantize_dequantize(N, x):
    Q = density_distortion_optimal(EpdParams(1.0, 1.0))
    idx = quantize(Q, N, x)
    assert np.all((idx >= 1) & (idx <= N))
    nodes = nodes_from_density(Q, N).nodes
    y = dequantize(Q, N, idx)
    # midpoint rule picks the nearest node
    for xi, yi in zip(x, np.atleast_1d(y)):
        assert abs(xi - yi) <= np.min(np.abs(nodes - xi)) + 1e-9
    np.testing.assert_array_equal(quantize(Q, N, nodes), np.arange(1, N + 1))


def test_lattice_rule():
    Q = uniform_density(0.0, 1.0)
    assert quantize(Q, 4, [0.0, 0.1, 0.26, 0.99, 5.0], rule="lattice").tolist() == [1, 1, 2, 4, 4]
    with pytest.raises(ValueError):
        quantize(Q, 4, 0.5, rule="nearest")
    with pytest.raises(ValueError):
        dequantize(Q, 4, 5)


def test_eval_rd_epd_matches_quadrature_route():
    rho = EpdParams(0.7, 1.2)
    q = nodes_from_density(density_distortion_optimal(rho), 7)
    a = eval_rd(rho, q)
    b = eval_rd(lambda x: epd_pdf(rho, x), q)
    assert a.rate == pytest.approx(b.rate, rel=1e-7)
    assert a.distortion == pytest.approx(b.distortion, rel=1e-6)


def test_single_node():
    rho = EpdParams(1.0, 1.0)
    pt = eval_rd(rho, nodes_from_density(density_distortion_optimal(rho), 1))
    assert pt.rate == 0.0
    assert pt.distortion == pytest.approx(2.0, abs=1e-9)


def test_density_quantizer_approaches_lloyd_max():
    # the compander is only asymptotically optimal: its excess decays like 1/N
    rho = EpdParams(2.0, 1.0)
    excess = []
    for N in (8, 16, 32):
        ours = eval_rd(rho, nodes_from_density(density_distortion_optimal(rho), N)).distortion
        best = eval_rd(rho, lloyd_max(rho, N)).distortion
        assert best <= ours * (1 + 1e-9)
        excess.append((ours / best - 1) * N)
    assert max(excess) < 1.3
    assert excess[2] / 32 < excess[1] / 16 < excess[0] / 8


@pytest.mark.parametrize("p", [1.0, 2.0])
def test_predicted_distortion_large_N(p):
    rho = EpdParams(2.0, 1.0)
    Q = density_distortion_optimal(rho, p)
    N = 256
    q = nodes_from_density(Q, N)
    if p == 2.0:
        actual = eval_rd(rho, q).distortion
    else:
        f = lambda x: np.abs(x - q.nodes[np.clip(np.searchsorted(q.boundaries, x), 0, N - 1)]) * epd_pdf(rho, x)
        pts = np.concatenate(([-12.0], q.boundaries[(q.boundaries > -12) & (q.boundaries < 12)], [12.0]))
        actual = sum(integrate.quad(f, a, b)[0] for a, b in zip(pts[:-1], pts[1:]))
    pred = predicted_distortion(asymptotic_distortion(rho, Q, p), N, p)
    assert actual == pytest.approx(pred, rel=0.03)


def test_uniform_functionals():
    rho = EpdParams(1.0, 1.0)
    U = uniform_density(-10.0, 10.0)
    # q = 1/20 everywhere, so D is 400 times the mass inside the domain
    assert asymptotic_distortion(rho, U, 2.0) == pytest.approx(400.0 * -math.expm1(-10.0), rel=1e-6)
    # H + lg N approximates the rate at moderate N
    N = 31
    pt = eval_rd(rho, nodes_from_density(U, N))
    assert asymptotic_entropy(rho, U) + math.log2(N) == pytest.approx(pt.rate, abs=0.05)


def test_functionals_reject_vanishing_q():
    rho = EpdParams(1.0, 1.0)
    x = np.linspace(-5, 5, 101)
    q = density_from_values(x, np.where(x > 0, 1.0, 0.0))
    with pytest.raises(ValueError):
        asymptotic_distortion(rho, q)
    with pytest.raises(ValueError):
        asymptotic_entropy(rho, q)


def test_optimal_beats_uniform():
    rho = EpdParams(2.0, 1.0)
    opt = eval_rd(rho, nodes_from_density(density_distortion_optimal(rho), 15)).distortion
    uni = eval_rd(rho, nodes_from_density(uniform_density(-20, 20), 15)).distortion
    assert opt < uni / 3


def test_symmetric_density_gives_symmetric_nodes():
    d = density_distortion_optimal(EpdParams(0.5, 1.0))
    for N in (5, 6):
        nodes = nodes_from_density(d, N).nodes
        np.testing.assert_allclose(nodes, -nodes[::-1], atol=1e-10)
