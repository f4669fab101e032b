import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from epq.ladder import (DEFAULT_E, GOLOMB_COEFF, build_ladder, cell_width, cross_entropy,
                        flush_bits, flushed_probs, geometric_entropy, geometric_probs,
                        geometric_tail_entropy, golomb_bits, golomb_decode, golomb_encode,
                        golomb_optimal_M, golomb_penalty, golomb_pow2_m, ladder_lookup,
                        lsb_flush_bits, lsb_flush_penalty, penalty_coeff, residue_table_probs)

widths = st.floats(0.05, 500.0)


def brute_geometric(sigma, n=None):
    """Quantized Laplace masses over a wide explicit range."""
    n = n or int(60 * sigma) + 60
    x = np.arange(-n, n + 1)
    p = np.exp(-np.abs(x) / sigma) * math.sinh(0.5 / sigma)
    p[n] = 1 - math.exp(-0.5 / sigma)
    return x, p


@settings(max_examples=60, deadline=None)
@given(s=widths, x_max=st.integers(1, 60))
def test_geometric_probs_sum_and_values(s, x_max):
    t = geometric_probs(s, x_max)
    assert t.probs.sum() == pytest.approx(1.0, abs=1e-12)
    x, p = brute_geometric(s)
    mid = len(x) // 2
    np.testing.assert_allclose(t.central, p[mid - x_max: mid + x_max + 1], rtol=1e-12)


@settings(max_examples=60, deadline=None)
@given(s=st.floats(1.0, 300.0), m=st.integers(0, 5), x_max=st.integers(1, 30))
def test_flushed_probs_match_brute_force(s, m, x_max):
    t = flushed_probs(s, m, x_max)
    x, p = brute_geometric(s, n=int(60 * s) + (x_max + 2) * (1 << m))
    v = x >> m  # floor shift, same as the coder's split
    for i, val in enumerate(range(-x_max, x_max + 1)):
        assert t.central[i] == pytest.approx(p[v == val].sum(), rel=1e-10, abs=1e-300)
    assert t.probs[0] == pytest.approx(p[v < -x_max].sum(), rel=1e-8, abs=1e-18)
    assert t.probs[-1] == pytest.approx(p[v > x_max].sum(), rel=1e-8, abs=1e-18)


def test_flushed_probs_validation():
    with pytest.raises(ValueError):
        flushed_probs(0.0, 0, 3)
    with pytest.raises(ValueError):
        flushed_probs(1.0, 0, 0)


def test_residue_table_tail_and_floor():
    for s in (0.1, 1.0, 7.0, 30.0, 250.0):
        m = flush_bits(s)
        t = residue_table_probs(s, m)
        assert t.m == m
        assert t.central.min() >= 2.0 ** -13 or t.x_max == 1
        # either the folded tails are negligible or widening would add a
        # symbol below the frequency floor
        wider = flushed_probs(s, m, t.x_max + 1).central
        assert t.escape_mass < 2.0 ** -15 or min(wider[0], wider[-1]) < 2.0 ** -13


@settings(max_examples=100, deadline=None)
@given(p=widths, q=widths)
def test_cross_entropy_against_direct_sum(p, q):
    x, pp = brute_geometric(p)
    lq = -np.abs(x) / q / math.log(2) + math.log2(math.sinh(0.5 / q))
    lq[len(x) // 2] = math.log2(-math.expm1(-0.5 / q))
    direct = -np.sum(pp * lq)
    assert cross_entropy(p, q) == pytest.approx(direct, rel=1e-10, abs=1e-10)
    # Gibbs: coding with the wrong table never helps
    assert cross_entropy(p, q) >= geometric_entropy(p) - 1e-12


def test_cross_entropy_validation():
    with pytest.raises(ValueError):
        cross_entropy(0.0, 1.0)


def test_entropy_large_width_asymptote():
    s = 1000.0
    assert geometric_entropy(s) == pytest.approx(math.log2(2 * math.e * s), abs=1e-5)


@pytest.mark.parametrize("s", [0.3, 1.0, 4.0, 20.0, 100.0])
def test_penalty_coeff_is_curvature(s):
    h = 1e-3 * s
    f = lambda t: cross_entropy(s, t)
    fd = (f(s + h) - 2 * f(s) + f(s - h)) / (h * h)
    # D is the Taylor coefficient: penalty ~ D (Sigma' - Sigma)^2
    assert penalty_coeff(s) == pytest.approx(fd / 2, rel=1e-4)


def test_frozen_ladder():
    L = build_ladder()
    assert len(L) == 40
    assert L.nodes[0] == 0.1
    assert L.nodes[-2] < 256 <= L.nodes[-1]
    # frozen values of the default ladder
    assert L.nodes[1] == pytest.approx(0.286991177893, rel=1e-10)
    assert L.nodes[10] == pytest.approx(7.53881499094, rel=1e-10)
    assert L.nodes[39] == pytest.approx(264.240512115, rel=1e-10)
    np.testing.assert_allclose(L.widths, [cell_width(s) for s in L.nodes[:-1]])
    assert L.E == DEFAULT_E


def test_ladder_validation():
    with pytest.raises(ValueError):
        build_ladder(1.0, 0.5)
    with pytest.raises(ValueError):
        build_ladder(0.1, 10, E=0.0)


@settings(max_examples=100, deadline=None)
@given(s=st.floats(0.01, 1000.0))
def test_lookup_picks_nearest(s):
    L = build_ladder()
    nodes = np.asarray(L.nodes)
    i = ladder_lookup(L, s)
    assert abs(nodes[i] - s) <= np.min(np.abs(nodes - s)) + 1e-12


def test_lookup_vectorized():
    L = build_ladder()
    s = np.array([0.0, 0.1, 1.0, 1e6])
    out = ladder_lookup(L, s)
    assert out[0] == 0 and out[-1] == len(L) - 1
    assert out[2] == ladder_lookup(L, 1.0)


def test_flush_bits():
    assert flush_bits(3.0) == 0
    assert flush_bits(8.0) == 0
    assert flush_bits(16.0) == 1
    assert flush_bits(8 * 2 ** 1.49) == 1
    assert flush_bits(8 * 2 ** 1.51) == 2
    assert flush_bits(256.0) == 5


def test_golomb_coefficient():
    # minimize golomb_bits over M for a large width
    from scipy.optimize import minimize_scalar
    s = 1000.0
    r = minimize_scalar(lambda M: golomb_bits(s, M), bounds=(0.1 * s, 2 * s), method="bounded",
                        options={"xatol": 1e-6})
    assert r.x / s == pytest.approx(GOLOMB_COEFF, rel=1e-3)
    assert golomb_optimal_M(s) == pytest.approx(GOLOMB_COEFF * s)


def test_tail_entropy_direct():
    s = 5.0
    a = math.exp(-1 / s)
    k = np.arange(2000)
    p = a ** k * (1 - a)
    assert geometric_tail_entropy(s) == pytest.approx(-np.sum(p * np.log2(p)), rel=1e-12)


def test_lsb_flush_direct():
    s, m = 40.0, 2
    a = math.exp(-1 / s)
    k = np.arange(4000)
    p = a ** k * (1 - a)
    hi = np.bincount(k >> m, weights=p)
    direct = m - np.sum(hi[hi > 0] * np.log2(hi[hi > 0]))
    assert lsb_flush_bits(s, m) == pytest.approx(direct, rel=1e-10)
    assert lsb_flush_penalty(s, 0) == pytest.approx(0.0, abs=1e-12)


def test_golomb_penalty_value():
    assert golomb_penalty(200.0, golomb_optimal_M(200.0)) == pytest.approx(0.02749, abs=2e-4)


def test_pow2_exponent():
    assert golomb_pow2_m(1.0) == 0
    assert golomb_pow2_m(100.0) == round(math.log2(66.794))


@settings(max_examples=200, deadline=None)
@given(x=st.integers(0, 10_000), m=st.integers(0, 10))
def test_golomb_code_round_trip(x, m):
    M = 1 << m
    bits = golomb_encode(x, M)
    assert set(bits) <= {"0", "1"}
    assert len(bits) == (x >> m) + 1 + m
    assert golomb_decode(bits + "1101", M) == (x, len(bits))


def test_golomb_code_examples_and_errors():
    assert golomb_encode(0, 1) == "0"
    assert golomb_encode(5, 4) == "1001"
    assert golomb_encode(9, 8) == "10001"
    with pytest.raises(ValueError):
        golomb_encode(-1, 4)
    with pytest.raises(ValueError):
        golomb_encode(3, 6)
