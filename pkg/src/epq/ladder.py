"""Sigma ladder: a finite set of coding tables indexed by normalized width.

A residue with Laplace width ``sigma`` quantized with step ``q`` is, in units
of the step, a two-sided geometric variable with width ``Sigma = sigma/q``.
Coding it with the table built for a nearby node ``Sigma'`` instead costs a
cross-entropy penalty that is quadratic in ``Sigma' - Sigma``; the ladder
spaces its nodes so that this penalty stays around a chosen budget ``E``.

The module also holds the tail codes: Golomb codes for escapes and the
penalty formulas for Golomb coding and raw LSB flushing.
"""

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "GeometricTable",
    "geometric_probs",
    "flushed_probs",
    "residue_table_probs",
    "geometric_entropy",
    "cross_entropy",
    "penalty_coeff",
    "cell_width",
    "SigmaLadder",
    "build_ladder",
    "ladder_lookup",
    "flush_bits",
    "GOLOMB_COEFF",
    "golomb_optimal_M",
    "geometric_tail_entropy",
    "golomb_bits",
    "golomb_penalty",
    "lsb_flush_bits",
    "lsb_flush_penalty",
    "golomb_pow2_m",
    "golomb_encode",
    "golomb_decode",
    "DEFAULT_E",
]

LOG2E = 1.0 / math.log(2.0)
DEFAULT_E = 1.0 / 300.0
GOLOMB_COEFF = 0.66794


@dataclass(frozen=True)
class GeometricTable:
    """Probabilities of ``v`` in ``[-x_max, x_max]`` plus two tail escapes.

    ``probs[0]`` is the negative escape (``v < -x_max``), ``probs[-1]`` the
    positive one, and ``probs[1 + v + x_max]`` the central values. ``m`` is
    the number of raw low bits split off before tabling (0 for a plain
    two-sided geometric table).
    """

    sigma: float
    x_max: int
    probs: np.ndarray = field(repr=False)
    m: int = 0

    @property
    def central(self):
        return self.probs[1:-1]

    @property
    def escape_mass(self):
        return float(self.probs[0] + self.probs[-1])


def _sinh_half(sigma):
    return math.sinh(1.0 / (2.0 * sigma))


def geometric_probs(sigma: float, x_max: int) -> GeometricTable:
    """Step-1 quantized Laplace of width ``sigma``, tails folded into escapes.

    ``p_0 = 1 - exp(-1/(2 Sigma))`` and ``p_x = exp(-|x|/Sigma) sinh(1/(2 Sigma))``.
    """
    return flushed_probs(sigma, 0, x_max)


def flushed_probs(sigma: float, m: int, x_max: int) -> GeometricTable:
    """Distribution of ``v = r >> m`` for ``r`` two-sided geometric of width ``sigma``.

    ``r = (v << m) | lo``; the ``m`` low bits are sent raw. For ``m = 0`` this
    is :func:`geometric_probs`.
    """
    if sigma <= 0:
        raise ValueError("Sigma must be > 0")
    if x_max < 1:
        raise ValueError("x_max must be >= 1")
    M = 1 << m
    s = _sinh_half(sigma)
    r1 = math.exp(-1.0 / sigma)
    p0 = -math.expm1(-1.0 / (2.0 * sigma))
    # mass of M consecutive non-zero r starting at |r| = n: s e^{-n/S} (1-r1^M)/(1-r1)
    block = s * (-math.expm1(-M / sigma)) / (-math.expm1(-1.0 / sigma))
    v = np.arange(-x_max, x_max + 1)
    central = np.empty(v.size)
    pos = v > 0
    neg = v < 0
    central[pos] = block * np.exp(-(v[pos] * M) / sigma)
    central[neg] = block * np.exp(-((-v[neg]) * M - M + 1) / sigma)
    # v == 0 holds r in [0, M-1]
    if M > 1:
        zero = p0 + s * (r1 - math.exp(-M / sigma)) / (-math.expm1(-1.0 / sigma))
    else:
        zero = p0
    central[x_max] = zero
    # tails: v > x_max  -> |r| >= (x_max+1) M ; v < -x_max -> |r| >= x_max M + 1
    tail_sum = s / (-math.expm1(-1.0 / sigma))  # sum_{n>=0} s e^{-n/S}
    esc_pos = tail_sum * math.exp(-((x_max + 1) * M) / sigma)
    esc_neg = tail_sum * math.exp(-(x_max * M + 1) / sigma)
    probs = np.concatenate(([esc_neg], central, [esc_pos]))
    return GeometricTable(float(sigma), int(x_max), probs, int(m))


def residue_table_probs(sigma: float, m: int = 0, precision: int = 14,
                        tail_mass: float = 2.0 ** -16) -> GeometricTable:
    """Table with the alphabet trimmed for a ``2**precision`` frequency budget.

    ``x_max`` is the smallest value whose folded tail mass is below
    ``tail_mass``, but never so large that central symbols fall under
    ``2**-(precision-1)``: such symbols would each be forced to a frequency
    of at least one slot and together distort the table.
    """
    sigma_v = sigma / (1 << m)
    # tail mass beyond x_max is about exp(-(x_max + 1/2)/sigma_v)
    x_tail = max(1, math.ceil(sigma_v * math.log(1.0 / tail_mass) - 0.5))
    c = flushed_probs(sigma, m, x_tail).central
    floor_p = 2.0 ** -(precision - 1)
    side = np.minimum(c[:x_tail][::-1], c[x_tail + 1:])  # |v| = 1..x_tail
    ok = np.nonzero(side >= floor_p)[0]
    x_max = int(ok[-1]) + 1 if ok.size else 1
    return flushed_probs(sigma, m, min(x_max, x_tail))


def _geo_parts(sigma):
    s = _sinh_half(sigma)
    r = math.exp(-1.0 / sigma)
    p0 = -math.expm1(-1.0 / (2.0 * sigma))
    # sum_{x != 0} |x| p_x = 2 s r / (1 - r)^2
    mean_abs = 2.0 * s * r / (-math.expm1(-1.0 / sigma)) ** 2
    return p0, s, mean_abs


def cross_entropy(sigma_p: float, sigma_q: float) -> float:
    """Bits per value coding width-``sigma_p`` data with the width-``sigma_q`` table."""
    if sigma_p <= 0 or sigma_q <= 0:
        raise ValueError("Sigma must be > 0")
    p0, _, mean_abs = _geo_parts(sigma_p)
    q0, sq, _ = _geo_parts(sigma_q)
    # -lg p^q_x = |x| lg(e)/Sigma_q - lg sinh(1/(2 Sigma_q)) for x != 0
    return (-p0 * math.log2(q0)
            + (1.0 - p0) * (-math.log2(sq))
            + mean_abs * LOG2E / sigma_q)


def geometric_entropy(sigma: float) -> float:
    return cross_entropy(sigma, sigma)


def penalty_coeff(sigma):
    """Second-order coefficient ``D(Sigma)`` of the table-mismatch penalty."""
    S = np.asarray(sigma, dtype=float)
    num = 3.0 * np.exp(1.0 / (2 * S)) + np.exp(1.0 / S) + np.exp(3.0 / (2 * S)) - 1.0
    den = 8.0 * np.expm1(1.0 / S) ** 2 * S ** 4
    out = num / den * LOG2E
    return out if np.ndim(out) else float(out)


def cell_width(sigma, E: float = DEFAULT_E):
    """Ladder spacing ``(24 E / D(Sigma))**(1/3)`` around ``Sigma``."""
    out = np.cbrt(24.0 * E / np.asarray(penalty_coeff(sigma)))
    return out if np.ndim(out) else float(out)


@dataclass(frozen=True)
class SigmaLadder:
    """Ascending nodes; the coding-table id of a node is its index."""

    E: float
    sigma_start: float
    sigma_max: float
    nodes: tuple

    def __len__(self):
        return len(self.nodes)

    @property
    def widths(self):
        return np.diff(np.asarray(self.nodes))


def build_ladder(sigma_start: float = 0.1, sigma_max: float = 256.0,
                 E: float = DEFAULT_E) -> SigmaLadder:
    """Nodes from ``Sigma_{i+1} = Sigma_i + w(Sigma_i)`` until ``Sigma_max`` is reached."""
    if not sigma_max > sigma_start > 0:
        raise ValueError("need 0 < sigma_start < sigma_max")
    if E <= 0:
        raise ValueError("E must be > 0")
    nodes = [float(sigma_start)]
    while nodes[-1] < sigma_max:
        nodes.append(nodes[-1] + cell_width(nodes[-1], E))
    return SigmaLadder(float(E), float(sigma_start), float(sigma_max), tuple(nodes))


def ladder_lookup(ladder: SigmaLadder, sigma):
    """Index of the nearest node; values past either end clamp."""
    nodes = np.asarray(ladder.nodes)
    s = np.asarray(sigma, dtype=float)
    i = np.clip(np.searchsorted(nodes, s), 1, len(nodes) - 1)
    lower = nodes[i - 1]
    upper = nodes[i]
    idx = np.where(s - lower <= upper - s, i - 1, i)
    return idx if np.ndim(idx) else int(idx)


def flush_bits(sigma: float) -> int:
    """Raw low bits to flush, ``round(lg(Sigma/8))`` clamped at 0."""
    if sigma <= 8.0:
        return 0
    return max(0, int(math.floor(math.log2(sigma / 8.0) + 0.5)))


def golomb_optimal_M(sigma):
    """Real-valued Golomb parameter ``0.66794 Sigma`` for a geometric tail."""
    return GOLOMB_COEFF * np.asarray(sigma, dtype=float) if np.ndim(sigma) \
        else GOLOMB_COEFF * float(sigma)


def geometric_tail_entropy(sigma: float) -> float:
    """Entropy of ``Pr(x) = a^x (1 - a)``, ``a = exp(-1/Sigma)``."""
    a = math.exp(-1.0 / sigma)
    return -math.log2(-math.expm1(-1.0 / sigma)) - a * math.log2(a) / (1.0 - a)


def golomb_bits(sigma: float, M: float) -> float:
    """Mean Golomb code length ``1/(1 - a^M) + lg M`` for the geometric tail."""
    aM = math.exp(-M / sigma)
    return 1.0 / (1.0 - aM) + math.log2(M)


def golomb_penalty(sigma: float, M: float) -> float:
    return golomb_bits(sigma, M) - geometric_tail_entropy(sigma)


def lsb_flush_bits(sigma: float, m: int) -> float:
    """Mean bits when ``m`` low bits go raw and ``x >> m`` is entropy coded."""
    M = float(1 << m)
    aM = math.exp(-M / sigma)
    lg_a = -LOG2E / sigma
    return math.log2(M) - aM * M * lg_a / (1.0 - aM) - math.log2(-math.expm1(-M / sigma))


def lsb_flush_penalty(sigma: float, m: int) -> float:
    return lsb_flush_bits(sigma, m) - geometric_tail_entropy(sigma)


def golomb_pow2_m(sigma: float) -> int:
    """Power-of-two Golomb exponent nearest the optimal ``M``."""
    M = GOLOMB_COEFF * sigma
    if M <= 1.0:
        return 0
    return int(math.floor(math.log2(M) + 0.5))


def golomb_encode(x: int, M: int) -> str:
    """Golomb code of ``x >= 0`` for ``M = 2**m``: unary quotient, then m bits."""
    if x < 0:
        raise ValueError("golomb_encode needs x >= 0")
    if M < 1 or M & (M - 1):
        raise ValueError("M must be a power of two")
    m = M.bit_length() - 1
    quo = x >> m
    rem = x & (M - 1)
    return "1" * quo + "0" + (format(rem, f"0{m}b") if m else "")


def golomb_decode(bits: str, M: int):
    """Inverse of :func:`golomb_encode`; returns ``(x, bits consumed)``."""
    m = M.bit_length() - 1
    quo = 0
    while bits[quo] == "1":
        quo += 1
    rem = int(bits[quo + 1: quo + 1 + m], 2) if m else 0
    return (quo << m) | rem, quo + 1 + m
