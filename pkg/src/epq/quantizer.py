"""Quantization density functions.

A quantization density ``q`` integrates to 1 over a finite domain. Its CDF
``Q`` turns any region count ``N`` into a scalar quantizer: the nodes are
``Q^{-1}((i - 1/2)/N)`` for ``i = 1..N`` and region boundaries sit halfway
between neighbouring nodes. Everything is tabulated on one grid and
integrated with the trapezoid rule, so two densities built from the same
source agree to rounding whenever their formulas coincide.

The asymptotic functionals follow the large-``N`` picture in which the local
node spacing at ``x`` is ``1/(N q(x))``.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid, quad, trapezoid
from scipy.interpolate import PchipInterpolator

from .epd import EpdParams, RateDistortionPoint, epd_cell_moments, epd_pdf

__all__ = [
    "GRID_POINTS",
    "DOMAIN_SIGMAS",
    "QuantDensity",
    "QuantizerN",
    "density_from_values",
    "uniform_density",
    "density_distortion_optimal",
    "density_rd",
    "nodes_from_density",
    "quantize",
    "dequantize",
    "eval_rd",
    "asymptotic_distortion",
    "asymptotic_entropy",
    "predicted_distortion",
]

GRID_POINTS = 4096
DOMAIN_SIGMAS = 20.0
_TAIL = 1e-13


@dataclass(frozen=True, eq=False)
class QuantDensity:
    """Tabulated density ``q`` on ``x`` with its CDF ``Q`` (``Q[0] = 0``, ``Q[-1] = 1``).

    ``params`` is set when ``q`` is itself an EPD; ``mu_mult`` and ``lam``
    record the Lagrange multipliers of a rate-distortion density.
    """

    x: np.ndarray
    q: np.ndarray
    Q: np.ndarray
    params: EpdParams = None
    mu_mult: float = float("nan")
    lam: float = float("nan")
    _fwd: object = field(init=False, repr=False)
    _inv: object = field(init=False, repr=False)

    def __post_init__(self):
        # the inverse ignores the far tails, where Q moves by less than
        # rounding and the slope dx/dQ would overflow
        Q = self.Q
        keep = (Q >= _TAIL) & (1.0 - Q >= _TAIL)
        keep[0] = keep[-1] = True
        idx = np.nonzero(keep)[0]
        idx = idx[np.concatenate(([True], np.diff(Q[idx]) > 0))]
        keep = np.zeros_like(keep)
        keep[idx] = True
        object.__setattr__(self, "_fwd", PchipInterpolator(self.x, self.Q))
        object.__setattr__(self, "_inv",
                           PchipInterpolator(self.Q[keep], self.x[keep]))

    @property
    def domain(self):
        return float(self.x[0]), float(self.x[-1])

    @property
    def total(self):
        return float(trapezoid(self.q, self.x))

    def pdf(self, x):
        return np.interp(x, self.x, self.q, left=0.0, right=0.0)

    def cdf(self, x):
        xs = np.clip(np.asarray(x, dtype=float), self.x[0], self.x[-1])
        out = np.clip(self._fwd(xs), 0.0, 1.0)
        return out if np.ndim(out) else float(out)

    def icdf(self, u):
        us = np.clip(np.asarray(u, dtype=float), 0.0, 1.0)
        out = self._inv(us)
        return out if np.ndim(out) else float(out)


def _grid(domain, n=GRID_POINTS):
    lo, hi = domain
    if not hi > lo:
        raise ValueError("domain must have x_lo < x_hi")
    return np.linspace(lo, hi, n)


def _epd_domain(p: EpdParams):
    return p.mu - DOMAIN_SIGMAS * p.sigma, p.mu + DOMAIN_SIGMAS * p.sigma


def _tabulate(rho, domain=None, n=GRID_POINTS):
    """Grid and density values for an EPD, a callable or an ``(x, values)`` pair."""
    if isinstance(rho, EpdParams):
        x = _grid(domain or _epd_domain(rho), n)
        return x, epd_pdf(rho, x)
    if callable(rho):
        if domain is None:
            raise ValueError("a callable density needs an explicit domain")
        x = _grid(domain, n)
        return x, np.asarray(rho(x), dtype=float)
    x, v = rho
    x = np.asarray(x, dtype=float)
    v = np.asarray(v, dtype=float)
    if x.shape != v.shape or x.ndim != 1 or np.any(np.diff(x) <= 0):
        raise ValueError("tabulated density needs matching 1-D arrays on an increasing grid")
    return x, v


def density_from_values(x, q, **meta) -> QuantDensity:
    """Normalize non-negative values ``q`` on grid ``x`` into a :class:`QuantDensity`."""
    x = np.asarray(x, dtype=float)
    q = np.asarray(q, dtype=float)
    if np.any(q < 0) or not np.all(np.isfinite(q)):
        raise ValueError("density values must be finite and non-negative")
    total = trapezoid(q, x)
    if not total > 0 or not np.isfinite(total):
        raise ValueError(f"density is not normalizable (integral {total!r})")
    q = q / total
    Q = cumulative_trapezoid(q, x, initial=0.0)
    Q /= Q[-1]
    return QuantDensity(x, q, Q, **meta)


def uniform_density(a: float, b: float, n: int = GRID_POINTS) -> QuantDensity:
    x = _grid((a, b), n)
    return density_from_values(x, np.ones_like(x))


def density_distortion_optimal(rho, p: float = 2.0, domain=None) -> QuantDensity:
    """Density minimizing mean ``|error|**p``: ``q`` proportional to ``rho**(1/(p+1))``.

    For an EPD the result is the same EPD widened to scale
    ``sigma * (p+1)**(1/kappa)`` and is tabulated from that closed form.
    """
    if p < 1:
        raise ValueError("error power p must be >= 1")
    if isinstance(rho, EpdParams):
        sq = rho.sigma * (p + 1.0) ** (1.0 / rho.kappa)
        pq = EpdParams(rho.kappa, sq, rho.mu)
        x = _grid(domain or _epd_domain(rho))
        return density_from_values(x, epd_pdf(pq, x), params=pq)
    x, r = _tabulate(rho, domain)
    return density_from_values(x, np.power(np.maximum(r, 0.0), 1.0 / (p + 1.0)))


def _rd_shape(r, mu, lam, p):
    if p == 1:
        # sqrt(mu r + lam^2 r^2) - lam r, written without cancellation
        return mu * r / (np.sqrt(mu * r + (lam * r) ** 2) + lam * r + 1e-300)
    # positive root of q^3 + 2 lam r q^2 - mu r = 0; Newton from the right is monotone
    b = 2.0 * lam * r
    c = mu * r
    q = np.cbrt(c)
    for _ in range(100):
        f = q * q * (q + b) - c
        step = f / np.maximum(q * (3.0 * q + 2.0 * b), 1e-300)
        q = np.maximum(q - step, 0.0)
        if np.all(np.abs(step) <= 1e-15 * np.maximum(q, 1e-300)):
            break
    return q


def density_rd(rho, lam: float, p: int = 1, domain=None, tol: float = 1e-12) -> QuantDensity:
    """Rate-distortion density for error power ``p`` in ``{1, 2}`` and multiplier ``lam``.

    Solves ``mu rho/q**(p+1) - 2 lam rho/q = 1`` pointwise and bisects on
    ``mu`` until the integral of ``q`` is one.
    """
    if p not in (1, 2):
        raise ValueError("p must be 1 or 2")
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    x, r = _tabulate(rho, domain)
    r = np.maximum(r, 0.0)

    def mass(mu):
        return trapezoid(_rd_shape(r, mu, lam, p), x)

    lo, hi = 0.0, 1.0
    while mass(hi) < 1.0:
        hi *= 2.0
        if hi > 1e300:
            raise ValueError(f"normalization failed: integral only reaches {mass(hi / 2):.6g}")
    for _ in range(400):
        mid = 0.5 * (lo + hi)
        m = mass(mid)
        if abs(m - 1.0) <= tol:
            break
        if m < 1.0:
            lo = mid
        else:
            hi = mid
    else:
        raise ValueError(f"normalization did not converge: integral {m:.12g}")
    q = _rd_shape(r, mid, lam, p)
    Q = cumulative_trapezoid(q, x, initial=0.0)
    Q /= Q[-1]
    return QuantDensity(x, q, Q, mu_mult=float(mid), lam=float(lam))


@dataclass(frozen=True)
class QuantizerN:
    """Ascending nodes with midpoint boundaries; the outer regions reach to infinity."""

    nodes: np.ndarray
    boundaries: np.ndarray

    def __post_init__(self):
        if self.nodes.size < 1:
            raise ValueError("quantizer needs at least one node")
        if np.any(np.diff(self.nodes) <= 0):
            raise ValueError("nodes must be strictly increasing")

    @property
    def N(self):
        return int(self.nodes.size)

    @property
    def edges(self):
        return np.concatenate(([-np.inf], self.boundaries, [np.inf]))


def nodes_from_density(Q: QuantDensity, N: int) -> QuantizerN:
    if N < 1:
        raise ValueError("N must be >= 1")
    nodes = np.asarray(Q.icdf((np.arange(1, N + 1) - 0.5) / N), dtype=float).reshape(-1)
    return QuantizerN(nodes, 0.5 * (nodes[1:] + nodes[:-1]))


def quantize(Q: QuantDensity, N: int, x, rule: str = "midpoint"):
    """1-based region index of ``x``.

    ``rule="midpoint"`` uses the node-midpoint boundaries; ``rule="lattice"``
    uses ``ceil(N Q(x))``. Values past the domain go to the extreme regions.
    """
    xs = np.asarray(x, dtype=float)
    if rule == "midpoint":
        b = nodes_from_density(Q, N).boundaries
        idx = np.searchsorted(b, xs, side="left") + 1
    elif rule == "lattice":
        idx = np.clip(np.ceil(N * np.asarray(Q.cdf(xs))), 1, N).astype(np.int64)
    else:
        raise ValueError(f"unknown rule {rule!r}")
    return idx if np.ndim(idx) else int(idx)


def dequantize(Q: QuantDensity, N: int, index):
    i = np.asarray(index)
    if np.any(i < 1) or np.any(i > N):
        raise ValueError("index out of range 1..N")
    out = np.asarray(Q.icdf((i - 0.5) / N), dtype=float)
    return out if np.ndim(out) else float(out)


def eval_rd(rho, quantizer: QuantizerN) -> RateDistortionPoint:
    """Exact entropy and MSE of ``quantizer`` applied to density ``rho``.

    ``rho`` is an EPD (cell moments in closed form) or a callable (adaptive
    quadrature per cell).
    """
    edges = quantizer.edges
    nodes = quantizer.nodes
    if isinstance(rho, EpdParams):
        prob, sq = epd_cell_moments(rho, edges, nodes)
    else:
        prob = np.empty(nodes.size)
        sq = np.empty(nodes.size)
        for i, (a, b, c) in enumerate(zip(edges[:-1], edges[1:], nodes)):
            prob[i] = quad(rho, a, b, limit=200)[0]
            sq[i] = quad(lambda t, c=c: (t - c) ** 2 * rho(t), a, b, limit=200)[0]
    nz = prob > 0
    rate = 0.0 - float(np.sum(prob[nz] * np.log2(prob[nz])))
    return RateDistortionPoint(max(rate, 0.0), float(np.sum(sq)))


def _rho_on(rho, x):
    if isinstance(rho, EpdParams):
        return epd_pdf(rho, x)
    return np.asarray(rho(x), dtype=float)


def asymptotic_distortion(rho, q: QuantDensity, p: float = 2.0) -> float:
    """``D = int rho / q**p`` over the domain of ``q``."""
    r = _rho_on(rho, q.x)
    support = r > 0
    if np.any(q.q[support] <= 0):
        raise ValueError("q vanishes where rho > 0: distortion functional diverges")
    f = np.zeros_like(r)
    f[support] = np.exp(np.log(r[support]) - p * np.log(q.q[support]))
    return float(trapezoid(f, q.x))


def predicted_distortion(D: float, N: int, p: float = 2.0) -> float:
    """Large-``N`` mean ``|error|**p`` from the functional ``D``.

    The error is uniform over a cell of width ``1/(N q)``, whose mean
    ``|e|**p`` is ``width**p / (2**p (p + 1))``.
    """
    return D / N ** p / (2.0 ** p * (p + 1.0))


def asymptotic_entropy(rho, q: QuantDensity) -> float:
    """``H = int rho lg(q/rho)``, i.e. minus ``KL(rho || q)``; rate is ``H + lg N``."""
    r = _rho_on(rho, q.x)
    support = r > 0
    if np.any(q.q[support] <= 0):
        raise ValueError("q vanishes where rho > 0: entropy functional diverges")
    f = np.zeros_like(r)
    f[support] = r[support] * np.log2(q.q[support] / r[support])
    return float(trapezoid(f, q.x))
