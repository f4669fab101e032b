"""Regularized incomplete gamma functions.

``gammainc_pq(a, z)`` returns both the lower ``P(a, z)`` and the upper
``Q(a, z) = 1 - P(a, z)`` regularized incomplete gamma functions. The series
expansion is used where ``z < a + 1`` (it yields ``P`` accurately) and a
modified Lentz continued fraction elsewhere (it yields ``Q`` accurately), so
the small member of the pair never comes from a cancelling subtraction.
"""

import math

import numpy as np

__all__ = ["gammainc_pq", "gammainc_lower", "gammainc_upper"]

_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 2000

_lgamma = np.vectorize(math.lgamma, otypes=[float])


def _series_p(a, z):
    # P(a,z) = exp(-z + a ln z - lnG(a+1)) * sum_n z^n / ((a+1)...(a+n))
    total = np.ones_like(z)
    term = np.ones_like(z)
    ap = a.copy()
    active = np.arange(z.size)
    for _ in range(_MAX_ITER):
        ap[active] += 1.0
        term[active] *= z[active] / ap[active]
        total[active] += term[active]
        active = active[np.abs(term[active]) > _EPS * np.abs(total[active])]
        if active.size == 0:
            break
    log_pref = -z + a * np.log(z) - _lgamma(a + 1.0)
    return total * np.exp(log_pref)


def _cf_q(a, z):
    # Q(a,z) via modified Lentz on the even part of the Legendre fraction
    b = z + 1.0 - a
    c = np.full_like(z, 1.0 / _TINY)
    d = 1.0 / b
    h = d.copy()
    active = np.arange(z.size)
    for i in range(1, _MAX_ITER):
        an = -i * (i - a[active])
        b[active] += 2.0
        dd = an * d[active] + b[active]
        dd = np.where(np.abs(dd) < _TINY, _TINY, dd)
        cc = b[active] + an / c[active]
        cc = np.where(np.abs(cc) < _TINY, _TINY, cc)
        dd = 1.0 / dd
        delta = dd * cc
        d[active] = dd
        c[active] = cc
        h[active] *= delta
        active = active[np.abs(delta - 1.0) > _EPS]
        if active.size == 0:
            break
    log_pref = -z + a * np.log(z) - _lgamma(a)
    return h * np.exp(log_pref)


def gammainc_pq(a, z):
    """Lower and upper regularized incomplete gamma functions.

    Parameters
    ----------
    a : float or array_like
        Shape, strictly positive.
    z : float or array_like
        Argument, non-negative. ``inf`` is allowed.

    Returns
    -------
    p, q : ndarray or float
        ``P(a, z)`` and ``Q(a, z)``; broadcast shape of the inputs.
    """
    a_arr, z_arr = np.broadcast_arrays(np.asarray(a, dtype=float),
                                       np.asarray(z, dtype=float))
    shape = a_arr.shape
    a_flat = a_arr.ravel().copy()
    z_flat = z_arr.ravel().copy()
    if np.any(a_flat <= 0) or np.any(~np.isfinite(a_flat)):
        raise ValueError("incomplete gamma requires finite a > 0")
    if np.any(z_flat < 0) or np.any(np.isnan(z_flat)):
        raise ValueError("incomplete gamma requires z >= 0")

    p = np.zeros_like(z_flat)
    q = np.ones_like(z_flat)

    inf = np.isinf(z_flat)
    p[inf] = 1.0
    q[inf] = 0.0

    pos = (z_flat > 0) & ~inf
    use_series = pos & (z_flat < a_flat + 1.0)
    use_cf = pos & ~use_series

    if np.any(use_series):
        ps = np.clip(_series_p(a_flat[use_series], z_flat[use_series]), 0.0, 1.0)
        p[use_series] = ps
        q[use_series] = 1.0 - ps
    if np.any(use_cf):
        qs = np.clip(_cf_q(a_flat[use_cf], z_flat[use_cf]), 0.0, 1.0)
        q[use_cf] = qs
        p[use_cf] = 1.0 - qs

    p = p.reshape(shape)
    q = q.reshape(shape)
    if shape == ():
        return float(p), float(q)
    return p, q


def gammainc_lower(a, z):
    """Regularized lower incomplete gamma ``P(a, z)``."""
    return gammainc_pq(a, z)[0]


def gammainc_upper(a, z):
    """Regularized upper incomplete gamma ``Q(a, z)``."""
    return gammainc_pq(a, z)[1]
