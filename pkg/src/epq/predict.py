"""Context models for the center and width of each DCT coefficient.

Two kinds of context are used:

* inside a block, absolute values of coefficients that come earlier in
  zigzag order predict the width of later ones;
* between blocks, the already decoded right column of the left neighbour and
  bottom row of the top neighbour, each passed through a 1-D DCT, give 16
  signed features for the center and their absolute values for the width.

All models are linear and fitted by least squares on centered data with a
tiny ridge. Widths are clamped below at ``SIGMA_MIN``.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls

from .epd import epd_mle
from .transform import dct1, zigzag, zigzag_full

__all__ = [
    "SIGMA_MIN",
    "RIDGE",
    "LinearModel",
    "fit_least_squares",
    "fit_sigma_zigzag",
    "zigzag_context",
    "boundary_features",
    "plane_training_set",
    "BoundaryModels",
    "fit_boundary_models",
    "predict_parameters",
    "neighbour_design",
    "prediction_savings",
    "CcaResult",
    "cca",
    "ReducedSigmaModel",
    "sigma_feature_model",
    "savings_bits",
    "laplace_logloss_bits",
    "zigzag_width_savings",
    "WidthScan",
    "conditional_width_scan",
]

SIGMA_MIN = 1e-4
RIDGE = 1e-12


@dataclass(frozen=True)
class LinearModel:
    """``y = weights . features + intercept``; width models clamp at ``sigma_min``."""

    weights: np.ndarray
    intercept: float
    target: str = "mu"
    position: tuple = None
    sigma_min: float = SIGMA_MIN

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if not np.all(np.isfinite(w)) or not np.isfinite(self.intercept):
            raise ValueError("model weights must be finite")
        if self.target not in ("mu", "sigma"):
            raise ValueError("target must be 'mu' or 'sigma'")
        object.__setattr__(self, "weights", w)

    @property
    def n_features(self):
        return int(self.weights.size)

    def evaluate(self, features):
        f = np.asarray(features, dtype=float)
        if f.shape[-1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {f.shape[-1]}")
        y = f @ self.weights + self.intercept
        if self.target == "sigma":
            y = np.maximum(y, self.sigma_min)
        return y if np.ndim(y) else float(y)


def _solve_ls(X, y, ridge=RIDGE):
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    n, d = X.shape
    if y.shape != (n,):
        raise ValueError("targets must have one value per row")
    if n < d + 1:
        raise ValueError(f"need at least {d + 1} rows for {d} features, got {n}")
    if d == 0:
        return np.zeros(0), float(y.mean())
    xm = X.mean(axis=0)
    ym = y.mean()
    Xc = X - xm
    C = Xc.T @ Xc / n
    lam = ridge * np.trace(C) / d
    A = C + lam * np.eye(d)
    try:
        w = np.linalg.solve(A, Xc.T @ (y - ym) / n)
    except np.linalg.LinAlgError as exc:
        raise ValueError("normal equations are rank deficient") from exc
    if not np.all(np.isfinite(w)):
        raise ValueError("normal equations are rank deficient")
    return w, float(ym - xm @ w)


def fit_least_squares(rows, targets, target="mu", position=None, ridge=RIDGE) -> LinearModel:
    w, b = _solve_ls(rows, targets, ridge)
    return LinearModel(w, b, target, position)


def zigzag_context(blocks):
    """AC coefficients of ``(n, 8, 8)`` blocks, flattened to ``(n, 63)`` in zigzag order."""
    b = np.asarray(blocks, dtype=float)
    rows, cols = zip(*zigzag())
    return b[:, list(rows), list(cols)]


def fit_sigma_zigzag(blocks):
    """Width model for each AC position from earlier AC magnitudes.

    Position ``i`` in zigzag order regresses ``|c_i|`` on ``|c_1| .. |c_{i-1}|``.
    Returns 63 models in zigzag order. A position whose values are all zero,
    or whose regression is singular, gets a constant model.
    """
    b = np.asarray(blocks, dtype=float)
    if b.ndim != 3 or b.shape[1:] != (8, 8):
        raise ValueError("expected blocks of shape (n, 8, 8)")
    if b.shape[0] < 1000:
        raise ValueError("need at least 1000 blocks")
    A = np.abs(zigzag_context(b))
    models = []
    for i, pos in enumerate(zigzag()):
        y = A[:, i]
        if not np.any(y):
            models.append(LinearModel(np.zeros(i), 0.0, "sigma", pos))
            continue
        try:
            models.append(fit_least_squares(A[:, :i], y, "sigma", pos))
        except ValueError:
            models.append(LinearModel(np.zeros(i), float(y.mean()), "sigma", pos))
    return models


def boundary_features(left, top):
    """16 signed features: 1-D DCT of ``left``'s right column then of ``top``'s bottom row.

    ``left`` and ``top`` are decoded pixel blocks ``(..., 8, 8)``.
    """
    left = np.asarray(left, dtype=float)
    top = np.asarray(top, dtype=float)
    return np.concatenate([dct1(left[..., :, 7]), dct1(top[..., 7, :])], axis=-1)


def plane_training_set(coeffs, pixels):
    """Boundary features and zigzag-ordered targets for blocks with both neighbours.

    ``coeffs`` and ``pixels`` are ``(R, C, 8, 8)`` grids of one plane.
    Returns ``(features (n, 16), targets (n, 64))``.
    """
    rows, cols = zip(*zigzag_full())
    feats = boundary_features(pixels[1:, :-1], pixels[:-1, 1:])
    tgt = coeffs[1:, 1:][..., list(rows), list(cols)]
    return feats.reshape(-1, 16), tgt.reshape(-1, 64)


@dataclass(frozen=True)
class BoundaryModels:
    """Per-position (zigzag order, DC first) center and width models."""

    mu: tuple
    sigma: tuple

    def __len__(self):
        return len(self.mu)


def fit_boundary_models(features, targets, zigzag_residues: bool = False) -> BoundaryModels:
    """Center models on the 16 signed features, width models on their magnitudes.

    Width targets are ``|x - mu_hat|``. With ``zigzag_residues`` the width
    model of position ``t`` also sees ``|x_s - mu_hat_s|`` for ``s < t``.
    """
    F = np.asarray(features, dtype=float)
    Z = np.asarray(targets, dtype=float)
    positions = zigzag_full()[: Z.shape[1]]
    mus, sigmas = [], []
    E = np.empty_like(Z)
    for t, pos in enumerate(positions):
        m = fit_least_squares(F, Z[:, t], "mu", pos)
        mus.append(m)
        E[:, t] = Z[:, t] - m.evaluate(F)
    absF = np.abs(F)
    absE = np.abs(E)
    for t, pos in enumerate(positions):
        ctx = np.hstack([absF, absE[:, :t]]) if zigzag_residues else absF
        sigmas.append(fit_least_squares(ctx, absE[:, t], "sigma", pos))
    return BoundaryModels(tuple(mus), tuple(sigmas))


def predict_parameters(mu_model: LinearModel, sigma_model: LinearModel, context,
                       sigma_context=None):
    """``(mu, sigma)`` for one context.

    The width model sees absolute values of ``sigma_context`` (default: the
    same features as the center model).
    """
    ctx = np.asarray(context, dtype=float)
    sctx = np.abs(ctx if sigma_context is None else np.asarray(sigma_context, dtype=float))
    mu = mu_model.evaluate(ctx)
    sigma = np.maximum(sigma_model.evaluate(sctx), sigma_model.sigma_min)
    return mu, sigma if np.ndim(sigma) else float(sigma)


def neighbour_design(grid, j: int, k: int, kind: str):
    """Design matrix for predicting coefficient ``(j, k)`` from neighbouring blocks.

    ``grid`` holds 2-D DCT coefficients ``(R, C, 8, 8)``. Kinds, by growing
    context: ``pair`` (same position left and up), ``quad`` (same position in
    left, up, up-left, up-right), ``rowcol`` (row ``j`` of the left block and
    column ``k`` of the block above), ``full`` (all 256 coefficients of the
    four blocks). Every kind uses the same sample of blocks, those with all
    four neighbours, so results are comparable.
    """
    g = np.asarray(grid, dtype=float)
    R, C = g.shape[:2]
    if R < 2 or C < 3:
        raise ValueError("grid too small for four-neighbour context")
    cur = g[1:, 1:-1]
    L = g[1:, :-2]
    U = g[:-1, 1:-1]
    UL = g[:-1, :-2]
    UR = g[:-1, 2:]
    if kind == "pair":
        X = np.stack([L[..., j, k], U[..., j, k]], axis=-1)
    elif kind == "quad":
        X = np.stack([L[..., j, k], U[..., j, k], UL[..., j, k], UR[..., j, k]], axis=-1)
    elif kind == "rowcol":
        X = np.concatenate([L[..., j, :], U[..., :, k]], axis=-1)
    elif kind == "full":
        X = np.concatenate([b.reshape(b.shape[:2] + (64,)) for b in (L, U, UL, UR)], axis=-1)
    else:
        raise ValueError(f"unknown context kind {kind!r}")
    return X.reshape(-1, X.shape[-1]), cur[..., j, k].reshape(-1)


def prediction_savings(grids, kind: str):
    """8x8 matrix of :func:`savings_bits` for linear prediction from neighbours.

    ``grids`` is a sequence of coefficient grids; samples are pooled.
    """
    out = np.zeros((8, 8))
    for j in range(8):
        for k in range(8):
            parts = [neighbour_design(g, j, k, kind) for g in grids]
            X = np.vstack([p[0] for p in parts])
            y = np.concatenate([p[1] for p in parts])
            m = fit_least_squares(X, y)
            mse = float(np.mean((y - m.evaluate(X)) ** 2))
            var = float(np.var(y))
            out[j, k] = savings_bits(var, mse) if mse > 0 and var > 0 else 0.0
    return out


@dataclass(frozen=True)
class CcaResult:
    """Canonical pairs ``(a, b, corr)`` with non-increasing ``corr``.

    ``a`` and ``b`` have unit variance under the sample covariances.
    """

    pairs: tuple

    @property
    def correlations(self):
        return np.array([c for _, _, c in self.pairs])

    def __len__(self):
        return len(self.pairs)


def _inv_sqrt(C):
    vals, vecs = np.linalg.eigh(C)
    if np.any(vals <= 0):
        raise ValueError("covariance is not positive definite")
    return (vecs / np.sqrt(vals)) @ vecs.T


def cca(X, Y, k: int = None, ridge: float = RIDGE) -> CcaResult:
    """Top ``k`` canonical correlation pairs of centered ``X`` and ``Y``.

    Whitens both sides and takes the SVD of the whitened cross-covariance;
    ``b`` is then recomputed as ``C_YY^{-1} C_YX a`` and rescaled.
    """
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if Y.ndim == 1:
        Y = Y[:, None]
    n = X.shape[0]
    if Y.shape[0] != n:
        raise ValueError("X and Y need the same number of samples")
    dx, dy = X.shape[1], Y.shape[1]
    if n <= max(dx, dy):
        raise ValueError("fewer samples than dimensions")
    k = min(dx, dy) if k is None else min(k, dx, dy)
    Xc = X - X.mean(axis=0)
    Yc = Y - Y.mean(axis=0)
    Cxx = Xc.T @ Xc / n
    Cyy = Yc.T @ Yc / n
    Cxy = Xc.T @ Yc / n
    Cxx = Cxx + ridge * np.trace(Cxx) / dx * np.eye(dx)
    Cyy = Cyy + ridge * np.trace(Cyy) / dy * np.eye(dy)
    Wx = _inv_sqrt(Cxx)
    Wy = _inv_sqrt(Cyy)
    U, s, _ = np.linalg.svd(Wx @ Cxy @ Wy)
    pairs = []
    for i in range(k):
        a = Wx @ U[:, i]
        a /= np.sqrt(a @ Cxx @ a)
        b = np.linalg.solve(Cyy, Cxy.T @ a)
        nb = np.sqrt(b @ Cyy @ b)
        b = b / nb if nb > 0 else b
        pairs.append((a, b, float(np.clip(s[i], 0.0, 1.0))))
    return CcaResult(tuple(pairs))


_MODES = ("VH", "V+H", "H-only")


@dataclass(frozen=True)
class ReducedSigmaModel:
    """Width models on one or two nonnegative combinations of boundary magnitudes.

    ``direction`` weights the 16 absolute boundary features (left column
    then top row). ``VH`` uses their single combined sum, ``V+H`` the left
    and top halves as two features, ``H-only`` the top half alone. Per
    position ``sigma = intercept + weights . reduced_features``; every
    weight is nonnegative.
    """

    mode: str
    direction: np.ndarray
    weights: np.ndarray  # (positions, n_reduced)
    intercepts: np.ndarray
    sigma_min: float = SIGMA_MIN

    def reduce(self, abs_features):
        f = np.asarray(abs_features, dtype=float)
        a = self.direction
        v = f[..., :8] @ a[:8]
        h = f[..., 8:] @ a[8:]
        if self.mode == "VH":
            return (v + h)[..., None]
        if self.mode == "V+H":
            return np.stack([v, h], axis=-1)
        return h[..., None]

    def evaluate(self, abs_features):
        """Widths ``(..., positions)`` for absolute features ``(..., 16)``."""
        r = self.reduce(abs_features)
        return np.maximum(r @ self.weights.T + self.intercepts, self.sigma_min)


def shared_direction(abs_features, abs_residues):
    """Nonnegative unit-sum combination of feature magnitudes from the first CCA pair."""
    res = cca(abs_features, abs_residues, k=1)
    a = res.pairs[0][0]
    if a.sum() < 0:
        a = -a
    a = np.maximum(a, 0.0)
    if not np.any(a):
        a = np.ones_like(a)
    return a / a.sum()


def sigma_feature_model(mode: str, abs_features, abs_residues, direction=None) -> ReducedSigmaModel:
    """Fit a reduced width model.

    ``abs_features`` is ``(n, 16)``, ``abs_residues`` is ``(n, positions)``.
    Weights and intercepts come from nonnegative least squares per position.
    """
    if mode not in _MODES:
        raise ValueError(f"mode must be one of {_MODES}")
    F = np.asarray(abs_features, dtype=float)
    E = np.asarray(abs_residues, dtype=float)
    a = shared_direction(F, E) if direction is None else np.asarray(direction, dtype=float)
    shell = ReducedSigmaModel(mode, a, np.zeros((E.shape[1], 1)), np.zeros(E.shape[1]))
    R = shell.reduce(F)
    # scale columns so the nnls problem is well conditioned
    scale = np.maximum(R.std(axis=0), 1e-12)
    D = np.hstack([np.ones((R.shape[0], 1)), R / scale])
    W = np.zeros((E.shape[1], R.shape[1]))
    b = np.zeros(E.shape[1])
    for t in range(E.shape[1]):
        coef, _ = nnls(D, E[:, t])
        b[t] = coef[0]
        W[t] = coef[1:] / scale
    return ReducedSigmaModel(mode, a, W, b)


def savings_bits(mse_baseline: float, mse_model: float) -> float:
    """``lg(sqrt(mse_baseline / mse_model))``."""
    if not (mse_baseline > 0 and mse_model > 0):
        raise ValueError("MSE values must be positive")
    if mse_baseline == mse_model:
        return 0.0
    return 0.5 * float(np.log2(mse_baseline / mse_model))


def laplace_logloss_bits(x, sigma, mu=0.0) -> float:
    """Mean ``-lg`` of the Laplace density with per-sample ``mu`` and ``sigma``."""
    x = np.asarray(x, dtype=float)
    s = np.asarray(sigma, dtype=float)
    if np.any(s <= 0):
        raise ValueError("sigma must be positive")
    return float(np.mean(np.log2(2.0 * s) + np.abs(x - mu) / s / np.log(2.0)))


def zigzag_width_savings(blocks, models=None):
    """Per-AC-position log-loss saving of predicted over constant Laplace width.

    Returns 63 values in zigzag order (bits/value); the constant width is the
    position's maximum-likelihood ``mean |x|``.
    """
    A = zigzag_context(blocks)
    if models is None:
        models = fit_sigma_zigzag(blocks)
    absA = np.abs(A)
    out = np.empty(63)
    for i, m in enumerate(models):
        const = max(float(absA[:, i].mean()), SIGMA_MIN)
        pred = m.evaluate(absA[:, :i]) if i else np.full(A.shape[0], max(m.intercept, SIGMA_MIN))
        out[i] = laplace_logloss_bits(A[:, i], const) - laplace_logloss_bits(A[:, i], pred)
    return out


@dataclass(frozen=True)
class WidthScan:
    """One row per window: mean of ``c1``, mean ``|c1|``, fitted width and shape."""

    mean_c1: np.ndarray
    mean_abs_c1: np.ndarray
    width: np.ndarray
    kappa: np.ndarray = field(default=None)

    def __len__(self):
        return int(self.width.size)


def conditional_width_scan(c1, c2, window: int = 5000, step: int = None,
                           fit_kappa: bool = False) -> WidthScan:
    """Fit the distribution of ``c2`` on sliding windows of pairs sorted by ``c1``.

    Each window of ``window`` consecutive pairs gives a Laplace width
    ``mean |c2|`` (centered at 0). With ``fit_kappa`` an EPD is fitted
    instead and both width and shape are reported. Windows advance by
    ``step`` (default ``window // 2``).
    """
    c1 = np.asarray(c1, dtype=float)
    c2 = np.asarray(c2, dtype=float)
    if c1.shape != c2.shape or c1.ndim != 1:
        raise ValueError("c1 and c2 must be 1-D and the same length")
    if window < 100:
        raise ValueError("window must be at least 100 pairs")
    n = c1.size
    if n < window:
        raise ValueError("fewer pairs than the window size")
    step = max(1, window // 2) if step is None else step
    order = np.argsort(c1, kind="stable")
    s1, s2 = c1[order], c2[order]
    starts = list(range(0, n - window + 1, step))
    if starts[-1] != n - window:
        starts.append(n - window)
    m1, ma, w, k = [], [], [], []
    for s in starts:
        a, b = s1[s:s + window], s2[s:s + window]
        m1.append(a.mean())
        ma.append(np.abs(a).mean())
        if fit_kappa:
            p, _ = epd_mle(b, mu_policy="zero", kappa_policy="grid")
            w.append(p.sigma)
            k.append(p.kappa)
        else:
            w.append(np.abs(b).mean())
    return WidthScan(np.array(m1), np.array(ma), np.array(w),
                     np.array(k) if fit_kappa else None)
