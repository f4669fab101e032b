"""Block-DCT image codec with predicted Laplace tables.

Each channel is coded independently. Blocks are visited in wavefronts
``d = 2 r + c``: every block of a wavefront has its left, top, top-left and
top-right neighbours in earlier wavefronts, so a whole wavefront can be
predicted at once. Inside a wavefront the 64 positions are coded in zigzag
order (DC first), and for each position the blocks follow in raster order.

For every coefficient the decoder-side context gives a center ``mu`` and a
width ``sigma``. The residue ``r = round((x - mu)/q)`` is coded with the
ladder table nearest ``Sigma = sigma/q``; tables for wide ``Sigma`` send the
low bits raw and all tables escape their tails to a Golomb code. The encoder
keeps the same reconstruction as the decoder, so both always see identical
contexts.

Container (little-endian)::

    "EPQ1" | u8 version | u32 width | u32 height | u8 channels
    | u8 colorspace | u8 quality | u8 profile | f32 E
    | u32 n + model section | (u32 n + payload) per channel | u32 crc32
"""

import struct
import zlib
from dataclasses import dataclass, field, fields
from functools import lru_cache
from importlib import resources

import numpy as np

from .coder import PRECISION, StreamDecoder, StreamEncoder, StreamError, table_from_geometric
from .ladder import (DEFAULT_E, build_ladder, flush_bits, golomb_pow2_m, ladder_lookup,
                     residue_table_probs)
from .predict import (SIGMA_MIN, _solve_ls, boundary_features, cca, plane_training_set,
                      sigma_feature_model)
from .transform import (BlockGrid, dct2_forward, dct2_inverse, partition_and_pad,
                        rgb_to_ycbcr, unpartition, ycbcr_to_rgb, zigzag_full)

__all__ = [
    "PROFILES",
    "COLORSPACES",
    "JPEG_LUMA",
    "quality_table",
    "CodecConfig",
    "ModelSet",
    "fit_models",
    "builtin_models",
    "ContainerError",
    "MagicError",
    "VersionError",
    "LengthError",
    "ChecksumError",
    "EncodeResult",
    "DecodeResult",
    "encode_image",
    "encode_image_detailed",
    "settle_image",
    "decode_image",
    "evaluate_pipeline",
]

MAGIC = b"EPQ1"
VERSION = 1
PROFILES = ("none", "mu-boundary", "sigma-boundary", "sigma-zigzag-residue",
            "VH", "V+H", "H-only")
COLORSPACES = ("rgb", "ycbcr")
_REDUCED = {"VH": "vh", "V+H": "vph", "H-only": "h"}

JPEG_LUMA = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.int64)

_ZZ_ROWS, _ZZ_COLS = (list(a) for a in zip(*zigzag_full()))


def quality_table(quality: int) -> np.ndarray:
    """Luma table scaled by the libjpeg quality rule, entries clamped to 1..255."""
    if not 1 <= int(quality) <= 100:
        raise ValueError("quality must be in 1..100")
    q = int(quality)
    scale = 5000 // q if q < 50 else 200 - 2 * q
    return np.clip((JPEG_LUMA * scale + 50) // 100, 1, 255)


@dataclass(frozen=True)
class CodecConfig:
    quality: int = 50
    profile: str = "sigma-zigzag-residue"
    colorspace: str = "ycbcr"
    E: float = DEFAULT_E
    embed_models: bool = False

    def __post_init__(self):
        if self.profile not in PROFILES:
            raise ValueError(f"profile must be one of {PROFILES}")
        if self.colorspace not in COLORSPACES:
            raise ValueError(f"colorspace must be one of {COLORSPACES}")
        quality_table(self.quality)
        if not self.E > 0:
            raise ValueError("E must be > 0")
        # the header stores E as f32; use exactly that value everywhere
        object.__setattr__(self, "E", float(np.float32(self.E)))

    @property
    def steps(self):
        """Quantization step per zigzag position."""
        return quality_table(self.quality)[_ZZ_ROWS, _ZZ_COLS] / 256.0


# ---------------------------------------------------------------- models

_FIELD_SHAPES = {
    "const_mu": (64,), "const_sigma": (64,),
    "mu_w": (64, 16), "mu_b": (64,),
    "resid_sigma": (64,),
    "sb_w": (64, 16), "sb_b": (64,),
    "sz_w": (64, 79), "sz_b": (64,),
    "red_dir": (16,),
    "vh_w": (64, 1), "vh_b": (64,),
    "vph_w": (64, 2), "vph_b": (64,),
    "h_w": (64, 1), "h_b": (64,),
}

_PROFILE_FIELDS = {
    "none": ("const_mu", "const_sigma"),
    "mu-boundary": ("const_mu", "const_sigma", "mu_w", "mu_b", "resid_sigma"),
    "sigma-boundary": ("const_mu", "const_sigma", "mu_w", "mu_b", "sb_w", "sb_b"),
    "sigma-zigzag-residue": ("const_mu", "const_sigma", "mu_w", "mu_b", "sz_w", "sz_b"),
    "VH": ("const_mu", "const_sigma", "mu_w", "mu_b", "red_dir", "vh_w", "vh_b"),
    "V+H": ("const_mu", "const_sigma", "mu_w", "mu_b", "red_dir", "vph_w", "vph_b"),
    "H-only": ("const_mu", "const_sigma", "mu_w", "mu_b", "red_dir", "h_w", "h_b"),
}


@dataclass(frozen=True, eq=False)
class ModelSet:
    """Linear center/width models for all profiles, per zigzag position.

    Values are rounded through float32 on construction so a model set read
    back from a file predicts exactly what the writer predicted.
    """

    const_mu: np.ndarray = None
    const_sigma: np.ndarray = None
    mu_w: np.ndarray = None
    mu_b: np.ndarray = None
    resid_sigma: np.ndarray = None
    sb_w: np.ndarray = None
    sb_b: np.ndarray = None
    sz_w: np.ndarray = None
    sz_b: np.ndarray = None
    red_dir: np.ndarray = None
    vh_w: np.ndarray = None
    vh_b: np.ndarray = None
    vph_w: np.ndarray = None
    vph_b: np.ndarray = None
    h_w: np.ndarray = None
    h_b: np.ndarray = None

    def __post_init__(self):
        for name, shape in _FIELD_SHAPES.items():
            v = getattr(self, name)
            if v is None:
                continue
            a = np.asarray(v, dtype=np.float32).astype(np.float64)
            if a.shape != shape:
                raise ValueError(f"{name} has shape {a.shape}, expected {shape}")
            if not np.all(np.isfinite(a)):
                raise ValueError(f"{name} is not finite")
            object.__setattr__(self, name, a)

    def supports(self, profile: str) -> bool:
        return all(getattr(self, f) is not None for f in _PROFILE_FIELDS[profile])

    def to_bytes(self, profile: str) -> bytes:
        """Schema id (the profile index) then the profile's arrays as f32 LE."""
        names = _PROFILE_FIELDS[profile]
        if not self.supports(profile):
            raise ValueError(f"model set lacks arrays for profile {profile!r}")
        body = np.concatenate([getattr(self, n).ravel() for n in names]).astype("<f4")
        return bytes([PROFILES.index(profile)]) + body.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes):
        if len(data) < 1 or data[0] >= len(PROFILES):
            raise ContainerError("unknown model schema")
        profile = PROFILES[data[0]]
        names = _PROFILE_FIELDS[profile]
        sizes = [int(np.prod(_FIELD_SHAPES[n])) for n in names]
        if len(data) - 1 != 4 * sum(sizes):
            raise LengthError("model section size does not match its schema")
        flat = np.frombuffer(data, dtype="<f4", offset=1).astype(np.float64)
        arrays, pos = {}, 0
        for n, s in zip(names, sizes):
            arrays[n] = flat[pos:pos + s].reshape(_FIELD_SHAPES[n])
            pos += s
        return profile, cls(**arrays)

    def save(self, path):
        np.savez(path, **{f.name: getattr(self, f.name).astype(np.float32)
                          for f in fields(self) if getattr(self, f.name) is not None})

    @classmethod
    def load(cls, path):
        with np.load(path) as z:
            return cls(**{k: z[k] for k in z.files})


def _ls_or_mean(X, y):
    try:
        return _solve_ls(X, y)
    except ValueError:
        return np.zeros(X.shape[1]), float(y.mean())


def fit_models(planes) -> ModelSet:
    """Fit every profile's models on float planes (values in ``[0, 1]``).

    Features come from the original (not decoded) neighbours. Fits that are
    impossible on the data at hand fall back to constants.
    """
    allz, feats, tgts = [], [], []
    for p in planes:
        g = partition_and_pad(p)
        X = dct2_forward(g.blocks)
        allz.append(X[..., _ZZ_ROWS, _ZZ_COLS].reshape(-1, 64))
        if g.shape[0] > 1 and g.shape[1] > 1:
            f, z = plane_training_set(X, g.blocks)
            feats.append(f)
            tgts.append(z)
    Z_all = np.concatenate(allz)
    const_mu = Z_all.mean(axis=0)
    const_sigma = np.maximum(np.abs(Z_all - const_mu).mean(axis=0), SIGMA_MIN)
    F = np.concatenate(feats) if feats else np.zeros((0, 16))
    Z = np.concatenate(tgts) if tgts else np.zeros((0, 64))
    n = F.shape[0]

    mu_w = np.zeros((64, 16))
    mu_b = const_mu.copy()
    if n:
        for t in range(64):
            mu_w[t], mu_b[t] = _ls_or_mean(F, Z[:, t])
        E = Z - (F @ mu_w.T + mu_b)
    else:
        E = np.zeros((0, 64))
    aF, aE = np.abs(F), np.abs(E)
    resid_sigma = np.maximum(aE.mean(axis=0), SIGMA_MIN) if n else const_sigma.copy()

    sb_w = np.zeros((64, 16))
    sb_b = resid_sigma.copy()
    sz_w = np.zeros((64, 79))
    sz_b = resid_sigma.copy()
    if n:
        for t in range(64):
            sb_w[t], sb_b[t] = _ls_or_mean(aF, aE[:, t])
            w, sz_b[t] = _ls_or_mean(np.hstack([aF, aE[:, :t]]), aE[:, t])
            sz_w[t, :16 + t] = w

    red = {}
    try:
        res = cca(aF, aE, k=1)
        a = res.pairs[0][0]
        a = np.maximum(a if a.sum() >= 0 else -a, 0.0)
        direction = a / a.sum() if a.sum() > 0 else np.full(16, 1.0 / 16)
    except (ValueError, np.linalg.LinAlgError):
        direction = np.full(16, 1.0 / 16)
    for mode, key in _REDUCED.items():
        if n:
            m = sigma_feature_model(mode, aF, aE, direction=direction)
            red[key + "_w"], red[key + "_b"] = m.weights, m.intercepts
        else:
            k = 2 if mode == "V+H" else 1
            red[key + "_w"], red[key + "_b"] = np.zeros((64, k)), resid_sigma.copy()
    return ModelSet(const_mu=const_mu, const_sigma=const_sigma, mu_w=mu_w, mu_b=mu_b,
                    resid_sigma=resid_sigma, sb_w=sb_w, sb_b=sb_b, sz_w=sz_w, sz_b=sz_b,
                    red_dir=direction, **red)


@lru_cache(maxsize=1)
def builtin_models() -> ModelSet:
    """Models trained on the default corpus, shipped with the package."""
    with resources.as_file(resources.files("epq") / "data" / "builtin_models.npz") as p:
        return ModelSet.load(p)


# ---------------------------------------------------------------- tables

@dataclass(frozen=True, eq=False)
class _Tables:
    ladder: object
    tables: tuple
    x_max: np.ndarray
    flush: np.ndarray
    esc_m: np.ndarray
    cum: np.ndarray      # (tables, max_symbols)
    freq: np.ndarray
    cost: np.ndarray     # -lg probability per symbol


@lru_cache(maxsize=8)
def _ladder_tables(E: float) -> _Tables:
    ladder = build_ladder(0.1, 256.0, E)
    tables = []
    for i, s in enumerate(ladder.nodes):
        m = flush_bits(s)
        g = residue_table_probs(s, m, PRECISION)
        tables.append(table_from_geometric(g, PRECISION, i, golomb_pow2_m(s / (1 << m))))
    width = max(t.n_symbols for t in tables)
    cum = np.zeros((len(tables), width), dtype=np.int64)
    freq = np.ones((len(tables), width), dtype=np.int64)
    for i, t in enumerate(tables):
        cum[i, :t.n_symbols] = t.cum[:-1]
        freq[i, :t.n_symbols] = t.freqs
    return _Tables(ladder, tuple(tables),
                   np.array([-t.lo for t in tables], dtype=np.int64),
                   np.array([t.flush for t in tables], dtype=np.int64),
                   np.array([t.escape_m for t in tables], dtype=np.int64),
                   cum, freq, PRECISION - np.log2(freq))


def _split(r, tid, tb: _Tables):
    """Symbol index, escape excess (-1 if none) and flushed low bits of residues."""
    m = tb.flush[tid]
    xm = tb.x_max[tid]
    v = np.right_shift(r, m)
    lo = r - np.left_shift(v, m)
    sym = v + xm + 1
    excess = np.full(r.shape, -1, dtype=np.int64)
    neg = v < -xm
    pos = v > xm
    excess[neg] = (-xm - 1 - v)[neg]
    excess[pos] = (v - xm - 1)[pos]
    sym[neg] = 0
    sym[pos] = (2 * xm + 2)[pos]
    return sym, excess, lo, m


def _code_bits(sym, excess, m, tid, tb: _Tables):
    bits = tb.cost[tid, sym] + m
    esc = excess >= 0
    em = tb.esc_m[tid]
    bits[esc] += (np.right_shift(excess, em) + 1 + em)[esc]
    return bits


# ---------------------------------------------------------------- prediction

class _Predictor:
    """Per-wavefront center/width evaluation shared by encoder and decoder."""

    def __init__(self, models: ModelSet, profile: str):
        if not models.supports(profile):
            raise ValueError(f"models do not cover profile {profile!r}")
        self.m = models
        self.profile = profile

    def centers(self, feats, ctx):
        m = self.m
        mu = np.broadcast_to(m.const_mu, (feats.shape[0], 64)).copy()
        if self.profile != "none" and np.any(ctx):
            mu[ctx] = feats[ctx] @ m.mu_w.T + m.mu_b
        return mu

    def base_widths(self, feats, ctx):
        """Widths that do not depend on in-block residues, ``(k, 64)``."""
        m = self.m
        k = feats.shape[0]
        sig = np.broadcast_to(m.const_sigma, (k, 64)).copy()
        if not np.any(ctx):
            return sig
        a = np.abs(feats[ctx])
        p = self.profile
        if p == "mu-boundary":
            sig[ctx] = m.resid_sigma
        elif p == "sigma-boundary":
            sig[ctx] = a @ m.sb_w.T + m.sb_b
        elif p == "sigma-zigzag-residue":
            sig[ctx] = a @ m.sz_w[:, :16].T + m.sz_b
        elif p in _REDUCED:
            d = m.red_dir
            v = a[:, :8] @ d[:8]
            h = a[:, 8:] @ d[8:]
            key = _REDUCED[p]
            if p == "VH":
                R = (v + h)[:, None]
            elif p == "V+H":
                R = np.stack([v, h], axis=1)
            else:
                R = h[:, None]
            sig[ctx] = R @ getattr(m, key + "_w").T + getattr(m, key + "_b")
        return sig

    def width(self, base, res, ctx, t):
        """Width at zigzag position ``t`` given absolute residues ``res[:, :t]``."""
        s = base[:, t].copy()
        if self.profile == "sigma-zigzag-residue" and t and np.any(ctx):
            s[ctx] += res[ctx, :t] @ self.m.sz_w[t, 16:16 + t]
        return np.maximum(s, SIGMA_MIN)


def _wavefronts(R, C):
    for d in range(2 * (R - 1) + C):
        r = np.arange(max(0, (d - C + 2) // 2), min(R - 1, d // 2) + 1)
        c = d - 2 * r
        keep = (c >= 0) & (c < C)
        if np.any(keep):
            yield d, r[keep], c[keep]


def _context(P, r, c):
    ctx = (r > 0) & (c > 0)
    feats = np.zeros((r.size, 16))
    if np.any(ctx):
        feats[ctx] = boundary_features(P[r[ctx], c[ctx] - 1], P[r[ctx] - 1, c[ctx]])
    return feats, ctx


def _analyze_plane(X, shape, cfg: CodecConfig, models: ModelSet):
    """Residues and reconstruction only; widths and tables are not needed for these."""
    R, C = shape
    steps = cfg.steps
    pred = _Predictor(models, cfg.profile)
    P = np.zeros((R, C, 8, 8))
    residues = np.zeros((R, C, 64), dtype=np.int64)
    for _, r, c in _wavefronts(R, C):
        feats, ctx = _context(P, r, c)
        mu = pred.centers(feats, ctx)
        rq = np.rint((X[r, c] - mu) / steps).astype(np.int64)
        coeffs = np.zeros((r.size, 8, 8))
        coeffs[:, _ZZ_ROWS, _ZZ_COLS] = mu + rq * steps
        P[r, c] = dct2_inverse(coeffs)
        residues[r, c] = rq
    return residues, P


def _code_plane(plane, shape, cfg: CodecConfig, models: ModelSet, channel: int,
                dec: StreamDecoder = None, trace=None):
    """Run the shared wavefront loop; encodes when ``plane`` is given, else decodes."""
    R, C = shape
    tb = _ladder_tables(cfg.E)
    steps = cfg.steps
    pred = _Predictor(models, cfg.profile)
    tables = tb.tables
    if plane is not None:
        X = dct2_forward(plane.blocks)[..., _ZZ_ROWS, _ZZ_COLS]
        enc = StreamEncoder()
    P = np.zeros((R, C, 8, 8))
    residues = np.zeros((R, C, 64), dtype=np.int64)
    bits = np.zeros(64)
    for d, r, c in _wavefronts(R, C):
        feats, ctx = _context(P, r, c)
        mu = pred.centers(feats, ctx)
        base = pred.base_widths(feats, ctx)
        k = r.size
        res = np.zeros((k, 64))
        rq = np.zeros((k, 64), dtype=np.int64)
        for t in range(64):
            q = steps[t]
            sigma = pred.width(base, res, ctx, t)
            tid = np.asarray(ladder_lookup(tb.ladder, sigma / q), dtype=np.int64)
            if trace is not None:
                trace((channel, d, t, r.copy(), c.copy(), mu[:, t].copy(), sigma, tid))
            if dec is None:
                rv = np.rint((X[r, c, t] - mu[:, t]) / q).astype(np.int64)
                sym, excess, lo, m = _split(rv, tid, tb)
                enc.extend(tb.cum[tid, sym], tb.freq[tid, sym])
                for i in np.nonzero((excess >= 0) | (m > 0))[0]:
                    if excess[i] >= 0:
                        enc.raw.write_golomb(int(excess[i]), int(tb.esc_m[tid[i]]))
                    enc.raw.write(int(lo[i]), int(m[i]))
            else:
                vals = []
                get, get_raw, flush = dec.get, dec.get_raw, tb.flush
                for i in range(k):
                    ti = tid[i]
                    v = get(tables[ti])
                    mi = flush[ti]
                    vals.append((v << mi) | get_raw(mi) if mi else v)
                rv = np.array(vals, dtype=np.int64)
                sym, excess, lo, m = _split(rv, tid, tb)
            bits[t] += _code_bits(sym, excess, m, tid, tb).sum()
            rq[:, t] = rv
            res[:, t] = q * np.abs(rv)
        coeffs = np.zeros((k, 8, 8))
        coeffs[:, _ZZ_ROWS, _ZZ_COLS] = mu + rq * steps
        P[r, c] = dct2_inverse(coeffs)
        residues[r, c] = rq
    matrix = np.zeros((8, 8))
    matrix[_ZZ_ROWS, _ZZ_COLS] = bits
    payload = enc.finish() if dec is None else None
    return P, residues, matrix, payload


# ---------------------------------------------------------------- container

class ContainerError(ValueError):
    """Malformed container."""


class MagicError(ContainerError):
    pass


class VersionError(ContainerError):
    pass


class LengthError(ContainerError):
    pass


class ChecksumError(ContainerError):
    pass


_HEAD = struct.Struct("<4sBIIBBBBf")


@dataclass
class EncodeResult:
    data: bytes
    residues: list            # per channel (R, C, 64) ints, zigzag order
    bits: np.ndarray          # (channels, 8, 8) ideal code lengths
    payload_bytes: list = field(default_factory=list)
    settled: bool = None      # None when settling was skipped

    @property
    def payload_bits(self):
        return 8 * sum(self.payload_bytes)


@dataclass
class DecodeResult:
    image: np.ndarray
    config: CodecConfig
    residues: list
    bits: np.ndarray
    payload_bytes: list
    planes: list = field(default_factory=list)

    @property
    def payload_bits(self):
        return 8 * sum(self.payload_bytes)

    def bits_per_value(self):
        """Mean bits per coefficient for each ``(channel, j, k)``."""
        blocks = np.array([r.shape[0] * r.shape[1] for r in self.residues], dtype=float)
        return self.bits / blocks[:, None, None]


def _image_of(planes, colorspace):
    if len(planes) == 1:
        out = planes[0]
    else:
        out = np.stack(planes, axis=-1)
        if colorspace == "ycbcr":
            out = ycbcr_to_rgb(out)
    return np.clip(np.rint(out * 255.0), 0, 255).astype(np.uint8)


def _zz_coeffs(plane):
    grid = partition_and_pad(plane)
    return grid, dct2_forward(grid.blocks)[..., _ZZ_ROWS, _ZZ_COLS]


def settle_image(image, config: CodecConfig, models: ModelSet, max_iter: int = 128):
    """Move ``image`` to a point whose decoded image re-encodes to the same residues.

    Rounding and clipping of decoded pixels can shift a residue by one step,
    which then propagates through the contexts of later blocks. Iterating
    ``image <- decode(residues(image))`` reaches an image whose residues are
    a fixed point: within a few rounds at moderate quality, a few dozen when
    steps approach the pixel rounding noise. Returns the image to
    encode and whether a fixed point was reached.
    """
    img = np.asarray(image)
    h, w = img.shape[:2]

    def analyze(x):
        out = []
        for p in _planes_of(x, config.colorspace):
            grid, X = _zz_coeffs(p)
            out.append(_analyze_plane(X, grid.shape, config, models))
        return out

    cur = img
    state = analyze(cur)
    for _ in range(max_iter):
        dec = _image_of([unpartition(BlockGrid(P, h, w)) for _, P in state], config.colorspace)
        nxt = analyze(dec)
        if all(np.array_equal(a[0], b[0]) for a, b in zip(state, nxt)):
            return cur, True
        cur, state = dec, nxt
    return cur, False


def _planes_of(image, colorspace):
    img = np.asarray(image)
    if img.dtype != np.uint8:
        raise ValueError("only 8-bit images are supported")
    if img.ndim == 2:
        return [img / 255.0]
    if img.ndim == 3 and img.shape[2] == 3:
        x = img / 255.0
        if colorspace == "ycbcr":
            x = rgb_to_ycbcr(x)
        return [x[..., i] for i in range(3)]
    raise ValueError("expected a (H, W) gray or (H, W, 3) RGB image")


def encode_image_detailed(image, config: CodecConfig = CodecConfig(), models: ModelSet = None,
                          trace=None, settle: bool = True) -> EncodeResult:
    """Encode an 8-bit image.

    With ``settle`` (the default) the coded residues are a fixed point of
    decode-then-encode, so re-encoding the decoded image reproduces the same
    bytes; see :func:`settle_image`.
    """
    planes = _planes_of(image, config.colorspace)
    if models is None:
        models = fit_models(planes) if config.embed_models else builtin_models()
    model_bytes = models.to_bytes(config.profile) if config.embed_models else b""
    if config.embed_models:
        # code with exactly what the decoder will read back
        models = ModelSet.from_bytes(model_bytes)[1]
    settled = None
    if settle:
        image, settled = settle_image(image, config, models)
        planes = _planes_of(image, config.colorspace)
    h, w = planes[0].shape
    head = _HEAD.pack(MAGIC, VERSION, w, h, len(planes), COLORSPACES.index(config.colorspace),
                      config.quality, PROFILES.index(config.profile), config.E)
    parts = [head, struct.pack("<I", len(model_bytes)), model_bytes]
    residues, bits, sizes = [], [], []
    for ch, p in enumerate(planes):
        grid = partition_and_pad(p)
        _, res, mat, payload = _code_plane(grid, grid.shape, config, models, ch, trace=trace)
        parts += [struct.pack("<I", len(payload)), payload]
        residues.append(res)
        bits.append(mat)
        sizes.append(len(payload))
    body = b"".join(parts)
    data = body + struct.pack("<I", zlib.crc32(body) & 0xFFFFFFFF)
    return EncodeResult(data, residues, np.array(bits), sizes, settled)


def encode_image(image, config: CodecConfig = CodecConfig(), models: ModelSet = None,
                 settle: bool = True) -> bytes:
    return encode_image_detailed(image, config, models, settle=settle).data


def _parse(data: bytes):
    if len(data) < 4:
        raise LengthError("file shorter than the magic number")
    if data[:4] != MAGIC:
        raise MagicError(f"bad magic {data[:4]!r}")
    if len(data) < _HEAD.size:
        raise LengthError("file shorter than the header")
    _, version, w, h, nch, cs, quality, prof, E = _HEAD.unpack_from(data, 0)
    if version != VERSION:
        raise VersionError(f"unsupported version {version}")
    pos = _HEAD.size

    def take():
        nonlocal pos
        if pos + 4 > len(data):
            raise LengthError("truncated section length")
        (n,) = struct.unpack_from("<I", data, pos)
        pos += 4
        if pos + n > len(data):
            raise LengthError("section length exceeds file size")
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    model_bytes = take()
    payloads = [take() for _ in range(nch)]
    if pos + 4 != len(data):
        raise LengthError(f"declared lengths cover {pos + 4} bytes, file has {len(data)}")
    (crc,) = struct.unpack_from("<I", data, pos)
    if crc != zlib.crc32(data[:pos]) & 0xFFFFFFFF:
        raise ChecksumError("checksum mismatch")
    if nch not in (1, 3) or cs >= len(COLORSPACES) or prof >= len(PROFILES) or w < 1 or h < 1:
        raise ContainerError("invalid header fields")
    cfg = CodecConfig(quality, PROFILES[prof], COLORSPACES[cs], float(E), bool(model_bytes))
    return cfg, w, h, model_bytes, payloads


def decode_image(data: bytes, trace=None) -> DecodeResult:
    cfg, w, h, model_bytes, payloads = _parse(data)
    if model_bytes:
        prof, models = ModelSet.from_bytes(model_bytes)
        if prof != cfg.profile:
            raise ContainerError("model schema does not match the profile")
    else:
        models = builtin_models()
    shape = (-(-h // 8), -(-w // 8))
    planes, residues, bits = [], [], []
    for ch, payload in enumerate(payloads):
        try:
            dec = StreamDecoder(payload)
            P, res, mat, _ = _code_plane(None, shape, cfg, models, ch, dec=dec, trace=trace)
            dec.check_end()
        except StreamError as exc:
            raise ContainerError(f"channel {ch}: {exc}") from exc
        planes.append(unpartition(BlockGrid(P, h, w)))
        residues.append(res)
        bits.append(mat)
    image = _image_of(planes, cfg.colorspace)
    return DecodeResult(image, cfg, residues, np.array(bits), [len(p) for p in payloads], planes)


def evaluate_pipeline(images, profiles=PROFILES[:4], quality: int = 50,
                      colorspace: str = "ycbcr", models: ModelSet = None, settle: bool = False):
    """Mean payload bits per pixel and summed per-position bit matrices per profile.

    Settling is off by default here: it only matters for re-encoding and
    changes rates by a negligible amount.
    """
    out = {}
    for prof in profiles:
        cfg = CodecConfig(quality, prof, colorspace)
        total_bits, total_px = 0, 0
        matrix = np.zeros((8, 8))
        for img in images:
            res = encode_image_detailed(img, cfg, models, settle=settle)
            total_bits += res.payload_bits
            total_px += img.shape[0] * img.shape[1]
            matrix += res.bits.sum(axis=0)
        out[prof] = (total_bits / total_px, matrix)
    return out
