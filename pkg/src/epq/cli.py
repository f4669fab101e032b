"""Command-line interface.

Every analysis command writes a CSV with a header row. Options may also come
from a ``--config`` file of ``key = value`` lines (keys are option names with
dashes or underscores); command-line flags win over the file, the file wins
over built-in defaults. ``EPQ_THREADS`` caps how many images are processed
at once.
"""

import argparse
import csv
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import codec, ladder as lad, quantizer as qz
from .corpus import load_corpus
from .epd import EpdParams, KAPPA_GRID, cdf_diagnostic, epd_mle, kappa_profile
from .pnm import PnmError, read_pnm, write_pnm
from .predict import (conditional_width_scan, fit_boundary_models, laplace_logloss_bits,
                      plane_training_set, prediction_savings, zigzag_width_savings)
from .transform import dct2_forward, partition_and_pad, zigzag, zigzag_full

__all__ = ["main", "build_parser", "parse_n_list"]


def _threads():
    try:
        return max(1, int(os.environ.get("EPQ_THREADS", "1")))
    except ValueError:
        return 1


def _map(fn, items):
    items = list(items)
    n = min(_threads(), len(items)) or 1
    if n == 1:
        return [fn(i) for i in items]
    with ThreadPoolExecutor(max_workers=n) as pool:
        return list(pool.map(fn, items))


def parse_n_list(text: str):
    """``"1..32"``, ``"1..31:2"`` (with step) or ``"1,3,5"``."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            rng, _, step = part.partition(":")
            a, b = rng.split("..")
            out.extend(range(int(a), int(b) + 1, int(step) if step else 1))
        elif part:
            out.append(int(part))
    if not out or min(out) < 1:
        raise argparse.ArgumentTypeError(f"invalid N list {text!r}")
    return out


def _pair(text):
    try:
        a, b = (float(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'a,b', got {text!r}") from None
    if not b > a:
        raise argparse.ArgumentTypeError("range needs a < b")
    return a, b


def _dist(text):
    kind, _, rest = text.partition(":")
    if kind != "epd":
        raise argparse.ArgumentTypeError("distribution must look like epd:kappa,sigma[,mu]")
    vals = [float(v) for v in rest.split(",")]
    if len(vals) not in (2, 3):
        raise argparse.ArgumentTypeError("distribution must look like epd:kappa,sigma[,mu]")
    return EpdParams(*vals)


def _density(text):
    if text in ("uniform", "optimal"):
        return text, None
    kind, _, lam = text.partition(":")
    if kind == "rd" and lam:
        return "rd", float(lam)
    raise argparse.ArgumentTypeError("density must be uniform, optimal or rd:LAMBDA")


def _writer(path):
    fh = sys.stdout if path in (None, "-") else open(path, "w", newline="")
    return fh, csv.writer(fh, lineterminator="\n")


def _fmt(x):
    return f"{x:.12g}" if isinstance(x, float) else x


def _emit(path, header, rows):
    fh, w = _writer(path)
    try:
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])
    finally:
        if fh is not sys.stdout:
            fh.close()


def _corpus_blocks(images):
    def one(img):
        g = partition_and_pad(img / 255.0)
        return dct2_forward(g.blocks), g.blocks

    return _map(one, images)


# ---------------------------------------------------------------- commands

def cmd_encode(a):
    img = read_pnm(a.input)
    cfg = codec.CodecConfig(a.quality, a.profile, a.colorspace, a.E, a.embed_models)
    data = codec.encode_image(img, cfg)
    Path(a.output).write_bytes(data)
    return 0


def cmd_decode(a):
    res = codec.decode_image(Path(a.input).read_bytes())
    write_pnm(a.output, res.image)
    if a.stats:
        bpv = res.bits_per_value()
        rows = []
        for ch in range(bpv.shape[0]):
            for j in range(8):
                for k in range(8):
                    rows.append((ch, j + 1, k + 1, float(res.bits[ch, j, k]), float(bpv[ch, j, k])))
        _emit(a.stats, ["channel", "j", "k", "bits", "bits_per_value"], rows)
    return 0


def _load_samples(path):
    p = Path(path)
    if p.suffix == ".npy":
        return np.load(p).ravel()
    return np.loadtxt(p, delimiter="," if p.suffix == ".csv" else None).ravel()


def cmd_fit_epd(a):
    kappas = KAPPA_GRID if a.kappa == "grid" else np.array([a.kappa_value])
    rows = []
    if Path(a.corpus).is_file():
        x = _load_samples(a.corpus)
        for k, ll in zip(kappas, kappa_profile(x, kappas)):
            rows.append((0, 0, float(k), float(-ll)))
    else:
        images = load_corpus(a.corpus)
        coeffs = np.concatenate([X.reshape(-1, 8, 8) for X, _ in _corpus_blocks(images)])
        for j, k in zigzag_full():
            prof = kappa_profile(coeffs[:, j, k], kappas)
            rows.extend((j + 1, k + 1, float(kk), float(-ll)) for kk, ll in zip(kappas, prof))
        if a.models:
            codec.fit_models([im / 255.0 for im in images]).save(a.models)
    _emit(a.out, ["j", "k", "kappa", "bits"], rows)
    return 0


def cmd_diagnose_cdf(a):
    images = load_corpus(a.corpus)
    coeffs = np.concatenate([X.reshape(-1, 8, 8) for X, _ in _corpus_blocks(images)])
    grid = np.linspace(0.0, 1.0, a.points)
    rows = []
    for j, k in zigzag():
        x = coeffs[:, j, k]
        if np.all(x == x[0]):
            continue
        p, _ = epd_mle(x, kappa_policy="grid" if a.kappa == "mle" else float(a.kappa))
        ranks, dev = cdf_diagnostic(x, p)
        curve = np.interp(grid, ranks, dev)
        rows.extend((j + 1, k + 1, float(p.kappa), float(u), float(v)) for u, v in zip(grid, curve))
    _emit(a.out, ["j", "k", "kappa", "u", "deviation"], rows)
    return 0


def _make_density(kind, lam, dist, rng, p):
    if kind == "uniform":
        return qz.uniform_density(*rng)
    if kind == "optimal":
        return qz.density_distortion_optimal(dist, p, domain=rng)
    return qz.density_rd(dist, lam, int(p), domain=rng)


def cmd_rd_curve(a):
    kind, lam = a.density
    rng = a.range or (a.dist.mu - 20 * a.dist.sigma, a.dist.mu + 20 * a.dist.sigma)
    dens = _make_density(kind, lam, a.dist, rng, a.p)
    rows = []
    for n in a.N_list:
        pt = qz.eval_rd(a.dist, qz.nodes_from_density(dens, n))
        rows.append((n, pt.rate, pt.distortion))
    _emit(a.out, ["N", "rate", "distortion"], rows)
    return 0


_ANALYSES = ("pair", "quad", "rowcol", "full", "zigzag", "boundary-sigma", "scan")


def cmd_predict_eval(a):
    images = load_corpus(a.corpus)
    grids = _corpus_blocks(images)
    rows = []
    for prof in a.profile:
        if prof in ("pair", "quad", "rowcol", "full"):
            usable = [X for X, _ in grids if X.shape[0] >= 2 and X.shape[1] >= 3]
            m = prediction_savings(usable, prof)
            rows.extend((prof, j + 1, k + 1, "", float(m[j, k])) for j in range(8) for k in range(8))
        elif prof == "zigzag":
            blocks = np.concatenate([X.reshape(-1, 8, 8) for X, _ in grids])
            s = zigzag_width_savings(blocks)
            rows.extend((prof, j + 1, k + 1, "", float(v)) for (j, k), v in zip(zigzag(), s))
        elif prof == "boundary-sigma":
            parts = [plane_training_set(X, P) for X, P in grids if min(X.shape[:2]) > 1]
            F = np.concatenate([f for f, _ in parts])
            Z = np.concatenate([z for _, z in parts])
            bm = fit_boundary_models(F, Z)
            for t, (j, k) in enumerate(zigzag_full()):
                e = Z[:, t] - bm.mu[t].evaluate(F)
                const = max(float(np.abs(e).mean()), 1e-12)
                pred = bm.sigma[t].evaluate(np.abs(F))
                gain = laplace_logloss_bits(e, const) - laplace_logloss_bits(e, pred)
                rows.append((prof, j + 1, k + 1, "", float(gain)))
        elif prof == "scan":
            blocks = np.concatenate([X.reshape(-1, 8, 8) for X, _ in grids])
            scan = conditional_width_scan(blocks[:, 0, 1], blocks[:, 0, 2], a.window)
            rows.extend(("scan", i, "", float(m), float(w))
                        for i, (m, w) in enumerate(zip(scan.mean_c1, scan.width)))
    _emit(a.out, ["analysis", "j", "k", "x", "value"], rows)
    return 0


def cmd_build_ladder(a):
    L = lad.build_ladder(a.sigma_start, a.sigma_max, a.E)
    rows = []
    for i, s in enumerate(L.nodes):
        m = lad.flush_bits(s)
        g = lad.residue_table_probs(s, m)
        mp = lad.golomb_pow2_m(s)
        # the tail-code penalty formulas only make sense once M >= 1
        wide = lad.golomb_optimal_M(s) >= 1.0
        rows.append((i, s, lad.cell_width(s, a.E), lad.penalty_coeff(s), m, g.x_max,
                     lad.golomb_penalty(s, lad.golomb_optimal_M(s)) if wide else "",
                     lad.golomb_penalty(s, float(1 << mp)) if wide else "",
                     lad.lsb_flush_penalty(s, m) if m else 0.0))
    _emit(a.out, ["index", "sigma", "width", "D", "flush_bits", "x_max",
                  "golomb_penalty", "golomb_pow2_penalty", "flush_penalty"], rows)
    return 0


# ---------------------------------------------------------------- parser

def _bool(text):
    t = str(text).strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"not a boolean: {text!r}")


def build_parser():
    top = argparse.ArgumentParser(prog="epq", description="EPD-modelled DCT image codec and analysis tools")
    top.add_argument("--seed", type=int, default=0, help="seed for any sampling (default 0)")
    top.add_argument("--config", help="key=value file supplying option defaults")
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("encode", help="compress a PGM/PPM image")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--quality", type=int, default=50)
    p.add_argument("--profile", choices=codec.PROFILES, default="sigma-zigzag-residue")
    p.add_argument("--colorspace", choices=codec.COLORSPACES, default="ycbcr")
    p.add_argument("--E", type=float, default=lad.DEFAULT_E)
    p.add_argument("--embed-models", action="store_true")
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decompress to PGM/PPM")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--stats", help="CSV of bits per (channel, j, k)")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("fit-epd", help="log-likelihood per position over shapes")
    p.add_argument("corpus", help="image directory, or a .npy/.txt/.csv file of samples")
    p.add_argument("--out", default="-")
    p.add_argument("--models", help="also fit codec models and save them here (.npz)")
    p.add_argument("--kappa", choices=("grid", "fixed"), default="grid")
    p.add_argument("--kappa-value", type=float, default=0.5)
    p.set_defaults(func=cmd_fit_epd)

    p = sub.add_parser("diagnose-cdf", help="empirical CDF deviation curves per AC position")
    p.add_argument("corpus", nargs="?")
    p.add_argument("--kappa", default="0.5", help="shape, or 'mle' to fit it per position")
    p.add_argument("--points", type=int, default=101)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_diagnose_cdf)

    p = sub.add_parser("rd-curve", help="rate and distortion of density quantizers")
    p.add_argument("--dist", type=_dist, default=EpdParams(1.0, 1.0))
    p.add_argument("--range", type=_pair)
    p.add_argument("--N-list", type=parse_n_list, default=parse_n_list("1..32"))
    p.add_argument("--density", type=_density, default=("uniform", None))
    p.add_argument("--p", type=float, default=2.0, help="error power (rd density needs 1 or 2)")
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_rd_curve)

    p = sub.add_parser("predict-eval", help="savings matrices and conditional width scans")
    p.add_argument("corpus", nargs="?")
    p.add_argument("--profile", type=lambda s: [x for x in s.split(",") if x],
                   default=["pair", "rowcol", "zigzag"])
    p.add_argument("--window", type=int, default=5000)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_predict_eval)

    p = sub.add_parser("build-ladder", help="ladder nodes and tail-code penalties")
    p.add_argument("--E", type=float, default=lad.DEFAULT_E)
    p.add_argument("--sigma-start", type=float, default=0.1)
    p.add_argument("--sigma-max", type=float, default=256.0)
    p.add_argument("--out", default="-")
    p.set_defaults(func=cmd_build_ladder)
    return top


def _read_config(path):
    out = {}
    for n, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ValueError(f"{path}:{n}: expected key = value")
        out[key.strip().replace("-", "_")] = val.strip()
    return out


def _apply_config(parser, argv, values):
    """Install config values as subcommand defaults so explicit flags still win."""
    sub = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    name = next((t for t in argv if t in sub.choices), None)
    if name is None:
        return
    sp = sub.choices[name]
    known = {a.dest: a for a in sp._actions}
    defaults = {}
    for key, val in values.items():
        act = known.get(key)
        if act is None:
            continue
        if isinstance(act, argparse._StoreTrueAction):
            defaults[key] = _bool(val)
        elif act.type is not None:
            defaults[key] = act.type(val)
        else:
            defaults[key] = val
    sp.set_defaults(**defaults)


def _join_negative(argv):
    # let "--range -10,10" through: argparse would read "-10,10" as a flag
    out = []
    it = iter(argv)
    for tok in it:
        if tok == "--range":
            nxt = next(it, None)
            out.append(tok if nxt is None else f"--range={nxt}")
        else:
            out.append(tok)
    return out


def main(argv=None):
    argv = _join_negative(list(sys.argv[1:] if argv is None else argv))
    parser = build_parser()
    cfg_path = None
    for i, tok in enumerate(argv):
        if tok == "--config" and i + 1 < len(argv):
            cfg_path = argv[i + 1]
        elif tok.startswith("--config="):
            cfg_path = tok.split("=", 1)[1]
    try:
        if cfg_path:
            _apply_config(parser, argv, _read_config(cfg_path))
        args = parser.parse_args(argv)
        np.random.seed(args.seed)
        return args.func(args)
    except PnmError as exc:
        print(f"epq: malformed image: {exc}", file=sys.stderr)
        return 2
    except (codec.ContainerError, ValueError, OSError) as exc:
        print(f"epq: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
