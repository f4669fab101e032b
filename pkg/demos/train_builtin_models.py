"""Refit the shipped predictor models on the default corpus.

    python3 demos/train_builtin_models.py [--out PATH]

Needs scikit-image (or EPQ_CORPUS pointing at a directory of PGM/PPM files).
"""

import argparse
from pathlib import Path

from epq import fit_models
from epq.corpus import load_corpus

DEFAULT_OUT = Path(__file__).resolve().parents[1] / "src" / "epq" / "data" / "builtin_models.npz"


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=DEFAULT_OUT)
    args = ap.parse_args()
    planes = [im / 255.0 for im in load_corpus()]
    models = fit_models(planes)
    models.save(args.out)
    print(f"fitted on {len(planes)} images, wrote {args.out}")


if __name__ == "__main__":
    main()
