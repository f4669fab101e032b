"""Natural-image corpora.

A corpus is a list of 8-bit grayscale planes. By default it comes from the
20 natural sample images bundled with scikit-image, center-cropped to at most
512 pixels a side. Setting ``EPQ_CORPUS`` (or passing a directory) reads every
``.pgm``/``.ppm`` file there instead, sorted by name and left uncropped.
"""

import os
from pathlib import Path

import numpy as np

from .pnm import read_pnm

__all__ = ["BUILTIN_NAMES", "MAX_SIDE", "to_gray8", "center_crop", "load_directory",
           "load_builtin", "load_corpus"]

MAX_SIDE = 512

BUILTIN_NAMES = (
    "astronaut", "brick", "camera", "cell", "chelsea", "clock", "coffee",
    "coins", "grass", "gravel", "hubble_deep_field", "immunohistochemistry",
    "moon", "motorcycle_left", "motorcycle_right", "retina", "rocket",
    "microaneurysms", "page", "text",
)


def to_gray8(img) -> np.ndarray:
    """BT.601 luma of an RGB(A) or gray image as ``uint8``."""
    a = np.asarray(img)
    if a.ndim == 3:
        a = a[..., :3].astype(float) @ np.array([0.299, 0.587, 0.114])
        return np.clip(np.rint(a), 0, 255).astype(np.uint8)
    if a.dtype == np.uint8:
        return a.copy()
    if a.dtype == bool:
        return a.astype(np.uint8) * 255
    a = a.astype(float)
    if a.max() <= 1.0:
        a = a * 255.0
    return np.clip(np.rint(a), 0, 255).astype(np.uint8)


def center_crop(img, max_side: int = MAX_SIDE):
    h, w = img.shape[:2]
    top = max(0, (h - max_side) // 2)
    left = max(0, (w - max_side) // 2)
    return img[top:top + max_side, left:left + max_side]


def _builtin(name):
    from skimage import data

    if name.startswith("motorcycle_"):
        left, right, _ = data.stereo_motorcycle()
        return left if name.endswith("left") else right
    return getattr(data, name)()


def load_directory(path, gray: bool = True):
    files = sorted(p for p in Path(path).iterdir() if p.suffix.lower() in (".pgm", ".ppm"))
    if not files:
        raise FileNotFoundError(f"no .pgm/.ppm images in {path}")
    imgs = [read_pnm(p) for p in files]
    return [to_gray8(i) for i in imgs] if gray else imgs


def load_builtin(names=BUILTIN_NAMES, gray: bool = True):
    """The scikit-image sample images (requires scikit-image)."""
    out = []
    for name in names:
        img = center_crop(np.asarray(_builtin(name)))
        out.append(to_gray8(img) if gray else img)
    return out


def load_corpus(path=None, gray: bool = True):
    path = path or os.environ.get("EPQ_CORPUS")
    if path:
        return load_directory(path, gray)
    return load_builtin(gray=gray)
