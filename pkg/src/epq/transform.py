"""Block transforms and pixel plumbing.

Everything here is orthonormal: the 8x8 DCT-II preserves energy, so the DC
coefficient of a block equals 8 times its mean. Coefficient positions are
named 1-based ``(j, k)`` in docs (``(1, 1)`` is DC) but arrays are indexed
0-based, ``coeffs[j-1, k-1]``.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "BLOCK",
    "dct_matrix",
    "dct1",
    "idct1",
    "dct2_forward",
    "dct2_inverse",
    "zigzag",
    "zigzag_full",
    "rgb_to_ycbcr",
    "ycbcr_to_rgb",
    "BlockGrid",
    "partition_and_pad",
    "unpartition",
]

BLOCK = 8


@lru_cache(maxsize=None)
def _dct_matrix(n):
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    g = np.sqrt(2.0 / n) * np.cos(np.pi * (2 * i + 1) * k / (2 * n))
    g[0, :] = np.sqrt(1.0 / n)
    g.setflags(write=False)
    return g


def dct_matrix(n: int = BLOCK) -> np.ndarray:
    """Orthonormal DCT-II matrix ``G`` (rows are basis vectors), ``G @ G.T = I``."""
    return _dct_matrix(n)


def dct1(v):
    """Orthonormal 1-D DCT-II along the last axis."""
    v = np.asarray(v, dtype=float)
    if v.shape[-1] != BLOCK:
        raise ValueError(f"dct1 expects length {BLOCK} along the last axis")
    return v @ _dct_matrix(BLOCK).T


def idct1(c):
    c = np.asarray(c, dtype=float)
    return c @ _dct_matrix(BLOCK)


def dct2_forward(block):
    """Orthonormal 2-D DCT-II of one ``8x8`` block or a stack ``(..., 8, 8)``."""
    b = np.asarray(block, dtype=float)
    if b.shape[-2:] != (BLOCK, BLOCK):
        raise ValueError("expected trailing shape (8, 8)")
    g = _dct_matrix(BLOCK)
    return g @ b @ g.T


def dct2_inverse(coeffs):
    c = np.asarray(coeffs, dtype=float)
    if c.shape[-2:] != (BLOCK, BLOCK):
        raise ValueError("expected trailing shape (8, 8)")
    g = _dct_matrix(BLOCK)
    return g.T @ c @ g


@lru_cache(maxsize=None)
def _zigzag_full(n):
    order = []
    for s in range(2 * n - 1):
        diag = [(j, s - j) for j in range(n) if 0 <= s - j < n]
        # even anti-diagonals run bottom-left to top-right
        order.extend(reversed(diag) if s % 2 == 0 else diag)
    return tuple(order)


def zigzag_full():
    """All 64 positions in JPEG zigzag order, 0-based ``(row, col)``, DC first."""
    return _zigzag_full(BLOCK)


def zigzag():
    """The 63 AC positions in JPEG zigzag order, 0-based ``(row, col)``.

    Starts ``(0, 1), (1, 0)`` (i.e. DCT12 then DCT21) and ends ``(7, 7)``.
    """
    return _zigzag_full(BLOCK)[1:]


# full-range BT.601 (JFIF)
_RGB2YCC = np.array([
    [0.299, 0.587, 0.114],
    [-0.168735892, -0.331264108, 0.5],
    [0.5, -0.418687589, -0.081312411],
])
_YCC2RGB = np.linalg.inv(_RGB2YCC)
_OFFSET = np.array([0.0, 0.5, 0.5])


def rgb_to_ycbcr(rgb):
    """Full-range BT.601 on ``[0, 1]`` values; last axis holds the channels."""
    rgb = np.asarray(rgb, dtype=float)
    return rgb @ _RGB2YCC.T + _OFFSET


def ycbcr_to_rgb(ycc):
    ycc = np.asarray(ycc, dtype=float)
    return (ycc - _OFFSET) @ _YCC2RGB.T


@dataclass(frozen=True)
class BlockGrid:
    """Blocks of one plane in raster order plus the true plane size."""

    blocks: np.ndarray  # (rows, cols, 8, 8)
    height: int
    width: int

    @property
    def shape(self):
        return self.blocks.shape[:2]


def partition_and_pad(image, block_size: int = BLOCK) -> BlockGrid:
    """Split a 2-D plane into ``block_size`` squares.

    Right and bottom borders are padded by replicating the last column/row.
    """
    img = np.asarray(image, dtype=float)
    if img.ndim != 2:
        raise ValueError("partition_and_pad expects a 2-D plane")
    h, w = img.shape
    if h < 1 or w < 1:
        raise ValueError("image must have non-zero width and height")
    rows = -(-h // block_size)
    cols = -(-w // block_size)
    padded = np.pad(img, ((0, rows * block_size - h), (0, cols * block_size - w)),
                    mode="edge")
    blocks = padded.reshape(rows, block_size, cols, block_size).swapaxes(1, 2)
    return BlockGrid(np.ascontiguousarray(blocks), h, w)


def unpartition(grid: BlockGrid) -> np.ndarray:
    rows, cols, b, _ = grid.blocks.shape
    plane = grid.blocks.swapaxes(1, 2).reshape(rows * b, cols * b)
    return plane[:grid.height, :grid.width].copy()
