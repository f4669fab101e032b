"""Binary PGM (P5) and PPM (P6) files with 8-bit samples."""

import numpy as np

__all__ = ["PnmError", "read_pnm", "write_pnm", "parse_pnm", "format_pnm"]


class PnmError(ValueError):
    """Malformed image file; ``offset`` is the byte where parsing failed."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


def _token(data, pos):
    n = len(data)
    while pos < n:
        c = data[pos]
        if c == ord("#"):
            while pos < n and data[pos] not in b"\r\n":
                pos += 1
        elif chr(c).isspace():
            pos += 1
        else:
            break
    start = pos
    while pos < n and not chr(data[pos]).isspace() and data[pos] != ord("#"):
        pos += 1
    if start == pos:
        raise PnmError("unexpected end of header", start)
    return data[start:pos], start, pos


def parse_pnm(data: bytes) -> np.ndarray:
    """Decode P5/P6 bytes to ``uint8`` of shape ``(H, W)`` or ``(H, W, 3)``."""
    if len(data) < 2 or data[:2] not in (b"P5", b"P6"):
        raise PnmError("not a binary PGM/PPM file (expected P5 or P6 magic)", 0)
    channels = 1 if data[:2] == b"P5" else 3
    pos = 2
    values = []
    for name in ("width", "height", "maxval"):
        tok, start, pos = _token(data, pos)
        if not tok.isdigit():
            raise PnmError(f"invalid {name} {tok!r}", start)
        values.append((int(tok), start))
    (w, ow), (h, oh), (maxval, om) = values
    if w < 1:
        raise PnmError("width must be positive", ow)
    if h < 1:
        raise PnmError("height must be positive", oh)
    if maxval != 255:
        raise PnmError(f"only 8-bit samples are supported (maxval {maxval})", om)
    if pos >= len(data) or not chr(data[pos]).isspace():
        raise PnmError("missing whitespace after header", pos)
    pos += 1
    need = w * h * channels
    have = len(data) - pos
    if have < need:
        raise PnmError(f"pixel data truncated: need {need} bytes, found {have}", len(data))
    img = np.frombuffer(data, dtype=np.uint8, count=need, offset=pos)
    shape = (h, w) if channels == 1 else (h, w, 3)
    return img.reshape(shape).copy()


def read_pnm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return parse_pnm(fh.read())


def format_pnm(image) -> bytes:
    img = np.asarray(image)
    if img.dtype != np.uint8:
        raise ValueError("PNM output needs uint8 samples")
    if img.ndim == 2:
        magic = b"P5"
    elif img.ndim == 3 and img.shape[2] == 3:
        magic = b"P6"
    else:
        raise ValueError("expected (H, W) or (H, W, 3)")
    h, w = img.shape[:2]
    return magic + f"\n{w} {h}\n255\n".encode() + np.ascontiguousarray(img).tobytes()


def write_pnm(path, image):
    with open(path, "wb") as fh:
        fh.write(format_pnm(image))
