"""Static-table rANS stream coder with per-symbol table switching.

The coder is a 64-bit-state rANS with 32-bit renormalization words. Symbols
are pushed together with the table they use; the decoder must be able to name
the same table before decoding each symbol (in the codec it derives the table
from already-decoded context).

A second, raw bit channel rides along in the same byte stream. It carries
Golomb-coded escape excesses and any low bits flushed without modelling.

Stream layout::

    u32 LE   length of the rANS section
    ...      rANS section: u8 n, n state bytes LE, then u32 LE words
    ...      raw bit channel, MSB first, zero padded to a byte
"""

import math
import struct
from itertools import repeat
from dataclasses import dataclass, field

import numpy as np

from .ladder import GeometricTable

__all__ = [
    "PRECISION",
    "CodingTable",
    "table_from_probs",
    "table_from_geometric",
    "kl_bits",
    "BitWriter",
    "BitReader",
    "StreamEncoder",
    "StreamDecoder",
    "encode_stream",
    "decode_stream",
    "StreamError",
]

PRECISION = 14
_RANS_L = 1 << 31
_WORD = 0xFFFFFFFF


class StreamError(ValueError):
    """Raised when a byte stream cannot be decoded."""


def _round_probs(p, total):
    p = np.asarray(p, dtype=float)
    if p.size > total:
        raise ValueError(f"{p.size} symbols do not fit in {total} slots")
    if np.any(p < 0) or abs(p.sum() - 1.0) > 1e-9:
        raise ValueError("probabilities must be non-negative and sum to 1")
    exact = p * total
    freqs = np.floor(exact).astype(np.int64)
    freqs = np.maximum(freqs, 1)
    deficit = total - int(freqs.sum())
    if deficit > 0:
        rem = exact - np.floor(exact)
        rem[np.floor(exact) < 1] = -1.0  # already boosted to 1
        order = np.argsort(-rem, kind="stable")
        freqs[order[:deficit]] += 1
    while deficit < 0:
        # take slots where the log-loss increase p*lg(f/(f-1)) is smallest
        cand = np.nonzero(freqs > 1)[0]
        cost = p[cand] * (np.log2(freqs[cand]) - np.log2(freqs[cand] - 1))
        take = cand[np.argsort(cost, kind="stable")[:-deficit]]
        freqs[take] -= 1
        deficit = total - int(freqs.sum())
    return freqs


@dataclass(frozen=True, eq=False)
class CodingTable:
    """Integer frequencies summing to ``2**precision``.

    Values ``lo .. lo + n_central - 1`` map to the central symbols. With
    ``escapes`` the first and last symbols stand for values below/above that
    range; their excess is Golomb coded (exponent ``escape_m``) on the raw
    channel. ``flush`` low bits of the original residue travel raw as well;
    the codec applies that split, the table only records it.
    """

    freqs: np.ndarray
    precision: int = PRECISION
    table_id: int = 0
    lo: int = 0
    escapes: bool = False
    escape_m: int = 0
    flush: int = 0
    sigma: float = float("nan")
    cum: tuple = field(init=False, repr=False)
    _freq: tuple = field(init=False, repr=False)
    _lookup: list = field(init=False, repr=False)

    def __post_init__(self):
        f = np.asarray(self.freqs, dtype=np.int64)
        if np.any(f < 1):
            raise ValueError("every symbol needs frequency >= 1")
        if int(f.sum()) != 1 << self.precision:
            raise ValueError("frequencies must sum to 2**precision")
        cum = np.concatenate(([0], np.cumsum(f)))
        object.__setattr__(self, "freqs", f)
        object.__setattr__(self, "cum", tuple(int(c) for c in cum))
        object.__setattr__(self, "_freq", tuple(int(x) for x in f))
        object.__setattr__(self, "_lookup",
                           np.repeat(np.arange(f.size), f).tolist())

    @property
    def n_symbols(self):
        return int(self.freqs.size)

    @property
    def hi(self):
        return self.lo + self.n_symbols - (2 if self.escapes else 0) - 1

    def code_length(self, value) -> float:
        """Ideal bits for ``value``: table cost plus any raw escape bits."""
        sym, excess = self.symbol_of(value)
        bits = self.precision - math.log2(self._freq[sym])
        if excess is not None:
            bits += (excess >> self.escape_m) + 1 + self.escape_m
        return bits

    def symbol_of(self, value):
        if self.escapes:
            if value < self.lo:
                return 0, self.lo - 1 - value
            if value > self.hi:
                return self.n_symbols - 1, value - self.hi - 1
            return value - self.lo + 1, None
        if not self.lo <= value <= self.hi:
            raise ValueError(f"value {value} outside table range [{self.lo}, {self.hi}]")
        return value - self.lo, None

    def probabilities(self):
        return self.freqs / float(1 << self.precision)


def table_from_probs(probs, precision: int = PRECISION, **kw) -> CodingTable:
    """Largest-remainder rounding of ``probs`` to ``2**precision`` with a floor of 1."""
    return CodingTable(_round_probs(probs, 1 << precision), precision, **kw)


def table_from_geometric(t: GeometricTable, precision: int = PRECISION,
                         table_id: int = 0, escape_m: int = 0) -> CodingTable:
    """Coding table for a :class:`~epq.ladder.GeometricTable` with escapes."""
    p = t.probs / t.probs.sum()
    return table_from_probs(p, precision, table_id=table_id, lo=-t.x_max,
                            escapes=True, escape_m=escape_m, flush=t.m,
                            sigma=t.sigma)


def kl_bits(p, table: CodingTable) -> float:
    """``KL(p || table)`` in bits for a probability vector over the table symbols."""
    p = np.asarray(p, dtype=float)
    q = table.probabilities()
    nz = p > 0
    return float(np.sum(p[nz] * np.log2(p[nz] / q[nz])))


class BitWriter:
    """MSB-first bit packer."""

    def __init__(self):
        self._out = bytearray()
        self._acc = 0
        self._n = 0
        self.nbits = 0

    def write(self, value: int, nbits: int):
        if nbits <= 0:
            return
        self._acc = (self._acc << nbits) | (value & ((1 << nbits) - 1))
        self._n += nbits
        self.nbits += nbits
        while self._n >= 8:
            self._n -= 8
            self._out.append((self._acc >> self._n) & 0xFF)
        self._acc &= (1 << self._n) - 1

    def write_golomb(self, x: int, m: int):
        q = x >> m
        # unary quotient: q ones then a zero
        while q >= 32:
            self.write(_WORD, 32)
            q -= 32
        self.write(((1 << q) - 1) << 1, q + 1)
        self.write(x & ((1 << m) - 1), m)

    def getvalue(self) -> bytes:
        out = bytes(self._out)
        if self._n:
            out += bytes([(self._acc << (8 - self._n)) & 0xFF])
        return out


class BitReader:
    def __init__(self, data: bytes):
        self._data = data
        self._pos = 0  # bit position

    def read(self, nbits: int) -> int:
        if nbits <= 0:
            return 0
        end = self._pos + nbits
        if end > 8 * len(self._data):
            raise StreamError("raw bit channel exhausted")
        first = self._pos >> 3
        last = (end + 7) >> 3
        chunk = int.from_bytes(self._data[first:last], "big")
        shift = last * 8 - end
        self._pos = end
        return (chunk >> shift) & ((1 << nbits) - 1)

    def read_golomb(self, m: int) -> int:
        q = 0
        while self.read(1):
            q += 1
        return (q << m) | self.read(m)


class StreamEncoder:
    """Collects ``(value, table)`` pairs; the rANS pass runs at :meth:`finish`."""

    def __init__(self):
        self._pairs = []
        self.raw = BitWriter()

    def put(self, value: int, table: CodingTable):
        sym, excess = table.symbol_of(value)
        self._pairs.append((table.cum[sym], table._freq[sym], table.precision))
        if excess is not None:
            self.raw.write_golomb(excess, table.escape_m)

    def extend(self, starts, freqs, precision: int = PRECISION):
        """Append already-resolved ``(start, freq)`` slots, e.g. from vectorized lookups."""
        self._pairs.extend(zip(np.asarray(starts).tolist(), np.asarray(freqs).tolist(),
                               repeat(precision)))

    def put_raw(self, value: int, nbits: int):
        self.raw.write(value, nbits)

    def __len__(self):
        return len(self._pairs)

    def finish(self) -> bytes:
        x = _RANS_L
        words = []
        for start, freq, prec in reversed(self._pairs):
            if x >= ((_RANS_L >> prec) << 32) * freq:
                words.append(x & _WORD)
                x >>= 32
            x = ((x // freq) << prec) + (x % freq) + start
        nstate = max(1, (x.bit_length() + 7) // 8)
        words.reverse()
        ans = (bytes([nstate]) + x.to_bytes(nstate, "little")
               + struct.pack(f"<{len(words)}I", *words))
        return struct.pack("<I", len(ans)) + ans + self.raw.getvalue()


class StreamDecoder:
    """Pulls values back out in the order they were put."""

    def __init__(self, data: bytes):
        if len(data) < 5:
            raise StreamError("stream too short")
        (n_ans,) = struct.unpack_from("<I", data, 0)
        if 4 + n_ans > len(data) or n_ans < 1:
            raise StreamError("rANS section length exceeds stream")
        ans = data[4:4 + n_ans]
        nstate = ans[0]
        if nstate > 8 or 1 + nstate > n_ans or (n_ans - 1 - nstate) % 4:
            raise StreamError("malformed rANS section")
        self._x = int.from_bytes(ans[1:1 + nstate], "little")
        body = ans[1 + nstate:]
        self._words = struct.unpack(f"<{len(body) // 4}I", body)
        self._wpos = 0
        self.raw = BitReader(data[4 + n_ans:])

    def get(self, table: CodingTable) -> int:
        prec = table.precision
        x = self._x
        slot = x & ((1 << prec) - 1)
        sym = table._lookup[slot]
        x = table._freq[sym] * (x >> prec) + slot - table.cum[sym]
        if x < _RANS_L:
            if self._wpos >= len(self._words):
                raise StreamError("rANS section exhausted")
            x = (x << 32) | self._words[self._wpos]
            self._wpos += 1
        self._x = x
        if table.escapes:
            if sym == 0:
                return table.lo - 1 - self.raw.read_golomb(table.escape_m)
            if sym == table.n_symbols - 1:
                return table.hi + 1 + self.raw.read_golomb(table.escape_m)
            return table.lo + sym - 1
        return table.lo + sym

    def get_raw(self, nbits: int) -> int:
        return self.raw.read(nbits)

    def check_end(self):
        """Raise unless every rANS word was consumed and the state is back at its start."""
        if self._wpos != len(self._words) or self._x != _RANS_L:
            raise StreamError("stream did not decode to its initial state")


def encode_stream(values, table_ids, tables) -> bytes:
    """Encode ``values[i]`` with ``tables[table_ids[i]]``."""
    enc = StreamEncoder()
    for v, t in zip(values, table_ids):
        enc.put(int(v), tables[t])
    return enc.finish()


def decode_stream(data: bytes, table_ids, tables):
    dec = StreamDecoder(data)
    out = [dec.get(tables[t]) for t in table_ids]
    dec.check_end()
    return out
