"""OOK symbols and Manchester line coding.

Symbols are held as ``uint8`` numpy arrays: 1 is HIGH (LED on), 0 is LOW.
Bit 1 maps to LOW-HIGH and bit 0 to HIGH-LOW.  Bytes are serialised most
significant bit first.
"""
from __future__ import annotations

import enum

import numpy as np


class Symbol(enum.IntEnum):
    LOW = 0
    HIGH = 1


LOW = Symbol.LOW
HIGH = Symbol.HIGH


class ManchesterError(ValueError):
    """Raised on a forbidden HIGH-HIGH or LOW-LOW pair."""

    def __init__(self, pair_index: int):
        super().__init__(f"invalid Manchester pair at index {pair_index}")
        self.pair_index = pair_index


def as_symbols(seq) -> np.ndarray:
    arr = np.asarray(seq, dtype=np.uint8)
    if arr.ndim != 1:
        raise ValueError("symbol sequence must be one-dimensional")
    if arr.size and arr.max() > 1:
        raise ValueError("symbols must be 0 (LOW) or 1 (HIGH)")
    return arr


def bytes_to_bits(data) -> np.ndarray:
    return np.unpackbits(np.frombuffer(bytes(data), dtype=np.uint8))


def bits_to_bytes(bits) -> bytes:
    bits = np.asarray(bits, dtype=np.uint8)
    if bits.size % 8:
        raise ValueError("bit count must be a multiple of 8")
    return np.packbits(bits).tobytes()


def manchester_encode(bits) -> np.ndarray:
    b = as_symbols(bits)
    out = np.empty(2 * b.size, dtype=np.uint8)
    out[0::2] = 1 - b
    out[1::2] = b
    return out


def manchester_decode(symbols) -> np.ndarray:
    """Decode pair-aligned symbols back to bits.

    Raises:
        ManchesterError: on the first HIGH-HIGH or LOW-LOW pair.
    """
    s = as_symbols(symbols)
    if s.size % 2:
        raise ValueError("Manchester stream must have even length")
    first, second = s[0::2], s[1::2]
    bad = np.flatnonzero(first == second)
    if bad.size:
        raise ManchesterError(int(bad[0]))
    return second.copy()


def max_run_length(symbols) -> int:
    s = as_symbols(symbols)
    if s.size == 0:
        return 0
    edges = np.flatnonzero(np.diff(s)) + 1
    bounds = np.concatenate(([0], edges, [s.size]))
    return int(np.diff(bounds).max())
