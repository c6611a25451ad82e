"""MAC frame serialisation.

On-air byte layout::

    preamble(3) | sfd(1) | length(2) | dst(2) | src(2) | payload | parity

``length`` counts the length, dst, src and payload fields (6 + payload).
Everything after the SFD (length through payload) is Reed-Solomon protected,
split into consecutive blocks of at most 200 bytes; the 16-byte parity of
each block is appended in block order after the payload.  Multi-byte fields
are big-endian.

Line coding: the preamble is sent as 24 raw alternating symbols; the SFD and
everything after it are Manchester coded, so the sync word seen by the
receiver is 24 + 16 = 40 symbols.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .manchester import bytes_to_bits, bits_to_bytes, manchester_decode, manchester_encode
from .rs import MAX_DATA, N_PARITY, Outcome, rs_decode_block, rs_parity

PREAMBLE = b"\xaa\xaa\xaa"
SFD = 0xD3
HEADER_LEN = 6  # length + dst + src
MAX_PAYLOAD = 1500
PREAMBLE_SYMBOLS = bytes_to_bits(PREAMBLE)
SYNC_SYMBOLS = np.concatenate((PREAMBLE_SYMBOLS, manchester_encode(bytes_to_bits(bytes([SFD])))))


class FrameError(ValueError):
    pass


class TruncatedFrame(FrameError):
    pass


@dataclass(frozen=True)
class ParsedFrame:
    dst: int | None
    src: int | None
    payload: bytes | None
    outcome: Outcome
    n_corrected: int = 0

    @property
    def discarded(self) -> bool:
        return self.outcome is Outcome.UNCORRECTABLE


def n_blocks(protected_len: int) -> int:
    return math.ceil(protected_len / MAX_DATA)


def body_length(frame_length: int) -> int:
    """Bytes after the SFD for a given length-field value."""
    return frame_length + N_PARITY * n_blocks(frame_length)


def on_air_bytes(payload_len: int) -> int:
    return len(PREAMBLE) + 1 + body_length(HEADER_LEN + payload_len)


def on_air_symbols(payload_len: int) -> int:
    return len(SYNC_SYMBOLS) + 16 * body_length(HEADER_LEN + payload_len)


def _address(value, name: str) -> bytes:
    if isinstance(value, (bytes, bytearray)):
        if len(value) != 2:
            raise FrameError(f"{name} must be 2 bytes")
        return bytes(value)
    if not 0 <= int(value) <= 0xFFFF:
        raise FrameError(f"{name} out of range: {value}")
    return int(value).to_bytes(2, "big")


def build_frame(dst, src, payload: bytes, max_payload: int = MAX_PAYLOAD) -> bytes:
    """Serialise a frame, preamble through the last parity byte."""
    payload = bytes(payload)
    if len(payload) > max_payload:
        raise FrameError(f"payload of {len(payload)} bytes exceeds maximum {max_payload}")
    protected = (
        (HEADER_LEN + len(payload)).to_bytes(2, "big")
        + _address(dst, "dst")
        + _address(src, "src")
        + payload
    )
    parity = b"".join(
        rs_parity(protected[i:i + MAX_DATA]).tobytes() for i in range(0, len(protected), MAX_DATA)
    )
    return PREAMBLE + bytes([SFD]) + protected + parity


def frame_body(frame: bytes) -> bytes:
    return bytes(frame[len(PREAMBLE) + 1:])


def line_encode(frame: bytes) -> np.ndarray:
    """Symbols for a serialised frame: raw preamble, Manchester for the rest."""
    head = len(PREAMBLE)
    return np.concatenate((bytes_to_bits(frame[:head]), manchester_encode(bytes_to_bits(frame[head:]))))


def frame_symbols(dst, src, payload: bytes) -> np.ndarray:
    return line_encode(build_frame(dst, src, payload))


def body_symbols_to_bytes(symbols) -> bytes:
    return bits_to_bytes(manchester_decode(symbols))


def parse_frame(body: bytes, max_payload: int = MAX_PAYLOAD) -> ParsedFrame:
    """Decode a frame body (starting at the length field).

    Each RS block is decoded; the frame outcome is the worst over blocks and
    ``n_corrected`` sums the corrected byte errors.

    Raises:
        TruncatedFrame: if the length field disagrees with the byte count.
    """
    body = bytes(body)
    if len(body) < 2:
        raise TruncatedFrame("body shorter than the length field")
    length = int.from_bytes(body[:2], "big")
    if not HEADER_LEN <= length <= HEADER_LEN + max_payload:
        raise TruncatedFrame(f"length field {length} out of range")
    if len(body) != body_length(length):
        raise TruncatedFrame(f"length field wants {body_length(length)} body bytes, got {len(body)}")

    protected, parity = body[:length], body[length:]
    data = bytearray()
    outcome = Outcome.CLEAN
    corrected = 0
    for blk, start in enumerate(range(0, length, MAX_DATA)):
        chunk = protected[start:start + MAX_DATA]
        res = rs_decode_block(chunk + parity[blk * N_PARITY:(blk + 1) * N_PARITY])
        if not res.ok:
            return ParsedFrame(None, None, None, Outcome.UNCORRECTABLE)
        if res.outcome is Outcome.CORRECTED:
            outcome = Outcome.CORRECTED
            corrected += res.n_errors
        data += res.data

    if int.from_bytes(data[:2], "big") != length:
        # the correction rewrote the length field: the byte count we read was wrong
        return ParsedFrame(None, None, None, Outcome.UNCORRECTABLE)
    return ParsedFrame(
        dst=int.from_bytes(data[2:4], "big"),
        src=int.from_bytes(data[4:6], "big"),
        payload=bytes(data[6:]),
        outcome=outcome,
        n_corrected=corrected,
    )
