import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vlcsim.frame import (
    HEADER_LEN,
    MAX_PAYLOAD,
    PREAMBLE,
    SFD,
    SYNC_SYMBOLS,
    FrameError,
    TruncatedFrame,
    body_length,
    body_symbols_to_bytes,
    build_frame,
    frame_body,
    line_encode,
    on_air_bytes,
    on_air_symbols,
    parse_frame,
)
from vlcsim.manchester import max_run_length
from vlcsim.rs import Outcome

addr = st.integers(0, 0xFFFF)


def flip(body: bytes, positions) -> bytes:
    b = bytearray(body)
    for p in positions:
        b[p] ^= 0xFF
    return bytes(b)


def test_layout():
    f = build_frame(0x0102, 0x0304, b"abc")
    assert f[:3] == PREAMBLE and f[3] == SFD
    assert f[4:6] == (HEADER_LEN + 3).to_bytes(2, "big")
    assert f[6:8] == b"\x01\x02" and f[8:10] == b"\x03\x04"
    assert f[10:13] == b"abc"
    assert len(f) == 13 + 16


def test_empty_payload():
    f = build_frame(1, 2, b"")
    assert int.from_bytes(f[4:6], "big") == 6
    assert len(f) == 10 + 16
    p = parse_frame(frame_body(f))
    assert p.payload == b"" and p.outcome is Outcome.CLEAN


@pytest.mark.parametrize("payload, expected", [(0, 26), (194, 220), (195, 237), (200, 242), (800, 890), (1500, 1638)])
def test_on_air_arithmetic(payload, expected):
    assert on_air_bytes(payload) == expected
    assert on_air_bytes(payload) == 10 + payload + 16 * math.ceil((6 + payload) / 200)
    assert len(build_frame(0, 0, bytes(payload))) == expected


def test_800_byte_frame_symbols():
    # 24 raw preamble symbols + 16 SFD symbols + 886 Manchester-coded body bytes
    assert on_air_symbols(800) == 24 + 16 * 887 == 14216
    assert line_encode(build_frame(1, 2, bytes(800))).size == 14216


def test_addresses_as_bytes_or_int():
    assert build_frame(b"\xab\xcd", 5, b"") == build_frame(0xABCD, 5, b"")
    with pytest.raises(FrameError):
        build_frame(b"\x01", 5, b"")
    with pytest.raises(FrameError):
        build_frame(70000, 5, b"")


def test_oversize_payload():
    with pytest.raises(FrameError):
        build_frame(1, 2, bytes(MAX_PAYLOAD + 1))


def test_sync_word():
    assert SYNC_SYMBOLS.size == 40
    assert SYNC_SYMBOLS[:24].tolist() == [1, 0] * 12
    # the SFD must not extend the alternating pattern
    assert SYNC_SYMBOLS[24:26].tolist() != [1, 0]


@settings(max_examples=150, deadline=None)
@given(addr, addr, st.binary(max_size=MAX_PAYLOAD))
def test_symbol_level_roundtrip(dst, src, payload):
    sym = line_encode(build_frame(dst, src, payload))
    assert sym[:40].tolist() == SYNC_SYMBOLS.tolist()
    assert max_run_length(sym[24:]) <= 2
    p = parse_frame(body_symbols_to_bytes(sym[40:]))
    assert (p.dst, p.src, p.payload, p.outcome) == (dst, src, payload, Outcome.CLEAN)


def test_eight_errors_in_one_block_corrected():
    f = build_frame(7, 9, bytes(range(256)) * 3)
    body = flip(frame_body(f), range(20, 28))
    p = parse_frame(body)
    assert p.outcome is Outcome.CORRECTED and p.n_corrected == 8
    assert p.payload == bytes(range(256)) * 3


def test_errors_spread_over_blocks_sum():
    f = build_frame(7, 9, bytes(800))
    # blocks start at body offsets 0, 200, 400; 5 errors in each
    body = flip(frame_body(f), [*range(10, 15), *range(210, 215), *range(410, 415)])
    p = parse_frame(body)
    assert p.outcome is Outcome.CORRECTED and p.n_corrected == 15 and p.payload == bytes(800)


def test_twenty_errors_discard():
    f = build_frame(7, 9, bytes(800))
    p = parse_frame(flip(frame_body(f), range(300, 320)))
    assert p.discarded and p.payload is None


def test_truncated_and_bad_length():
    body = frame_body(build_frame(1, 2, b"hello"))
    with pytest.raises(TruncatedFrame):
        parse_frame(body[:-1])
    with pytest.raises(TruncatedFrame):
        parse_frame(body + b"\x00")
    with pytest.raises(TruncatedFrame):
        parse_frame(b"\x00")
    with pytest.raises(TruncatedFrame):
        parse_frame(b"\x00\x03" + body[2:])


def test_body_length():
    assert body_length(6) == 22
    assert body_length(200) == 216
    assert body_length(201) == 233
