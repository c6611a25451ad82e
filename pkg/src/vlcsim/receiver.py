"""Receiver firmware: slicing, run-length symbol detection, frame sync and
frame extraction.

Symbol detection counts consecutive equal samples.  With the sampling rate
between two and three times the symbol rate a single symbol always yields 2
or 3 samples and a pair of equal symbols 4 or 5, whatever the clock drift:

=========  ====================================
run        emitted
=========  ====================================
1          glitch, absorbed into the current run
2, 3       one symbol
4, 5       two symbols
>= 6       two symbols, then a sync-loss token
=========  ====================================

Symbols are emitted as soon as the run reaches 2 and 4 samples, so a frame
can complete while its last run is still growing into the idle channel.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field

import numpy as np

from .frame import (HEADER_LEN, MAX_PAYLOAD, SYNC_SYMBOLS, ParsedFrame, TruncatedFrame,
                    body_length, parse_frame)
from .manchester import ManchesterError, bits_to_bytes, manchester_decode

BREAK = 2  # token for a run of six or more samples
_THRESHOLDS = (2, 4, 6)
_SYNC = SYNC_SYMBOLS.tobytes()
_SYNC_LEN = len(_SYNC)
_LENGTH_SYMBOLS = 32


@dataclass(frozen=True)
class SlicerConfig:
    threshold_code: int = 2048
    hysteresis: int = 0
    adc_bits: int = 12

    def __post_init__(self):
        if not 0 <= self.threshold_code < (1 << self.adc_bits):
            raise ValueError("threshold_code outside the ADC range")
        if self.hysteresis < 0:
            raise ValueError("hysteresis must be >= 0")


class Slicer:
    """Threshold with optional hysteresis; a code equal to the threshold is LOW."""

    def __init__(self, cfg: SlicerConfig | None = None):
        self.cfg = cfg or SlicerConfig()
        self.level = 0

    def process(self, codes) -> np.ndarray:
        c = np.asarray(codes, dtype=np.int64)
        th, h = self.cfg.threshold_code, self.cfg.hysteresis
        if h == 0:
            out = (c > th).astype(np.uint8)
        else:
            decided = np.full(c.size, -1, dtype=np.int8)
            decided[c > th + h] = 1
            decided[c <= th - h] = 0
            idx = np.where(decided >= 0, np.arange(c.size), -1)
            np.maximum.accumulate(idx, out=idx)
            out = np.where(idx >= 0, decided[np.maximum(idx, 0)], self.level).astype(np.uint8)
        if out.size:
            self.level = int(out[-1])
        return out


def slice_levels(codes, cfg: SlicerConfig | None = None) -> np.ndarray:
    """Binary HIGH/LOW level per ADC sample."""
    return Slicer(cfg).process(codes)


@dataclass
class RunLengthState:
    current_level: int | None = None
    run_count: int = 0
    pending: bool = False
    emitted_symbols: int = 0
    sync_losses: int = 0


class RunLengthDetector:
    """Streaming pseudo-edge detector producing symbol and BREAK tokens."""

    def __init__(self, state: RunLengthState | None = None):
        self.state = state or RunLengthState()

    def feed(self, levels, start_index: int = 0) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(tokens, sample_index)`` for one chunk of sliced levels."""
        lv = np.asarray(levels, dtype=np.uint8)
        tokens: list[int] = []
        where: list[int] = []
        if lv.size == 0:
            return np.empty(0, np.uint8), np.empty(0, np.int64)
        st = self.state
        starts = np.concatenate(([0], np.flatnonzero(np.diff(lv)) + 1))
        lengths = np.diff(np.concatenate((starts, [lv.size])))
        values = lv[starts]
        L, n, pending = st.current_level, st.run_count, st.pending
        emit_t, emit_w = tokens.append, where.append

        def grow(n_old: int, n_new: int, first: int, jump: bool) -> None:
            # first: index of the sample that takes the count to n_old + 1
            # (or straight to n_new when jump is set)
            for t in _THRESHOLDS:
                if n_old < t <= n_new:
                    emit_t(L if t < 6 else BREAK)
                    emit_w(first if jump else first + t - n_old - 1)

        for v, s0, m in zip(values.tolist(), (starts + start_index).tolist(), lengths.tolist()):
            if L is None:
                L, n = v, 0
                grow(n, m, s0, False)
                n = m
            elif pending:
                pending = False
                if v == L:
                    # the single opposite sample was a glitch
                    grow(n, n + 2, s0, True)
                    n += 2
                    if m > 1:
                        grow(n, n + m - 1, s0 + 1, False)
                        n += m - 1
                else:
                    L, n = v, 1
                    grow(n, n + m, s0, False)
                    n += m
            elif v == L:
                grow(n, n + m, s0, False)
                n += m
            elif m == 1:
                pending = True
            else:
                L, n = v, 0
                grow(0, m, s0, False)
                n = m
        st.current_level, st.run_count, st.pending = L, n, pending
        tok = np.array(tokens, dtype=np.uint8)
        n_break = int(np.count_nonzero(tok == BREAK))
        st.sync_losses += n_break
        st.emitted_symbols += tok.size - n_break
        return tok, np.array(where, dtype=np.int64)


def run_length_detect(levels, state: RunLengthState | None = None) -> np.ndarray:
    """Symbols detected in a level sequence; sync losses are counted in ``state``."""
    tok, _ = RunLengthDetector(state).feed(levels)
    return tok[tok != BREAK]


class Mode(enum.Enum):
    SEARCHING = "searching"
    RECEIVING = "receiving"


@dataclass
class SyncState:
    register: bytes = b""
    mode: Mode = Mode.SEARCHING


def frame_sync(symbols, state: SyncState | None = None) -> list[int]:
    """Indices of the final sync symbol of every exact preamble+SFD match.

    The search continues after each match; overlapping matches are not
    possible for this sync word.
    """
    st = state or SyncState()
    buf = st.register + np.asarray(symbols, dtype=np.uint8).tobytes()
    offset = len(st.register)
    hits = []
    pos = buf.find(_SYNC)
    while pos >= 0:
        hits.append(pos + _SYNC_LEN - 1 - offset)
        pos = buf.find(_SYNC, pos + 1)
    st.register = buf[-(_SYNC_LEN - 1):]
    return hits


def receive_frame(symbols, max_payload: int = MAX_PAYLOAD) -> bytes:
    """Raw body bytes from the symbols that follow the SFD.

    Reads the length field, then exactly the bytes it announces plus parity.

    Raises:
        ManchesterError: on an invalid symbol pair.
        TruncatedFrame: on a bad length or too few symbols.
    """
    s = np.asarray(symbols, dtype=np.uint8)
    if s.size < _LENGTH_SYMBOLS:
        raise TruncatedFrame("not enough symbols for the length field")
    length = int.from_bytes(bits_to_bytes(manchester_decode(s[:_LENGTH_SYMBOLS])), "big")
    if not HEADER_LEN <= length <= HEADER_LEN + max_payload:
        raise TruncatedFrame(f"length field {length} out of range")
    need = 16 * body_length(length)
    if s.size < need:
        raise TruncatedFrame(f"frame needs {need} symbols, got {s.size}")
    return bits_to_bytes(manchester_decode(s[:need]))


@dataclass
class RxEvent:
    kind: str
    sample: int
    detail: dict = field(default_factory=dict)
    frame: ParsedFrame | None = None
    body: bytes | None = None

    def to_json(self) -> str:
        rec = {"kind": self.kind, "sample": self.sample, **self.detail}
        if self.frame is not None:
            rec.update(outcome=self.frame.outcome.value, n_corrected=self.frame.n_corrected,
                       dst=self.frame.dst, src=self.frame.src,
                       payload_len=None if self.frame.payload is None else len(self.frame.payload))
        return json.dumps(rec, sort_keys=True)


class FrameAssembler:
    """Sync search and frame collection over a token stream."""

    def __init__(self, max_payload: int = MAX_PAYLOAD):
        self.max_payload = max_payload
        self.sync = SyncState()
        self._body = bytearray()
        self._need = 0
        self._start = -1
        self.events: list[RxEvent] = []

    @property
    def mode(self) -> Mode:
        return self.sync.mode

    def _abort(self, sample: int, reason: str, **detail) -> None:
        self.events.append(RxEvent("frame-aborted", sample, {"reason": reason, "start": self._start, **detail}))
        self.sync = SyncState()

    def signal_sync_loss(self, sample: int, reason: str = "overrun") -> None:
        if self.sync.mode is Mode.RECEIVING:
            self.events.append(RxEvent("sync-loss", sample, {"reason": reason}))
            self._abort(sample, reason)
        else:
            self.sync.register = b""

    def feed(self, tokens: np.ndarray, where: np.ndarray) -> list[RxEvent]:
        first_new = len(self.events)
        pos = 0
        n = tokens.size
        while pos < n:
            if self.sync.mode is Mode.SEARCHING:
                reg = self.sync.register
                buf = reg + tokens[pos:].tobytes()
                hit = buf.find(_SYNC)
                if hit < 0:
                    self.sync.register = buf[-(_SYNC_LEN - 1):]
                    break
                end = pos + hit + _SYNC_LEN - len(reg)
                self._start = int(where[end - 1])
                self.events.append(RxEvent("frame-start", self._start))
                self.sync = SyncState(b"", Mode.RECEIVING)
                self._body = bytearray()
                self._need = _LENGTH_SYMBOLS
                pos = end
                continue
            pos = self._collect(tokens, where, pos)
        return self.events[first_new:]

    def _collect(self, tokens: np.ndarray, where: np.ndarray, pos: int) -> int:
        seg = tokens[pos:pos + self._need - len(self._body)]
        brk = np.flatnonzero(seg == BREAK)
        if brk.size:
            seg = seg[:brk[0]]
        have = len(self._body)
        # check pairs completed by this segment
        lo = have - (have % 2)
        pairs = np.frombuffer(bytes(self._body[lo:]) + seg.tobytes(), dtype=np.uint8)
        m = pairs.size - pairs.size % 2
        bad = np.flatnonzero(pairs[0:m:2] == pairs[1:m:2])
        if bad.size:
            cut = lo + 2 * int(bad[0]) + 1 - have  # index in seg of the pair's second symbol
            self._abort(int(where[pos + cut]), "invalid-pair", pair_index=(lo // 2) + int(bad[0]))
            return pos + cut + 1
        if brk.size:
            idx = int(where[pos + brk[0]])
            self.events.append(RxEvent("sync-loss", idx, {"reason": "run-length"}))
            self._abort(idx, "sync-loss")
            return pos + int(brk[0]) + 1
        self._body += seg.tobytes()
        pos += seg.size
        if len(self._body) < self._need:
            return pos
        last = int(where[pos - 1])
        if self._need == _LENGTH_SYMBOLS:
            length = int.from_bytes(bits_to_bytes(manchester_decode(np.frombuffer(bytes(self._body), np.uint8))), "big")
            if not HEADER_LEN <= length <= HEADER_LEN + self.max_payload:
                self._abort(last, "bad-length", length=length)
                return pos
            self._need = 16 * body_length(length)
            return pos
        self._finish(last)
        return pos

    def _finish(self, sample: int) -> None:
        body = bits_to_bytes(manchester_decode(np.frombuffer(bytes(self._body), np.uint8)))
        try:
            parsed = parse_frame(body, self.max_payload)
        except TruncatedFrame as exc:  # cannot happen: the length was validated
            self._abort(sample, "truncated", error=str(exc))
            return
        kind = {"clean": "frame-ok", "corrected": "frame-corrected", "uncorrectable": "frame-discarded"}[parsed.outcome.value]
        self.events.append(RxEvent(kind, sample, {"start": self._start, "n_corrected": parsed.n_corrected}, parsed, body))
        self.sync = SyncState()


class Receiver:
    """Complete receive path from ADC codes to frame events.

    Feeding a sample stream in arbitrary chunks gives the same events as one
    call with the whole stream.
    """

    def __init__(self, slicer: SlicerConfig | None = None, max_payload: int = MAX_PAYLOAD):
        self.slicer = Slicer(slicer)
        self.detector = RunLengthDetector()
        self.assembler = FrameAssembler(max_payload)
        self.samples_seen = 0
        self.keep_tokens = False
        self.tokens: list[np.ndarray] = []
        self.token_samples: list[np.ndarray] = []

    @property
    def events(self) -> list[RxEvent]:
        return self.assembler.events

    @property
    def mode(self) -> Mode:
        return self.assembler.mode

    def feed(self, codes) -> list[RxEvent]:
        levels = self.slicer.process(codes)
        tok, where = self.detector.feed(levels, self.samples_seen)
        self.samples_seen += levels.size
        if self.keep_tokens:
            self.tokens.append(tok)
            self.token_samples.append(where)
        return self.assembler.feed(tok, where)

    def signal_sync_loss(self, reason: str = "overrun") -> None:
        # the detector's current run straddles the gap in the stream
        self.detector.state = RunLengthState(sync_losses=self.detector.state.sync_losses,
                                             emitted_symbols=self.detector.state.emitted_symbols)
        self.assembler.signal_sync_loss(self.samples_seen, reason)

    def write_events(self, path) -> None:
        with open(path, "w") as fh:
            for ev in self.events:
                fh.write(ev.to_json() + "\n")
