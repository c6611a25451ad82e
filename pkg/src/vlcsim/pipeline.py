"""Dual-processor data path in virtual time.

* :class:`CircularSampleBuffer` and :class:`SamplePipe`: the sampler writes
  ADC codes into a ring in shared memory and publishes the latest slot in a
  head register; the decoder polls it.
* :class:`TxSharedMemory` and :func:`tx_handshake`: the kernel writes a
  frame and then the word count into the flag register; the transmitter
  clears the flag once the frame is on air.
* :class:`DriverQueue`: bounded FIFO between the kernel and the stack.

All actors run on a deterministic virtual clock.  :func:`tx_handshake_threaded`
runs the kernel and transmitter on real threads for the same protocol.
"""
from __future__ import annotations

import collections
import json
import math
import threading
from dataclasses import dataclass, field

import numpy as np

SHARED_MEMORY_BYTES = 12 * 1024
RING_CAPACITY = SHARED_MEMORY_BYTES // 2   # 16-bit sample slots
SYMBOL_RATE = 1e6
INSTRUCTION_TIME = 5e-9
# per-sample decoder cost: comfortably inside one ADC period at 2.1 MHz
DECODER_SERVICE_TIME = 60 * INSTRUCTION_TIME


class ProtocolError(RuntimeError):
    pass


class CircularSampleBuffer:
    """Ring of ``capacity`` sample slots with a head register.

    Every slot also remembers which sequence number it holds, so a reader
    that has been lapped finds out instead of reading a newer sample.
    """

    def __init__(self, capacity: int = RING_CAPACITY, dtype=np.uint16):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.slots = np.zeros(capacity, dtype=dtype)
        self._seq = np.full(capacity, -1, dtype=np.int64)
        self.written = 0

    @property
    def head_register(self) -> int:
        """Slot index of the most recent write (-1 before the first)."""
        return (self.written - 1) % self.capacity if self.written else -1

    def write(self, values) -> None:
        vals = np.asarray(values)
        n = vals.size
        if n == 0:
            return
        seqs = np.arange(self.written, self.written + n)
        if n > self.capacity:
            vals, seqs = vals[-self.capacity:], seqs[-self.capacity:]
        idx = seqs % self.capacity
        self.slots[idx] = vals
        self._seq[idx] = seqs
        self.written += n

    def holds(self, seq: int) -> bool:
        return 0 <= seq < self.written and self._seq[seq % self.capacity] == seq

    def read(self, seq: int):
        if not self.holds(seq):
            raise ProtocolError(f"slot for sample {seq} no longer holds it")
        return self.slots[seq % self.capacity]

    def read_block(self, seq: int, n: int) -> np.ndarray:
        idx = np.arange(seq, seq + n) % self.capacity
        if n > self.capacity or not np.array_equal(self._seq[idx], np.arange(seq, seq + n)):
            raise ProtocolError(f"samples {seq}..{seq + n - 1} are not all in the ring")
        return self.slots[idx].copy()


@dataclass
class Overrun:
    time: float
    at_sample: int      # sequence number the reader expected
    resumed_at: int     # sequence number it jumped to
    produced: int       # samples written when the overrun was seen

    @property
    def discarded(self) -> int:
        return self.resumed_at - self.at_sample


@dataclass
class PipeResult:
    delivered: np.ndarray
    delivered_seq: np.ndarray
    overruns: list[Overrun]

    @property
    def overrun_count(self) -> int:
        return len(self.overruns)


class SamplePipe:
    """Producer/consumer transfer through a :class:`CircularSampleBuffer`.

    The producer writes sample ``m`` at ``times[m]``; the consumer reads the
    next sample as soon as it is both free and the sample exists, then stays
    busy for ``service_time``.  A write and a read at the same instant are
    ordered write first.  A lapped consumer discards the stale region,
    resumes at the newest sample and records an :class:`Overrun`.

    State carries across :meth:`push` calls so a stream can be fed in chunks.
    """

    def __init__(self, service_time: float, buffer: CircularSampleBuffer | None = None):
        if service_time < 0:
            raise ValueError("service_time must be >= 0")
        self.buffer = buffer or CircularSampleBuffer()
        self.service_time = service_time
        self._times: collections.deque = collections.deque()  # production times not yet read
        self._next = 0          # next sequence number the consumer wants
        self._free_at = -math.inf
        self.overruns: list[Overrun] = []
        self._last_time = -math.inf

    def _read_one(self, t: float, out_v: list, out_s: list) -> None:
        buf = self.buffer
        if not buf.holds(self._next):
            resume = buf.written - 1
            self.overruns.append(Overrun(t, self._next, resume, buf.written))
            for _ in range(resume - self._next):
                self._times.popleft()
            self._next = resume
        out_v.append(buf.read(self._next))
        out_s.append(self._next)
        self._times.popleft()
        self._next += 1
        self._free_at = t + self.service_time

    def push(self, samples, times) -> PipeResult:
        samples = np.asarray(samples)
        times = np.asarray(times, dtype=np.float64)
        if samples.shape != times.shape:
            raise ValueError("samples and times must align")
        if times.size and (np.any(np.diff(times) < 0) or times[0] < self._last_time):
            raise ValueError("production times must be non-decreasing")
        first_overrun = len(self.overruns)
        if self._fast_path_ok(times):
            return self._push_fast(samples, times, first_overrun)
        out_v: list = []
        out_s: list = []
        buf = self.buffer
        for v, p in zip(samples.tolist(), times.tolist()):
            # reads that start strictly before this write
            while self._times and max(self._free_at, self._times[0]) < p:
                self._read_one(max(self._free_at, self._times[0]), out_v, out_s)
            buf.write([v])
            self._times.append(p)
            self._last_time = p
        return PipeResult(np.array(out_v, dtype=buf.slots.dtype), np.array(out_s, dtype=np.int64),
                          self.overruns[first_overrun:])

    def drain(self) -> PipeResult:
        """Let the consumer read everything still in the ring."""
        out_v: list = []
        out_s: list = []
        first = len(self.overruns)
        while self._times:
            self._read_one(max(self._free_at, self._times[0]), out_v, out_s)
        return PipeResult(np.array(out_v, dtype=self.buffer.slots.dtype), np.array(out_s, dtype=np.int64),
                          self.overruns[first:])

    def _fast_path_ok(self, times: np.ndarray) -> bool:
        # a consumer that finishes each read before the next sample arrives
        # can never fall behind: every sample is read the moment it lands
        if times.size < 2 or self._times:
            return False
        return self.service_time <= float(np.min(np.diff(times))) and self._free_at <= times[0]

    def _push_fast(self, samples: np.ndarray, times: np.ndarray, first_overrun: int) -> PipeResult:
        buf = self.buffer
        out = []
        step = buf.capacity
        for i in range(0, samples.size, step):
            blk = samples[i:i + step]
            start = buf.written
            buf.write(blk)
            out.append(buf.read_block(start, blk.size))
        seq = np.arange(self._next, self._next + samples.size)
        self._next += samples.size
        self._free_at = times[-1] + self.service_time
        self._last_time = times[-1]
        vals = np.concatenate(out) if out else np.empty(0, buf.slots.dtype)
        return PipeResult(vals, seq, self.overruns[first_overrun:])


def sample_pipe(samples, service_time: float, producer_rate: float | None = None,
                times=None, buffer: CircularSampleBuffer | None = None) -> PipeResult:
    """Run a whole sample stream through a ring and report delivery.

    Give either a constant ``producer_rate`` or explicit production ``times``.
    """
    samples = np.asarray(samples)
    if times is None:
        if not producer_rate or producer_rate <= 0:
            raise ValueError("need producer_rate > 0 or explicit times")
        times = np.arange(samples.size) / producer_rate
    pipe = SamplePipe(service_time, buffer)
    a = pipe.push(samples, times)
    b = pipe.drain()
    return PipeResult(np.concatenate((a.delivered, b.delivered)),
                      np.concatenate((a.delivered_seq, b.delivered_seq)), pipe.overruns)


class DriverQueue:
    """Bounded FIFO; a put on a full queue drops the item and counts it."""

    def __init__(self, capacity: int = 64):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self._q: collections.deque = collections.deque()
        self.frames_in = 0
        self.frames_out = 0
        self.frames_dropped = 0
        self.high_water = 0

    def __len__(self) -> int:
        return len(self._q)

    def put(self, item) -> bool:
        self.frames_in += 1
        if len(self._q) >= self.capacity:
            self.frames_dropped += 1
            return False
        self._q.append(item)
        self.high_water = max(self.high_water, len(self._q))
        return True

    def get(self):
        item = self._q.popleft()
        self.frames_out += 1
        return item

    def conserved(self) -> bool:
        return self.frames_in == self.frames_out + self.frames_dropped + len(self._q)


def pack_symbols(symbols) -> np.ndarray:
    """Symbols to 32-bit words, first symbol in the most significant bit."""
    s = np.asarray(symbols, dtype=np.uint8)
    pad = (-s.size) % 32
    bits = np.concatenate((s, np.zeros(pad, np.uint8))).reshape(-1, 4, 8)
    return np.packbits(bits, axis=2).reshape(-1, 4).view(">u4").ravel().astype(np.uint32)


def unpack_symbols(words, n_symbols: int) -> np.ndarray:
    w = np.asarray(words, dtype=">u4").view(np.uint8)
    return np.unpackbits(w)[:n_symbols]


@dataclass
class TraceEvent:
    time: float
    actor: str
    action: str
    value: int = 0
    frame: int = -1

    def to_json(self) -> str:
        return json.dumps({"t": self.time, "actor": self.actor, "action": self.action,
                           "value": self.value, "frame": self.frame}, sort_keys=True)


class TxSharedMemory:
    """Register 0 is the flag (0 = idle, else number of words to read).

    Word 1 holds the symbol count; the symbol words follow.  Only the
    transmitter writes the flag back to zero.
    """

    def __init__(self, size_bytes: int = SHARED_MEMORY_BYTES, trace: list | None = None):
        self.words = np.zeros(size_bytes // 4, dtype=np.uint32)
        self.trace = trace if trace is not None else []
        self._lock = threading.Lock()
        self._writer_active = False
        self._reader_active = False

    @property
    def flag_register(self) -> int:
        return int(self.words[0])

    @property
    def capacity_symbols(self) -> int:
        return (self.words.size - 2) * 32

    def kernel_write(self, symbols, time: float = 0.0, frame: int = -1) -> int:
        s = np.asarray(symbols, dtype=np.uint8)
        if s.size > self.capacity_symbols:
            raise ProtocolError(f"frame of {s.size} symbols does not fit in shared memory")
        with self._lock:
            if self.words[0] != 0:
                raise ProtocolError("kernel wrote while the flag register was set")
            if self._reader_active:
                raise ProtocolError("payload written while the transmitter was reading")
            self._writer_active = True
        words = pack_symbols(s)
        self.words[1] = s.size
        self.words[2:2 + words.size] = words
        n = words.size + 1
        with self._lock:
            self._writer_active = False
            self.words[0] = n
            self.trace.append(TraceEvent(time, "kernel", "write", n, frame))
        return n

    def pru_take(self, time: float = 0.0, frame: int = -1) -> np.ndarray | None:
        with self._lock:
            n = int(self.words[0])
            if n == 0:
                return None
            if self._writer_active:
                raise ProtocolError("transmitter read while the kernel was writing")
            self._reader_active = True
            self.trace.append(TraceEvent(time, "pru", "transmit", n, frame))
        count = int(self.words[1])
        out = unpack_symbols(self.words[2:1 + n], count)
        with self._lock:
            self._reader_active = False
        return out

    def pru_clear(self, time: float = 0.0, frame: int = -1) -> None:
        with self._lock:
            if self.words[0] == 0:
                raise ProtocolError("transmitter cleared an idle flag")
            self.words[0] = 0
            self.trace.append(TraceEvent(time, "pru", "clear", 0, frame))


def check_handshake_trace(trace: list[TraceEvent]) -> list[str]:
    """Protocol violations in a trace; an empty list means conformant.

    Each frame must appear as write(n > 0), transmit(n), clear(0) in that
    order, and frames must follow one another without interleaving.
    """
    problems = []
    expect = "write"
    current_n = 0
    last_frame = -1
    for i, ev in enumerate(trace):
        if ev.actor == "kernel" and ev.action == "enqueue":
            continue
        if ev.action != expect:
            problems.append(f"event {i}: expected {expect}, got {ev.actor}:{ev.action}")
            expect = {"write": "transmit", "transmit": "clear", "clear": "write"}.get(ev.action, "write")
            continue
        if ev.action == "write":
            if ev.value <= 0:
                problems.append(f"event {i}: write of {ev.value} words")
            if ev.frame != -1 and ev.frame <= last_frame:
                problems.append(f"event {i}: frame {ev.frame} out of order after {last_frame}")
            last_frame = ev.frame
            current_n = ev.value
            expect = "transmit"
        elif ev.action == "transmit":
            if ev.value != current_n:
                problems.append(f"event {i}: transmit of {ev.value} words, flag said {current_n}")
            expect = "clear"
        else:
            if ev.value != 0:
                problems.append(f"event {i}: clear to {ev.value}")
            expect = "write"
    if expect != "write":
        problems.append(f"trace ended mid-cycle, waiting for {expect}")
    return problems


@dataclass
class HandshakeResult:
    trace: list[TraceEvent]
    transmitted: list[np.ndarray]
    queue: DriverQueue
    finish_time: float
    queue_lengths: list[int] = field(default_factory=list)


def tx_handshake(frames, arrivals=None, symbol_rate: float = SYMBOL_RATE, poll_interval: float = 1e-6,
                 write_time_per_word: float = 50e-9, pru_delay: float = 0.0,
                 queue_capacity: int = 1024, mem: TxSharedMemory | None = None) -> HandshakeResult:
    """Drive kernel and transmitter through the flag protocol in virtual time.

    ``frames`` are symbol arrays queued at ``arrivals`` (default all at 0).
    ``pru_delay`` adds an artificial per-frame delay on the transmitter to
    model a slow consumer.  ``queue_lengths`` samples the TX queue length
    each time the kernel hands over a frame.
    """
    frames = [np.asarray(f, dtype=np.uint8) for f in frames]
    arrivals = [0.0] * len(frames) if arrivals is None else list(arrivals)
    if len(arrivals) != len(frames):
        raise ValueError("one arrival time per frame")
    mem = mem or TxSharedMemory()
    queue = DriverQueue(queue_capacity)
    trace = mem.trace
    sent: list[np.ndarray] = []
    lengths: list[int] = []
    events = sorted(((a, i) for i, a in enumerate(arrivals)), key=lambda x: (x[0], x[1]))
    pending = collections.deque(events)
    free_at = 0.0     # when the shared memory is next free for the kernel
    t = 0.0
    while pending or len(queue):
        # enqueue everything that has arrived by the time the memory frees up
        horizon = max(free_at, pending[0][0] if not len(queue) and pending else free_at)
        while pending and pending[0][0] <= horizon:
            a, i = pending.popleft()
            if queue.put(i):
                trace.append(TraceEvent(a, "kernel", "enqueue", 0, i))
        if not len(queue):
            continue
        i = queue.get()
        lengths.append(len(queue))
        n_words = math.ceil(frames[i].size / 32) + 1
        t = max(horizon, arrivals[i]) + n_words * write_time_per_word
        mem.kernel_write(frames[i], t, i)
        # the transmitter notices the flag on its next poll
        t_seen = max(t, math.ceil(t / poll_interval - 1e-9) * poll_interval)
        sym = mem.pru_take(t_seen, i)
        if sym is None:
            raise ProtocolError("transmitter found the flag clear after a write")
        sent.append(sym)
        t_done = t_seen + sym.size / symbol_rate + pru_delay
        mem.pru_clear(t_done, i)
        free_at = t_done
    return HandshakeResult(trace, sent, queue, free_at, lengths)


def tx_handshake_threaded(frames, mem: TxSharedMemory | None = None, timeout: float = 30.0) -> HandshakeResult:
    """Same protocol with the kernel and transmitter on separate OS threads.

    Trace timestamps are a shared logical counter.  Spins cooperatively on
    the flag register exactly like the firmware polling loop.
    """
    frames = [np.asarray(f, dtype=np.uint8) for f in frames]
    mem = mem or TxSharedMemory()
    queue = DriverQueue(max(len(frames), 1))
    for i in range(len(frames)):
        queue.put(i)
    sent: list[np.ndarray] = []
    tick = iter(range(1 << 62))
    errors: list[BaseException] = []
    done = threading.Event()

    def kernel():
        try:
            while len(queue):
                i = queue.get()
                while mem.flag_register != 0:
                    if done.is_set():
                        return
                    threading.Event().wait(1e-5)
                mem.kernel_write(frames[i], float(next(tick)), i)
        except BaseException as exc:  # surfaced to the caller below
            errors.append(exc)

    def pru():
        try:
            i = 0
            while i < len(frames):
                sym = mem.pru_take(float(next(tick)), i)
                if sym is None:
                    if done.is_set():
                        return
                    threading.Event().wait(1e-5)
                    continue
                sent.append(sym)
                mem.pru_clear(float(next(tick)), i)
                i += 1
        except BaseException as exc:
            errors.append(exc)

    threads = [threading.Thread(target=kernel), threading.Thread(target=pru)]
    for th in threads:
        th.start()
    for th in threads:
        th.join(timeout)
    done.set()
    if errors:
        raise errors[0]
    if any(th.is_alive() for th in threads):
        raise ProtocolError("handshake threads did not finish")
    return HandshakeResult(mem.trace, sent, queue, float(next(tick)))
