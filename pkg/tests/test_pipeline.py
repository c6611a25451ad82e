import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vlcsim.frame import frame_symbols
from vlcsim.pipeline import (
    RING_CAPACITY,
    CircularSampleBuffer,
    DriverQueue,
    ProtocolError,
    SamplePipe,
    TraceEvent,
    TxSharedMemory,
    check_handshake_trace,
    pack_symbols,
    sample_pipe,
    tx_handshake,
    tx_handshake_threaded,
    unpack_symbols,
)

RATE = 2.1e6


def stream(n, seed=0):
    return np.random.default_rng(seed).integers(0, 4096, n).astype(np.uint16)


def test_ring_size_from_shared_memory():
    assert RING_CAPACITY == 6144
    assert CircularSampleBuffer().capacity == 6144


def test_ring_head_and_lapping():
    buf = CircularSampleBuffer(4)
    assert buf.head_register == -1
    buf.write([10, 11, 12])
    assert buf.head_register == 2 and buf.read(0) == 10
    buf.write([13, 14])
    assert buf.head_register == 0
    assert not buf.holds(0) and buf.holds(1) and buf.holds(4)
    with pytest.raises(ProtocolError):
        buf.read(0)
    with pytest.raises(ProtocolError):
        buf.read_block(0, 3)
    assert buf.read_block(1, 4).tolist() == [11, 12, 13, 14]
    with pytest.raises(ValueError):
        CircularSampleBuffer(0)


def test_fast_consumer_exact_delivery():
    x = stream(50_000)
    res = sample_pipe(x, service_time=0.3e-6, producer_rate=RATE)
    assert res.overrun_count == 0
    assert np.array_equal(res.delivered, x)
    assert np.array_equal(res.delivered_seq, np.arange(x.size))


def test_half_rate_consumer_overruns_on_schedule():
    x = stream(40_000)
    res = sample_pipe(x, service_time=2 / RATE, producer_rate=RATE)
    first = res.overruns[0]
    assert first.at_sample == 6144
    assert abs(first.produced - 2 * 6144) <= 2
    assert first.resumed_at == first.produced - 1
    # never silent: every missing sample is inside a reported overrun
    assert res.delivered.size + sum(o.discarded for o in res.overruns) == x.size
    assert np.array_equal(res.delivered, x[res.delivered_seq])


def test_burst_pause_producer():
    bursts = []
    for k in range(5):
        bursts.append(np.full(RING_CAPACITY, k * 1.0))   # a whole ring at one instant
    times = np.concatenate(bursts)
    x = stream(times.size)
    res = sample_pipe(x, service_time=1e-7, times=times)
    assert res.overrun_count == 0 and np.array_equal(res.delivered, x)
    over = np.concatenate((times, np.full(RING_CAPACITY + 1, 10.0)))
    res = sample_pipe(stream(over.size), service_time=1e-7, times=over)
    assert res.overrun_count == 1


def test_chunked_push_matches_one_shot():
    x = stream(30_000, 3)
    t = np.arange(x.size) / RATE
    whole = sample_pipe(x, 1.5 / RATE, times=t)
    pipe = SamplePipe(1.5 / RATE)
    parts = [pipe.push(x[i:i + 4321], t[i:i + 4321]) for i in range(0, x.size, 4321)] + [pipe.drain()]
    assert np.array_equal(np.concatenate([p.delivered_seq for p in parts]), whole.delivered_seq)
    assert [o.at_sample for o in pipe.overruns] == [o.at_sample for o in whole.overruns]


def test_fast_path_agrees_with_event_loop():
    x = stream(20_000, 4)
    t = np.arange(x.size) / RATE
    fast = sample_pipe(x, 0.3e-6, times=t)
    slow = SamplePipe(0.3e-6)
    got = [slow.push(x[i:i + 1], t[i:i + 1]).delivered for i in range(x.size)] + [slow.drain().delivered]
    assert np.array_equal(np.concatenate(got), fast.delivered)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.floats(0, 2e-6), min_size=1, max_size=3000), st.floats(0, 3e-6),
       st.integers(1, 64))
def test_linearizable_handoff(gaps, service, capacity):
    t = np.cumsum(gaps)
    x = np.arange(t.size) % 4096
    res = sample_pipe(x, service, times=t, buffer=CircularSampleBuffer(capacity))
    seq = res.delivered_seq
    assert np.all(np.diff(seq) > 0)                       # order, no duplicates
    assert np.array_equal(res.delivered, x[seq])          # every value was produced
    assert seq.size + sum(o.discarded for o in res.overruns) == t.size


def test_pipe_rejects_bad_input():
    with pytest.raises(ValueError):
        SamplePipe(-1.0)
    with pytest.raises(ValueError):
        sample_pipe([1, 2], 0.0)
    with pytest.raises(ValueError):
        SamplePipe(0.0).push([1, 2], [1.0, 0.5])


def test_driver_queue():
    q = DriverQueue(3)
    assert [q.put(i) for i in range(5)] == [True, True, True, False, False]
    assert q.get() == 0 and q.get() == 1
    q.put(9)
    assert [q.get(), q.get()] == [2, 9]
    assert q.frames_dropped == 2 and q.high_water == 3 and q.conserved()
    with pytest.raises(ValueError):
        DriverQueue(0)


@given(st.lists(st.integers(0, 1), max_size=300))
def test_pack_roundtrip(bits):
    words = pack_symbols(bits)
    assert words.size == -(-len(bits) // 32)
    assert unpack_symbols(words, len(bits)).tolist() == bits


def test_pack_msb_first():
    assert pack_symbols([1] + [0] * 31).tolist() == [0x80000000]
    assert pack_symbols([0] * 31 + [1, 1]).tolist() == [1, 0x80000000]


def test_shared_memory_rules():
    mem = TxSharedMemory()
    sym = frame_symbols(1, 2, b"hi")
    n = mem.kernel_write(sym)
    assert mem.flag_register == n == -(-sym.size // 32) + 1
    with pytest.raises(ProtocolError):
        mem.kernel_write(sym)
    assert np.array_equal(mem.pru_take(), sym)
    mem.pru_clear()
    assert mem.pru_take() is None
    with pytest.raises(ProtocolError):
        mem.pru_clear()
    with pytest.raises(ProtocolError):
        mem.kernel_write(np.zeros(mem.capacity_symbols + 1, np.uint8))


def test_largest_frame_fits():
    mem = TxSharedMemory()
    assert frame_symbols(1, 2, bytes(1500)).size <= mem.capacity_symbols


def cycles(trace):
    return [(e.actor, e.action) for e in trace if e.action != "enqueue"]


def test_single_frame_trace():
    res = tx_handshake([frame_symbols(1, 2, b"one")])
    assert cycles(res.trace) == [("kernel", "write"), ("pru", "transmit"), ("pru", "clear")]
    w, tr, cl = [e for e in res.trace if e.action != "enqueue"]
    assert w.value == tr.value > 0 and cl.value == 0 and w.time <= tr.time < cl.time


def hundred_frames():
    rng = np.random.default_rng(8)
    return [frame_symbols(1, 2, rng.integers(0, 256, int(rng.integers(0, 1500)), dtype=np.uint8).tobytes())
            for _ in range(100)]


def test_hundred_frames_virtual_time():
    frames = hundred_frames()
    res = tx_handshake(frames)
    assert check_handshake_trace(res.trace) == []
    assert len(res.transmitted) == 100
    assert all(np.array_equal(a, b) for a, b in zip(res.transmitted, frames))
    times = [e.time for e in res.trace if e.action != "enqueue"]
    assert times == sorted(times)


def test_hundred_frames_threads():
    frames = hundred_frames()
    res = tx_handshake_threaded(frames)
    assert check_handshake_trace(res.trace) == []
    assert all(np.array_equal(a, b) for a, b in zip(res.transmitted, frames))


def test_slow_transmitter_backs_up_queue():
    frames = hundred_frames()[:50]
    arrivals = np.arange(50) * 1e-3
    res = tx_handshake(frames, arrivals, pru_delay=5e-3)
    assert max(res.queue_lengths) > 10
    assert check_handshake_trace(res.trace) == []
    assert all(np.array_equal(a, b) for a, b in zip(res.transmitted, frames))
    assert res.queue.conserved() and res.queue.frames_dropped == 0


def test_full_tx_queue_drops():
    frames = hundred_frames()[:20]
    res = tx_handshake(frames, queue_capacity=5)
    assert res.queue.frames_dropped > 0 and res.queue.conserved()
    assert len(res.transmitted) == res.queue.frames_out
    assert check_handshake_trace(res.trace) == []


def test_trace_checker_finds_violations():
    ok = [TraceEvent(0, "kernel", "write", 5, 0), TraceEvent(1, "pru", "transmit", 5, 0),
          TraceEvent(2, "pru", "clear", 0, 0)]
    assert check_handshake_trace(ok) == []
    assert check_handshake_trace(ok[:2])                          # never cleared
    assert check_handshake_trace([ok[0], ok[0], ok[1], ok[2]])   # double write
    assert check_handshake_trace([ok[0], TraceEvent(1, "pru", "transmit", 4, 0), ok[2]])
    assert check_handshake_trace(ok + ok)                         # frame number repeats
    assert json.loads(ok[0].to_json()) == {"t": 0, "actor": "kernel", "action": "write", "value": 5, "frame": 0}
