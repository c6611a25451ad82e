"""End-to-end link experiments and the parameter sweeps built on them.

A run drives the whole chain in fixed-size chunks of the simulation grid::

    frames -> line symbols -> LED waveform -> channel -> front end -> ADC
           -> sample ring -> receiver -> events

and maps every receiver event back to the transmitted frame it belongs to,
so each sent frame ends up received, discarded or still in flight when the
run stops.
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .channel import SCENARIOS, ChannelStream, scenario_preset
from .clock import ClockModel
from .config import ConfigError
from .frame import MAX_PAYLOAD, SYNC_SYMBOLS, build_frame, frame_body, line_encode, on_air_symbols
from .frontend import AdcSampler, AfeConfig, FrontEnd
from .pipeline import DECODER_SERVICE_TIME, RING_CAPACITY, CircularSampleBuffer, SamplePipe
from .receiver import BREAK, Receiver
from .waveform import DEFAULT_SIM_RATE, SYMBOL_RATE, TX_POWER, AnalogWaveform, check_sim_rate, render, symbol_edges

LEAD_IN_SYMBOLS = 96
# 14216 frame symbols + 1784 idle = 16 ms per 800-byte frame, i.e. 400 kb/s
CALIBRATED_GAP_SYMBOLS = 1784
CHUNK_SAMPLES = 1 << 20
DEFAULT_DISTANCES = tuple(x / 2 for x in range(1, 17))
DEFAULT_DRIFT_PAIRS = tuple((d / 2, -d / 2) for d in range(-200, 201, 50))
DEFAULT_PAYLOADS = (50, 200, 800, 1500)
# receiver latency allowance when deciding a frame was cut off by the end of the run
_TAIL_ALLOWANCE = 8e-6

DISTANCE_COLUMNS = ("scenario", "distance", "seed", "goodput", "per", "frames_sent", "frames_received",
                    "frames_corrected", "frames_discarded", "frames_in_flight", "ber_pre_rs", "sync_losses")
PAYLOAD_COLUMNS = ("payload", "goodput", "scenario", "distance", "seed", "per", "frames_sent",
                   "frames_received", "frames_discarded", "frames_in_flight")
DRIFT_COLUMNS = ("tx_ppm", "rx_ppm", "symbol_errors", "frames_lost", "sampling_ratio", "effective_ratio",
                 "symbols", "frames_sent")


def idle_symbols(n: int, kind: str = "alternating") -> np.ndarray:
    """Filler between frames: a ``1010...`` tone or dark (``"low"``).

    The tone keeps the LED at half power, so the high-pass stage in the
    receiver stays centred.  A long dark stretch lets it settle exactly on
    the slicer threshold, and the next preamble then starts with no margin.
    """
    if n < 0:
        raise ValueError("idle length must be >= 0")
    if kind == "low":
        return np.zeros(n, np.uint8)
    if kind == "alternating":
        return (np.arange(n) % 2 == 0).astype(np.uint8)
    raise ValueError(f"unknown idle kind {kind!r}")


def goodput_ceiling(payload_size: int, gap: int = 0, symbol_rate: float = SYMBOL_RATE) -> float:
    """Payload bits per second of back-to-back frames with ``gap`` idle symbols."""
    return symbol_rate * 8 * payload_size / (on_air_symbols(payload_size) + gap)


@dataclass
class ExperimentConfig:
    scenario: str = "w_closed"
    distances: tuple[float, ...] = (0.5,)
    payload_size: int = 800
    duration: float = 0.2
    gap: int = 0
    idle: str = "alternating"
    seeds: tuple[int, ...] = (0,)
    drift_pairs: tuple[tuple[float, float], ...] = DEFAULT_DRIFT_PAIRS
    payloads: tuple[int, ...] = DEFAULT_PAYLOADS
    drift_symbols: int = 1_000_000
    sampling_ratio: float = 2.1
    tx_power: float = TX_POWER
    tx_ppm: float = 0.0
    rx_ppm: float = 0.0
    tx_jitter: float = 0.0
    rx_jitter: float = 0.0
    rx_phase: float = 0.0
    noise: bool = True
    sim_rate: float = DEFAULT_SIM_RATE
    lead_in: int = LEAD_IN_SYMBOLS
    pipeline_capacity: int = RING_CAPACITY
    service_time: float = DECODER_SERVICE_TIME
    # parsed config-file sections handed to the channel presets and the front end
    overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        self.distances = tuple(float(d) for d in self.distances)
        self.seeds = tuple(int(s) for s in self.seeds)
        self.payloads = tuple(int(p) for p in self.payloads)
        self.drift_pairs = tuple((float(a), float(b)) for a, b in self.drift_pairs)
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; expected one of {', '.join(SCENARIOS)}")
        for name in ("distances", "seeds", "drift_pairs", "payloads"):
            if not getattr(self, name):
                raise ConfigError(f"{name} must not be empty")
        if any(not d > 0 for d in self.distances):
            raise ConfigError("distances must be positive")
        if not self.duration > 0:
            raise ConfigError("duration must be positive")
        for p in (self.payload_size, *self.payloads):
            if not 0 <= p <= MAX_PAYLOAD:
                raise ConfigError(f"payload size {p} outside 0..{MAX_PAYLOAD}")
        if self.idle not in ("alternating", "low"):
            raise ConfigError(f"idle must be 'alternating' or 'low', not {self.idle!r}")
        if self.gap < 0 or self.lead_in < 0:
            raise ConfigError("gap and lead_in must be >= 0")
        if not self.sampling_ratio > 0 or not self.tx_power > 0:
            raise ConfigError("sampling_ratio and tx_power must be positive")
        if self.pipeline_capacity < 1 or self.service_time < 0:
            raise ConfigError("pipeline capacity must be >= 1 and service time >= 0")
        if self.drift_symbols < 1:
            raise ConfigError("drift_symbols must be >= 1")
        try:
            check_sim_rate(self.sim_rate, ClockModel(SYMBOL_RATE))
            self.afe.check(self.sim_rate)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def afe(self) -> AfeConfig:
        try:
            return AfeConfig.from_overrides(self.overrides.get("afe"))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"bad afe settings: {exc}") from None

    def with_overrides(self, sections: dict[str, dict[str, float]]) -> "ExperimentConfig":
        """Apply a parsed config file; tx/rx/pipeline keys map onto fields."""
        kw: dict = {}
        tx, rx, pipe = sections.get("tx", {}), sections.get("rx", {}), sections.get("pipeline", {})
        for src, dst in (("power", "tx_power"), ("ppm", "tx_ppm"), ("jitter_std", "tx_jitter")):
            if src in tx:
                kw[dst] = tx[src]
        for src, dst in (("ppm", "rx_ppm"), ("jitter_std", "rx_jitter"), ("phase", "rx_phase")):
            if src in rx:
                kw[dst] = rx[src]
        if "rate" in rx:
            kw["sampling_ratio"] = rx["rate"] / SYMBOL_RATE
        if "capacity" in pipe:
            kw["pipeline_capacity"] = int(pipe["capacity"])
        if "service_time" in pipe:
            kw["service_time"] = pipe["service_time"]
        rest = {k: v for k, v in sections.items() if k not in ("tx", "rx", "pipeline")}
        merged = {**self.overrides, **rest}
        return replace(self, overrides=merged, **kw)


@dataclass
class LinkStats:
    scenario: str
    distance: float
    seed: int
    payload_size: int
    duration: float
    frames_sent: int = 0
    frames_received: int = 0
    frames_corrected: int = 0
    frames_discarded: int = 0
    frames_in_flight: int = 0
    frames_uncorrectable: int = 0
    frames_miscorrected: int = 0
    false_starts: int = 0
    goodput: float = 0.0
    bit_errors: int = 0
    bits_compared: int = 0
    sync_losses: int = 0
    overruns: int = 0
    symbol_errors: int = -1
    symbols_compared: int = 0

    @property
    def per(self) -> float:
        done = self.frames_sent - self.frames_in_flight
        return self.frames_discarded / done if done else 0.0

    @property
    def ber_pre_rs(self) -> float:
        return self.bit_errors / self.bits_compared if self.bits_compared else 0.0

    @property
    def conserved(self) -> bool:
        return self.frames_sent == self.frames_received + self.frames_discarded + self.frames_in_flight

    def as_row(self) -> dict:
        row = asdict(self)
        row.update(per=self.per, ber_pre_rs=self.ber_pre_rs)
        return row


@dataclass
class _Schedule:
    symbols: np.ndarray
    starts: np.ndarray         # first symbol of every frame
    lengths: np.ndarray
    frames: list[bytes]
    payloads: list[bytes]


def _schedule(n_frames: int, payload_size: int, gap: int, lead_in: int, rng: np.random.Generator,
              idle: str = "alternating") -> _Schedule:
    frames, payloads, parts = [], [], [idle_symbols(lead_in, "alternating")]
    starts, lengths = [], []
    pos = lead_in
    for _ in range(n_frames):
        payload = rng.integers(0, 256, payload_size, dtype=np.uint8).tobytes()
        addr = rng.integers(0, 1 << 16, 2)
        f = build_frame(int(addr[0]), int(addr[1]), payload)
        sym = line_encode(f)
        frames.append(f)
        payloads.append(payload)
        starts.append(pos)
        lengths.append(sym.size)
        parts += [sym, idle_symbols(gap, idle)]
        pos += sym.size + gap
    return _Schedule(np.concatenate(parts), np.array(starts, np.int64), np.array(lengths, np.int64),
                     frames, payloads)


def _clocks(cfg: ExperimentConfig, tx_ppm: float, rx_ppm: float) -> tuple[ClockModel, ClockModel]:
    tx = ClockModel(SYMBOL_RATE, tx_ppm, cfg.tx_jitter)
    rx = ClockModel(SYMBOL_RATE * cfg.sampling_ratio, rx_ppm, cfg.rx_jitter, cfg.rx_phase)
    return tx, rx


@dataclass
class LinkRun:
    """A finished run: the statistics plus what produced them."""

    stats: LinkStats
    schedule: _Schedule
    receiver: Receiver
    rx_seq: np.ndarray         # ADC sequence number of every sample the receiver saw
    tx_clock: ClockModel
    rx_clock: ClockModel
    end_time: float


def simulate_link(cfg: ExperimentConfig, distance: float, seed: int, *, tx_ppm: float | None = None,
                  rx_ppm: float | None = None, n_frames: int | None = None,
                  keep_tokens: bool = False) -> LinkRun:
    """Run the full chain for ``cfg.duration`` or for exactly ``n_frames`` frames.

    With ``n_frames`` the run ends shortly after the last frame, and the
    goodput is measured over that span.
    """
    tx_ppm = cfg.tx_ppm if tx_ppm is None else tx_ppm
    rx_ppm = cfg.rx_ppm if rx_ppm is None else rx_ppm
    tx_clk, rx_clk = _clocks(cfg, tx_ppm, rx_ppm)
    ss = np.random.SeedSequence(seed)
    s_payload, s_noise, s_txj, s_rxj = (int(x) for x in ss.generate_state(4))

    per_frame = on_air_symbols(cfg.payload_size) + cfg.gap
    fixed_count = n_frames is not None
    if not fixed_count:
        # frames whose first symbol goes out before the run ends
        end_time = cfg.duration
        n_frames = max(math.ceil((end_time * tx_clk.effective_rate - cfg.lead_in) / per_frame - 1e-9), 0)
    sched = _schedule(n_frames, cfg.payload_size, cfg.gap, cfg.lead_in, np.random.default_rng(s_payload),
                      cfg.idle)
    edges = symbol_edges(sched.symbols.size, tx_clk, 0.0, s_txj)
    if fixed_count:
        end_time = float(edges[-1 - cfg.gap]) + 4 * _TAIL_ALLOWANCE

    afe = cfg.afe
    chan_cfg = scenario_preset(cfg.scenario, distance, cfg.tx_power, s_noise, cfg.overrides, cfg.sim_rate)
    if not cfg.noise:
        chan_cfg = replace(chan_cfg, noise_std=0.0)
    channel = ChannelStream(chan_cfg)
    fe = FrontEnd(afe, cfg.sim_rate)
    adc = AdcSampler(rx_clk, afe, "linear", s_rxj)
    pipe = SamplePipe(cfg.service_time, CircularSampleBuffer(cfg.pipeline_capacity))
    rx = Receiver()
    rx.keep_tokens = keep_tokens
    seqs: list[np.ndarray] = []

    def deliver(res) -> None:
        vals, seq = res.delivered, res.delivered_seq
        cuts = [int(np.searchsorted(seq, o.resumed_at)) for o in res.overruns]
        lo = 0
        for c in cuts:
            if c > lo:
                rx.feed(vals[lo:c])
            rx.signal_sync_loss("overrun")
            lo = c
        rx.feed(vals[lo:])
        seqs.append(seq)

    n_grid = math.ceil(end_time * cfg.sim_rate - 1e-9)
    for start in range(0, n_grid, CHUNK_SAMPLES):
        stop = min(start + CHUNK_SAMPLES, n_grid)
        power = render(sched.symbols, edges, cfg.sim_rate, cfg.tx_power, start, stop)
        light = AnalogWaveform(power, cfg.sim_rate, start / cfg.sim_rate)
        adc_out = adc.process(fe.process(channel.process(light)))
        deliver(pipe.push(adc_out.codes, adc_out.times))
    tail = adc.flush(end_time)
    deliver(pipe.push(tail.codes, tail.times))
    deliver(pipe.drain())

    rx_seq = np.concatenate(seqs) if seqs else np.empty(0, np.int64)
    stats = _tally(cfg, distance, seed, sched, edges, rx, rx_seq, rx_clk, end_time, len(pipe.overruns))
    return LinkRun(stats, sched, rx, rx_seq, tx_clk, rx_clk, end_time)


def _sample_time(rx_seq: np.ndarray, rx_clk: ClockModel, idx) -> np.ndarray:
    idx = np.clip(np.asarray(idx, np.int64), 0, max(rx_seq.size - 1, 0))
    return rx_clk.phase + rx_seq[idx] / rx_clk.effective_rate


def _tally(cfg, distance, seed, sched: _Schedule, edges, rx: Receiver, rx_seq, rx_clk, end_time,
           overruns: int) -> LinkStats:
    st = LinkStats(cfg.scenario, distance, seed, cfg.payload_size, end_time,
                   frames_sent=len(sched.frames), overruns=overruns)
    sync_end = edges[sched.starts + SYNC_SYMBOLS.size] if len(sched.frames) else np.empty(0)
    frame_end = edges[sched.starts + sched.lengths] if len(sched.frames) else np.empty(0)
    outcome = ["" for _ in sched.frames]

    def match(sample: int) -> int:
        if not len(sched.frames) or rx_seq.size == 0:
            return -1
        t = float(_sample_time(rx_seq, rx_clk, sample))
        k = int(np.searchsorted(sync_end, t))
        best = min((c for c in (k - 1, k) if 0 <= c < sync_end.size), key=lambda c: abs(sync_end[c] - t))
        return best if abs(sync_end[best] - t) < 4e-6 else -1

    delivered_bits = 0
    for ev in rx.events:
        if ev.kind == "frame-start":
            if match(ev.sample) < 0:
                st.false_starts += 1
            continue
        if ev.kind == "sync-loss":
            st.sync_losses += 1
            continue
        if ev.kind not in ("frame-ok", "frame-corrected", "frame-discarded"):
            continue
        k = match(ev.detail["start"])
        if k < 0 or outcome[k]:
            continue
        sent_body = frame_body(sched.frames[k])
        a = np.frombuffer(ev.body, np.uint8)
        b = np.frombuffer(sent_body, np.uint8)
        if a.size == b.size:
            st.bit_errors += int(np.unpackbits(a ^ b).sum())
            st.bits_compared += 8 * a.size
        if ev.kind == "frame-discarded":
            outcome[k] = "uncorrectable"
        elif ev.frame.payload != sched.payloads[k]:
            outcome[k] = "miscorrected"
        else:
            outcome[k] = "corrected" if ev.kind == "frame-corrected" else "ok"
            delivered_bits += 8 * len(ev.frame.payload)

    for k, o in enumerate(outcome):
        if o in ("ok", "corrected"):
            st.frames_received += 1
            st.frames_corrected += o == "corrected"
        elif o:
            st.frames_discarded += 1
            st.frames_uncorrectable += o == "uncorrectable"
            st.frames_miscorrected += o == "miscorrected"
        elif frame_end[k] + _TAIL_ALLOWANCE > end_time:
            st.frames_in_flight += 1
        else:
            st.frames_discarded += 1   # never synchronised, or aborted mid-frame
    st.goodput = delivered_bits / end_time
    return st


def run_link(cfg: ExperimentConfig, distance: float | None = None, seed: int | None = None, *,
             tx_ppm: float | None = None, rx_ppm: float | None = None, events_path=None) -> LinkStats:
    """Statistics of one link run at one distance (defaults: first distance and seed)."""
    distance = cfg.distances[0] if distance is None else distance
    seed = cfg.seeds[0] if seed is None else seed
    run = simulate_link(cfg, distance, seed, tx_ppm=tx_ppm, rx_ppm=rx_ppm)
    if events_path is not None:
        run.receiver.write_events(events_path)
    return run.stats


def count_symbol_errors(ref, got, window: int = 16, max_shift: int = 3, max_errors: int | None = None) -> int:
    """Edit-style error count between two symbol streams.

    Scans for the first disagreement, then resynchronises on the smallest
    insertion/deletion/substitution pattern after which ``window`` symbols
    agree again.  Each event costs ``max(skipped_ref, skipped_got)``.  Any
    ``got`` symbol that is not 0/1 (a run-length break) never matches.
    """
    ref = np.asarray(ref, np.uint8)
    got = np.asarray(got, np.uint8)
    cands = sorted(((di, dj) for di in range(max_shift + 1) for dj in range(max_shift + 1) if di or dj),
                   key=lambda p: (max(p), abs(p[0] - p[1])))
    i = j = errors = 0
    n, m = ref.size, got.size
    while i < n:
        if max_errors is not None and errors >= max_errors:
            break
        if j >= m:
            errors += n - i
            break
        k = min(4096, n - i, m - j)
        neq = np.flatnonzero(ref[i:i + k] != got[j:j + k])
        if neq.size == 0:
            i += k
            j += k
            continue
        i += int(neq[0])
        j += int(neq[0])
        best, best_score = (1, 1), -1
        for di, dj in cands:
            a = ref[i + di:i + di + window]
            b = got[j + dj:j + dj + window]
            w = min(a.size, b.size)
            score = int(np.count_nonzero(a[:w] == b[:w])) - (window - w)
            if score > best_score:
                best, best_score = (di, dj), score
                if w == window and score == window:
                    break
        errors += max(best)
        i += best[0]
        j += best[1]
    return errors


def link_symbol_errors(run: LinkRun, max_errors: int | None = None) -> tuple[int, int]:
    """(errors, symbols compared) between the sent frames and detected tokens.

    The comparison starts at the first symbol of the first frame, so the
    training lead-in is excluded.
    """
    sched = run.schedule
    if not len(sched.frames):
        return 0, 0
    tok = np.concatenate(run.receiver.tokens) if run.receiver.tokens else np.empty(0, np.uint8)
    where = np.concatenate(run.receiver.token_samples) if run.receiver.token_samples else np.empty(0, np.int64)
    t = _sample_time(run.rx_seq, run.rx_clock, where)
    t_first = run.tx_clock.phase + (sched.starts[0] + 0.3) / run.tx_clock.effective_rate
    got = tok[t >= t_first]
    ref = sched.symbols[sched.starts[0]:sched.starts[-1] + sched.lengths[-1]]
    return count_symbol_errors(ref, got, max_errors=max_errors), ref.size


def _parallel_map(fn, tasks: list, jobs: int) -> list:
    if jobs <= 1 or len(tasks) <= 1:
        return [fn(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, tasks))   # keeps input order


def _distance_task(args) -> LinkStats:
    cfg, scenario, distance, seed = args
    return run_link(replace(cfg, scenario=scenario), distance, seed)


def sweep_distance(cfg: ExperimentConfig, scenarios=None, jobs: int = 1) -> list[LinkStats]:
    """One run per (scenario, distance, seed), in that nesting order."""
    scenarios = (cfg.scenario,) if scenarios is None else tuple(scenarios)
    tasks = [(cfg, sc, d, s) for sc in scenarios for d in cfg.distances for s in cfg.seeds]
    return _parallel_map(_distance_task, tasks, jobs)


def _payload_task(args) -> LinkStats:
    cfg, payload, distance, seed = args
    return run_link(replace(cfg, payload_size=payload), distance, seed)


def sweep_payload(cfg: ExperimentConfig, jobs: int = 1) -> list[LinkStats]:
    tasks = [(cfg, p, d, s) for p in cfg.payloads for d in cfg.distances for s in cfg.seeds]
    return _parallel_map(_payload_task, tasks, jobs)


@dataclass
class DriftResult:
    tx_ppm: float
    rx_ppm: float
    sampling_ratio: float
    symbols: int
    symbol_errors: int
    frames_sent: int
    frames_lost: int

    @property
    def effective_ratio(self) -> float:
        return self.sampling_ratio * (1 + self.rx_ppm * 1e-6) / (1 + self.tx_ppm * 1e-6)

    def as_row(self) -> dict:
        return {**asdict(self), "effective_ratio": self.effective_ratio}


def drift_point(cfg: ExperimentConfig, tx_ppm: float, rx_ppm: float, max_errors: int | None = None) -> DriftResult:
    """Noiseless back-to-back frames covering at least ``cfg.drift_symbols`` symbols."""
    n_frames = math.ceil(cfg.drift_symbols / (on_air_symbols(cfg.payload_size) + cfg.gap))
    run = simulate_link(replace(cfg, noise=False), cfg.distances[0], cfg.seeds[0], tx_ppm=tx_ppm,
                        rx_ppm=rx_ppm, n_frames=n_frames, keep_tokens=True)
    errors, n = link_symbol_errors(run, max_errors)
    st = run.stats
    return DriftResult(tx_ppm, rx_ppm, cfg.sampling_ratio, n, errors, st.frames_sent,
                       st.frames_sent - st.frames_received)


def _drift_task(args) -> DriftResult:
    return drift_point(*args)


def sweep_drift(cfg: ExperimentConfig, jobs: int = 1, max_errors: int | None = 100_000) -> list[DriftResult]:
    """Bit-slip sweep over ``cfg.drift_pairs``.

    ``symbol_errors`` stops counting at ``max_errors`` (a badly broken link
    would otherwise take a long time to score).
    """
    tasks = [(cfg, a, b, max_errors) for a, b in cfg.drift_pairs]
    return _parallel_map(_drift_task, tasks, jobs)


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, float):
        return format(v, ".6g") if abs(v) < 1e15 else format(v, ".6e")
    return str(v)


_PRECISION = {"goodput": ".3f", "per": ".6f", "ber_pre_rs": ".6e", "distance": "g",
              "tx_ppm": "g", "rx_ppm": "g", "sampling_ratio": "g", "effective_ratio": ".9f"}


def format_csv(rows: list[dict], columns) -> str:
    """CSV text with a header row; floats use fixed per-column formats."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        out = []
        for c in columns:
            v = r[c]
            out.append(format(v, _PRECISION[c]) if c in _PRECISION and isinstance(v, float) else _fmt(v))
        w.writerow(out)
    return buf.getvalue()


def distance_rows(stats: list[LinkStats]) -> list[dict]:
    return [s.as_row() for s in stats]


def payload_rows(stats: list[LinkStats]) -> list[dict]:
    return [{**s.as_row(), "payload": s.payload_size} for s in stats]


def drift_rows(results: list[DriftResult]) -> list[dict]:
    return [r.as_row() for r in results]
