"""Receiver analog chain and ADC.

Stage order: TIA -> first-order high-pass -> +bias -> second amplifier
(gain about the bias level, clipped to the supply rails) -> first-order
low-pass -> ADC.  Both filters are bilinear-transform sections with the
cutoff prewarped, so the digital response is exact at the cutoff and
``|H(f)|`` follows the tan-warped first-order curve elsewhere.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np
from scipy.signal import lfilter

from .clock import ClockModel
from .waveform import AnalogWaveform

ADC_RATE = 2.1e6


@dataclass(frozen=True)
class AfeConfig:
    tia_gain: float = 1.0e4        # V/A
    hpf_cutoff: float = 10e3
    bias: float = 2.5
    amp2_gain: float = 2.0
    lpf_cutoff: float = 1.1e6
    adc_bits: int = 12
    adc_span: float = 5.0

    def __post_init__(self):
        if self.tia_gain <= 0 or self.amp2_gain <= 0:
            raise ValueError("amplifier gains must be positive")
        if self.hpf_cutoff <= 0 or self.lpf_cutoff <= 0:
            raise ValueError("filter cutoffs must be positive")
        if int(self.adc_bits) != self.adc_bits or self.adc_bits < 1:
            raise ValueError("adc_bits must be a positive integer")
        if self.adc_span <= 0:
            raise ValueError("adc_span must be positive")

    @classmethod
    def from_overrides(cls, values: dict[str, float] | None) -> "AfeConfig":
        if not values:
            return cls()
        kw = dict(values)
        if "adc_bits" in kw:
            kw["adc_bits"] = int(kw["adc_bits"])
        return cls(**kw)

    @property
    def levels(self) -> int:
        return 1 << self.adc_bits

    @property
    def lsb(self) -> float:
        return self.adc_span / self.levels

    @property
    def bias_code(self) -> int:
        return int(quantize(np.array([self.bias]), self)[0])

    def check(self, sim_rate: float) -> None:
        nyq = sim_rate / 2
        for f in fields(self):
            if f.name.endswith("_cutoff") and not 0 < getattr(self, f.name) < nyq:
                raise ValueError(f"{f.name}={getattr(self, f.name):g} Hz must lie in (0, {nyq:g})")


def _prewarped(fc: float, fs: float) -> tuple[float, float]:
    k = 2 * fs
    return k, k * math.tan(math.pi * fc / fs)


def highpass_coeffs(fc: float, fs: float) -> tuple[np.ndarray, np.ndarray]:
    k, w = _prewarped(fc, fs)
    return np.array([k, -k]) / (k + w), np.array([1.0, (w - k) / (k + w)])


def lowpass_coeffs(fc: float, fs: float) -> tuple[np.ndarray, np.ndarray]:
    k, w = _prewarped(fc, fs)
    return np.array([w, w]) / (k + w), np.array([1.0, (w - k) / (k + w)])


def warped_magnitude(kind: str, f: float, fc: float, fs: float) -> float:
    """Closed-form |H| of the prewarped bilinear first-order section."""
    x = math.tan(math.pi * f / fs) / math.tan(math.pi * fc / fs)
    if kind == "lowpass":
        return 1 / math.sqrt(1 + x * x)
    if kind == "highpass":
        return x / math.sqrt(1 + x * x)
    raise ValueError(kind)


def analog_magnitude(kind: str, f: float, fc: float) -> float:
    x = f / fc
    if kind == "lowpass":
        return 1 / math.sqrt(1 + x * x)
    if kind == "highpass":
        return x / math.sqrt(1 + x * x)
    raise ValueError(kind)


def _step_state(b: np.ndarray, a: np.ndarray, x0: float) -> np.ndarray:
    # direct-form-II-transposed state that makes a constant x0 input stationary
    y0 = x0 * b.sum() / a.sum()
    return np.array([b[1] * x0 - a[1] * y0])


class FrontEnd:
    """Streaming analog chain; filter state persists across :meth:`process` calls.

    Filters start in steady state for the first input sample, as if the
    receiver had been powered long before the capture began.
    """

    def __init__(self, cfg: AfeConfig, sim_rate: float):
        cfg.check(sim_rate)
        self.cfg = cfg
        self.sim_rate = sim_rate
        self.hp_b, self.hp_a = highpass_coeffs(cfg.hpf_cutoff, sim_rate)
        self.lp_b, self.lp_a = lowpass_coeffs(cfg.lpf_cutoff, sim_rate)
        self._hp_zi = None
        self._lp_zi = None

    def process(self, current: AnalogWaveform, probes: bool = False):
        if current.sample_rate != self.sim_rate:
            raise ValueError("waveform rate does not match the front-end sim_rate")
        cfg = self.cfg
        x = current.samples * cfg.tia_gain
        if x.size == 0:
            out = current.with_samples(x)
            return (out, {}) if probes else out
        if self._hp_zi is None:
            self._hp_zi = _step_state(self.hp_b, self.hp_a, x[0])
        hp, self._hp_zi = lfilter(self.hp_b, self.hp_a, x, zi=self._hp_zi)
        amp = np.clip(cfg.bias + cfg.amp2_gain * hp, 0.0, cfg.adc_span)
        if self._lp_zi is None:
            self._lp_zi = _step_state(self.lp_b, self.lp_a, amp[0])
        out, self._lp_zi = lfilter(self.lp_b, self.lp_a, amp, zi=self._lp_zi)
        wave = current.with_samples(out)
        if probes:
            return wave, {
                "tia": current.with_samples(x),
                "hpf": current.with_samples(hp + cfg.bias),
                "adc_in": wave,
            }
        return wave


def afe_process(photocurrent: AnalogWaveform, cfg: AfeConfig | None = None) -> AnalogWaveform:
    """Volts at the ADC input for a photocurrent waveform."""
    return FrontEnd(cfg or AfeConfig(), photocurrent.sample_rate).process(photocurrent)


def afe_probe_csv(photocurrent: AnalogWaveform, path, cfg: AfeConfig | None = None) -> None:
    """Dump the after-TIA, after-HPF and ADC-input probe points to CSV."""
    fe = FrontEnd(cfg or AfeConfig(), photocurrent.sample_rate)
    wave, pr = fe.process(photocurrent, probes=True)
    pr["tia"].to_csv(path, {"hpf": pr["hpf"], "adc_in": wave})


def quantize(volts: np.ndarray, cfg: AfeConfig) -> np.ndarray:
    """Clamp to the span and round half up to the nearest code."""
    v = np.clip(volts, 0.0, cfg.adc_span)
    codes = np.floor(v / cfg.adc_span * cfg.levels + 0.5)
    return np.minimum(codes, cfg.levels - 1).astype(np.uint16)


def dequantize(codes: np.ndarray, cfg: AfeConfig) -> np.ndarray:
    return np.asarray(codes, dtype=np.float64) * cfg.lsb


@dataclass(frozen=True)
class AdcSampleStream:
    codes: np.ndarray
    sample_rate: float
    rx_clock: ClockModel
    times: np.ndarray | None = None


class AdcSampler:
    """Streaming ADC on an independent clock.

    Sample instants come only from ``rx_clock``.  The value at an instant is
    interpolated between simulation samples (``interp="linear"``) or taken
    from the nearest one (``interp="nearest"``).  Instants past the last
    simulation sample of a chunk wait for the next chunk; :meth:`flush`
    resolves them by holding the final value.
    """

    def __init__(self, rx_clock: ClockModel, cfg: AfeConfig, interp: str = "linear", seed=None):
        if interp not in ("linear", "nearest"):
            raise ValueError(f"unknown interpolation {interp!r}")
        self.clock = rx_clock
        self.cfg = cfg
        self.interp = interp
        self._rng = np.random.default_rng(seed) if rx_clock.jitter_std > 0 else None
        self._next = 0
        self._tail: AnalogWaveform | None = None
        self._started = False

    def _tick_times(self, t_end: float) -> tuple[int, np.ndarray]:
        stop = self.clock.count_before(t_end)
        start = self._next
        if stop <= start:
            return start, np.empty(0)
        self._next = stop
        return start, self.clock.ticks(start, stop, self._rng)

    def _values(self, wave: AnalogWaveform, t: np.ndarray) -> np.ndarray:
        pos = (t - wave.t0) * wave.sample_rate
        if self.interp == "nearest":
            idx = np.clip(np.rint(pos).astype(np.int64), 0, len(wave) - 1)
            return wave.samples[idx]
        return np.interp(pos, np.arange(len(wave)), wave.samples)

    def process(self, v: AnalogWaveform) -> AdcSampleStream:
        if len(v) == 0:
            return self._emit(np.empty(0), np.empty(0))
        if not self._started:
            # ticks before the capture starts are never sampled
            self._next = max(self._next, self.clock.count_before(v.t0))
            self._started = True
        wave = v
        if self._tail is not None:
            wave = AnalogWaveform(np.concatenate((self._tail.samples, v.samples)), v.sample_rate, self._tail.t0)
        # resolvable up to the last sample, or half a step from it for nearest
        last = wave.t0 + (len(wave) - 1) / wave.sample_rate
        horizon = last + (0.5 / wave.sample_rate if self.interp == "nearest" else 0.0)
        _, t = self._tick_times(horizon)
        vals = self._values(wave, t)
        self._tail = AnalogWaveform(wave.samples[-1:], wave.sample_rate, last)
        return self._emit(vals, t)

    def flush(self, t_end: float | None = None) -> AdcSampleStream:
        if self._tail is None:
            return self._emit(np.empty(0), np.empty(0))
        end = self._tail.t0 + 1 / self._tail.sample_rate if t_end is None else t_end
        _, t = self._tick_times(end)
        return self._emit(np.full(t.size, self._tail.samples[0]), t)

    def _emit(self, vals: np.ndarray, t: np.ndarray) -> AdcSampleStream:
        return AdcSampleStream(quantize(vals, self.cfg), self.clock.effective_rate, self.clock, t)


def adc_sample(v: AnalogWaveform, rx_clock: ClockModel | None = None, cfg: AfeConfig | None = None,
               interp: str = "linear", seed=None) -> AdcSampleStream:
    """Sample an ADC-input waveform over its whole duration."""
    rx_clock = rx_clock or ClockModel(ADC_RATE)
    cfg = cfg or AfeConfig()
    s = AdcSampler(rx_clock, cfg, interp, seed)
    a = s.process(v)
    b = s.flush(v.t_end)
    return AdcSampleStream(np.concatenate((a.codes, b.codes)), rx_clock.effective_rate, rx_clock,
                           np.concatenate((a.times, b.times)))
