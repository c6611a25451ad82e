"""Oversampled waveforms and the OOK modulator."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .clock import ClockModel
from .manchester import as_symbols

SYMBOL_RATE = 1e6
DEFAULT_SIM_RATE = 16e6
MIN_OVERSAMPLING = 8
TX_POWER = 2.8


@dataclass(frozen=True)
class AnalogWaveform:
    """Uniformly sampled real signal; sample ``j`` sits at ``t0 + j / sample_rate``."""

    samples: np.ndarray = field(repr=False)
    sample_rate: float
    t0: float = 0.0

    def __post_init__(self):
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")
        arr = np.asarray(self.samples, dtype=np.float64)
        if not np.all(np.isfinite(arr)):
            raise ValueError("waveform contains non-finite values")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    def __len__(self) -> int:
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    @property
    def t_end(self) -> float:
        return self.t0 + self.duration

    @property
    def times(self) -> np.ndarray:
        return self.t0 + np.arange(self.samples.size) / self.sample_rate

    def with_samples(self, samples) -> "AnalogWaveform":
        return AnalogWaveform(samples, self.sample_rate, self.t0)

    def to_csv(self, path, columns: dict[str, "AnalogWaveform"] | None = None) -> None:
        """Write ``time,value`` rows (extra aligned columns optional)."""
        cols = {"value": self, **(columns or {})}
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["time", *cols])
            data = [c.samples for c in cols.values()]
            for i, t in enumerate(self.times):
                w.writerow([f"{t:.9e}", *(f"{d[i]:.9g}" for d in data)])


def check_sim_rate(sim_rate: float, clock: ClockModel) -> None:
    if sim_rate < MIN_OVERSAMPLING * clock.nominal_rate:
        raise ValueError(
            f"sim_rate {sim_rate:g} Hz is below {MIN_OVERSAMPLING}x the symbol rate {clock.nominal_rate:g} Hz"
        )


def symbol_edges(n_symbols: int, clock: ClockModel, t0: float = 0.0, seed=None) -> np.ndarray:
    """The ``n_symbols + 1`` boundary times of consecutive symbols."""
    rng = np.random.default_rng(seed) if clock.jitter_std > 0 else None
    return t0 + clock.ticks(0, n_symbols + 1, rng)


def render(symbols, edges, sim_rate: float, tx_power: float, start: int, stop: int,
           t0: float = 0.0, mode: str = "area") -> np.ndarray:
    """Optical power on grid samples ``start .. stop-1``.

    ``mode="area"`` gives each grid sample the mean power over its interval
    ``[t_j, t_j + 1/sim_rate)`` (exact for rectangular pulses, so pulse widths
    keep sub-sample accuracy).  ``mode="nearest"`` snaps every edge to the
    nearest grid point.  Time outside the symbol span is dark.
    """
    s = as_symbols(symbols).astype(np.float64)
    edges = np.asarray(edges, dtype=np.float64)
    if edges.size != s.size + 1:
        raise ValueError("need one more edge than symbols")
    if mode == "area":
        # cumulative on-time is piecewise linear between edges
        cum = np.concatenate(([0.0], np.cumsum(s * np.diff(edges))))
        grid = t0 + np.arange(start, stop + 1) / sim_rate
        on = np.interp(grid, edges, cum)
        return np.diff(on) * sim_rate * tx_power
    if mode == "nearest":
        snapped = np.rint((edges - t0) * sim_rate)
        idx = np.searchsorted(snapped, np.arange(start, stop), side="right") - 1
        inside = (idx >= 0) & (idx < s.size)
        out = np.zeros(stop - start)
        out[inside] = s[idx[inside]] * tx_power
        return out
    raise ValueError(f"unknown edge mode {mode!r}")


def modulate(symbols, tx_clock: ClockModel, sim_rate: float = DEFAULT_SIM_RATE,
             tx_power: float = TX_POWER, t0: float = 0.0, seed=None,
             mode: str = "area") -> AnalogWaveform:
    """Rectangular OOK waveform: HIGH emits ``tx_power`` watts, LOW is dark.

    Symbol boundaries follow the drifting (and optionally jittered) TX clock.
    The waveform starts at ``t0`` and lasts until the end of the last symbol.
    """
    check_sim_rate(sim_rate, tx_clock)
    s = as_symbols(symbols)
    edges = symbol_edges(s.size, tx_clock, t0, seed)
    n = max(math.ceil((edges[-1] - t0) * sim_rate - 1e-9), 0)
    return AnalogWaveform(render(s, edges, sim_rate, tx_power, 0, n, t0, mode), sim_rate, t0)
