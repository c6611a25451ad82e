"""Optical channel: inverse-square propagation, ambient light, fluorescent
ripple and a lumped Gaussian noise term.

The preset constants below were produced by ``python -m vlcsim.calibrate``
and are fixed.  They place the working ranges at the calibration targets
and are not physical measurements.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .config import ConfigError
from .waveform import DEFAULT_SIM_RATE, TX_POWER, AnalogWaveform

SCENARIOS = ("w_closed", "w_open", "interference")


@dataclass(frozen=True)
class Interference:
    """Fluorescent ripple: a fundamental plus ``harmonics`` odd harmonics.

    Harmonic ``2h + 1`` has amplitude ``amplitude / (2h + 1)``.
    """

    frequency: float = 40e3
    amplitude: float = 0.0
    harmonics: int = 3

    def __post_init__(self):
        if self.frequency <= 0 or self.amplitude < 0 or self.harmonics < 0:
            raise ValueError("interference needs frequency > 0, amplitude >= 0, harmonics >= 0")

    def __call__(self, t: np.ndarray) -> np.ndarray:
        out = np.zeros_like(t)
        for h in range(self.harmonics + 1):
            order = 2 * h + 1
            out += (self.amplitude / order) * np.sin(2 * math.pi * order * self.frequency * t)
        return out


@dataclass(frozen=True)
class ChannelConfig:
    distance: float
    path_gain_const: float
    ambient_dc: float = 0.0
    interference: Interference | None = None
    noise_std: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if not self.distance > 0:
            raise ValueError("distance must be positive")
        if self.path_gain_const < 0 or self.ambient_dc < 0 or self.noise_std < 0:
            raise ValueError("gains, ambient current and noise must be non-negative")

    @property
    def gain(self) -> float:
        """Photocurrent per watt of transmitted optical power."""
        return self.path_gain_const / self.distance**2


class ChannelStream:
    """Stateful channel for chunked processing.

    Feeding consecutive chunks gives the same samples as one call on the
    concatenated waveform.
    """

    def __init__(self, cfg: ChannelConfig):
        self.cfg = cfg
        self._rng = np.random.default_rng(cfg.seed)

    def process(self, tx: AnalogWaveform) -> AnalogWaveform:
        cfg = self.cfg
        out = tx.samples * cfg.gain + cfg.ambient_dc
        if cfg.interference is not None and cfg.interference.amplitude > 0:
            out = out + cfg.interference(tx.times)
        if cfg.noise_std > 0:
            out = out + cfg.noise_std * self._rng.standard_normal(out.size)
        return tx.with_samples(out)


def apply_channel(tx: AnalogWaveform, cfg: ChannelConfig) -> AnalogWaveform:
    """Photocurrent (A) for a transmitted optical-power waveform (W)."""
    return ChannelStream(cfg).process(tx)


@dataclass(frozen=True)
class ChannelConstants:
    path_gain_const: float = 5.0e-5    # A m^2 / W
    # both noise constants are per simulation sample at NOISE_REFERENCE_RATE
    thermal_noise: float = 3.91e-7     # A rms
    shot_coeff: float = 7.33e-9        # A^2 per A of mean photocurrent


@dataclass(frozen=True)
class ScenarioConstants:
    ambient_dc: float = 0.0
    interference_amplitude: float = 0.0
    interference_frequency: float = 40e3
    interference_harmonics: int = 3


NOISE_REFERENCE_RATE = DEFAULT_SIM_RATE
CHANNEL_CONSTANTS = ChannelConstants()
SCENARIO_CONSTANTS = {
    "w_closed": ScenarioConstants(),
    "w_open": ScenarioConstants(ambient_dc=8.92e-5),
    "interference": ScenarioConstants(ambient_dc=8.92e-5, interference_amplitude=5.5e-7),
}


def preset_constants(overrides: dict[str, dict[str, float]] | None = None):
    """Committed constants with a parsed config file applied on top."""
    chan = CHANNEL_CONSTANTS
    scen = dict(SCENARIO_CONSTANTS)
    if overrides:
        if "channel" in overrides:
            chan = replace(chan, **overrides["channel"])
        for name in SCENARIOS:
            if name in overrides:
                vals = dict(overrides[name])
                if "interference_harmonics" in vals:
                    vals["interference_harmonics"] = int(vals["interference_harmonics"])
                scen[name] = replace(scen[name], **vals)
    return chan, scen


def noise_std_for(signal_mean: float, ambient: float, chan: ChannelConstants,
                  sim_rate: float = NOISE_REFERENCE_RATE) -> float:
    """Thermal floor plus a shot-noise proxy growing with total photocurrent.

    White noise: the per-sample deviation scales with ``sqrt(sim_rate)`` so
    the noise density does not depend on the simulation grid.
    """
    var = chan.thermal_noise**2 + chan.shot_coeff * (signal_mean + ambient)
    return math.sqrt(var * sim_rate / NOISE_REFERENCE_RATE)


def scenario_preset(name: str, distance: float, tx_power: float = TX_POWER, seed: int = 0,
                    overrides: dict[str, dict[str, float]] | None = None,
                    sim_rate: float = DEFAULT_SIM_RATE) -> ChannelConfig:
    """Channel for one of ``w_closed``, ``w_open`` or ``interference``."""
    if name not in SCENARIOS:
        raise ConfigError(f"unknown scenario {name!r}; expected one of {', '.join(SCENARIOS)}")
    if not distance > 0:
        raise ConfigError("distance must be positive")
    chan, scen = preset_constants(overrides)
    sc = scen[name]
    signal_mean = chan.path_gain_const * tx_power / 2 / distance**2
    interference = None
    if sc.interference_amplitude > 0:
        interference = Interference(sc.interference_frequency, sc.interference_amplitude,
                                    int(sc.interference_harmonics))
    return ChannelConfig(
        distance=distance,
        path_gain_const=chan.path_gain_const,
        ambient_dc=sc.ambient_dc,
        interference=interference,
        noise_std=noise_std_for(signal_mean, sc.ambient_dc, chan, sim_rate),
        seed=seed,
    )
