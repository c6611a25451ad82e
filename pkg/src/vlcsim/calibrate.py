"""Derive the committed channel constants from working-range targets.

The link fails once the noise deviation reaches a fixed fraction ``k`` of
the peak photocurrent swing (the chain is linear until the amplifier clips),
so calibration is two steps:

1. measure the frame error rate as a function of ``k`` with thermal noise
   only (:func:`fer_curve`);
2. solve the noise model ``sigma^2 = thermal^2 + shot*(mean + ambient)`` so
   that ``w_closed`` crosses 50 % FER at the knee distance and ``w_open``
   crosses the onset FER at the onset distance (:func:`derive_constants`).

The interference amplitude is then bisected directly on the full model.

Run ``python -m vlcsim.calibrate`` to reprint the constants.
"""
from __future__ import annotations

import argparse
from dataclasses import asdict, dataclass

import numpy as np

from .channel import ChannelConstants
from .harness import ExperimentConfig, run_link
from .waveform import TX_POWER

PROBE_DISTANCE = 2.0


@dataclass(frozen=True)
class Targets:
    knee: float = 5.5             # w_closed 50 % FER
    onset: float = 3.5            # w_open reaches onset_fer
    onset_fer: float = 0.3
    interference_knee: float = 3.0
    shot_share: float = 0.1       # shot part of the w_closed noise variance at the knee


def peak_current(distance: float, gain: float, tx_power: float = TX_POWER) -> float:
    return gain * tx_power / distance**2


def fer(overrides: dict, distance: float, seeds=(0, 1, 2), duration: float = 0.2, scenario="w_closed") -> float:
    lost = done = 0
    for s in seeds:
        st = run_link(ExperimentConfig(scenario=scenario, duration=duration, overrides=overrides), distance, s)
        n = st.frames_sent - st.frames_in_flight
        lost += n - st.frames_received
        done += n
    return lost / done


def fer_curve(ks, gain: float = 5e-5, **kw) -> list[tuple[float, float]]:
    """FER at noise/peak ratios ``ks`` with thermal noise only."""
    a = peak_current(PROBE_DISTANCE, gain)
    out = []
    for k in ks:
        ov = {"channel": {"path_gain_const": gain, "thermal_noise": k * a, "shot_coeff": 0.0}}
        out.append((float(k), fer(ov, PROBE_DISTANCE, **kw)))
    return out


def ratio_at(curve, target: float) -> float:
    """Interpolate the ratio ``k`` where the FER curve crosses ``target``."""
    ks = np.array([c[0] for c in curve])
    fs = np.maximum.accumulate(np.array([c[1] for c in curve]))
    if not fs[0] <= target <= fs[-1]:
        raise ValueError(f"FER {target} outside the measured range {fs[0]}..{fs[-1]}")
    # np.interp needs strictly increasing x; drop the flat parts
    keep = np.concatenate(([True], np.diff(fs) > 0))
    return float(np.interp(target, fs[keep], ks[keep]))


def derive_constants(curve, targets: Targets = Targets(), gain: float = 5e-5,
                     tx_power: float = TX_POWER) -> tuple[ChannelConstants, float]:
    """(channel constants, w_open ambient current) meeting the targets."""
    k50 = ratio_at(curve, 0.5)
    k_on = ratio_at(curve, targets.onset_fer)
    a_k = peak_current(targets.knee, gain, tx_power)
    a_o = peak_current(targets.onset, gain, tx_power)
    var_k = (k50 * a_k) ** 2
    thermal_var = (1 - targets.shot_share) * var_k
    shot = targets.shot_share * var_k / (a_k / 2)
    ambient = ((k_on * a_o) ** 2 - thermal_var) / shot - a_o / 2
    if ambient <= 0:
        raise ValueError("targets need no ambient light; the onset is beyond the knee")
    return ChannelConstants(gain, float(np.sqrt(thermal_var)), float(shot)), float(ambient)


def interference_amplitude(chan: ChannelConstants, ambient: float, targets: Targets = Targets(),
                           lo: float = 0.0, hi: float = None, iters: int = 10) -> float:
    """Tone amplitude giving 50 % FER at ``targets.interference_knee``."""
    if hi is None:
        hi = peak_current(targets.interference_knee, chan.path_gain_const) / 2
    base = {"channel": asdict(chan)}
    for _ in range(iters):
        mid = (lo + hi) / 2
        ov = {**base, "interference": {"ambient_dc": ambient, "interference_amplitude": mid}}
        if fer(ov, targets.interference_knee, scenario="interference") < 0.5:
            lo = mid
        else:
            hi = mid
    return (lo + hi) / 2


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--knee", type=float, default=Targets.knee)
    ap.add_argument("--onset", type=float, default=Targets.onset)
    args = ap.parse_args(argv)
    targets = Targets(knee=args.knee, onset=args.onset)
    curve = fer_curve(np.round(np.arange(0.05, 0.1301, 0.01), 3))
    for k, f in curve:
        print(f"k={k:.3f} fer={f:.3f}")
    chan, ambient = derive_constants(curve, targets)
    print(chan)
    print(f"w_open ambient_dc = {ambient:.4g}")
    amp = interference_amplitude(chan, ambient, targets)
    print(f"interference_amplitude = {amp:.4g}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
