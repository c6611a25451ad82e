import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vlcsim.clock import ClockModel
from vlcsim.manchester import manchester_encode
from vlcsim.waveform import AnalogWaveform, modulate, render, symbol_edges

P = 2.8
MHZ = ClockModel(1e6)


def test_single_high():
    w = modulate([1], MHZ)
    assert len(w) == 16 and np.allclose(w.samples, P)


def test_high_low():
    w = modulate([1, 0], MHZ)
    assert np.allclose(w.samples, [P] * 16 + [0] * 16)


def test_nearest_mode_same_on_grid():
    a = modulate([1, 0, 1, 1, 0], MHZ, mode="nearest")
    b = modulate([1, 0, 1, 1, 0], MHZ)
    assert np.allclose(a.samples, b.samples, rtol=1e-12, atol=0)


def test_area_mode_splits_straddling_sample():
    # symbol edge half-way through grid sample 16
    clk = ClockModel(1e6, phase=0.5 / 16e6)
    w = modulate([1, 0], clk, t0=0.0)
    assert w.samples[0] == pytest.approx(P / 2)
    assert w.samples[16] == pytest.approx(P / 2)
    assert np.allclose(w.samples[1:16], P)


def test_megasymbol_drift_duration():
    w = modulate(np.zeros(10**6, np.uint8), ClockModel(1e6, 100.0))
    assert abs(w.duration - 1 / (1 + 1e-4)) <= 1 / 16e6


def test_manchester_mean_power():
    rng = np.random.default_rng(0)
    sym = manchester_encode(rng.integers(0, 2, 5000))
    w = modulate(sym, ClockModel(1e6, -37.0))
    energy = w.samples.sum() / w.sample_rate
    assert abs(energy - P / 2 * sym.size * 1e-6 / (1 - 37e-6)) <= P * 1e-6


@settings(max_examples=50)
@given(st.floats(-500, 500), st.floats(0, 0.049e-6), st.integers(0, 2**32))
def test_edges_strictly_increasing(ppm, jitter, seed):
    e = symbol_edges(2000, ClockModel(1e6, ppm, jitter), seed=seed)
    assert e.size == 2001 and np.all(np.diff(e) > 0)


def test_jitter_is_seeded():
    clk = ClockModel(1e6, 0.0, 20e-9)
    a = modulate([1, 0] * 50, clk, seed=5)
    b = modulate([1, 0] * 50, clk, seed=5)
    c = modulate([1, 0] * 50, clk, seed=6)
    assert np.array_equal(a.samples, b.samples) and not np.array_equal(a.samples, c.samples)
    with pytest.raises(ValueError):
        clk.ticks(0, 10)


def test_sim_rate_floor():
    with pytest.raises(ValueError):
        modulate([1], MHZ, sim_rate=7e6)
    modulate([1], MHZ, sim_rate=8e6)


def test_render_checks():
    with pytest.raises(ValueError):
        render([1, 0], [0.0, 1e-6], 16e6, P, 0, 32)
    with pytest.raises(ValueError):
        render([1], [0.0, 1e-6], 16e6, P, 0, 16, mode="cubic")
    # outside the symbol span is dark
    assert np.all(render([1], [0.0, 1e-6], 16e6, P, 16, 40) == 0)


def test_clock_model():
    c = ClockModel(2.1e6, 50.0)
    assert c.effective_rate == pytest.approx(2.1e6 * (1 + 5e-5))
    assert c.count_before(1.0) == 2_100_105
    with pytest.raises(ValueError):
        ClockModel(0)
    with pytest.raises(ValueError):
        ClockModel(1e6, -1e6)
    with pytest.raises(ValueError):
        ClockModel(1e6, 0, -1.0)


def test_waveform_invariants(tmp_path):
    with pytest.raises(ValueError):
        AnalogWaveform([0.0, np.nan], 1e6)
    with pytest.raises(ValueError):
        AnalogWaveform([0.0], 0)
    w = AnalogWaveform([1.0, 2.0], 4.0, t0=1.0)
    assert w.t_end == 1.5 and w.times.tolist() == [1.0, 1.25]
    with pytest.raises(ValueError):
        w.samples[0] = 3.0
    path = tmp_path / "w.csv"
    w.to_csv(path, {"other": w.with_samples([5.0, 6.0])})
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["time", "value", "other"]
    assert [float(x) for x in rows[2]] == [1.25, 2.0, 6.0]
