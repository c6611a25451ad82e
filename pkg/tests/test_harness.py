import json
from dataclasses import replace

import numpy as np
import pytest

from vlcsim.config import ConfigError, parse_config
from vlcsim.frame import on_air_symbols
from vlcsim.harness import (
    CALIBRATED_GAP_SYMBOLS,
    DISTANCE_COLUMNS,
    DRIFT_COLUMNS,
    ExperimentConfig,
    count_symbol_errors,
    distance_rows,
    drift_point,
    drift_rows,
    format_csv,
    goodput_ceiling,
    idle_symbols,
    run_link,
    simulate_link,
    sweep_distance,
    sweep_drift,
)

SHORT = ExperimentConfig(duration=0.05)


def test_idle_fill():
    assert idle_symbols(5).tolist() == [1, 0, 1, 0, 1]
    assert idle_symbols(3, "low").tolist() == [0, 0, 0]
    with pytest.raises(ValueError):
        idle_symbols(3, "high")
    with pytest.raises(ValueError):
        idle_symbols(-1)


def test_goodput_ceiling_arithmetic():
    assert on_air_symbols(800) == 14216
    assert goodput_ceiling(800) == pytest.approx(6400 / 14216e-6)
    assert goodput_ceiling(800, CALIBRATED_GAP_SYMBOLS) == pytest.approx(400e3, rel=1e-3)
    assert goodput_ceiling(0) == 0


@pytest.mark.parametrize("kw", [
    dict(scenario="fog"), dict(distances=()), dict(distances=(0.0,)), dict(duration=0),
    dict(payload_size=1501), dict(payloads=(-1,)), dict(idle="dark"), dict(gap=-1), dict(seeds=()),
    dict(sampling_ratio=0), dict(pipeline_capacity=0), dict(sim_rate=4e6),
    dict(overrides={"afe": {"lpf_cutoff": 9e6}}),
])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        ExperimentConfig(**kw)


def test_with_overrides_maps_sections():
    sections = parse_config("""
        tx.ppm = 20
        rx.rate = 2.2e6
        rx.phase = 1e-7
        pipeline.capacity = 512
        channel.thermal_noise = 0
        afe.adc_bits = 10
    """)
    cfg = SHORT.with_overrides(sections)
    assert cfg.tx_ppm == 20 and cfg.sampling_ratio == pytest.approx(2.2)
    assert cfg.rx_phase == 1e-7 and cfg.pipeline_capacity == 512
    assert cfg.overrides["channel"] == {"thermal_noise": 0.0}
    assert cfg.afe.levels == 1024


def test_clean_link_stats():
    st = run_link(SHORT)
    assert st.conserved and st.frames_sent == 4
    assert st.frames_received == 3 and st.frames_in_flight == 1
    assert st.false_starts == 0 and st.sync_losses == 0 and st.overruns == 0
    assert st.bit_errors == 0 and st.bits_compared > 0
    assert st.goodput == pytest.approx(3 * 6400 / 0.05)
    assert st.goodput <= goodput_ceiling(800)


def test_zero_payload():
    st = run_link(replace(SHORT, payload_size=0))
    assert st.goodput == 0 and st.frames_received > 0 and st.conserved


def test_beyond_knee_delivers_nothing():
    st = run_link(SHORT, 8.0)
    assert st.goodput == 0 and st.frames_received == 0 and st.conserved


def test_noisy_link_loses_frames_before_rs():
    # a flipped symbol breaks a Manchester pair or a run, so noisy frames are
    # aborted by the receiver rather than reaching the decoder damaged
    st = run_link(replace(SHORT, duration=0.1), 5.25, seed=1)
    assert st.conserved and 0 < st.frames_received < st.frames_sent - st.frames_in_flight
    assert st.frames_discarded > 0 and st.sync_losses > 0
    assert st.ber_pre_rs == 0 and st.frames_corrected == 0


def test_slow_decoder_raises_sync_loss():
    st = run_link(replace(SHORT, service_time=1e-6))
    assert st.overruns > 0 and st.sync_losses > 0
    assert st.frames_received == 0 and st.conserved


def test_fixed_frame_count():
    run = simulate_link(SHORT, 0.5, 0, n_frames=3)
    assert run.stats.frames_sent == 3 and run.stats.frames_received == 3


def test_events_file(tmp_path):
    path = tmp_path / "ev.jsonl"
    run_link(SHORT, events_path=path)
    kinds = [json.loads(line)["kind"] for line in open(path)]
    assert kinds.count("frame-ok") == 3 and kinds.count("frame-start") == 4


def test_same_seed_same_csv():
    cfg = ExperimentConfig(scenario="w_open", distances=(3.5, 4.0), seeds=(2,), duration=0.05)
    a = format_csv(distance_rows(sweep_distance(cfg)), DISTANCE_COLUMNS)
    b = format_csv(distance_rows(sweep_distance(cfg)), DISTANCE_COLUMNS)
    assert a == b
    c = format_csv(distance_rows(sweep_distance(replace(cfg, seeds=(3,)))), DISTANCE_COLUMNS)
    assert c != a


def test_parallel_sweep_matches_serial():
    cfg = ExperimentConfig(distances=(0.5, 6.0), seeds=(0, 1), duration=0.03)
    serial = sweep_distance(cfg, ("w_closed", "interference"))
    par = sweep_distance(cfg, ("w_closed", "interference"), jobs=2)
    assert [s.as_row() for s in serial] == [s.as_row() for s in par]
    assert [(s.scenario, s.distance, s.seed) for s in serial][:3] == [
        ("w_closed", 0.5, 0), ("w_closed", 0.5, 1), ("w_closed", 6.0, 0)]


def test_csv_format():
    text = format_csv([{"a": 1, "goodput": 1234.56789, "per": 0.5, "flag": True, "s": "x"}],
                      ("a", "goodput", "per", "flag", "s"))
    assert text == "a,goodput,per,flag,s\n1,1234.568,0.500000,1,x\n"


def test_symbol_error_counter():
    rng = np.random.default_rng(0)
    ref = rng.integers(0, 2, 2000, dtype=np.uint8)
    assert count_symbol_errors(ref, ref) == 0
    sub = ref.copy()
    sub[500] ^= 1
    assert count_symbol_errors(ref, sub) == 1
    assert count_symbol_errors(ref, np.delete(ref, 700)) == 1
    assert count_symbol_errors(ref, np.insert(ref, 300, 2)) == 1
    assert count_symbol_errors(ref, ref[:1500]) == 500
    noisy = ref ^ (rng.random(ref.size) < 0.2).astype(np.uint8)
    assert count_symbol_errors(ref, noisy, max_errors=10) >= 10


def test_drift_point_clean_at_2_1():
    cfg = ExperimentConfig(drift_symbols=60_000)
    res = drift_point(cfg, 100, -100)
    assert res.symbol_errors == 0 and res.frames_lost == 0 and res.symbols >= 60_000
    assert res.effective_ratio == pytest.approx(2.1 * (1 - 1e-4) / (1 + 1e-4))


def test_drift_point_fails_at_2_0():
    cfg = ExperimentConfig(drift_symbols=60_000, sampling_ratio=2.0)
    assert drift_point(cfg, 50, -50, max_errors=1000).symbol_errors > 0


def test_drift_rows():
    cfg = ExperimentConfig(drift_symbols=15_000, drift_pairs=((0, 0), (20, -20)))
    text = format_csv(drift_rows(sweep_drift(cfg)), DRIFT_COLUMNS)
    lines = text.splitlines()
    assert lines[0] == ",".join(DRIFT_COLUMNS) and len(lines) == 3
    assert lines[1].startswith("0,0,0,0,2.1,2.100000000,")
