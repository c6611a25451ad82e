"""Command-line entry point: ``vlcsim {link,sweep-distance,sweep-payload,sweep-drift}``.

Results go to ``--output`` as CSV (stdout when omitted).  Any configuration
problem prints a message to stderr and exits with status 2.
"""
from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .channel import SCENARIOS
from .config import ConfigError, load_config
from .harness import (
    CALIBRATED_GAP_SYMBOLS,
    DEFAULT_DISTANCES,
    DEFAULT_PAYLOADS,
    DISTANCE_COLUMNS,
    DRIFT_COLUMNS,
    PAYLOAD_COLUMNS,
    ExperimentConfig,
    distance_rows,
    drift_rows,
    format_csv,
    payload_rows,
    simulate_link,
    sweep_distance,
    sweep_drift,
    sweep_payload,
)

LINK_COLUMNS = ("scenario", "distance", "seed", "payload_size", "duration", "goodput", "per", "frames_sent",
                "frames_received", "frames_corrected", "frames_discarded", "frames_in_flight",
                "frames_uncorrectable", "frames_miscorrected", "false_starts", "ber_pre_rs", "sync_losses",
                "overruns")


def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _ints(text: str) -> list[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _pairs(text: str) -> list[tuple[float, float]]:
    out = []
    for item in text.split(","):
        if not item.strip():
            continue
        tx, sep, rx = item.partition(":")
        try:
            out.append((float(tx), float(rx)))
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected tx:rx ppm pairs, got {item!r}") from None
        if not sep:
            raise argparse.ArgumentTypeError(f"expected tx:rx ppm pairs, got {item!r}")
    return out


def _gap(text: str) -> int:
    if text == "calibrated":
        return CALIBRATED_GAP_SYMBOLS
    try:
        return int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"gap must be a symbol count or 'calibrated', got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", default="w_closed", help=f"one of {', '.join(SCENARIOS)}")
    common.add_argument("--payload", type=int, default=800, help="payload bytes per frame")
    common.add_argument("--duration", type=float, default=0.2, help="simulated seconds per run")
    common.add_argument("--gap", type=_gap, default=0,
                        help=f"idle symbols between frames, or 'calibrated' ({CALIBRATED_GAP_SYMBOLS})")
    common.add_argument("--idle", choices=("alternating", "low"), default="alternating",
                        help="idle fill between frames")
    common.add_argument("--config", type=Path, help="key = value file overriding model constants")
    common.add_argument("--output", "-o", type=Path, help="CSV destination (default stdout)")
    common.add_argument("--jobs", "-j", type=int, default=1, help="parallel worker processes")

    ap = argparse.ArgumentParser(prog="vlcsim", description="Visible-light link simulator.")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("link", parents=[common], help="one link run")
    p.add_argument("--distance", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--events", type=Path, help="write receiver events as JSON lines")

    p = sub.add_parser("sweep-distance", parents=[common], help="goodput against distance")
    p.add_argument("--scenarios", default=None,
                   help="comma-separated scenarios, or 'all' (overrides --scenario)")
    p.add_argument("--distances", type=_floats, default=list(DEFAULT_DISTANCES))
    p.add_argument("--seeds", type=_ints, default=[0])

    p = sub.add_parser("sweep-payload", parents=[common], help="goodput against payload size")
    p.add_argument("--payloads", type=_ints, default=list(DEFAULT_PAYLOADS))
    p.add_argument("--distance", type=float, default=0.5)
    p.add_argument("--seeds", type=_ints, default=[0])

    p = sub.add_parser("sweep-drift", parents=[common], help="symbol errors against clock drift")
    p.add_argument("--pairs", type=_pairs, default=None, help="tx:rx ppm pairs, e.g. 100:-100,0:0")
    p.add_argument("--ratio", type=float, default=2.1, help="nominal ADC rate / symbol rate")
    p.add_argument("--symbols", type=int, default=1_000_000, help="minimum symbols per point")
    p.add_argument("--distance", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    return ap


def _config(args) -> ExperimentConfig:
    kw = dict(scenario=args.scenario, payload_size=args.payload, duration=args.duration, gap=args.gap,
              idle=args.idle)
    cmd = args.command
    if cmd == "link":
        kw.update(distances=(args.distance,), seeds=(args.seed,))
    elif cmd == "sweep-distance":
        kw.update(distances=args.distances, seeds=args.seeds)
    elif cmd == "sweep-payload":
        kw.update(payloads=args.payloads, distances=(args.distance,), seeds=args.seeds)
    else:
        kw.update(distances=(args.distance,), seeds=(args.seed,), sampling_ratio=args.ratio,
                  drift_symbols=args.symbols)
        if args.pairs is not None:
            kw["drift_pairs"] = args.pairs
    cfg = ExperimentConfig(**kw)
    if args.config is not None:
        cfg = cfg.with_overrides(load_config(args.config))
    return cfg


def _scenarios(args) -> tuple[str, ...]:
    if not args.scenarios:
        return (args.scenario,)
    if args.scenarios == "all":
        return SCENARIOS
    names = tuple(s.strip() for s in args.scenarios.split(",") if s.strip())
    bad = [s for s in names if s not in SCENARIOS]
    if bad or not names:
        raise ConfigError(f"unknown scenario(s) {', '.join(bad) or '(none)'}")
    return names


def run(args) -> str:
    cfg = _config(args)
    if args.jobs < 1:
        raise ConfigError("--jobs must be >= 1")
    if args.command == "link":
        run_ = simulate_link(cfg, cfg.distances[0], cfg.seeds[0])
        if args.events is not None:
            run_.receiver.write_events(args.events)
        return format_csv([run_.stats.as_row()], LINK_COLUMNS)
    if args.command == "sweep-distance":
        stats = sweep_distance(cfg, _scenarios(args), jobs=args.jobs)
        return format_csv(distance_rows(stats), DISTANCE_COLUMNS)
    if args.command == "sweep-payload":
        return format_csv(payload_rows(sweep_payload(cfg, jobs=args.jobs)), PAYLOAD_COLUMNS)
    return format_csv(drift_rows(sweep_drift(cfg, jobs=args.jobs)), DRIFT_COLUMNS)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        text = run(args)
    except ConfigError as exc:
        print(f"vlcsim: error: {exc}", file=sys.stderr)
        return 2
    if args.output is None:
        sys.stdout.write(text)
    else:
        args.output.write_text(text)
    return 0
