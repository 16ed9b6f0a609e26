"""Command line: simulate, track, evaluate, bench."""
from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from .audio import read_wav, write_wav
from .evaluation import evaluate
from .frontend import update_timestamp
from .geometry import body_geometry, load_geometry
from .pipeline import (ConfigError, load_config, parse_overrides, run_tracking, write_diagnostics_csv,
                       write_trajectory_csv, write_trajectory_json, read_trajectory_csv)
from .scenarios import four_moving_speakers
from .simulator import (ground_truth_rows, load_scene, read_ground_truth, render_scene,
                        write_ground_truth)

EXIT_OK, EXIT_DOMAIN, EXIT_IO = 0, 1, 2
log = logging.getLogger("beamtrack")


def parse_mics(text: str) -> list[int]:
    """'1-4' or '1,3,5-8' (1-based, inclusive) -> zero-based indices."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            a, b = part.split("-", 1)
            out.extend(range(int(a) - 1, int(b)))
        elif part:
            out.append(int(part) - 1)
    if not out or min(out) < 0:
        raise ValueError(f"bad microphone selection {text!r}")
    return sorted(set(out))


def update_times(n_samples: int, stft) -> list[float]:
    n_updates = (n_samples // stft.hop) // stft.frames_per_update
    return [update_timestamp(i, stft) for i in range(n_updates)]


def cmd_simulate(args) -> int:
    geometry = load_geometry(args.geometry)
    scene = load_scene(args.scene)
    samples, gt = render_scene(scene, geometry)
    write_wav(args.out, samples, scene.sample_rate, args.format)
    if args.truth:
        cfg = load_config(args.config)
        times = [t for t in update_times(samples.shape[1], cfg.stft) if t <= scene.duration]
        write_ground_truth(args.truth, ground_truth_rows(gt, times))
    print(f"wrote {args.out}: {samples.shape[0]} channels x {samples.shape[1]} samples")
    return EXIT_OK


def cmd_track(args) -> int:
    overrides = parse_overrides(args.set)
    if args.refine:
        overrides["beamformer.refine"] = "true"
    if args.delay is not None:
        overrides["tracker.delay_updates"] = str(args.delay)
    if args.seed is not None:
        overrides["tracker.seed"] = str(args.seed)
    cfg = load_config(args.config, overrides)
    if not (args.geometry or cfg.geometry):
        raise ConfigError("no array geometry: pass --geometry or a config with a \"geometry\" entry")
    geometry = load_geometry(args.geometry or cfg.geometry)
    samples, rate = read_wav(args.wav)
    if rate != geometry.sample_rate:
        raise ConfigError(f"unsupported sample rate {rate} Hz (geometry expects {geometry.sample_rate}); "
                          "resample the file first")
    if samples.shape[0] != geometry.n_mics:
        raise ConfigError(f"{args.wav}: {samples.shape[0]} channels but geometry has {geometry.n_mics} mics")
    if args.mics:
        sel = parse_mics(args.mics)
        if max(sel) >= geometry.n_mics:
            raise ConfigError(f"microphone selection {args.mics} exceeds {geometry.n_mics} mics")
        samples, geometry = samples[sel], geometry.subset(sel)
    result = run_tracking(samples, geometry, cfg, keep_observations=bool(args.diagnostics))
    write_trajectory_csv(args.out, result.records)
    if args.json:
        write_trajectory_json(args.json, result.records)
    if args.diagnostics:
        write_diagnostics_csv(args.diagnostics, result.observations)
    ids = sorted({r.source_id for r in result.records})
    print(f"{result.stats.n_updates} updates, {len(ids)} confirmed source(s), "
          f"real-time factor {result.stats.real_time_factor:.2f}x")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    records = read_trajectory_csv(args.trajectory)
    gt = read_ground_truth(args.truth)
    report = evaluate(records, gt, gate_deg=args.gate)
    doc = report.to_json()
    if args.json:
        Path(args.json).write_text(json.dumps(doc, indent=1))
    print(f"status: {report.status}")
    for s in report.sources:
        print(f"source {s.source_id}: detection {s.detection_rate:.3f}  az rms {s.azimuth_rms:.2f}  "
              f"el rms {s.elevation_rms:.2f}  tracks {s.track_ids}  swaps {s.swaps}")
    print(f"false tracks {report.false_tracks}  id swaps {report.id_swaps}  "
          f"overall detection {report.detection_rate:.3f}")
    return EXIT_OK


def cmd_bench(args) -> int:
    geometry = load_geometry(args.geometry) if args.geometry else body_geometry()
    cfg = load_config(args.config, parse_overrides(args.set))
    scene = four_moving_speakers(seed=args.seed, duration=args.seconds)
    samples, _ = render_scene(scene, geometry)
    t0 = time.perf_counter()
    result = run_tracking(samples, geometry, cfg)
    wall = time.perf_counter() - t0
    print(f"{args.seconds:.1f} s of {geometry.n_mics}-channel audio in {wall:.2f} s "
          f"(real-time factor {args.seconds / wall:.2f}x, {result.stats.n_updates} updates)")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="beamtrack", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="render a scene JSON to a multichannel WAV")
    s.add_argument("scene")
    s.add_argument("--geometry", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--truth", help="ground-truth CSV path")
    s.add_argument("--config", help="pipeline config (for the update cadence of the truth CSV)")
    s.add_argument("--format", choices=("float32", "pcm16"), default="float32")
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("track", help="localize and track sources in a WAV")
    t.add_argument("wav")
    t.add_argument("--geometry")
    t.add_argument("--config")
    t.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    t.add_argument("--mics", help="1-based channel subset, e.g. 1-4")
    t.add_argument("--refine", action="store_true", help="refine directions on the local grid")
    t.add_argument("--delay", type=int, help="delayed estimation, in updates")
    t.add_argument("--seed", type=int)
    t.add_argument("--out", required=True, help="trajectory CSV")
    t.add_argument("--json", help="also write trajectory JSON")
    t.add_argument("--diagnostics", help="per-update beamformer peaks CSV")
    t.set_defaults(func=cmd_track)

    e = sub.add_parser("evaluate", help="score a trajectory CSV against ground truth")
    e.add_argument("trajectory")
    e.add_argument("truth")
    e.add_argument("--gate", type=float, default=10.0)
    e.add_argument("--json")
    e.set_defaults(func=cmd_evaluate)

    b = sub.add_parser("bench", help="time the pipeline on a synthetic four-talker scene")
    b.add_argument("--seconds", type=float, default=10.0)
    b.add_argument("--geometry")
    b.add_argument("--config")
    b.add_argument("--set", action="append", default=[], metavar="KEY=VALUE")
    b.add_argument("--seed", type=int, default=0)
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except (ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DOMAIN


if __name__ == "__main__":
    sys.exit(main())
