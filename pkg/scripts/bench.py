"""Time each pipeline stage on a synthetic four-talker clip."""
import argparse
import time

import numpy as np

from beamtrack.geometry import body_geometry
from beamtrack.pipeline import Localizer, config_from_json
from beamtrack.scenarios import four_moving_speakers
from beamtrack.simulator import render_scene
from beamtrack.tracker import Tracker


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seconds", type=float, default=10.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    geometry = body_geometry()
    cfg = config_from_json({}, {"tracker.seed": args.seed})
    t0 = time.perf_counter()
    samples, _ = render_scene(four_moving_speakers(seed=args.seed, duration=args.seconds), geometry)
    t1 = time.perf_counter()
    observations = list(Localizer(geometry, cfg).observations(samples))
    t2 = time.perf_counter()
    tracker = Tracker(cfg.tracker, cfg.stft.update_period)
    steps = []
    for obs in observations:
        s = time.perf_counter()
        tracker.step(obs)
        steps.append(time.perf_counter() - s)
    t3 = time.perf_counter()
    print(f"render      {t1 - t0:6.2f} s")
    print(f"localize    {t2 - t1:6.2f} s  ({len(observations)} updates)")
    print(f"track       {t3 - t2:6.2f} s  (median step {1e3 * np.median(steps):.2f} ms)")
    print(f"real-time factor without rendering: {args.seconds / (t3 - t1):.2f}x")


if __name__ == "__main__":
    main()
