"""Re-run the four-talker scene with the first k microphones, k = 4..8."""
import argparse
import json

from beamtrack.experiments import RELIABLE_DETECTION, tracking_trial
from beamtrack.geometry import body_geometry
from beamtrack.pipeline import config_from_json
from beamtrack.scenarios import four_moving_speakers
from beamtrack.simulator import render_scene


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, nargs="+", default=[1])
    ap.add_argument("--delay", type=int, default=12)
    ap.add_argument("--json")
    args = ap.parse_args()
    geometry = body_geometry()
    cfg = config_from_json({}, {"tracker.delay_updates": args.delay})
    table = {}
    for seed in args.seeds:
        scene = four_moving_speakers(seed=seed)
        samples, gt = render_scene(scene, geometry)
        for k in range(4, geometry.n_mics + 1):
            rep = tracking_trial(scene, geometry, cfg, mics=range(k), samples=samples, gt=gt)
            rates = [round(s.detection_rate, 3) for s in rep.sources]
            n = rep.tracked_sources(RELIABLE_DETECTION)
            table.setdefault(k, []).append(n)
            print(f"seed {seed} mics {k}: tracked {n}/4  detection {rates}  false {rep.false_tracks}", flush=True)
    for k, counts in table.items():
        print(f"mics {k}: mean tracked {sum(counts) / len(counts):.2f}  {counts}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(table, fh, indent=1)


if __name__ == "__main__":
    main()
