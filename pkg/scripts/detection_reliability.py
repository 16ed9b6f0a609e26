"""Detection and accuracy sweeps for single stationary sounds around the cube array.

Default run: 72 directions x {speech, noise} at 20 dB (detection rate), then the
same grid at 10 dB with 350 ms reverberation and refinement on (RMS error),
then a 1 kHz tone (should mostly go undetected).
"""
import argparse
import time

import numpy as np

from beamtrack.experiments import detection_sweep, rms
from beamtrack.geometry import cube_geometry
from beamtrack.pipeline import config_from_json


def report(label, trials, started):
    rate = np.mean([t.detected for t in trials])
    az = [e for t in trials for e in t.azimuth_errors]
    el = [e for t in trials for e in t.elevation_errors]
    print(f"{label}: detected {rate:.1%} of {len(trials)}  az rms {rms(az):.2f}  el rms {rms(el):.2f}  "
          f"({time.perf_counter() - started:.0f} s)", flush=True)


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--skip", nargs="*", default=[], choices=["clean", "reverb", "tone"])
    args = ap.parse_args()
    geometry = cube_geometry()
    if "clean" not in args.skip:
        t0 = time.perf_counter()
        trials = detection_sweep(geometry, kinds=("speech", "noise"), seed=args.seed, snr_db=20.0)
        for kind in ("speech", "noise"):
            report(f"20 dB {kind}", [t for t in trials if t.kind == kind], t0)
        report("20 dB all", trials, t0)
    if "reverb" not in args.skip:
        t0 = time.perf_counter()
        cfg = config_from_json({}, {"beamformer.refine": "true"})
        trials = detection_sweep(geometry, kinds=("speech", "noise"), cfg=cfg, seed=args.seed,
                                 snr_db=10.0, reverb_rt60=0.35)
        report("10 dB, 350 ms reverb, refined", trials, t0)
    if "tone" not in args.skip:
        t0 = time.perf_counter()
        trials = detection_sweep(geometry, kinds=("tone",), seed=args.seed, snr_db=20.0, frequency=1000.0)
        report("1 kHz tone", trials, t0)


if __name__ == "__main__":
    main()
