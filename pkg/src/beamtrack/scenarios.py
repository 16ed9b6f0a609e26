"""Canned scenes mirroring the characterisation and tracking experiments."""
from __future__ import annotations

import numpy as np

from .simulator import Keypoint, ReverbSpec, SceneSpec, SourceScript

E1_RT60 = 0.35
E2_RT60 = 1.0


def amplitude_for_snr(snr_db: float, noise_level: float, distance: float) -> float:
    """Source gain (RMS at 1 m) giving ``snr_db`` against white sensor noise at ``distance``."""
    return noise_level * distance * 10 ** (snr_db / 20)


def _path(t0, t1, az0, az1, el, dist, step=0.5):
    n = max(int(np.ceil((t1 - t0) / step)), 1)
    ts = np.linspace(t0, t1, n + 1)
    azs = np.linspace(az0, az1, n + 1)
    return [Keypoint(float(t), float(a), el, dist) for t, a in zip(ts, azs)]


def single_sound(azimuth, elevation, kind="noise", distance=3.0, snr_db=20.0, noise_level=0.01,
                 reverb_rt60=None, seed=0, lead=0.6, length=None, frequency=1000.0) -> SceneSpec:
    """One stationary sound after a noise-only lead-in, as in the characterisation runs."""
    if length is None:
        length = {"noise": 0.1, "clap": 0.05, "speech": 1.2, "tone": 1.0}[kind]
    duration = lead + length + 0.4
    src = SourceScript(kind, [Keypoint(0.0, azimuth, elevation, distance)], intervals=[(lead, lead + length)],
                       gain=amplitude_for_snr(snr_db, noise_level, distance), frequency=frequency)
    reverb = ReverbSpec.from_rt60(reverb_rt60) if reverb_rt60 else None
    return SceneSpec(duration, [src], noise_level, reverb, seed)


def four_moving_speakers(seed=0, duration=30.0, distance=2.0, elevation=15.0, snr_db=20.0,
                         noise_level=0.01, reverb_rt60=E1_RT60) -> SceneSpec:
    """Four talkers each walking 90 degrees one way, then 180 degrees back."""
    gain = amplitude_for_snr(snr_db, noise_level, distance)
    turn = duration / 3
    sources = []
    for a0 in (-135.0, -45.0, 45.0, 135.0):
        kps = _path(0.0, turn, a0, a0 + 90, elevation, distance)
        kps += _path(turn, duration, a0 + 90, a0 - 90, elevation, distance)[1:]
        sources.append(SourceScript("speech", kps, gain=gain))
    reverb = ReverbSpec.from_rt60(reverb_rt60) if reverb_rt60 else None
    return SceneSpec(duration, sources, noise_level, reverb, seed)


def crossing_speakers(seed=0, duration=10.0, span=70.0, distance=2.0, elevation=15.0, snr_db=20.0,
                      noise_level=0.01, reverb_rt60=E1_RT60) -> SceneSpec:
    """Two talkers starting on either side and crossing in front (azimuth 0) halfway through."""
    gain = amplitude_for_snr(snr_db, noise_level, distance)
    a = _path(0.0, duration, span, -span, elevation, distance)
    b = _path(0.0, duration, -span, span, elevation, distance)
    sources = [SourceScript("speech", a, gain=gain), SourceScript("speech", b, gain=gain)]
    reverb = ReverbSpec.from_rt60(reverb_rt60) if reverb_rt60 else None
    return SceneSpec(duration, sources, noise_level, reverb, seed)
