"""Trial runners shared by the acceptance tests and the scripts in scripts/."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .evaluation import EvaluationReport, evaluate
from .frontend import update_timestamp
from .geometry import ArrayGeometry, angle_between, from_azel, to_azel
from .pipeline import Localizer, PipelineConfig, config_from_json, run_tracking
from .scenarios import single_sound
from .simulator import SceneSpec, ground_truth_rows, render_scene

DETECTION_GATE_DEG = 10.0
RELIABLE_DETECTION = 0.7  # a source counts as tracked above this matched fraction


def update_span(index: int, stft) -> tuple[float, float]:
    """(start, end) seconds of the samples feeding update ``index``."""
    n0 = index * stft.frames_per_update
    start = (n0 - 1) * stft.hop
    end = start + (stft.frames_per_update - 1) * stft.hop + stft.frame_length
    return start / stft.sample_rate, end / stft.sample_rate


@dataclass
class DetectionTrial:
    azimuth: float
    elevation: float
    kind: str
    peak_energy: float
    peak_error_deg: float
    detected: bool
    azimuth_errors: list = field(default_factory=list)    # over detected updates
    elevation_errors: list = field(default_factory=list)


def detection_trial(localizer: Localizer, azimuth: float, elevation: float, kind: str,
                    gate_deg: float = DETECTION_GATE_DEG, **scene_kw) -> DetectionTrial:
    """Render one stationary sound and score the beamformer's rank-0 peak.

    The trial counts as a detection when the strongest update during the sound
    clears the energy threshold and points within ``gate_deg`` of the truth.
    """
    scene = single_sound(azimuth, elevation, kind, **scene_kw)
    samples, _ = render_scene(scene, localizer.geometry)
    onset, offset = scene.sources[0].intervals[0]
    truth = from_azel(azimuth, elevation)
    threshold = localizer.cfg.beamformer.energy_threshold
    localizer.reset()
    best = None
    az_err, el_err = [], []
    for i, obs in enumerate(localizer.observations(samples)):
        t0, t1 = update_span(i, localizer.cfg.stft)
        if t1 <= onset or t0 >= offset:
            continue
        top = obs.sources[0]
        err = angle_between(top.direction, truth)
        if best is None or top.energy > best[0]:
            best = (top.energy, err)
        if top.energy >= threshold and err <= gate_deg:
            az, el = to_azel(top.direction)
            az_err.append(float((az - azimuth + 180.0) % 360.0 - 180.0))
            el_err.append(float(el - elevation))
    energy, err = best if best else (0.0, 180.0)
    return DetectionTrial(azimuth, elevation, kind, energy, err,
                          energy >= threshold and err <= gate_deg, az_err, el_err)


def direction_set(n_azimuth: int = 24, elevations=(-20.0, 0.0, 20.0)):
    step = 360.0 / n_azimuth
    return [(-180.0 + step * (k + 0.5), el) for el in elevations for k in range(n_azimuth)]


def detection_sweep(geometry: ArrayGeometry, kinds=("speech", "noise"), directions=None,
                    cfg: PipelineConfig | None = None, seed: int = 0, **scene_kw) -> list[DetectionTrial]:
    cfg = cfg or config_from_json({})
    localizer = Localizer(geometry, cfg)
    trials = []
    for k, (az, el) in enumerate(directions or direction_set()):
        for j, kind in enumerate(kinds):
            trials.append(detection_trial(localizer, az, el, kind, seed=seed + 2 * k + j, **scene_kw))
    return trials


def rms(values) -> float:
    v = np.asarray(values, dtype=float)
    return float(np.sqrt(np.mean(v ** 2))) if v.size else float("nan")


def tracking_trial(scene: SceneSpec, geometry: ArrayGeometry, cfg: PipelineConfig, mics=None,
                   samples=None, gt=None) -> EvaluationReport:
    """Track a rendered scene (optionally on a microphone subset) and score it."""
    if samples is None:
        samples, gt = render_scene(scene, geometry)
    if mics is not None:
        samples, geometry = samples[list(mics)], geometry.subset(list(mics))
    result = run_tracking(samples, geometry, cfg)
    times = [update_timestamp(i, cfg.stft) for i in range(result.stats.n_updates)]
    times = [t for t in times if t <= scene.duration]
    return evaluate(result.records, ground_truth_rows(gt, times))
