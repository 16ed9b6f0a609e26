"""Synthetic array recordings from scripted source trajectories, with ground truth."""
from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import signal as sps

from .geometry import ArrayGeometry, from_azel, to_azel

SIGNAL_KINDS = ("speech", "noise", "clap", "tone")
MIN_DISTANCE = 0.5
SINC_TAPS = 16
REF_DISTANCE = 1.0


class SceneError(ValueError):
    pass


@dataclass
class Keypoint:
    t: float
    azimuth: float
    elevation: float
    distance: float = 2.0


@dataclass
class SourceScript:
    kind: str = "speech"
    keypoints: list = field(default_factory=list)
    intervals: list | None = None  # [(start, stop)], None means always on
    gain: float = 1.0  # RMS amplitude at 1 m while sounding
    frequency: float = 1000.0  # tone only

    def __post_init__(self):
        if self.kind not in SIGNAL_KINDS:
            raise SceneError(f"source.kind: unknown signal kind {self.kind!r}")
        self.keypoints = [k if isinstance(k, Keypoint) else Keypoint(**k) for k in self.keypoints]
        if not self.keypoints:
            raise SceneError("source.keypoints: at least one keypoint required")
        self.keypoints.sort(key=lambda k: k.t)
        for k in self.keypoints:
            if k.distance < MIN_DISTANCE:
                raise SceneError(f"source.keypoints: distance {k.distance} m below {MIN_DISTANCE} m")

    def position(self, t) -> tuple[np.ndarray, np.ndarray]:
        """Unit direction(s) and distance(s) at time(s) ``t`` by normalised linear interpolation."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        kt = np.array([k.t for k in self.keypoints])
        kd = from_azel([k.azimuth for k in self.keypoints], [k.elevation for k in self.keypoints])
        kr = np.array([k.distance for k in self.keypoints])
        if len(kt) == 1:
            return np.repeat(kd, len(t), axis=0), np.repeat(kr, len(t))
        idx = np.clip(np.searchsorted(kt, t, side="right") - 1, 0, len(kt) - 2)
        span = kt[idx + 1] - kt[idx]
        frac = np.clip((t - kt[idx]) / np.where(span > 0, span, 1.0), 0.0, 1.0)[:, None]
        u = (1 - frac) * kd[idx] + frac * kd[idx + 1]
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        r = (1 - frac[:, 0]) * kr[idx] + frac[:, 0] * kr[idx + 1]
        return u, r

    def active(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        if self.intervals is None:
            return np.ones(t.shape, dtype=bool)
        on = np.zeros(t.shape, dtype=bool)
        for a, b in self.intervals:
            on |= (t >= a) & (t < b)
        return on


@dataclass
class ReverbSpec:
    decay_per_second: float  # amplitude envelope exp(-k t); k = 3 ln(10) / RT60
    # diffuse energy relative to the direct path at 1 m (1 / critical distance squared);
    # unlike the direct path it does not fall off with distance
    wet_level: float = 0.4

    @classmethod
    def from_rt60(cls, rt60: float, wet_level: float = 0.4) -> "ReverbSpec":
        return cls(3 * np.log(10) / rt60, wet_level)

    @property
    def rt60(self) -> float:
        return 3 * np.log(10) / self.decay_per_second


@dataclass
class SceneSpec:
    duration: float
    sources: list = field(default_factory=list)
    noise_level: float = 0.0
    reverb: ReverbSpec | None = None
    seed: int = 0
    sample_rate: int = 48000

    def __post_init__(self):
        if not self.duration > 0:
            raise SceneError(f"duration: must be positive, got {self.duration}")
        if self.noise_level < 0:
            raise SceneError(f"noise_level: must be >= 0, got {self.noise_level}")
        for s in self.sources:
            for a, b in s.intervals or []:
                if a < 0 or b > self.duration + 1e-9 or b < a:
                    raise SceneError(f"source.intervals: [{a}, {b}] outside [0, {self.duration}]")


def scene_from_json(doc: dict) -> SceneSpec:
    def need(d, key, where):
        if key not in d:
            raise SceneError(f"{where}: missing field {key!r}")
        return d[key]

    try:
        sources = []
        for n, s in enumerate(doc.get("sources", [])):
            where = f"sources[{n}]"
            kps = need(s, "keypoints", where)
            for m, k in enumerate(kps):
                for key in ("t", "azimuth", "elevation"):
                    need(k, key, f"{where}.keypoints[{m}]")
            sources.append(SourceScript(
                kind=s.get("kind", "speech"),
                keypoints=[Keypoint(float(k["t"]), float(k["azimuth"]), float(k["elevation"]),
                                    float(k.get("distance", 2.0))) for k in kps],
                intervals=[tuple(map(float, iv)) for iv in s["intervals"]] if s.get("intervals") is not None else None,
                gain=float(s.get("gain", 1.0)),
                frequency=float(s.get("frequency", 1000.0)),
            ))
        reverb = None
        if doc.get("reverb"):
            r = doc["reverb"]
            if "rt60" in r:
                reverb = ReverbSpec.from_rt60(float(r["rt60"]), float(r.get("wet_level", 0.4)))
            else:
                reverb = ReverbSpec(float(need(r, "decay_per_second", "reverb")), float(r.get("wet_level", 0.4)))
        return SceneSpec(
            duration=float(need(doc, "duration", "scene")),
            sources=sources,
            noise_level=float(doc.get("noise_level", 0.0)),
            reverb=reverb,
            seed=int(doc.get("seed", 0)),
            sample_rate=int(doc.get("sample_rate", 48000)),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, SceneError):
            raise
        raise SceneError(f"scene: {exc}") from exc


def scene_to_json(spec: SceneSpec) -> dict:
    doc = {
        "duration": spec.duration,
        "noise_level": spec.noise_level,
        "seed": spec.seed,
        "sample_rate": spec.sample_rate,
        "sources": [{
            "kind": s.kind,
            "gain": s.gain,
            "frequency": s.frequency,
            "intervals": [list(iv) for iv in s.intervals] if s.intervals is not None else None,
            "keypoints": [dict(t=k.t, azimuth=k.azimuth, elevation=k.elevation, distance=k.distance)
                          for k in s.keypoints],
        } for s in spec.sources],
    }
    if spec.reverb is not None:
        doc["reverb"] = {"decay_per_second": spec.reverb.decay_per_second, "wet_level": spec.reverb.wet_level}
    return doc


def load_scene(path) -> SceneSpec:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise SceneError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    try:
        return scene_from_json(doc)
    except SceneError as exc:
        raise SceneError(f"{path}: {exc}") from exc


# -- dry signals ------------------------------------------------------------

def _bandpass(x, fs, lo, hi):
    sos = sps.butter(4, [lo, hi], btype="band", fs=fs, output="sos")
    return sps.sosfilt(sos, x)


def dry_signal(script: SourceScript, n: int, fs: int, rng: np.random.Generator) -> np.ndarray:
    """Unit-RMS (while sounding) source waveform of ``n`` samples."""
    t = np.arange(n) / fs
    if script.kind == "tone":
        x = np.sqrt(2) * np.sin(2 * np.pi * script.frequency * t + rng.uniform(0, 2 * np.pi))
    elif script.kind == "noise":
        x = rng.standard_normal(n)
    elif script.kind == "clap":
        # train of short decaying broadband transients, one every 0.5 s
        x = np.zeros(n)
        burst = rng.standard_normal(int(0.03 * fs)) * np.exp(-np.arange(int(0.03 * fs)) / (0.005 * fs))
        for s in range(0, n, fs // 2):
            m = min(len(burst), n - s)
            x[s:s + m] += burst[:m]
        x = _bandpass(x, fs, 300, 12000)
        x /= max(np.sqrt(np.mean(x[:min(n, len(burst))] ** 2)), 1e-12)
    else:
        x = _speech_like(n, fs, rng)
    gate = script.active(t)
    return x * gate


def _speech_like(n, fs, rng):
    """Band-limited noise under a syllabic envelope with frequent pauses."""
    carrier = _bandpass(rng.standard_normal(n), fs, 150, 6000)
    carrier /= np.std(carrier) + 1e-12
    env = np.zeros(n)
    pos = 0
    while pos < n:
        syll = int(rng.uniform(0.12, 0.3) * fs)
        count = rng.integers(2, 7)
        for _ in range(count):
            m = min(syll, n - pos)
            if m <= 0:
                break
            env[pos:pos + m] = np.sin(np.pi * np.arange(m) / syll) ** 2 * rng.uniform(0.6, 1.0)
            pos += m + int(rng.uniform(0.0, 0.05) * fs)
        pos += int(rng.uniform(0.15, 0.4) * fs)
    x = carrier * env
    voiced = env > 0.05
    rms = np.sqrt(np.mean(x[voiced] ** 2)) if voiced.any() else 1.0
    return x / rms


# -- propagation ------------------------------------------------------------

PHASES = 1024


def _sinc_table():
    half = SINC_TAPS // 2
    k = np.arange(-half + 1, half + 1)
    frac = np.arange(PHASES + 1) / PHASES
    d = k[None, :] - frac[:, None]
    return np.sinc(d) * np.cos(np.pi * d / SINC_TAPS) ** 2


_TABLE = _sinc_table()
_TABLE_T = np.ascontiguousarray(_TABLE.T)


def _fractional_delay(x: np.ndarray, delay: np.ndarray) -> np.ndarray:
    """y[n] = x(n - delay[n]) by a Hann-windowed sinc of SINC_TAPS taps.

    The fractional part is quantised to 1/PHASES of a sample.
    """
    n = len(x)
    half = SINC_TAPS // 2
    if np.ptp(delay) < 1e-9:
        return _static_delay(x, float(delay[0]))
    pos = np.arange(n) - delay
    base = np.floor(pos).astype(np.int64)
    phase = np.rint((pos - base) * PHASES).astype(np.int64)
    pad = int(np.max(np.abs(delay))) + SINC_TAPS + 2
    xp = np.concatenate([np.zeros(pad), x, np.zeros(pad)])
    out = np.zeros(n)
    start = base + pad
    for j, k in enumerate(range(-half + 1, half + 1)):
        out += xp[start + k] * _TABLE_T[j][phase]
    return out


def _static_delay(x: np.ndarray, delay: float) -> np.ndarray:
    half = SINC_TAPS // 2
    whole = int(np.ceil(delay))
    frac = whole - delay
    k = np.arange(-half + 1, half + 1)
    d = k - frac
    h = np.sinc(d) * np.cos(np.pi * d / SINC_TAPS) ** 2
    # y[n] = sum_k h[k] x[n - whole + k] = full[n - shift]
    full = np.convolve(x, h[::-1])
    shift = whole - k[-1]
    out = np.zeros_like(x)
    n = np.arange(len(x)) - shift
    ok = (n >= 0) & (n < len(full))
    out[ok] = full[n[ok]]
    return out


def _reverb_tail(n: int, fs: int, spec: ReverbSpec, rng) -> np.ndarray:
    length = int(min(1.2 * spec.rt60, 2.0) * fs)
    onset = int(0.005 * fs)
    t = np.arange(length) / fs
    h = rng.standard_normal(length) * np.exp(-spec.decay_per_second * t)
    h[:onset] = 0.0
    h *= np.sqrt(spec.wet_level / np.sum(h ** 2))
    return h


@dataclass
class GroundTruth:
    sources: list  # SourceScript
    duration: float

    def at(self, timestamp: float):
        return ground_truth_at(self, timestamp)


def ground_truth_at(gt: GroundTruth, timestamp: float):
    """List of (source id, unit direction, active) at ``timestamp``."""
    if not 0 <= timestamp <= gt.duration:
        raise SceneError(f"timestamp {timestamp} outside [0, {gt.duration}]")
    out = []
    for sid, s in enumerate(gt.sources):
        u, _ = s.position(timestamp)
        out.append((sid, u[0], bool(s.active(timestamp)[0])))
    return out


def render_scene(spec: SceneSpec, geometry: ArrayGeometry):
    """Render (M, T) float samples plus ground truth.

    Each source reaches each microphone with a fractional propagation delay
    (relative to the array centre) and a 1/d gain; optional diffuse reverberation
    and white sensor noise are added per channel.
    """
    fs = spec.sample_rate
    if fs != geometry.sample_rate:
        raise SceneError(f"scene sample rate {fs} != geometry sample rate {geometry.sample_rate}")
    n = int(round(spec.duration * fs))
    M = geometry.n_mics
    out = np.zeros((M, n))
    root = np.random.SeedSequence(spec.seed)
    noise_seed, reverb_seed, *src_seeds = root.spawn(len(spec.sources) + 2)
    t = np.arange(n) / fs
    wet = np.zeros(n)
    for script, seed in zip(spec.sources, src_seeds):
        rng = np.random.default_rng(seed)
        dry = dry_signal(script, n, fs, rng) * script.gain
        u, r = script.position(t)
        pos = u * r[:, None]
        for m in range(M):
            dist = np.linalg.norm(pos - geometry.mic_positions[m], axis=1)
            delay = (dist - r) * fs / geometry.speed_of_sound
            out[m] += _fractional_delay(dry, delay) * (REF_DISTANCE / dist)
        wet += dry
    if spec.reverb is not None and spec.sources:
        # diffuse field: an independent decaying tail per channel
        rng = np.random.default_rng(reverb_seed)
        for m in range(M):
            out[m] += sps.fftconvolve(wet, _reverb_tail(n, fs, spec.reverb, rng))[:n]
    if spec.noise_level > 0:
        out += spec.noise_level * np.random.default_rng(noise_seed).standard_normal((M, n))
    return out, GroundTruth(list(spec.sources), spec.duration)


def ground_truth_rows(gt: GroundTruth, timestamps):
    rows = []
    for ts in timestamps:
        for sid, u, active in ground_truth_at(gt, ts):
            az, el = to_azel(u)
            rows.append((ts, sid, az, el, int(active)))
    return rows


GT_COLUMNS = ("timestamp", "source_id", "azimuth", "elevation", "active")


def write_ground_truth(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(GT_COLUMNS)
        for ts, sid, az, el, active in rows:
            w.writerow([f"{ts:.6f}", sid, f"{az:.4f}", f"{el:.4f}", active])


def read_ground_truth(path):
    with open(path, newline="") as fh:
        return [(float(r["timestamp"]), int(r["source_id"]), float(r["azimuth"]), float(r["elevation"]),
                 int(r["active"])) for r in csv.DictReader(fh)]
