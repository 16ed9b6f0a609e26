"""End-to-end offline pipeline: samples -> correlations -> observations -> tracks."""
from __future__ import annotations

import csv
import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .beamformer import BeamformerConfig, Observation, localize_multiple
from .frontend import FrontendConfig, SpectralFrontend, StftConfig
from .geometry import ArrayGeometry, build_icosahedral_grid, build_tdoa_lookup, to_azel
from .tracker import Tracker, TrackerConfig, TrajectoryRecord

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    geometry: str | None = None
    stft: StftConfig = field(default_factory=StftConfig)
    frontend: FrontendConfig = field(default_factory=FrontendConfig)
    beamformer: BeamformerConfig = field(default_factory=BeamformerConfig)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)

    def to_json(self) -> dict:
        return dataclasses.asdict(self)


_SECTIONS = {"stft": StftConfig, "frontend": FrontendConfig, "beamformer": BeamformerConfig,
             "tracker": TrackerConfig}


def _coerce(value, current):
    if isinstance(current, bool):
        if isinstance(value, str):
            if value.lower() in ("1", "true", "yes", "on"):
                return True
            if value.lower() in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {value!r}")
        return bool(value)
    if isinstance(current, int) and not isinstance(current, bool):
        return int(value)
    if isinstance(current, float):
        return float(value)
    if isinstance(current, tuple):
        if isinstance(value, str):
            value = json.loads(value)
        return tuple(value)
    return value


def config_from_json(doc: dict, overrides: dict | None = None) -> PipelineConfig:
    """Build a validated config from a JSON-like dict plus dotted ``section.key`` overrides."""
    doc = json.loads(json.dumps(doc or {}))
    for key, value in (overrides or {}).items():
        parts = key.split(".")
        node = doc
        for p in parts[:-1]:
            node = node.setdefault(p, {})
        node[parts[-1]] = value
    unknown = set(doc) - set(_SECTIONS) - {"geometry"}
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown))}")
    kwargs = {"geometry": doc.get("geometry")}
    for name, cls in _SECTIONS.items():
        section = doc.get(name, {}) or {}
        defaults = cls()
        names = {f.name for f in dataclasses.fields(cls)}
        values = {}
        for k, v in section.items():
            if k not in names:
                raise ConfigError(f"unknown config field {name}.{k}")
            try:
                values[k] = _coerce(v, getattr(defaults, k))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {name}.{k}: {exc}") from exc
        try:
            kwargs[name] = cls(**values)
        except ValueError as exc:
            raise ConfigError(f"{name}: {exc}") from exc
    cfg = PipelineConfig(**kwargs)
    _validate(cfg)
    return cfg


def _validate(cfg: PipelineConfig):
    t = cfg.tracker
    checks = [
        (t.n_particles > 0, "tracker.n_particles must be positive"),
        (t.sigma > 0, "tracker.sigma must be positive"),
        (0 <= t.p_new <= 1 and 0 <= t.p_false <= 1, "tracker priors must lie in [0, 1]"),
        (0 < t.resample_ratio <= 1, "tracker.resample_ratio must lie in (0, 1]"),
        (t.delay_updates >= 0, "tracker.delay_updates must be >= 0"),
        (cfg.beamformer.energy_threshold > 0, "beamformer.energy_threshold must be positive"),
        (1 <= cfg.beamformer.n_sources <= 4, "beamformer.n_sources must be 1..4"),
    ]
    for ok, msg in checks:
        if not ok:
            raise ConfigError(msg)


def load_config(path=None, overrides: dict | None = None) -> PipelineConfig:
    """Read a pipeline config; a relative geometry path is resolved against the config's folder."""
    doc = {}
    if path:
        try:
            doc = json.loads(Path(path).read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
        if not isinstance(doc, dict):
            raise ConfigError(f"{path}: top level must be an object")
    cfg = config_from_json(doc, overrides)
    if cfg.geometry:
        geo = Path(cfg.geometry)
        if not geo.is_absolute() and path:
            geo = Path(path).parent / geo
        if not geo.exists():
            raise FileNotFoundError(f"geometry file {geo} referenced by config does not exist")
        cfg.geometry = str(geo)
    return cfg


def parse_overrides(items) -> dict:
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key=value")
        k, v = item.split("=", 1)
        out[k.strip()] = v.strip()
    return out


@dataclass
class RunStats:
    n_samples: int = 0
    n_updates: int = 0
    wall_time: float = 0.0
    sample_rate: int = 48000

    @property
    def real_time_factor(self) -> float:
        """Audio seconds processed per wall-clock second."""
        return self.n_samples / self.sample_rate / self.wall_time if self.wall_time > 0 else float("inf")


@dataclass
class TrackingResult:
    records: list
    observations: list
    stats: RunStats
    delayed: bool = False


class Localizer:
    """Frontend plus beamformer with the grid and lookup table built once."""

    def __init__(self, geometry: ArrayGeometry, cfg: PipelineConfig):
        if geometry.sample_rate != cfg.stft.sample_rate:
            raise ConfigError(f"geometry sample rate {geometry.sample_rate} != stft sample rate "
                              f"{cfg.stft.sample_rate}")
        self.geometry = geometry
        self.cfg = cfg
        self.grid = build_icosahedral_grid(cfg.beamformer.grid_level)
        self.lookup = build_tdoa_lookup(geometry, self.grid)
        self.reset()

    def reset(self):
        """Fresh frontend state; the grid and lookup are kept."""
        self.frontend = SpectralFrontend(self.geometry.n_mics, self.cfg.stft, self.cfg.frontend)

    def observations(self, samples: np.ndarray):
        hop = self.cfg.stft.hop
        for start in range(0, samples.shape[1] - hop + 1, hop):
            cc = self.frontend.push(samples[:, start:start + hop])
            if cc is not None:
                yield localize_multiple(cc, self.lookup, self.grid, self.cfg.beamformer, self.geometry)


def run_tracking(samples: np.ndarray, geometry: ArrayGeometry, cfg: PipelineConfig,
                 keep_observations: bool = False) -> TrackingResult:
    samples = np.asarray(samples, dtype=float)
    if samples.shape[0] != geometry.n_mics:
        raise ConfigError(f"signal has {samples.shape[0]} channels, geometry has {geometry.n_mics}")
    t0 = time.perf_counter()
    loc = Localizer(geometry, cfg)
    tracker = Tracker(cfg.tracker, dt=cfg.stft.update_period)
    records, observations = [], []
    n_updates = 0
    for obs in loc.observations(samples):
        n_updates += 1
        if keep_observations:
            observations.append(obs)
        records.extend(tracker.step(obs))
    stats = RunStats(samples.shape[1], n_updates,
                     time.perf_counter() - t0, geometry.sample_rate)
    return TrackingResult(records, observations, stats, cfg.tracker.delay_updates > 0)


def run_localization(samples: np.ndarray, geometry: ArrayGeometry, cfg: PipelineConfig) -> list[Observation]:
    return list(Localizer(geometry, cfg).observations(np.asarray(samples, dtype=float)))


# -- CSV/JSON ---------------------------------------------------------------

TRAJECTORY_COLUMNS = ("timestamp", "source_id", "azimuth", "elevation", "existence", "activity", "observed")
DIAGNOSTIC_COLUMNS = ("timestamp", "rank", "azimuth", "elevation", "energy", "confidence")


def write_trajectory_csv(path, records):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRAJECTORY_COLUMNS)
        for r in records:
            w.writerow([f"{r.timestamp:.6f}", r.source_id, f"{r.azimuth:.4f}", f"{r.elevation:.4f}",
                        f"{r.existence:.6f}", f"{r.activity:.6f}", int(r.observed)])


def write_trajectory_json(path, records):
    Path(path).write_text(json.dumps([dataclasses.asdict(r) for r in records], indent=1))


def read_trajectory_csv(path):
    with open(path, newline="") as fh:
        return [TrajectoryRecord(float(r["timestamp"]), int(r["source_id"]), float(r["azimuth"]),
                                 float(r["elevation"]), float(r["existence"]), float(r["activity"]),
                                 bool(int(r["observed"]))) for r in csv.DictReader(fh)]


def write_diagnostics_csv(path, observations):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DIAGNOSTIC_COLUMNS)
        for obs in observations:
            for s in obs.sources:
                az, el = to_azel(s.direction)
                w.writerow([f"{obs.timestamp:.6f}", s.rank, f"{az:.4f}", f"{el:.4f}", f"{s.energy:.4f}",
                            f"{s.confidence:.6f}"])
