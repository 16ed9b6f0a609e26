"""Array geometry, spherical search grid and TDOA tables."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path

import numpy as np

MAX_GRID_LEVEL = 8
DEFAULT_GRID_LEVEL = 4
REFINE_DISTANCES = (0.5, 5.0)
REFINE_STEPS = 5


class GeometryError(ValueError):
    pass


@dataclass(frozen=True)
class ArrayGeometry:
    """Microphone positions (meters, array-centred frame) and sampling constants."""

    mic_positions: np.ndarray
    speed_of_sound: float = 343.0
    sample_rate: int = 48000

    def __post_init__(self):
        pos = np.asarray(self.mic_positions, dtype=float)
        if pos.ndim != 2 or pos.shape[1] != 3:
            raise GeometryError(f"mic positions must be an (M, 3) array, got shape {pos.shape}")
        if pos.shape[0] < 4:
            raise GeometryError(f"at least 4 microphones required, got {pos.shape[0]}")
        if not np.all(np.isfinite(pos)):
            raise GeometryError("mic positions must be finite")
        d = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
        d[np.diag_indices_from(d)] = np.inf
        if d.min() <= 1e-9:
            raise GeometryError("two microphones are coincident")
        if self.speed_of_sound <= 0 or self.sample_rate <= 0:
            raise GeometryError("speed_of_sound and sample_rate must be positive")
        pos.setflags(write=False)
        object.__setattr__(self, "mic_positions", pos)

    @property
    def n_mics(self) -> int:
        return self.mic_positions.shape[0]

    @property
    def pairs(self) -> list[tuple[int, int]]:
        """Microphone pairs (i, j) with i < j, in a fixed order."""
        return list(combinations(range(self.n_mics), 2))

    @property
    def n_pairs(self) -> int:
        return self.n_mics * (self.n_mics - 1) // 2

    def max_delay(self) -> int:
        """Largest possible |TDOA| in whole samples over all pairs."""
        pos = self.mic_positions
        span = max(np.linalg.norm(pos[i] - pos[j]) for i, j in self.pairs)
        return int(np.ceil(self.sample_rate * span / self.speed_of_sound))

    def subset(self, indices) -> "ArrayGeometry":
        return ArrayGeometry(self.mic_positions[list(indices)], self.speed_of_sound, self.sample_rate)

    def to_json(self) -> dict:
        return {
            "mics": self.mic_positions.tolist(),
            "speed_of_sound": self.speed_of_sound,
            "sample_rate": self.sample_rate,
        }


def load_geometry(path) -> ArrayGeometry:
    """Read a geometry JSON document: ``{"mics": [[x, y, z], ...], "speed_of_sound", "sample_rate"}``."""
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise GeometryError(f"{path}: invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    try:
        return geometry_from_json(doc)
    except GeometryError as exc:
        raise GeometryError(f"{path}: {exc}") from exc


def geometry_from_json(doc: dict) -> ArrayGeometry:
    if not isinstance(doc, dict) or "mics" not in doc:
        raise GeometryError("geometry document: missing field 'mics'")
    mics = doc["mics"]
    if not isinstance(mics, list) or not all(isinstance(m, list) and len(m) == 3 for m in mics):
        raise GeometryError("geometry document: field 'mics' must be a list of [x, y, z]")
    return ArrayGeometry(
        np.array(mics, dtype=float),
        speed_of_sound=float(doc.get("speed_of_sound", 343.0)),
        sample_rate=int(doc.get("sample_rate", 48000)),
    )


def cube_geometry(side: float = 0.16, **kw) -> ArrayGeometry:
    """Eight microphones on the corners of a cube centred at the origin (open array)."""
    h = side / 2
    corners = [(x, y, z) for z in (h, -h) for y in (h, -h) for x in (h, -h)]
    # order so the first four are not coplanar
    order = [0, 3, 5, 6, 1, 2, 4, 7]
    return ArrayGeometry(np.array([corners[k] for k in order]), **kw)


def body_geometry(**kw) -> ArrayGeometry:
    """Irregular eight-microphone layout spread over a robot-sized body (closed-array stand-in)."""
    mics = [
        (0.20, 0.12, 0.10),
        (-0.18, 0.15, 0.02),
        (-0.21, -0.13, 0.12),
        (0.17, -0.16, -0.05),
        (0.02, 0.22, -0.10),
        (0.05, -0.20, 0.18),
        (-0.06, 0.01, 0.22),
        (0.00, -0.02, -0.18),
    ]
    return ArrayGeometry(np.array(mics), **kw)


# -- spherical grid ---------------------------------------------------------

@dataclass(frozen=True)
class SphericalGrid:
    vertices: np.ndarray
    triangles: np.ndarray
    level: int

    @property
    def n_points(self) -> int:
        return self.vertices.shape[0]


def _icosahedron():
    # one vertex at the north pole, one at the south, two rings of five
    z = 1 / np.sqrt(5)
    r = 2 / np.sqrt(5)
    verts = [(0.0, 0.0, 1.0)]
    for k in range(5):
        a = 2 * np.pi * k / 5
        verts.append((r * np.cos(a), r * np.sin(a), z))
    for k in range(5):
        a = 2 * np.pi * (k + 0.5) / 5
        verts.append((r * np.cos(a), r * np.sin(a), -z))
    verts.append((0.0, 0.0, -1.0))
    tris = []
    for k in range(5):
        u0, u1 = 1 + k, 1 + (k + 1) % 5
        l0, l1 = 6 + k, 6 + (k + 1) % 5
        tris.append((0, u0, u1))
        tris.append((u0, l0, u1))
        tris.append((u1, l0, l1))
        tris.append((11, l1, l0))
    return np.array(verts), np.array(tris)


def build_icosahedral_grid(level: int = DEFAULT_GRID_LEVEL) -> SphericalGrid:
    """Recursively split each icosahedron face into four, projecting midpoints to the sphere."""
    if level < 0:
        raise GeometryError("grid level must be non-negative")
    if level > MAX_GRID_LEVEL:
        raise GeometryError(f"grid level {level} exceeds size limit {MAX_GRID_LEVEL}")
    verts, tris = _icosahedron()
    verts = [v for v in verts]
    for _ in range(level):
        cache: dict[tuple[int, int], int] = {}

        def midpoint(a, b):
            key = (a, b) if a < b else (b, a)
            idx = cache.get(key)
            if idx is None:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                idx = cache[key] = len(verts) - 1
            return idx

        new = []
        for a, b, c in tris:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new.extend([(a, ab, ca), (ab, b, bc), (ca, bc, c), (ab, bc, ca)])
        tris = np.array(new)
    v = np.array(verts)
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    v.setflags(write=False)
    tris = np.asarray(tris, dtype=np.int64)
    tris.setflags(write=False)
    return SphericalGrid(v, tris, level)


# -- TDOA -------------------------------------------------------------------

def far_field_tdoa(geometry: ArrayGeometry, direction, pair) -> float:
    """Plane-wave delay in samples between mics i and j for a source along ``direction``."""
    i, j = pair
    p = geometry.mic_positions
    scale = geometry.sample_rate / geometry.speed_of_sound
    return float(scale * np.dot(p[i] - p[j], np.asarray(direction, dtype=float)))


def near_field_tdoa(geometry: ArrayGeometry, direction, distance_m: float, pair) -> float:
    """Spherical-wave delay in samples for a source at ``distance_m`` from the array centre."""
    if not distance_m > 0:
        raise GeometryError(f"distance must be positive, got {distance_m}")
    i, j = pair
    p = geometry.mic_positions
    src = distance_m * np.asarray(direction, dtype=float)
    scale = geometry.sample_rate / geometry.speed_of_sound
    return float(scale * (np.linalg.norm(src - p[j]) - np.linalg.norm(src - p[i])))


def near_field_tdoa_table(geometry: ArrayGeometry, points: np.ndarray) -> np.ndarray:
    """Fractional delays for source positions ``points`` (K, 3); returns (K, n_pairs)."""
    p = geometry.mic_positions
    dist = np.linalg.norm(points[:, None, :] - p[None, :, :], axis=-1)
    ii, jj = np.array(geometry.pairs).T
    return geometry.sample_rate / geometry.speed_of_sound * (dist[:, jj] - dist[:, ii])


def round_half_away(x):
    x = np.asarray(x)
    return (np.sign(x) * np.floor(np.abs(x) + 0.5)).astype(np.int64)


@dataclass(frozen=True)
class TdoaLookup:
    """Integer lag per (grid vertex, mic pair); pairs ordered as ``ArrayGeometry.pairs``."""

    delays: np.ndarray
    pairs: tuple

    @property
    def n_points(self) -> int:
        return self.delays.shape[0]

    @property
    def n_pairs(self) -> int:
        return self.delays.shape[1]

    def lookup(self, d: int, pair) -> int:
        i, j = pair
        if i < j:
            return int(self.delays[d, self.pairs.index((i, j))])
        return -int(self.delays[d, self.pairs.index((j, i))])


def build_tdoa_lookup(geometry: ArrayGeometry, grid: SphericalGrid) -> TdoaLookup:
    p = geometry.mic_positions
    ii, jj = np.array(geometry.pairs).T
    scale = geometry.sample_rate / geometry.speed_of_sound
    tau = scale * grid.vertices @ (p[ii] - p[jj]).T
    delays = round_half_away(tau)
    delays.setflags(write=False)
    return TdoaLookup(delays, tuple(geometry.pairs))


# -- local refinement grid --------------------------------------------------

@dataclass(frozen=True)
class RefinedGrid:
    center: np.ndarray
    directions: np.ndarray  # (125, 3)
    distances: np.ndarray  # (125,)

    @property
    def points(self) -> np.ndarray:
        return self.directions * self.distances[:, None]

    def __len__(self):
        return self.directions.shape[0]


def tangent_axes(center):
    """East/north unit vectors of the tangent plane at ``center``."""
    c = np.asarray(center, dtype=float)
    east = np.cross([0.0, 0.0, 1.0], c)
    if np.linalg.norm(east) < 1e-9:
        east = np.array([0.0, 1.0, 0.0])
    east /= np.linalg.norm(east)
    north = np.cross(c, east)
    return east, north


def build_refined_grid(center, coarse_radius_deg: float = 2.5, steps: int = REFINE_STEPS) -> RefinedGrid:
    """5x5x5 lattice over (horizontal offset, vertical offset, distance) around ``center``."""
    c = np.asarray(center, dtype=float)
    c = c / np.linalg.norm(c)
    east, north = tangent_axes(c)
    offsets = np.radians(np.linspace(-coarse_radius_deg, coarse_radius_deg, steps))
    distances = np.geomspace(*REFINE_DISTANCES, steps)
    dirs, dists = [], []
    for a in offsets:
        for e in offsets:
            u = c + np.tan(a) * east + np.tan(e) * north
            u /= np.linalg.norm(u)
            for d in distances:
                dirs.append(u)
                dists.append(d)
    return RefinedGrid(c, np.array(dirs), np.array(dists))


# -- angle helpers ----------------------------------------------------------

def to_azel(u) -> tuple[float, float]:
    """Azimuth in (-180, 180] and elevation in [-90, 90], degrees."""
    x, y, z = np.asarray(u, dtype=float) / np.linalg.norm(u)
    az = float(np.degrees(np.arctan2(y, x)))
    if az <= -180.0:
        az += 360.0
    el = float(np.degrees(np.arcsin(np.clip(z, -1.0, 1.0))))
    return az, el


def from_azel(azimuth_deg, elevation_deg) -> np.ndarray:
    a, e = np.radians(azimuth_deg), np.radians(elevation_deg)
    return np.stack([np.cos(e) * np.cos(a), np.cos(e) * np.sin(a), np.sin(e)], axis=-1)


def angle_between(u, v) -> float:
    """Great-circle angle in degrees."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    c = np.dot(u, v) / (np.linalg.norm(u) * np.linalg.norm(v))
    return float(np.degrees(np.arccos(np.clip(c, -1.0, 1.0))))
