"""Grid search over steered-beamformer energy, multi-peak extraction and refinement."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .frontend import CrossCorrelationSet
from .geometry import (ArrayGeometry, SphericalGrid, TdoaLookup, build_refined_grid,
                       near_field_tdoa_table)

RANK_CONFIDENCE = (None, 0.3, 0.16, 0.03)


@dataclass
class BeamformerConfig:
    energy_threshold: float = 150.0  # E_T; scales with pair count, frame size and window
    n_sources: int = 4
    refine: bool = False
    refine_ranks: int = 2
    coarse_radius_deg: float = 2.5
    grid_level: int = 4


@dataclass(frozen=True)
class PotentialSource:
    direction: np.ndarray
    energy: float
    rank: int
    confidence: float
    distance: float | None = None


@dataclass(frozen=True)
class Observation:
    timestamp: float
    sources: tuple

    def __len__(self):
        return len(self.sources)

    @property
    def directions(self) -> np.ndarray:
        return np.array([s.direction for s in self.sources])

    @property
    def confidences(self) -> np.ndarray:
        return np.array([s.confidence for s in self.sources])


class OpCounter:
    """Tallies correlation additions performed by :func:`direction_search`."""

    def __init__(self):
        self.additions = 0
        self.searches = 0


def confidence(energy: float, rank: int, threshold: float = 150.0) -> float:
    """Probability that the rank-``rank`` peak is a true source."""
    if rank > 0:
        return RANK_CONFIDENCE[rank]
    nu = energy / threshold
    if nu <= 1:
        return 0.5 * nu * nu
    return 1.0 - 0.5 / (nu * nu)


def energy_map(values: np.ndarray, lookup: TdoaLookup) -> np.ndarray:
    L = values.shape[1]
    cols = np.arange(lookup.n_pairs)
    return values[cols, lookup.delays % L].sum(axis=1)


def direction_search(correlations: CrossCorrelationSet | np.ndarray, lookup: TdoaLookup,
                     counter: OpCounter | None = None):
    """Energy of every grid vertex; returns (argmax with lowest-index ties, energies)."""
    values = correlations.values if isinstance(correlations, CrossCorrelationSet) else correlations
    energies = energy_map(values, lookup)
    if counter is not None:
        counter.additions += lookup.delays.size
        counter.searches += 1
    return int(np.argmax(energies)), energies


def direction_search_reference(values: np.ndarray, lookup: TdoaLookup, counter: OpCounter | None = None):
    """Plain double loop over vertices and pairs; used to cross-check the vectorised search."""
    L = values.shape[1]
    best, best_e = 0, -np.inf
    energies = np.zeros(lookup.n_points)
    for d in range(lookup.n_points):
        e = 0.0
        for p in range(lookup.n_pairs):
            e += values[p, lookup.delays[d, p] % L]
            if counter is not None:
                counter.additions += 1
        energies[d] = e
        if e > best_e:
            best, best_e = d, e
    return best, energies


def localize_multiple(correlations: CrossCorrelationSet, lookup: TdoaLookup, grid: SphericalGrid,
                      config: BeamformerConfig | None = None, geometry: ArrayGeometry | None = None,
                      counter: OpCounter | None = None, keep_maps: bool = False) -> Observation:
    """Greedy extraction of ``n_sources`` peaks, zeroing each found peak's lags."""
    cfg = config or BeamformerConfig()
    values = correlations.values.copy()
    L = values.shape[1]
    cols = np.arange(lookup.n_pairs)
    found = []
    maps = []
    e0 = None
    for q in range(cfg.n_sources):
        best, energies = direction_search(values, lookup, counter)
        if keep_maps:
            maps.append(energies)
        energy = float(energies[best])
        if q == 0:
            e0 = energy
        values[cols, lookup.delays[best] % L] = 0.0
        found.append((best, energy))
    sources = []
    for q, (best, energy) in enumerate(found):
        direction = grid.vertices[best]
        distance = None
        if cfg.refine and q < cfg.refine_ranks and geometry is not None:
            direction, distance = refine_direction(correlations, geometry, direction, cfg.coarse_radius_deg)
        sources.append(PotentialSource(np.array(direction), max(energy, 0.0), q,
                                       confidence(max(e0, 0.0), q, cfg.energy_threshold), distance))
    obs = Observation(correlations.timestamp, tuple(sources))
    if keep_maps:
        object.__setattr__(obs, "energy_maps", maps)
    return obs


def refine_direction(correlations: CrossCorrelationSet, geometry: ArrayGeometry, coarse,
                     coarse_radius_deg: float = 2.5):
    """Best of the 125-point near-field lattice around ``coarse``; returns (direction, distance).

    The distance coordinate is not reliable enough to be used as a range estimate.
    """
    rg = build_refined_grid(coarse, coarse_radius_deg)
    taus = near_field_tdoa_table(geometry, rg.points)
    energies = correlations.interpolate(taus).sum(axis=1)
    best = int(np.argmax(energies))
    return rg.directions[best], float(rg.distances[best])
