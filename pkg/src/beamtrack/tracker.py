"""Multi-source particle filter with probabilistic source/observation assignment."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache
from itertools import product

import numpy as np

from .beamformer import Observation
from .geometry import angle_between, to_azel

log = logging.getLogger(__name__)

FALSE = -2
NEW = -1
MAX_TRACKED = 16
UNIFORM_SPHERE = 1.0 / (4.0 * np.pi)

STATIONARY, CONSTANT_VELOCITY, ACCELERATED = 0, 1, 2
# (alpha, beta) of the excitation-damping model per dynamics class
DYNAMICS = np.array([
    [2.0, 0.04],
    [0.05, 0.2],
    [0.5, 0.2],
])


@dataclass
class TrackerConfig:
    n_particles: int = 1000
    sigma: float = 0.05
    p_new: float = 0.005
    p_false: float = 0.05
    p_not_observed: float = 0.2  # P_o
    p_stay_active: float = 0.95
    p_become_active: float = 0.05
    new_source_threshold: float = 0.3
    confirm_threshold: float = 0.98
    t_obs: float = 0.5
    removal_horizon_s: float = 2.0
    unconfirmed_horizon_s: float = 0.5
    resample_ratio: float = 0.7
    class_proportions: tuple = (0.05, 0.9, 0.05)  # stationary, constant velocity, accelerated
    init_sigma: float = 0.05
    duplicate_guard_deg: float = 10.0
    delay_updates: int = 0
    max_sources: int = 10
    # instantaneous activity evidence: a = base + slope * P_j
    activity_base: float = 0.35
    activity_slope: float = 0.6
    seed: int = 0


@dataclass
class TrajectoryRecord:
    timestamp: float
    source_id: int
    azimuth: float
    elevation: float
    existence: float
    activity: float
    observed: bool


class TrackedSource:
    def __init__(self, source_id: int, direction, n: int, cfg: TrackerConfig, rng: np.random.Generator,
                 existence: float = 0.5, activity: float = 0.5):
        y = np.asarray(direction, dtype=float)
        y = y / np.linalg.norm(y)
        pos = y + cfg.init_sigma * rng.standard_normal((n, 3))
        pos /= np.linalg.norm(pos, axis=1, keepdims=True)
        self.id = source_id
        self.positions = pos
        self.velocities = np.zeros((n, 3))
        self.weights = np.full(n, 1.0 / n)
        self.classes = assign_classes(n, cfg.class_proportions, rng)
        self.existence = float(existence)
        self.activity = float(activity)
        self.confirmed = False
        self.unobserved_s = 0.0
        self.observed_prob = 0.0
        self.updates = 0
        depth = max(cfg.delay_updates, 0) + 1
        self.history = np.repeat(pos[None], depth, axis=0)
        self.head = 0
        self.filled = 1
        self.estimate = y.copy()

    @property
    def n_particles(self) -> int:
        return len(self.weights)

    def push_history(self):
        depth = self.history.shape[0]
        self.head = (self.head + 1) % depth
        self.history[self.head] = self.positions
        self.filled = min(self.filled + 1, depth)

    def past_positions(self, steps: int) -> np.ndarray:
        depth = self.history.shape[0]
        return self.history[(self.head - steps) % depth]


def assign_classes(n: int, proportions, rng) -> np.ndarray:
    p = np.asarray(proportions, dtype=float)
    return rng.choice(len(p), size=n, p=p / p.sum()).astype(np.int8)


# -- 1. prediction ----------------------------------------------------------

def predict(source: TrackedSource, dt: float, rng: np.random.Generator, dynamics=DYNAMICS):
    """Excitation-damping step, then project back onto the sphere and its tangent plane."""
    if not dt > 0:
        raise ValueError(f"time step must be positive, got {dt}")
    # damping and excitation per class, then gathered per particle
    a_cls = np.exp(-dynamics[:, 0] * dt)
    b_cls = dynamics[:, 1] * np.sqrt(1 - a_cls * a_cls)
    a = a_cls[source.classes][:, None]
    b = b_cls[source.classes][:, None]
    v = a * source.velocities + b * rng.standard_normal(source.velocities.shape)
    x = source.positions + dt * v
    x /= np.sqrt(np.add.reduce(x * x, axis=1, keepdims=True))
    v -= np.add.reduce(v * x, axis=1, keepdims=True) * x
    source.positions = x
    source.velocities = v
    source.push_history()


# -- 2. instantaneous probabilities ----------------------------------------

def observation_likelihood(x, y, sigma: float = 0.05):
    """Isotropic normal kernel on the chordal distance, normalised per steradian.

    ``x`` is (..., 3) particle positions, ``y`` a (3,) or (Q, 3) set of observed
    directions; result has shape x.shape[:-1] (+ (Q,)).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        d2 = np.sum((x - y) ** 2, axis=-1)
    else:
        d2 = np.sum(x * x, axis=-1)[..., None] + np.sum(y * y, axis=-1) - 2 * x @ y.T
        d2 = np.maximum(d2, 0.0)
    return np.exp(-0.5 * d2 / sigma ** 2) / (2 * np.pi * sigma ** 2)


# -- 3. assignment ----------------------------------------------------------

@lru_cache(maxsize=64)
def _assignment_table(n_obs: int, n_tracked: int) -> np.ndarray:
    options = range(FALSE, n_tracked)
    table = np.array(list(product(options, repeat=n_obs)), dtype=np.int64).reshape(-1, n_obs)
    ok = np.ones(len(table), dtype=bool)
    for a in range(n_obs):
        for b in range(a + 1, n_obs):
            ok &= ~((table[:, a] >= 0) & (table[:, a] == table[:, b]))
    table = table[ok]
    table.setflags(write=False)
    return table


def _as_table(lik, n_obs):
    lik = np.asarray(lik, dtype=float)
    if lik.size == 0:
        return np.zeros((n_obs, 0))
    return lik.reshape(n_obs, -1)


def assignment_scores(confidences, tracked_likelihood, observability, p_new=0.005, p_false=0.05):
    """Per-observation factor p(O_q | f(q)) P(f(q)) for f(q) in (false, new, 0..M-1).

    Returns a (Q, M + 2) table; column ``f + 2`` holds the factor for value ``f``.
    """
    P = np.asarray(confidences, dtype=float)
    lik = _as_table(tracked_likelihood, len(P))
    obs = np.asarray(observability, dtype=float)
    scores = np.empty((len(P), lik.shape[1] + 2))
    scores[:, 0] = UNIFORM_SPHERE * (1 - P) * p_false
    scores[:, 1] = UNIFORM_SPHERE * P * p_new
    scores[:, 2:] = lik * P[:, None] * obs[None, :]
    return scores


def enumerate_assignments(confidences, tracked_likelihood, observability, p_new=0.005, p_false=0.05):
    """All admissible assignments f and their posteriors.

    ``tracked_likelihood[q, j]`` is the particle-weighted likelihood of
    observation q under source j; ``observability[j]`` the prior probability that
    source j exists and is active. Returns (table (K, Q) of f values, posteriors (K,)).
    """
    P = np.asarray(confidences, dtype=float)
    lik = _as_table(tracked_likelihood, len(P))
    n_tracked = lik.shape[1]
    if n_tracked > MAX_TRACKED:
        raise ValueError(f"{n_tracked} tracked sources exceeds the enumeration limit {MAX_TRACKED}")
    table = _assignment_table(len(P), n_tracked)
    scores = assignment_scores(P, lik, observability, p_new, p_false)
    cols = table + 2
    post = np.prod(scores[np.arange(len(P))[None, :], cols], axis=1)
    total = post.sum()
    if not total > 0 or not np.isfinite(total):
        raise FloatingPointError("assignment scores vanished")
    return table, post / total


def assignment_marginals(table, posteriors, n_tracked: int):
    """(P_qj (Q, M), P_q(H0) (Q,), P_q(H2) (Q,)) from enumerated assignments."""
    table = np.asarray(table)
    post = np.asarray(posteriors, dtype=float)
    Q = table.shape[1]
    pqj = np.zeros((Q, n_tracked))
    h0 = np.zeros(Q)
    h2 = np.zeros(Q)
    for q in range(Q):
        f = table[:, q]
        h0[q] = post[f == FALSE].sum()
        h2[q] = post[f == NEW].sum()
        if n_tracked:
            pqj[q] = np.bincount(f[f >= 0], weights=post[f >= 0], minlength=n_tracked)
    return pqj, h0, h2


# -- existence / activity ---------------------------------------------------

def update_existence(observed: float, existence_prev: float, p_not_observed: float = 0.2) -> float:
    """Recursive existence probability given the probability the source was observed now."""
    e = existence_prev
    carried = p_not_observed * e / (1 - (1 - p_not_observed) * e) if e < 1 else 1.0
    return float(np.clip(observed + (1 - observed) * carried, 0.0, 1.0))


def predict_activity(activity: float, p_stay: float = 0.95, p_wake: float = 0.05) -> float:
    return p_stay * activity + p_wake * (1 - activity)


def fuse_activity(predicted: float, instantaneous: float) -> float:
    """Bayes combination of the propagated activity with instantaneous evidence (equal priors)."""
    num = predicted * instantaneous
    den = num + (1 - predicted) * (1 - instantaneous)
    return float(num / den) if den > 0 else float(predicted)


def update_existence_activity(source: TrackedSource, observed: float, cfg: TrackerConfig) -> None:
    """Advance existence (unless confirmed) and activity using P_j = ``observed``."""
    if not source.confirmed:
        source.existence = update_existence(observed, source.existence, cfg.p_not_observed)
        if source.existence >= cfg.confirm_threshold:
            source.existence = 1.0
            source.confirmed = True
    predicted = predict_activity(source.activity, cfg.p_stay_active, cfg.p_become_active)
    inst = cfg.activity_base + cfg.activity_slope * observed
    source.activity = fuse_activity(predicted, inst)


def observability(source: TrackedSource, cfg: TrackerConfig) -> float:
    return source.existence * predict_activity(source.activity, cfg.p_stay_active, cfg.p_become_active)


# -- 4. weight update -------------------------------------------------------

def instantaneous_probability(likelihood, pqj, observed: float) -> np.ndarray:
    """p(x_i | O) for every particle: uniform when unobserved, likelihood mixture when observed."""
    lik = np.asarray(likelihood, dtype=float)
    n = lik.shape[0]
    mix = lik @ np.asarray(pqj, dtype=float)
    den = mix.sum()
    matched = mix / den if den > 0 else np.full(n, 1.0 / n)
    return (1 - observed) / n + observed * matched


def update_weights(weights, likelihood, pqj, observed: float) -> np.ndarray:
    """Posterior particle weights; falls back to uniform if every product underflows."""
    w = np.asarray(weights, dtype=float) * instantaneous_probability(likelihood, pqj, observed)
    s = w.sum()
    if not s > 0 or not np.isfinite(s):
        log.warning("particle weights underflowed; resetting to uniform")
        return np.full(len(w), 1.0 / len(w))
    return w / s


# -- 6. estimation ----------------------------------------------------------

def weighted_direction(weights, positions):
    m = np.asarray(weights) @ np.asarray(positions)
    n = np.linalg.norm(m)
    return m / n if n > 1e-6 else None


def estimate_position(source: TrackedSource, delay: int = 0):
    """Weighted mean direction, optionally of the positions ``delay`` updates ago."""
    steps = delay
    if steps > source.filled - 1:
        if steps > source.history.shape[0] - 1:
            log.warning("delay %d exceeds history %d; clamping", steps, source.history.shape[0] - 1)
        steps = source.filled - 1
    u = weighted_direction(source.weights, source.past_positions(steps) if steps else source.positions)
    return u


# -- 7. resampling ----------------------------------------------------------

def effective_sample_size(weights) -> float:
    w = np.asarray(weights, dtype=float)
    return 1.0 / np.sum(w * w)


def systematic_resample(weights, rng: np.random.Generator) -> np.ndarray:
    """Indices drawn with a single uniform offset and N evenly spaced pointers."""
    w = np.asarray(weights, dtype=float)
    n = len(w)
    pointers = (rng.random() + np.arange(n)) / n
    cdf = np.cumsum(w)
    cdf[-1] = 1.0
    return np.searchsorted(cdf, pointers, side="right").clip(max=n - 1)


def resample(source: TrackedSource, rng: np.random.Generator, cfg: TrackerConfig) -> bool:
    n = source.n_particles
    if effective_sample_size(source.weights) >= cfg.resample_ratio * n:
        return False
    idx = systematic_resample(source.weights, rng)
    source.positions = source.positions[idx]
    source.velocities = source.velocities[idx]
    source.history = source.history[:, idx]
    source.weights = np.full(n, 1.0 / n)
    source.classes = assign_classes(n, cfg.class_proportions, rng)
    return True


# -- the tracker ------------------------------------------------------------

class Tracker:
    """Ordered state machine: call :meth:`step` once per observation."""

    def __init__(self, config: TrackerConfig | None = None, dt: float = 4 * 512 / 48000):
        self.cfg = config or TrackerConfig()
        self.dt = dt
        self.rng = np.random.default_rng(self.cfg.seed)
        self.sources: list[TrackedSource] = []
        self.next_id = 0
        self.last = None

    def _create(self, direction, existence):
        s = TrackedSource(self.next_id, direction, self.cfg.n_particles, self.cfg, self.rng, existence=existence)
        self.next_id += 1
        self.sources.append(s)
        return s

    def step(self, obs: Observation):
        cfg = self.cfg
        dirs = obs.directions
        conf = obs.confidences
        for s in self.sources:
            predict(s, self.dt, self.rng)
        lik = [observation_likelihood(s.positions, dirs, cfg.sigma) for s in self.sources]
        if self.sources:
            tracked = np.column_stack([s.weights @ l for s, l in zip(self.sources, lik)])
        else:
            tracked = np.zeros((len(conf), 0))
        obs_prior = np.array([observability(s, cfg) for s in self.sources])
        table, post = enumerate_assignments(conf, tracked, obs_prior, cfg.p_new, cfg.p_false)
        pqj, h0, h2 = assignment_marginals(table, post, len(self.sources))
        self.last = dict(pqj=pqj, h0=h0, h2=h2)
        observed = np.clip(pqj.sum(axis=0), 0.0, 1.0)
        for j, s in enumerate(self.sources):
            s.weights = update_weights(s.weights, lik[j], pqj[:, j], observed[j])
            s.observed_prob = float(observed[j])
            update_existence_activity(s, observed[j], cfg)
            s.unobserved_s = 0.0 if observed[j] >= cfg.t_obs else s.unobserved_s + self.dt
            s.updates += 1
        self._add_remove(dirs, h2)
        for s in self.sources:
            u = weighted_direction(s.weights, s.positions)
            if u is not None:
                s.estimate = u
        records = self._records(obs.timestamp)
        for s in self.sources:
            resample(s, self.rng, cfg)
        return records

    def _add_remove(self, dirs, h2):
        cfg = self.cfg
        guards = [s.estimate for s in self.sources if s.confirmed]
        keep = []
        for s in self.sources:
            horizon = cfg.removal_horizon_s if s.confirmed else cfg.unconfirmed_horizon_s
            if s.unobserved_s > horizon:
                log.debug("removing source %d", s.id)
                continue
            keep.append(s)
        self.sources = keep
        for q in np.flatnonzero(h2 > cfg.new_source_threshold):
            if len(self.sources) >= cfg.max_sources:
                break
            y = dirs[q]
            if any(angle_between(g, y) < cfg.duplicate_guard_deg for g in guards):
                continue
            self._create(y, existence=float(h2[q]))

    def _records(self, timestamp):
        cfg = self.cfg
        out = []
        for s in self.sources:
            if not s.confirmed:
                continue
            steps = min(cfg.delay_updates, s.filled - 1)
            if cfg.delay_updates:
                u = estimate_position(s, cfg.delay_updates)
                if u is None:
                    u = s.estimate
                ts = timestamp - cfg.delay_updates * self.dt
            else:
                u, ts = s.estimate, timestamp
            if steps < cfg.delay_updates:
                continue
            az, el = to_azel(u)
            out.append(TrajectoryRecord(ts, s.id, az, el, s.existence, s.activity,
                                        s.observed_prob >= cfg.t_obs))
        return out
