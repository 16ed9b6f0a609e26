"""Scoring tracked trajectories against ground truth."""
from __future__ import annotations

from collections import defaultdict
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .geometry import from_azel

DETECTION_GATE_DEG = 10.0
MIN_RUN = 10  # updates an identity must persist to count as a swap
FALSE_TRACK_MATCH_RATIO = 0.5


@dataclass
class SourceScore:
    source_id: int
    active_updates: int = 0
    matched_updates: int = 0
    azimuth_rms: float = float("nan")
    elevation_rms: float = float("nan")
    azimuth_mean_abs: float = float("nan")
    track_ids: list = field(default_factory=list)
    swaps: int = 0

    @property
    def detection_rate(self) -> float:
        return self.matched_updates / self.active_updates if self.active_updates else float("nan")


@dataclass
class EvaluationReport:
    status: str
    sources: list = field(default_factory=list)
    false_tracks: int = 0
    track_count: int = 0
    id_swaps: int = 0
    detection_rate: float = float("nan")
    azimuth_rms: float = float("nan")
    elevation_rms: float = float("nan")

    def to_json(self) -> dict:
        d = asdict(self)
        for s, src in zip(d["sources"], self.sources):
            s["detection_rate"] = src.detection_rate
        return d

    def tracked_sources(self, min_detection: float) -> int:
        return sum(1 for s in self.sources if s.detection_rate >= min_detection)


def _wrap(deg):
    return (np.asarray(deg) + 180.0) % 360.0 - 180.0


def _angle(u, v):
    return np.degrees(np.arccos(np.clip(np.sum(u * v, axis=-1), -1.0, 1.0)))


def _count_swaps(ids, min_run=MIN_RUN):
    runs = []
    for i in ids:
        if runs and runs[-1][0] == i:
            runs[-1][1] += 1
        else:
            runs.append([i, 1])
    stable = [r[0] for r in runs if r[1] >= min_run]
    merged = [x for k, x in enumerate(stable) if k == 0 or stable[k - 1] != x]
    return max(len(merged) - 1, 0)


def evaluate(records, gt_rows, gate_deg: float = DETECTION_GATE_DEG, start: float | None = None,
             end: float | None = None, min_run: int = MIN_RUN) -> EvaluationReport:
    """Match tracks to ground truth per update and summarise.

    A source keeps the track it was matched to on its previous matched update
    as long as that track stays inside the gate; everything else is paired by
    a gated Hungarian assignment.

    ``records`` are TrajectoryRecord-like (timestamp, source_id, azimuth,
    elevation); ``gt_rows`` are (timestamp, source_id, azimuth, elevation, active).
    Ground-truth updates are scored inside [start, end], which defaults to the
    span shared by both inputs.
    """
    if not gt_rows:
        return EvaluationReport(status="empty")
    gt = defaultdict(list)
    for ts, sid, az, el, active in gt_rows:
        gt[round(ts, 4)].append((sid, az, el, bool(active)))
    gt_times = np.array(sorted(gt))
    ids = sorted({r[1] for r in gt_rows})
    scores = {sid: SourceScore(sid) for sid in ids}
    if not records:
        for ts in gt_times:
            if (start is None or ts >= start) and (end is None or ts <= end):
                for sid, _, _, active in gt[ts]:
                    scores[sid].active_updates += active
        return EvaluationReport(status="empty", sources=list(scores.values()))

    by_time = defaultdict(list)
    period = np.median(np.diff(gt_times)) if len(gt_times) > 1 else 1.0
    for r in records:
        k = int(np.argmin(np.abs(gt_times - r.timestamp)))
        if abs(gt_times[k] - r.timestamp) <= period / 2:
            by_time[gt_times[k]].append(r)
    rec_times = sorted(by_time)
    lo = rec_times[0] if start is None else start
    hi = rec_times[-1] if end is None else end

    az_err = defaultdict(list)
    el_err = defaultdict(list)
    id_seq = defaultdict(list)
    track_total = defaultdict(int)
    track_matched = defaultdict(int)
    last_track = {}
    for r in records:
        track_total[r.source_id] += 1

    for ts in gt_times:
        if ts < lo or ts > hi:
            continue
        truth = [(sid, az, el) for sid, az, el, active in gt[ts] if active]
        for sid, _, _ in truth:
            scores[sid].active_updates += 1
        tracks = by_time.get(ts, [])
        if not truth or not tracks:
            continue
        tu = from_azel([t[1] for t in truth], [t[2] for t in truth])
        ru = from_azel([r.azimuth for r in tracks], [r.elevation for r in tracks])
        cost = _angle(tu[:, None, :], ru[None, :, :])
        # keep last update's correspondence while it stays inside the gate
        pairs = []
        for a, (sid, _, _) in enumerate(truth):
            prev = last_track.get(sid)
            for b, rec in enumerate(tracks):
                if rec.source_id == prev and cost[a, b] <= gate_deg:
                    pairs.append((a, b))
        rest_a = [a for a in range(len(truth)) if a not in {p[0] for p in pairs}]
        rest_b = [b for b in range(len(tracks)) if b not in {p[1] for p in pairs}]
        if rest_a and rest_b:
            rows, cols = linear_sum_assignment(cost[np.ix_(rest_a, rest_b)])
            pairs += [(rest_a[r], rest_b[c]) for r, c in zip(rows, cols)]
        for a, b in pairs:
            if cost[a, b] > gate_deg:
                continue
            sid = truth[a][0]
            rec = tracks[b]
            s = scores[sid]
            s.matched_updates += 1
            az_err[sid].append(_wrap(rec.azimuth - truth[a][1]))
            el_err[sid].append(rec.elevation - truth[a][2])
            id_seq[sid].append(rec.source_id)
            track_matched[rec.source_id] += 1
            last_track[sid] = rec.source_id

    for sid, s in scores.items():
        if az_err[sid]:
            a = np.array(az_err[sid])
            e = np.array(el_err[sid])
            s.azimuth_rms = float(np.sqrt(np.mean(a ** 2)))
            s.elevation_rms = float(np.sqrt(np.mean(e ** 2)))
            s.azimuth_mean_abs = float(np.mean(np.abs(a)))
        s.track_ids = sorted(set(id_seq[sid]))
        s.swaps = _count_swaps(id_seq[sid], min_run)

    false_tracks = sum(1 for tid, n in track_total.items()
                       if track_matched[tid] < FALSE_TRACK_MATCH_RATIO * n)
    all_az = np.concatenate([np.array(v) for v in az_err.values()]) if az_err else np.array([])
    all_el = np.concatenate([np.array(v) for v in el_err.values()]) if el_err else np.array([])
    active = sum(s.active_updates for s in scores.values())
    matched = sum(s.matched_updates for s in scores.values())
    return EvaluationReport(
        status="ok",
        sources=list(scores.values()),
        false_tracks=false_tracks,
        track_count=len(track_total),
        id_swaps=sum(s.swaps for s in scores.values()),
        detection_rate=matched / active if active else float("nan"),
        azimuth_rms=float(np.sqrt(np.mean(all_az ** 2))) if all_az.size else float("nan"),
        elevation_rms=float(np.sqrt(np.mean(all_el ** 2))) if all_el.size else float("nan"),
    )
