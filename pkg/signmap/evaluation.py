"""Landmark assessment against a reference map: theta snapping to the four
wall directions, correspondence, displacement and heading error statistics,
count bookkeeping and label accuracy."""
import math
from typing import List, NamedTuple, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.stats import spearmanr

from signmap.geometry import wrap_angle
from signmap.log import logger
from signmap.protocol import format_rows

QUARTER = math.pi / 2
TIE_TOL = 1e-12
SCATTER_COLUMNS = ("trial", "landmark_id", "reference_id",
                   "distance_from_origin", "displacement_error",
                   "theta_error_deg")

class EvalParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    max_match_dist: float = Field(0.5, gt=0)
    cluster_window: float = Field(math.pi / 8, gt=0, le=math.pi / 4)
    origin: Tuple[float, float] = (0.0, 0.0)


class Correspondence(NamedTuple):
    """Index pairs (landmark, reference) plus the unpaired indices"""
    matches: List[Tuple[int, int]]
    duplicates: List[Tuple[int, int]]
    false_positives: List[int]
    missed: List[int]


class MetricRow(BaseModel):
    landmark_id: int
    reference_id: int
    label: str
    reference_label: str
    distance_from_origin: float
    displacement_error: float
    theta_error_deg: float


class EvalReport(BaseModel):
    model_config = ConfigDict(extra="forbid")

    observed_count: int = Field(ge=0)
    matched_count: int = Field(ge=0)
    missed_count: int = Field(ge=0)
    duplicate_count: int = Field(ge=0)
    false_positive_count: int = Field(ge=0)
    displacement_mean: float = 0.0
    displacement_std: float = 0.0
    theta_err_mean: float = 0.0
    theta_err_std: float = 0.0
    labels_correct: int = Field(0, ge=0)
    label_accuracy: float = Field(0.0, ge=0, le=1)
    distance_error_spearman: Optional[float] = None
    rows: List[MetricRow] = []

    @model_validator(mode="after")
    def _bookkeeping(self):
        if self.observed_count != self.matched_count + self.duplicate_count + \
                self.false_positive_count:
            raise ValueError("observed != matched + duplicates + false positives")
        return self


def _angle_dist(a, b):
    return abs(wrap_angle(a - b))

def dominant_direction(baseline, window=math.pi / 8):
    """Circular mean of the largest group of baseline angles lying within
    `window` of one of them"""
    baseline = np.asarray(baseline, dtype=float)
    if not len(baseline):
        raise ValueError("baseline must not be empty")
    diff = np.abs(wrap_angle(baseline[:, None] - baseline[None, :]))
    members = diff <= window + TIE_TOL
    best = int(np.argmax(members.sum(axis=1)))
    chosen = baseline[members[best]]
    return wrap_angle(math.atan2(np.sin(chosen).sum(), np.cos(chosen).sum()))

def snap_theta(thetas, baseline, window=math.pi / 8):
    """[(theta, theta_star)] with theta_star the nearest of the four
    directions theta0 + k pi/2; ties go to the lower k"""
    theta0 = dominant_direction(baseline, window)
    lattice = [wrap_angle(theta0 + k * QUARTER) for k in range(4)]

    snapped = []
    for theta in thetas:
        dists = [_angle_dist(theta, d) for d in lattice]
        nearest = min(dists)
        k = next(i for i, d in enumerate(dists) if d <= nearest + TIE_TOL)
        snapped.append((theta, lattice[k]))
    return snapped

def _positions(items):
    return np.array([[it.x, it.y] for it in items], dtype=float).reshape(-1, 2)

def _labels_agree(landmark, reference):
    return bool(landmark.label) and landmark.label == reference.label

def correspond(landmarks, reference, max_match_dist=0.5):
    """Each landmark picks a reference within max_match_dist, preferring an
    equal label, then the nearest. Of the landmarks picking one reference the
    closest is its match and the rest are duplicates."""
    lm_xy, ref_xy = _positions(landmarks), _positions(reference)
    choice = {}
    false_positives = []
    for i, lm in enumerate(landmarks):
        dist = np.linalg.norm(ref_xy - lm_xy[i], axis=1) if len(ref_xy) \
                else np.zeros(0)
        near = [j for j in np.argsort(dist, kind="stable")
                if dist[j] <= max_match_dist]
        if not near:
            false_positives.append(i)
            continue
        agreeing = [j for j in near if _labels_agree(lm, reference[j])]
        j = int((agreeing or near)[0])
        choice.setdefault(j, []).append((float(dist[j]), i))

    matches, duplicates = [], []
    for j in sorted(choice):
        claims = sorted(choice[j])
        matches.append((claims[0][1], j))
        duplicates.extend((i, j) for _, i in claims[1:])
    missed = [j for j in range(len(reference)) if j not in choice]
    return Correspondence(matches, sorted(duplicates), false_positives, missed)

def correspondence_from_pairs(pairs, n_landmarks, n_reference):
    """Correspondence from hand-made (landmark_id, reference_id) pairs; the
    first landmark listed for a reference is its match"""
    seen_landmarks, matched = set(), {}
    duplicates = []
    for i, j in pairs:
        if not 0 <= i < n_landmarks or not 0 <= j < n_reference:
            raise ValueError("correspondence ({}, {}) out of range".format(i, j))
        if i in seen_landmarks:
            raise ValueError("landmark {} listed twice".format(i))
        seen_landmarks.add(i)
        if j in matched:
            duplicates.append((i, j))
        else:
            matched[j] = i
    return Correspondence(
        sorted((i, j) for j, i in matched.items()), sorted(duplicates),
        [i for i in range(n_landmarks) if i not in seen_landmarks],
        [j for j in range(n_reference) if j not in matched])

def label_accuracy(landmarks, reference, correspondence=None,
                   max_match_dist=0.5):
    """Fraction of matched landmarks whose label equals the reference label"""
    if correspondence is None:
        correspondence = correspond(landmarks, reference, max_match_dist)
    if not correspondence.matches:
        return 0.0
    correct = sum(1 for i, j in correspondence.matches
                  if landmarks[i].label and
                  landmarks[i].label == reference[j].label)
    return correct / len(correspondence.matches)

def error_trend(rows):
    """Spearman correlation of displacement error against distance from the
    origin, None when undefined"""
    if len(rows) < 3:
        return None
    distance = [r.distance_from_origin for r in rows]
    error = [r.displacement_error for r in rows]
    if np.ptp(distance) == 0 or np.ptp(error) == 0:
        return None
    return float(spearmanr(distance, error).correlation)

def compute_metrics(landmarks, reference, correspondence, params=None):
    params = params or EvalParams()
    matches = correspondence.matches
    origin = np.asarray(params.origin, dtype=float)

    rows = []
    if matches:
        snapped = snap_theta([landmarks[i].theta for i, _ in matches],
                             [r.theta for r in reference],
                             params.cluster_window)
        for (i, j), (theta, star) in zip(matches, snapped):
            lm, ref = landmarks[i], reference[j]
            rows.append(MetricRow(
                landmark_id=i, reference_id=j, label=lm.label,
                reference_label=ref.label,
                distance_from_origin=float(np.hypot(ref.x - origin[0],
                                                    ref.y - origin[1])),
                displacement_error=float(np.hypot(lm.x - ref.x, lm.y - ref.y)),
                theta_error_deg=math.degrees(_angle_dist(theta, star))))

    displacement = np.array([r.displacement_error for r in rows])
    theta_err = np.array([r.theta_error_deg for r in rows])
    accuracy = label_accuracy(landmarks, reference, correspondence)

    report = EvalReport(
        observed_count=len(landmarks),
        matched_count=len(matches),
        missed_count=len(correspondence.missed),
        duplicate_count=len(correspondence.duplicates),
        false_positive_count=len(correspondence.false_positives),
        displacement_mean=float(displacement.mean()) if len(rows) else 0.0,
        displacement_std=float(displacement.std()) if len(rows) else 0.0,
        theta_err_mean=float(theta_err.mean()) if len(rows) else 0.0,
        theta_err_std=float(theta_err.std()) if len(rows) else 0.0,
        labels_correct=int(round(accuracy * len(matches))),
        label_accuracy=accuracy,
        distance_error_spearman=error_trend(rows),
        rows=rows)
    logger.info("Evaluated {} landmarks: {} matched, {} missed, {} duplicates, "
                "{} false positives".format(report.observed_count,
                    report.matched_count, report.missed_count,
                    report.duplicate_count, report.false_positive_count))
    return report

def evaluate(landmarks, reference, params=None, pairs=None):
    params = params or EvalParams()
    if pairs is not None:
        corr = correspondence_from_pairs(pairs, len(landmarks), len(reference))
    else:
        corr = correspond(landmarks, reference, params.max_match_dist)
    return compute_metrics(landmarks, reference, corr, params)


TABLE_ROWS = (
    ("Observed", "observed_count", "{:d}"),
    ("Missed", "missed_count", "{:d}"),
    ("Duplicates", "duplicate_count", "{:d}"),
    ("False positives", "false_positive_count", "{:d}"),
    ("Displacement mean (m)", "displacement_mean", "{:.3f}"),
    ("Displacement std (m)", "displacement_std", "{:.3f}"),
    ("Theta error mean (deg)", "theta_err_mean", "{:.2f}"),
    ("Theta error std (deg)", "theta_err_std", "{:.2f}"),
    ("Labels correct", "labels_correct", "{:d}"),
)

def format_table(reports):
    """Text table with one column per (name, report) pair"""
    names = [name for name, _ in reports]
    cells = [[fmt.format(getattr(r, field)) for _, r in reports]
             for _, field, fmt in TABLE_ROWS]
    cells.append(["{}/{} ({:.0%})".format(r.labels_correct, r.matched_count,
                                          r.label_accuracy)
                  for _, r in reports])
    titles = [title for title, _, _ in TABLE_ROWS] + ["Label accuracy"]

    first = max(len(t) for t in titles)
    widths = [max([len(n)] + [len(row[c]) for row in cells])
              for c, n in enumerate(names)]
    lines = ["  ".join([" " * first] + [n.rjust(w) for n, w in
                                         zip(names, widths)])]
    for title, row in zip(titles, cells):
        lines.append("  ".join([title.ljust(first)] +
                               [v.rjust(w) for v, w in zip(row, widths)]))
    return "\n".join(lines) + "\n"

def scatter_csv(reports):
    """(distance, error) rows of every (name, report) pair"""
    return format_rows(SCATTER_COLUMNS, [dict(row.model_dump(), trial=name)
                                         for name, r in reports
                                         for row in r.rows])
