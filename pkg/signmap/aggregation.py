"""Fusing placard observations into landmarks: wall check, single-linkage
grouping and per-group averaging."""
import collections
import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from signmap.geometry import wrap_angle
from signmap.labels import validate_label
from signmap.log import logger
from signmap.protocol import format_rows

PLACARD_RADIUS = 0.151
LANDMARK_COLUMNS = ("x", "y", "z", "theta_rad", "label", "support")

class AggregationParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    radius: float = Field(PLACARD_RADIUS, gt=0)
    max_wall_dist: float = Field(0.10, ge=0)


class PlacardLandmark:

    def __init__(self, position, theta, label="", support=1, member_ids=()):
        if support < 1:
            raise ValueError("landmark needs at least one observation")
        self.position = np.asarray(position, dtype=float)
        self.theta = wrap_angle(theta)
        self.label = label
        self.support = int(support)
        self.member_ids = tuple(member_ids)

    def __repr__(self):
        return "PlacardLandmark(position={}, theta={:.4f}, label={!r}, "\
            "support={})".format(np.round(self.position, 4).tolist(),
                                 self.theta, self.label, self.support)

    @property
    def x(self):
        return float(self.position[0])

    @property
    def y(self):
        return float(self.position[1])

    def as_dict(self):
        return {"x": float(self.position[0]), "y": float(self.position[1]),
                "z": float(self.position[2]), "theta_rad": float(self.theta),
                "label": self.label, "support": self.support}

    @classmethod
    def from_dict(cls, record):
        return cls([record["x"], record["y"], record.get("z", 0.0)],
                   record["theta_rad"], record.get("label", "") or "",
                   record.get("support", 1))


def _wall_tree(map2d):
    centers = map2d.occupied_centers()
    return cKDTree(centers) if len(centers) else None

def wall_filter(obs, map2d, max_wall_dist=0.10, tree=None):
    """True when an occupied map cell center lies within max_wall_dist of
    the observation's (x, y)"""
    tree = tree if tree is not None else _wall_tree(map2d)
    if tree is None:
        return False
    # cKDTree excludes the bound itself, widen it by one ulp
    bound = np.nextafter(max_wall_dist, np.inf)
    dist, _ = tree.query(obs.position[:2], distance_upper_bound=bound)
    return bool(np.isfinite(dist))

def cluster_observations(obs, radius=PLACARD_RADIUS):
    """Single-linkage groups (lists of input indices); pairs within radius
    join, chains merge transitively. Groups are ordered by first member."""
    if not obs:
        return []
    points = np.array([o.position for o in obs], dtype=float)
    pairs = cKDTree(points).query_pairs(radius, output_type="ndarray")
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])),
                       shape=(len(obs), len(obs)))
    _, component = connected_components(graph, directed=False)

    groups = collections.OrderedDict()
    for i, c in enumerate(component):
        groups.setdefault(c, []).append(i)
    return list(groups.values())

def circular_mean(thetas):
    return wrap_angle(math.atan2(float(np.sum(np.sin(thetas))),
                                 float(np.sum(np.cos(thetas)))))

def majority_label(labels):
    """Most common non-empty valid label; ties go to the lexicographically
    smallest"""
    counts = collections.Counter()
    for label in labels:
        canonical = validate_label(label) if label else None
        if canonical is not None:
            counts[canonical.text] += 1
    if not counts:
        return ""
    best = max(counts.values())
    return min(label for label, n in counts.items() if n == best)

def aggregate_group(group, member_ids=None):
    """Landmark of a non-empty list of observations"""
    if not group:
        raise ValueError("cannot aggregate an empty group")
    position = np.mean([o.position for o in group], axis=0)
    theta = circular_mean(np.array([o.theta for o in group]))
    label = majority_label(o.label for o in group)
    if member_ids is None:
        member_ids = [(o.keyframe_id, o.detection_index) for o in group]
    return PlacardLandmark(position, theta, label, len(group), member_ids)

def aggregate(observations, map2d, params=None):
    """(landmarks, discarded observations); off-wall observations are
    discarded before grouping"""
    params = params or AggregationParams()
    tree = _wall_tree(map2d) if map2d is not None else None

    kept, discarded = [], []
    for o in observations:
        on_wall = map2d is None or wall_filter(o, map2d, params.max_wall_dist,
                                               tree)
        o.on_wall = on_wall
        (kept if on_wall else discarded).append(o)

    landmarks = [aggregate_group([kept[i] for i in group])
                 for group in cluster_observations(kept, params.radius)]
    logger.info("Aggregated {} observations into {} landmarks, {} discarded"
                .format(len(observations), len(landmarks), len(discarded)))
    return landmarks, discarded

def landmarks_json(landmarks):
    return [lm.as_dict() for lm in landmarks]

def landmarks_csv(landmarks):
    return format_rows(LANDMARK_COLUMNS, landmarks_json(landmarks))
