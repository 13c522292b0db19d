"""From a detection in a keyframe to a localized, labeled placard
observation: plane fit, pose, rectification, threshold sweep, transcription
and validation."""
import math
from typing import Literal

import cv2
import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from signmap.backends import MOCK, ReadContext
from signmap.geometry import EmptyCloud, backproject, wrap_angle
from signmap.labels import line_proposals, vote
from signmap.log import logger
from signmap.protocol import Detection

SWEEP_THRESHOLDS = tuple(range(5, 251, 5))
WHITE = 255
BLACK = 0
# RANSAC hypotheses scored per pass over the cloud
HYPOTHESIS_BLOCK = 32

class DegenerateCloud(Exception):
    pass

class NoConsensus(Exception):
    pass

class GrazingAngle(Exception):
    pass


class RansacParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    inlier_tol: float = Field(0.01, gt=0)
    iterations: int = Field(200, gt=0)
    min_inlier_fraction: float = Field(0.5, gt=0, le=1)
    seed: int = Field(0, ge=0)


class PlacardParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    confidence_threshold: float = Field(0.9, ge=0, le=1)
    ransac: RansacParams = RansacParams()
    # fraction of the bbox width and height trimmed before backprojection
    bbox_shrink: float = Field(0.0, ge=0, lt=1)
    max_incidence_deg: float = Field(85.0, gt=0, lt=90)
    max_vertical_normal: float = Field(0.95, gt=0, le=1)
    line_threshold: int = Field(128, ge=0, le=255)
    backend: Literal["mock", "null", "external-file"] = MOCK


class PlanarPatch:
    """Plane through a placard in camera frame; the normal faces the camera"""

    def __init__(self, normal, centroid, inlier_indices, rms_residual):
        self.normal = np.asarray(normal, dtype=float)
        self.centroid = np.asarray(centroid, dtype=float)
        self.inlier_indices = np.asarray(inlier_indices, dtype=int)
        self.rms_residual = float(rms_residual)

    def __repr__(self):
        return "PlanarPatch(normal={}, centroid={}, inliers={}, rms={:.5f})"\
            .format(np.round(self.normal, 6).tolist(),
                    np.round(self.centroid, 6).tolist(),
                    len(self.inlier_indices), self.rms_residual)


class PlacardObservation:
    """One sighting of a placard in map frame"""

    def __init__(self, position, theta, label="", keyframe_id=None,
                 detection_index=None, on_wall=None):
        self.position = np.asarray(position, dtype=float)
        self.theta = wrap_angle(theta)
        self.label = label
        self.keyframe_id = keyframe_id
        self.detection_index = detection_index
        self.on_wall = on_wall

    def __repr__(self):
        return "PlacardObservation(kf={}, det={}, position={}, theta={:.4f}, "\
            "label={!r})".format(self.keyframe_id, self.detection_index,
                                 np.round(self.position, 4).tolist(),
                                 self.theta, self.label)

    def as_dict(self):
        x, y, z = (float(v) for v in self.position)
        return {"keyframe_id": self.keyframe_id,
                "detection_index": self.detection_index,
                "x": x, "y": y, "z": z, "theta_rad": float(self.theta),
                "label": self.label, "on_wall": self.on_wall}

    @classmethod
    def from_dict(cls, record):
        return cls([record["x"], record["y"], record["z"]],
                   record["theta_rad"], record.get("label", ""),
                   record.get("keyframe_id"), record.get("detection_index"),
                   record.get("on_wall"))


def filter_detections(dets, threshold):
    """Detections with confidence >= threshold, in order"""
    return [d for d in dets if d.confidence >= threshold]

def fit_plane(cloud, inlier_tol=0.01, iterations=200, min_inlier_fraction=0.5,
              seed=0):
    """RANSAC plane with a least-squares refit on the winning inliers"""
    points = np.asarray(cloud.points, dtype=float)
    n = len(points)
    if n < 3:
        raise DegenerateCloud("need 3 points, got {}".format(n))
    spread = np.linalg.svd(points - points.mean(axis=0), compute_uv=False)
    if spread[1] <= 1e-9 * max(spread[0], 1e-12):
        raise DegenerateCloud("points are collinear")

    rng = np.random.default_rng(seed)
    samples = np.array([rng.choice(n, 3, replace=False)
                        for _ in range(iterations)])
    p0 = points[samples[:, 0]]
    normals = np.cross(points[samples[:, 1]] - p0, points[samples[:, 2]] - p0)
    norms = np.linalg.norm(normals, axis=1)
    valid = norms > 1e-12
    normals[valid] /= norms[valid, None]

    offsets = np.einsum("ij,ij->i", normals, p0)
    counts = np.full(iterations, -1)
    for start in range(0, iterations, HYPOTHESIS_BLOCK):
        block = slice(start, start + HYPOTHESIS_BLOCK)
        dist = np.abs(points @ normals[block].T - offsets[block])
        counts[block] = (dist <= inlier_tol).sum(axis=0)
    counts[~valid] = -1
    best = int(np.argmax(counts))
    inliers = np.flatnonzero(np.abs(points @ normals[best] - offsets[best])
                             <= inlier_tol) if valid[best] \
            else np.array([], dtype=int)
    if len(inliers) < max(3, min_inlier_fraction * n):
        raise NoConsensus("best plane explains {} of {} points".format(
            len(inliers), n))

    centroid = points[inliers].mean(axis=0)
    centered = points[inliers] - centroid
    _, vectors = np.linalg.eigh(centered.T @ centered / len(inliers))
    normal = vectors[:, 0]
    if normal @ centroid > 0:
        normal = -normal
    rms = float(np.sqrt(np.mean((centered @ normal) ** 2)))
    return PlanarPatch(normal, centroid, inliers, rms)

def placard_pose(patch, cam_pose):
    """(map position, theta) where theta is the heading of the outward
    normal in the map x-y plane"""
    position = cam_pose.apply(patch.centroid)
    normal = cam_pose.rotation_matrix @ patch.normal
    return position, wrap_angle(math.atan2(normal[1], normal[0]))

def incidence_angle(patch):
    """Angle between the line of sight to the centroid and the normal"""
    sight = patch.centroid / np.linalg.norm(patch.centroid)
    return math.acos(float(np.clip(-patch.normal @ sight, -1.0, 1.0)))

def _virtual_view(patch):
    """Rotation (columns are axes) and centre of a camera facing the plane
    head-on at the centroid distance"""
    z_axis = -patch.normal
    down = np.array([0.0, 1.0, 0.0])
    y_axis = down - (down @ z_axis) * z_axis
    if np.linalg.norm(y_axis) < 1e-6:
        y_axis = np.array([1.0, 0.0, 0.0]) - z_axis[0] * z_axis
    y_axis /= np.linalg.norm(y_axis)
    x_axis = np.cross(y_axis, z_axis)
    center = patch.centroid + np.linalg.norm(patch.centroid) * patch.normal
    return np.stack([x_axis, y_axis, z_axis], axis=1), center

def rectify_roi(color_patch, patch, k, origin=(0, 0), max_incidence_deg=85.0):
    """Warp a grayscale roi (top-left pixel at `origin` of the image described
    by k) to a fronto-parallel view of the placard plane.

    The output keeps the roi's longer edge; resampling is bilinear.
    """
    image = np.asarray(color_patch)
    h, w = image.shape[:2]
    if h < 2 or w < 2:
        raise ValueError("roi too small to rectify: {}x{}".format(w, h))
    if math.degrees(incidence_angle(patch)) > max_incidence_deg:
        raise GrazingAngle("incidence {:.1f} deg".format(
            math.degrees(incidence_angle(patch))))

    corners = np.array([[0, 0], [w - 1, 0], [w - 1, h - 1], [0, h - 1]],
                       dtype=float)
    rays = np.column_stack([(corners[:, 0] + origin[0] - k.cx) / k.fx,
                            (corners[:, 1] + origin[1] - k.cy) / k.fy,
                            np.ones(4)])
    facing = rays @ patch.normal
    if np.any(facing >= -1e-9):
        raise GrazingAngle("roi corner ray misses the placard plane")
    points = rays * ((patch.normal @ patch.centroid) / facing)[:, None]

    rotation, center = _virtual_view(patch)
    local = (points - center) @ rotation
    dst = k.fx * local[:, :2] / local[:, 2:3]

    dst -= dst.min(axis=0)
    extent = dst.max(axis=0)
    scale = (max(w, h) - 1) / max(float(extent.max()), 1e-9)
    dst *= scale
    size = (int(round(extent[0] * scale)) + 1, int(round(extent[1] * scale)) + 1)

    homography = cv2.getPerspectiveTransform(corners.astype(np.float32),
                                             dst.astype(np.float32))
    return cv2.warpPerspective(image, homography, size, flags=cv2.INTER_LINEAR,
                               borderMode=cv2.BORDER_REPLICATE)

def segment_lines(rectified, segmenter, context=None):
    return list(segmenter.segment(rectified, context))

def binarize_sweep(line):
    """(threshold, binary image) for thresholds 5, 10, ..., 250; pixels at or
    above the threshold turn white"""
    line = np.asarray(line)
    return [(t, np.where(line >= t, WHITE, BLACK).astype(np.uint8))
            for t in SWEEP_THRESHOLDS]

def transcribe(binary, transcriber, context=None):
    return transcriber.transcribe(binary, context) or ""

def shrink_bbox(bbox, factor):
    u0, v0, u1, v1 = bbox
    du = int(math.floor((u1 - u0) * factor / 2))
    dv = int(math.floor((v1 - v0) * factor / 2))
    if u1 - u0 - 2 * du < 1 or v1 - v0 - 2 * dv < 1:
        return bbox
    return (u0 + du, v0 + dv, u1 - du, v1 - dv)

def read_label(color, det, patch, k, segmenter, transcriber, context,
               params=None):
    """Vote over every (threshold, line run) transcription of the roi"""
    params = params or PlacardParams()
    scale = color.shape[1] / k.width
    kc = k.scaled(scale)
    u0, v0, u1, v1 = (int(round(c * scale)) for c in det.bbox)
    u1, v1 = min(u1, color.shape[1]), min(v1, color.shape[0])

    rectified = rectify_roi(color[v0:v1, u0:u1], patch, kc, (u0, v0),
                            params.max_incidence_deg)
    boxes = segment_lines(rectified, segmenter, context)

    sweeps = []
    for i, (x0, y0, x1, y1) in enumerate(boxes):
        sweeps.append(binarize_sweep(rectified[y0:y1, x0:x1]))

    proposals = []
    for j, threshold in enumerate(SWEEP_THRESHOLDS):
        strings = [transcribe(sweep[j][1], transcriber, context._replace(
                       line_index=i, threshold=threshold))
                   for i, sweep in enumerate(sweeps)]
        proposals.extend((threshold, text) for text in line_proposals(strings))
    return vote(proposals)

def read_placard(kf, det, depth, color, k, global_pose, segmenter, transcriber,
                 params=None, detection_index=None):
    """Observation for one filtered detection, or None when its geometry is
    unusable; a label that cannot be validated is left blank"""
    params = params or PlacardParams()
    context = ReadContext(kf.id, detection_index)

    try:
        cloud = backproject(depth, k, shrink_bbox(det.bbox, params.bbox_shrink))
        patch = fit_plane(cloud, params.ransac.inlier_tol,
                          params.ransac.iterations,
                          params.ransac.min_inlier_fraction,
                          params.ransac.seed)
    except (EmptyCloud, DegenerateCloud, NoConsensus) as e:
        logger.debug("keyframe {} detection {} dropped: {}: {}".format(
            kf.id, detection_index, type(e).__name__, e))
        return None

    position, theta = placard_pose(patch, global_pose)
    normal = global_pose.rotation_matrix @ patch.normal
    if abs(normal[2]) > params.max_vertical_normal:
        logger.debug("keyframe {} detection {} dropped: horizontal plane"
                     .format(kf.id, detection_index))
        return None

    label = ""
    if color is not None:
        try:
            label = read_label(color, det, patch, k, segmenter, transcriber,
                               context, params)
        except (GrazingAngle, ValueError) as e:
            logger.debug("keyframe {} detection {} unreadable: {}".format(
                kf.id, detection_index, e))

    return PlacardObservation(position, theta, label, kf.id, detection_index)
