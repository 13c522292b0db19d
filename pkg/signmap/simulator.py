"""Synthetic RGB-D runs through a WorldSpec: raycast depth, shaded grayscale
frames with code-marker placards, mock detections, drifting submap poses and
injected tracking losses."""
import math

import numpy as np
from scipy.spatial.transform import Rotation

from signmap import codematrix
from signmap.fs import Dataset, GroundTruth, MemoryFrames
from signmap.geometry import (BehindCamera, Pose3, camera_pose, compose,
                              inverse, project, project_points)
from signmap.log import logger
from signmap.protocol import Detection
from signmap.registry import Keyframe, MapRegistry
from signmap.world import check_spec, placard_geometry

NONE, FLOOR, CEILING, WALL, PLACARD = range(5)
SHADE = np.array([0, 120, 250, 240, 220], dtype=np.uint8)
PLACARD_BLACK = 30
PLACARD_WHITE = 220
# placards stand this far proud of their wall when deciding visibility
PLACARD_EPS = 0.02
MAX_INCIDENCE = math.radians(85.0)

class PlacardFace:
    """Renderable placard surface, possibly tilted about its center"""

    def __init__(self, center, normal, right, up, half_w, half_h, cells,
                 index):
        self.center, self.normal = center, normal
        self.right, self.up = right, up
        self.half_w, self.half_h = half_w, half_h
        self.cells = cells
        self.cell = 2 * half_w / cells.shape[1]
        self.index = index

    @classmethod
    def from_geometry(cls, g):
        return cls(g.center, g.normal, g.right, g.up, g.half_w, g.half_h,
                   g.cells, g.index)

    def tilted(self, rotvec):
        r = Rotation.from_rotvec(rotvec).as_matrix()
        return PlacardFace(self.center, r @ self.normal, r @ self.right,
                           r @ self.up, self.half_w, self.half_h, self.cells,
                           self.index)

    def with_cells(self, cells):
        return PlacardFace(self.center, self.normal, self.right, self.up,
                           self.half_w, self.half_h, cells, self.index)

    def texture(self, points):
        """Gray value of face points"""
        rel = points - self.center
        col = np.floor((rel @ self.right + self.half_w) / self.cell)
        row = np.floor((self.half_h - rel @ self.up) / self.cell)
        col = np.clip(col, 0, self.cells.shape[1] - 1).astype(int)
        row = np.clip(row, 0, self.cells.shape[0] - 1).astype(int)
        return np.where(self.cells[row, col], PLACARD_BLACK, PLACARD_WHITE)


class Scene:
    """Raycastable form of a WorldSpec"""

    def __init__(self, spec):
        self.spec = check_spec(spec)
        self.geometry = placard_geometry(spec)
        self.faces = [PlacardFace.from_geometry(g) for g in self.geometry]
        self.corrupted = [codematrix.placard_cells(g.label, g.spec.pattern,
                                                   True)
                          for g in self.geometry]
        self.floor_z = spec.floor_z
        self.ceiling_z = spec.ceiling
        self.extent = spec.extent()
        self.walls = [(np.array([w.x0, w.y0, 0.0]), w.direction, w.left,
                       w.length, w.height) for w in spec.walls]

    def raycast(self, origin, dirs, faces=None):
        """(t, kind, index) of the nearest hit along origin + t * dirs;
        t is inf and kind NONE where nothing is hit"""
        origin = np.asarray(origin, dtype=float)
        dirs = np.asarray(dirs, dtype=float).reshape(-1, 3)
        t = np.full(len(dirs), np.inf)
        kind = np.full(len(dirs), NONE, dtype=np.int8)
        index = np.full(len(dirs), -1, dtype=np.int32)

        def take(ok, tt, k, i):
            t[ok], kind[ok], index[ok] = tt[ok], k, i

        with np.errstate(divide="ignore", invalid="ignore"):
            for i, (p0, d, n, length, height) in enumerate(self.walls):
                denom = dirs @ n
                tt = ((p0 - origin) @ n) / denom
                hit = origin + tt[:, None] * dirs
                s = (hit - p0) @ d
                z = hit[:, 2] - self.floor_z
                take((np.abs(denom) > 1e-12) & (tt > 1e-9) & (s >= 0) &
                     (s <= length) & (z >= 0) & (z <= height) & (tt < t),
                     tt, WALL, i)

            x0, y0, x1, y1 = self.extent
            for plane, k in ((self.floor_z, FLOOR), (self.ceiling_z, CEILING)):
                tt = (plane - origin[2]) / dirs[:, 2]
                hit = origin + tt[:, None] * dirs
                take((np.abs(dirs[:, 2]) > 1e-12) & (tt > 1e-9) &
                     (hit[:, 0] >= x0) & (hit[:, 0] <= x1) &
                     (hit[:, 1] >= y0) & (hit[:, 1] <= y1) & (tt < t),
                     tt, k, -1)

            for face in faces or []:
                denom = dirs @ face.normal
                tt = ((face.center - origin) @ face.normal) / denom
                rel = origin + tt[:, None] * dirs - face.center
                take((denom < -1e-12) & (tt > 1e-9) &
                     (np.abs(rel @ face.right) <= face.half_w) &
                     (np.abs(rel @ face.up) <= face.half_h) &
                     (tt - PLACARD_EPS < t), tt, PLACARD, face.index)
        return t, kind, index

    def shade(self, origin, dirs, t, kind, index, faces):
        """Gray level of every ray's hit"""
        gray = SHADE[kind].copy()
        by_index = {f.index: f for f in faces}
        for i in np.unique(index[kind == PLACARD]):
            rays = (kind == PLACARD) & (index == i)
            points = origin + t[rays, None] * dirs[rays]
            gray[rays] = by_index[int(i)].texture(points)
        return gray


def _world_rays(pose, k, roi=None):
    rays, _, _ = k.pixel_rays(roi)
    return rays.reshape(-1, 3) @ pose.rotation_matrix.T

def raycast_meters(scene, pose, k, faces=None):
    """z-depth in metres (nan for no return) plus the hit kinds, both
    (height, width); z-depth equals the ray parameter as rays have z = 1"""
    t, kind, _ = scene.raycast(pose.translation, _world_rays(pose, k), faces)
    depth = np.where(np.isfinite(t), t, np.nan)
    return depth.reshape(k.height, k.width), kind.reshape(k.height, k.width)

def quantize_depth(depth, k, rng=None, sigma=0.0):
    """Raw uint16 depth; 0 outside [depth_min, depth_max] or without a hit"""
    depth = np.array(depth, dtype=float)
    if sigma > 0:
        depth = depth + rng.normal(0.0, sigma, depth.shape)
    valid = np.isfinite(depth) & (depth >= k.depth_min) & \
            (depth <= k.depth_max)
    raw = np.zeros(depth.shape, dtype=np.uint16)
    raw[valid] = np.clip(np.round(depth[valid] / k.depth_scale), 1, 65535)
    return raw

def raycast_depth(scene, pose, k, faces=None, rng=None, sigma=0.0):
    depth, _ = raycast_meters(scene, pose, k, faces)
    return quantize_depth(depth, k, rng, sigma)


def placard_visible(scene, face, geometry, pose, k):
    """Center in frame, seen from the front under 85 deg, within depth
    range and not hidden behind a wall"""
    if not geometry.spec.detectable:
        return False
    center = inverse(pose).apply(face.center)
    try:
        u, v = project(center, k)
    except BehindCamera:
        return False
    if not (0 <= u < k.width and 0 <= v < k.height):
        return False
    if not k.depth_min <= center[2] <= k.depth_max:
        return False
    sight = pose.translation - face.center
    cos = face.normal @ sight / np.linalg.norm(sight)
    if cos <= math.cos(MAX_INCIDENCE):
        return False
    t, _, _ = scene.raycast(pose.translation,
                            (face.center - pose.translation)[None, :])
    return not t[0] < 1 - 1e-6

def render_detections(scene, pose, k, noise, rng, faces=None):
    """[(Detection, placard index or None)] for the visible placards plus
    any injected false positive"""
    faces = scene.faces if faces is None else faces
    to_camera = inverse(pose)
    found = []
    for face, g in zip(faces, scene.geometry):
        if not placard_visible(scene, face, g, pose, k):
            continue
        corners = to_camera.apply(g.corners())
        if np.any(corners[:, 2] <= 0):
            continue
        uv = project_points(corners, k)
        bbox = np.array([np.floor(uv[:, 0].min()), np.floor(uv[:, 1].min()),
                         np.ceil(uv[:, 0].max()) + 1,
                         np.ceil(uv[:, 1].max()) + 1])
        if noise.detection_jitter_px:
            j = noise.detection_jitter_px
            bbox = bbox + rng.integers(-j, j + 1, size=4)
        u0, v0 = max(int(bbox[0]), 0), max(int(bbox[1]), 0)
        u1, v1 = min(int(bbox[2]), k.width), min(int(bbox[3]), k.height)
        confidence = float(rng.uniform(noise.confidence_min,
                                       noise.confidence_max))
        if u1 - u0 < 2 or v1 - v0 < 2:
            continue
        found.append((Detection((u0, v0, u1, v1), confidence), g.index))

    if noise.false_positive_rate and rng.random() < noise.false_positive_rate:
        size = int(rng.integers(6, 13))
        u0 = int(rng.integers(0, k.width - size))
        v0 = int(rng.integers(0, k.height - size))
        found.append((Detection((u0, v0, u0 + size, v0 + size),
                                float(rng.uniform(0.9, 1.0))), None))
    return found

def render_color(scene, pose, k, kinds, detections, faces, scale):
    """Grayscale frame at `scale` times the depth resolution: shaded surface
    kinds everywhere, full-resolution texture inside every detection roi"""
    kc = k.scaled(scale)
    gray = np.kron(SHADE[kinds], np.ones((scale, scale), dtype=np.uint8))
    origin = pose.translation
    for det in detections:
        u0, v0, u1, v1 = (c * scale for c in det.bbox)
        dirs = _world_rays(pose, kc, (u0, v0, u1, v1))
        t, kind, index = scene.raycast(origin, dirs, faces)
        gray[v0:v1, u0:u1] = scene.shade(origin, dirs, t, kind, index, faces)\
                .reshape(v1 - v0, u1 - u0)
    return gray


class DriftWalk:
    """Planar random walk about a submap's origin position plus a vertical
    offset; identity until the first step"""

    def __init__(self, pivot):
        self.pivot = np.asarray(pivot, dtype=float)
        self.yaw = 0.0
        self.shift = np.zeros(3)

    def step(self, rng, noise):
        self.yaw += rng.normal(0.0, noise.drift_sigma_yaw) \
                if noise.drift_sigma_yaw else 0.0
        dxy = rng.normal(0.0, noise.drift_sigma_m, 2) \
                if noise.drift_sigma_m else np.zeros(2)
        dz = rng.normal(0.0, noise.drift_sigma_z) if noise.drift_sigma_z \
                else 0.0
        self.shift = self.shift + np.array([dxy[0], dxy[1], dz])

    def apply(self, pose):
        if self.yaw == 0.0 and not self.shift.any():
            return pose
        spin = Pose3.from_yaw(self.yaw)
        about = Pose3(None, self.pivot + self.shift - spin.apply(self.pivot))
        return compose(compose(about, spin), pose)


def _tilted_faces(scene, rng, noise):
    faces = []
    for face, spare in zip(scene.faces, scene.corrupted):
        if noise.normal_sigma_deg:
            a, b = rng.normal(0.0, math.radians(noise.normal_sigma_deg), 2)
            face = face.tilted(a * face.up + b * face.right)
        if noise.ocr_corruption_prob and \
                rng.random() < noise.ocr_corruption_prob:
            face = face.with_cells(spare)
        faces.append(face)
    return faces

def simulate_keyframe(scene, gt_pose, rng):
    """(raw depth, color, detections) of one ground-truth camera pose"""
    spec = scene.spec
    k, noise = spec.intrinsics, spec.noise
    faces = _tilted_faces(scene, rng, noise)
    near = [f for f in faces if np.linalg.norm(
        f.center[:2] - gt_pose.translation[:2]) <= k.depth_max + 1.0]

    depth, kinds = raycast_meters(scene, gt_pose, k, near)
    raw = quantize_depth(depth, k, rng, noise.depth_sigma)
    found = render_detections(scene, gt_pose, k, noise, rng, faces)
    detections = [d for d, _ in found]
    color = render_color(scene, gt_pose, k, kinds, detections, near,
                         spec.color_scale)
    return raw, color, detections

def simulate_run(spec, seed=0):
    """Dataset of a run through the world; a pure function of (spec, seed).

    Submap 0 lives in the world frame, later submaps in the ground-truth
    camera frame of their first keyframe. Each keyframe draws its noise from
    its own generator seeded with (seed, trajectory index).
    """
    scene = Scene(spec)
    lost, breaks = set(), {}
    for s in spec.loss_segments:
        lost.update(range(s.start, s.end))
        breaks[s.end] = s.start - 1

    registry = MapRegistry()
    frames = MemoryFrames()
    truth = {}
    map_id, frame, drift = 0, None, None
    z = spec.floor_z + spec.camera_height

    for i, wp in enumerate(spec.trajectory):
        if i in lost:
            continue
        gt = camera_pose(wp.x, wp.y, z, wp.yaw)
        rng = np.random.default_rng([seed, i])

        if drift is None or i in breaks:
            if drift is not None:
                map_id += 1
                frame = gt
            drift = DriftWalk(gt.translation)
        else:
            drift.step(rng, spec.noise)

        estimate = drift.apply(gt)
        local = estimate if frame is None else compose(inverse(frame), estimate)

        raw, color, detections = simulate_keyframe(scene, gt, rng)
        registry.add(Keyframe(i, map_id, local, detections))
        frames.depth_frames[i] = raw
        frames.color_frames[i] = color
        truth[i] = gt
        if i in breaks:
            registry.add_loss(breaks[i], i)

    logger.info("Simulated {} keyframes in {} submaps, {} placards".format(
        len(registry), map_id + 1, len(scene.geometry)))
    groundtruth = GroundTruth([g.as_dict() for g in scene.geometry], truth,
                              spec.model_dump(mode="json"))
    return Dataset(spec.intrinsics, registry, frames, groundtruth)
