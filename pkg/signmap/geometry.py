"""Rigid-body math, the pinhole camera model and depth backprojection."""
import math

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.spatial.transform import Rotation

CAMERA = "camera"
MAP = "map"

# camera axes (x right, y down, z forward) expressed in a z-up body frame
# looking along +x
CAMERA_TO_BODY = np.array([[0.0, 0.0, 1.0],
                           [-1.0, 0.0, 0.0],
                           [0.0, -1.0, 0.0]])

class EmptyCloud(Exception):
    pass

class BehindCamera(Exception):
    pass


def wrap_angle(angle):
    """Wrap an angle (or an array of angles) to (-pi, pi]"""
    wrapped = np.mod(np.asarray(angle, dtype=float) + math.pi, 2 * math.pi) \
            - math.pi
    wrapped = np.where(wrapped <= -math.pi, wrapped + 2 * math.pi, wrapped)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


class Pose3:
    """Rigid transform: unit quaternion (x, y, z, w) plus translation (m)"""

    __slots__ = ("_q", "_t")

    def __init__(self, rotation=None, translation=None):
        q = np.array([0.0, 0.0, 0.0, 1.0] if rotation is None else rotation,
                     dtype=float)
        norm = np.linalg.norm(q)
        if not np.isfinite(norm) or norm < 1e-12:
            raise ValueError("invalid quaternion: " + str(rotation))
        q = q / norm
        t = np.zeros(3) if translation is None else \
                np.array(translation, dtype=float).reshape(3)
        q.flags.writeable = False
        t.flags.writeable = False
        self._q, self._t = q, t

    @property
    def rotation(self):
        return self._q

    @property
    def translation(self):
        return self._t

    @property
    def rotation_matrix(self):
        return Rotation.from_quat(self._q).as_matrix()

    def matrix(self):
        m = np.eye(4)
        m[:3, :3] = self.rotation_matrix
        m[:3, 3] = self._t
        return m

    def apply(self, points):
        """Map an (N, 3) array (or a single 3-vector) through the transform"""
        points = np.asarray(points, dtype=float)
        return points @ self.rotation_matrix.T + self._t

    def angle(self):
        """Rotation angle in radians"""
        return float(Rotation.from_quat(self._q).magnitude())

    def with_translation(self, translation):
        return Pose3(self._q, translation)

    @classmethod
    def identity(cls):
        return cls()

    @classmethod
    def from_matrix(cls, rotation, translation=None):
        return cls(Rotation.from_matrix(rotation).as_quat(), translation)

    @classmethod
    def from_rotvec(cls, rotvec, translation=None):
        return cls(Rotation.from_rotvec(rotvec).as_quat(), translation)

    @classmethod
    def from_yaw(cls, yaw, translation=None):
        return cls.from_rotvec([0.0, 0.0, yaw], translation)

    def __eq__(self, other):
        if not isinstance(other, Pose3):
            return NotImplemented
        return np.array_equal(self._q, other._q) and \
                np.array_equal(self._t, other._t)

    def __hash__(self):
        return hash((self._q.tobytes(), self._t.tobytes()))

    def __repr__(self):
        return "Pose3(rotation={}, translation={})".format(
                np.round(self._q, 9).tolist(), np.round(self._t, 9).tolist())


def compose(a, b):
    """Pose that applies b first, then a"""
    rotation = Rotation.from_quat(a.rotation) * Rotation.from_quat(b.rotation)
    translation = a.rotation_matrix @ b.translation + a.translation
    return Pose3(rotation.as_quat(), translation)

def inverse(p):
    rotation = Rotation.from_quat(p.rotation).inv()
    return Pose3(rotation.as_quat(), -rotation.apply(p.translation))

def relative_error(a, b):
    """(translation distance, rotation angle) between two poses"""
    delta = compose(inverse(a), b)
    return float(np.linalg.norm(delta.translation)), delta.angle()

def camera_pose(x, y, z, yaw, pitch=0.0):
    """global <- camera pose of a level camera at (x, y, z) heading `yaw`"""
    body = Rotation.from_euler("ZY", [yaw, -pitch]).as_matrix()
    return Pose3.from_matrix(body @ CAMERA_TO_BODY, [x, y, z])


class CameraIntrinsics(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)

    fx: float = Field(70.0, gt=0)
    fy: float = Field(70.0, gt=0)
    cx: float = Field(64.0, ge=0)
    cy: float = Field(64.0, ge=0)
    width: int = Field(128, gt=0)
    height: int = Field(128, gt=0)
    depth_scale: float = Field(0.0001, gt=0)
    depth_min: float = Field(0.25, ge=0)
    depth_max: float = Field(2.88, gt=0)

    @model_validator(mode="after")
    def _check(self):
        if self.cx >= self.width or self.cy >= self.height:
            raise ValueError("principal point outside the image")
        if self.depth_min >= self.depth_max:
            raise ValueError("depth_min must be below depth_max")
        return self

    def scaled(self, factor):
        """Intrinsics of a registered camera with `factor` times the pixels"""
        return self.model_copy(update={
            "fx": self.fx * factor, "fy": self.fy * factor,
            "cx": self.cx * factor, "cy": self.cy * factor,
            "width": int(round(self.width * factor)),
            "height": int(round(self.height * factor)),
        })

    def pixel_rays(self, roi=None):
        """Camera-frame ray directions with z = 1 for every pixel of the roi,
        row-major, plus the (u, v) integer pixel grids"""
        u0, v0, u1, v1 = roi if roi is not None else \
                (0, 0, self.width, self.height)
        v, u = np.mgrid[v0:v1, u0:u1]
        rays = np.stack([(u - self.cx) / self.fx, (v - self.cy) / self.fy,
                         np.ones(u.shape)], axis=-1)
        return rays, u, v


class PointCloud:
    """(N, 3) points in metres tagged with the frame they live in"""

    def __init__(self, points, frame=CAMERA):
        points = np.asarray(points, dtype=float).reshape(-1, 3)
        if not np.all(np.isfinite(points)):
            raise ValueError("point cloud contains non-finite points")
        self.points = points
        self.frame = frame

    def __len__(self):
        return len(self.points)

    def __repr__(self):
        return "PointCloud(n={}, frame={})".format(len(self), self.frame)


def transform_cloud(pose, cloud, frame=MAP):
    return PointCloud(pose.apply(cloud.points), frame)

def check_roi(roi, width, height):
    u0, v0, u1, v1 = (int(x) for x in roi)
    if not (0 <= u0 < u1 <= width and 0 <= v0 < v1 <= height):
        raise ValueError("roi {} outside {}x{} image".format(
            list(roi), width, height))
    return u0, v0, u1, v1

def backproject(depth, k, roi=None):
    """Valid pixels of a raw depth image (or of its roi) as a camera cloud.

    Raw value 0 means no return. Integer pixel coordinates are used as the
    ray sample points.
    """
    depth = np.asarray(depth)
    if depth.shape != (k.height, k.width):
        raise ValueError("depth image is {}, intrinsics expect {}".format(
            depth.shape, (k.height, k.width)))
    roi = check_roi(roi if roi is not None else (0, 0, k.width, k.height),
                    k.width, k.height)
    u0, v0, u1, v1 = roi
    z = depth[v0:v1, u0:u1].astype(float) * k.depth_scale
    valid = (depth[v0:v1, u0:u1] > 0) & (z >= k.depth_min) & \
            (z <= k.depth_max)
    if not valid.any():
        raise EmptyCloud("no valid depth in roi {}".format(list(roi)))
    rays, _, _ = k.pixel_rays(roi)
    return PointCloud(rays[valid] * z[valid][:, None], CAMERA)

def project(point, k):
    """Pixel coordinate (u, v) of a camera-frame point"""
    x, y, z = (float(c) for c in point)
    if z <= 0:
        raise BehindCamera("point {} is behind the camera".format(
            [x, y, z]))
    return k.fx * x / z + k.cx, k.fy * y / z + k.cy

def project_points(points, k):
    """Vectorised project() for an (N, 3) array; z must be positive"""
    points = np.asarray(points, dtype=float)
    if np.any(points[:, 2] <= 0):
        raise BehindCamera("some points are behind the camera")
    return np.stack([k.fx * points[:, 0] / points[:, 2] + k.cx,
                     k.fy * points[:, 1] / points[:, 2] + k.cy], axis=1)
