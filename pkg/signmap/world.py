"""Synthetic world description: right-angle walls, placards, a timed
trajectory, tracking-loss segments and noise settings."""
import math
from typing import List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from signmap import codematrix
from signmap.geometry import CameraIntrinsics
from signmap.labels import validate_label

PLACARD_HALF_SIZE = 0.107

class InvalidSpec(Exception):
    pass


class _Model(BaseModel):
    model_config = ConfigDict(extra="forbid")


class Wall(_Model):
    """Vertical rectangle over the segment (x0, y0) -> (x1, y1); its left
    side is the +1 side"""
    x0: float
    y0: float
    x1: float
    y1: float
    height: float = Field(2.5, gt=0)

    @property
    def length(self):
        return math.hypot(self.x1 - self.x0, self.y1 - self.y0)

    @property
    def direction(self):
        return np.array([self.x1 - self.x0, self.y1 - self.y0, 0.0]) / \
                self.length

    @property
    def left(self):
        d = self.direction
        return np.array([-d[1], d[0], 0.0])


class PlacardSpec(_Model):
    wall: int = Field(ge=0)
    offset: float = Field(description="center distance from the wall start, m")
    height: float = Field(1.5, description="center height, m")
    half_size: float = Field(PLACARD_HALF_SIZE, gt=0)
    label: str = ""
    side: Literal[1, -1] = 1
    pattern: Literal["code", "square"] = codematrix.CODE
    corrupt: bool = False
    detectable: bool = True


class Waypoint(_Model):
    t: float = 0.0
    x: float
    y: float
    yaw: float


class LossSegment(_Model):
    """Keyframes start..end-1 are lost; a new submap begins at end"""
    start: int = Field(ge=1)
    end: int = Field(ge=1)


class NoiseSpec(_Model):
    depth_sigma: float = Field(0.0, ge=0)
    detection_jitter_px: int = Field(0, ge=0)
    ocr_corruption_prob: float = Field(0.0, ge=0, le=1)
    drift_sigma_m: float = Field(0.0, ge=0)
    drift_sigma_yaw: float = Field(0.0, ge=0)
    drift_sigma_z: float = Field(0.0, ge=0)
    confidence_min: float = Field(0.92, ge=0, le=1)
    confidence_max: float = Field(0.99, ge=0, le=1)
    false_positive_rate: float = Field(0.0, ge=0, le=1)
    normal_sigma_deg: float = Field(0.0, ge=0)


class WorldSpec(_Model):
    walls: List[Wall]
    placards: List[PlacardSpec] = []
    trajectory: List[Waypoint]
    camera_height: float = Field(1.2, gt=0)
    loss_segments: List[LossSegment] = []
    noise: NoiseSpec = NoiseSpec()
    intrinsics: CameraIntrinsics = CameraIntrinsics()
    color_scale: int = Field(4, ge=1)
    floor_z: float = 0.0
    ceiling_z: Optional[float] = None

    @property
    def ceiling(self):
        if self.ceiling_z is not None:
            return self.ceiling_z
        return self.floor_z + max(w.height for w in self.walls)

    def extent(self):
        """(x_min, y_min, x_max, y_max) of all walls"""
        xs = [x for w in self.walls for x in (w.x0, w.x1)]
        ys = [y for w in self.walls for y in (w.y0, w.y1)]
        return min(xs), min(ys), max(xs), max(ys)


class PlacardGeometry:
    """A placard face in world frame; `right` is the viewer's right when
    facing it, cells is its (rows, cols) bitmap with True black"""

    def __init__(self, spec, wall, index):
        self.index = index
        self.spec = spec
        self.label = spec.label
        self.normal = spec.side * wall.left
        self.center = np.array([wall.x0, wall.y0, 0.0]) + \
                spec.offset * wall.direction
        self.center[2] = spec.height
        self.up = np.array([0.0, 0.0, 1.0])
        self.right = np.cross(-self.normal, self.up)
        self.cells = codematrix.placard_cells(spec.label, spec.pattern,
                                              spec.corrupt)
        self.cell = 2 * spec.half_size / self.cells.shape[1]
        self.half_w = spec.half_size
        self.half_h = self.cell * self.cells.shape[0] / 2

    @property
    def theta(self):
        return math.atan2(self.normal[1], self.normal[0])

    @property
    def canonical_label(self):
        canonical = validate_label(self.label)
        return canonical.text if canonical else ""

    def corners(self):
        """Four face corners, top-left first, clockwise as seen by a viewer"""
        r, u = self.right * self.half_w, self.up * self.half_h
        return np.array([self.center - r + u, self.center + r + u,
                         self.center + r - u, self.center - r - u])

    def as_dict(self):
        return {"x": float(self.center[0]), "y": float(self.center[1]),
                "z": float(self.center[2]), "theta_rad": float(self.theta),
                "label": self.canonical_label}


def placard_geometry(spec):
    return [PlacardGeometry(p, spec.walls[p.wall], i)
            for i, p in enumerate(spec.placards)]

def check_spec(spec):
    """Raise InvalidSpec naming the first violated invariant"""
    if not spec.walls:
        raise InvalidSpec("world needs at least one wall")
    for i, w in enumerate(spec.walls):
        if w.length == 0:
            raise InvalidSpec("wall {} has zero length".format(i))
        if w.x0 != w.x1 and w.y0 != w.y1:
            raise InvalidSpec("wall {} is not axis-aligned".format(i))
    if spec.ceiling <= spec.floor_z:
        raise InvalidSpec("ceiling must be above the floor")

    for i, p in enumerate(spec.placards):
        if p.wall >= len(spec.walls):
            raise InvalidSpec("placard {} references missing wall {}".format(
                i, p.wall))
        wall = spec.walls[p.wall]
        if not p.half_size <= p.offset <= wall.length - p.half_size:
            raise InvalidSpec("placard {} offset outside wall {} extent"
                              .format(i, p.wall))
        try:
            face = PlacardGeometry(p, wall, i)
        except ValueError as e:
            raise InvalidSpec("placard {} label not encodable: {}".format(i, e))
        if not spec.floor_z <= p.height - face.half_h or \
                p.height + face.half_h > spec.floor_z + wall.height:
            raise InvalidSpec("placard {} outside wall {} height".format(
                i, p.wall))

    if not spec.trajectory:
        raise InvalidSpec("trajectory is empty")
    previous = 0
    for s in spec.loss_segments:
        if s.end < s.start:
            raise InvalidSpec("loss segment {}..{} ends before it starts"
                              .format(s.start, s.end))
        if s.start <= previous and previous:
            raise InvalidSpec("loss segments overlap or are unsorted")
        if s.end >= len(spec.trajectory):
            raise InvalidSpec("loss segment {}..{} leaves no keyframe to "
                              "start the next submap".format(s.start, s.end))
        previous = s.end
    if spec.noise.confidence_min > spec.noise.confidence_max:
        raise InvalidSpec("confidence_min above confidence_max")
    return spec


def _leg(x0, y0, x1, y1, step, look, t0=0.0):
    """Waypoints from (x0, y0) towards (x1, y1), alternately looking `look`
    radians to either side of the heading"""
    heading = math.atan2(y1 - y0, x1 - x0)
    n = int(round(math.hypot(x1 - x0, y1 - y0) / step))
    points = []
    for i in range(n):
        f = i / n
        yaw = heading + (look if i % 2 == 0 else -look)
        points.append(Waypoint(t=t0 + i, x=x0 + f * (x1 - x0),
                               y=y0 + f * (y1 - y0),
                               yaw=math.atan2(math.sin(yaw), math.cos(yaw))))
    return points

def _spin(x, y, yaw0, step_deg, t0=0.0):
    n = int(round(360 / step_deg))
    return [Waypoint(t=t0 + i, x=x, y=y,
                     yaw=math.atan2(math.sin(yaw0 + math.radians(i * step_deg)),
                                    math.cos(yaw0 + math.radians(i * step_deg))))
            for i in range(n)]

def _turn(x, y, yaw0, yaw1, step_deg):
    """In-place rotation from yaw0 to yaw1, both included"""
    n = int(round(abs(math.degrees(yaw1 - yaw0)) / step_deg))
    return [Waypoint(x=x, y=y, yaw=yaw0 + (yaw1 - yaw0) * i / n)
            for i in range(n + 1)]

def _retime(points):
    return [p.model_copy(update={"t": float(i)}) for i, p in enumerate(points)]

def template_world(noise=None, losses=True, step=0.3, spin_step_deg=10.0,
                   look_deg=75.0):
    """Rectangular loop corridor round a solid block, a feature-rich junction
    at (10, 1) opening onto a placard-free room, and a bare east corridor.

    The trajectory walks the loop once, spinning in place at the junction
    and in the east corridor, roaming the room in between and turning on the
    spot to face the south-east corner.
    """
    walls = [
        Wall(x0=0, y0=0, x1=9, y1=0),        # 0 outer south, west part
        Wall(x0=11, y0=0, x1=20, y1=0),      # 1 outer south, east part
        Wall(x0=20, y0=0, x1=20, y1=12),     # 2 outer east
        Wall(x0=0, y0=12, x1=20, y1=12),     # 3 outer north
        Wall(x0=0, y0=0, x1=0, y1=12),       # 4 outer west
        Wall(x0=2, y0=2, x1=18, y1=2),       # 5 block south
        Wall(x0=18, y0=2, x1=18, y1=10),     # 6 block east
        Wall(x0=2, y0=10, x1=18, y1=10),     # 7 block north
        Wall(x0=2, y0=2, x1=2, y1=10),       # 8 block west
        Wall(x0=7, y0=-6, x1=13, y1=-6),     # 9 room south
        Wall(x0=7, y0=-6, x1=7, y1=0),       # 10 room west
        Wall(x0=13, y0=-6, x1=13, y1=0),     # 11 room east
    ]

    rooms = iter(range(101, 200))
    def room(printed_dot=True):
        n = next(rooms)
        return "1.{:03d}".format(n) if printed_dot else "1{:03d}".format(n)

    placards = []
    # south corridor, outer wall faces +y
    for x in (2, 4, 6):
        placards.append(PlacardSpec(wall=0, offset=x, side=1, label=room()))
    for x, label in ((14, "MEN"), (16, "WOMEN"), (18, room(False))):
        placards.append(PlacardSpec(wall=1, offset=x - 11, side=1, label=label))
    # south corridor, block wall faces -y
    for x in (3, 5, 7, 9, 11, 13, 15, 17):
        placards.append(PlacardSpec(wall=5, offset=x - 2, side=-1,
                                    label=room(x % 4 == 1)))
    # north corridor, outer wall faces -y
    for x in (2, 4, 6, 8, 10, 12, 14, 16, 18):
        label = "GENDER INCLUSIVE" if x == 10 else "STAIR2" if x == 18 \
                else room()
        placards.append(PlacardSpec(wall=3, offset=x, side=-1, label=label))
    # north corridor, block wall faces +y
    for x in (3, 5, 7, 9, 11, 13, 15, 17):
        placards.append(PlacardSpec(wall=7, offset=x - 2, side=1,
                                    label=room(x % 4 == 3)))
    # west corridor: outer wall faces +x, block wall faces -x
    for y, label in ((4, "STAIR1"), (6, room()), (8, room())):
        placards.append(PlacardSpec(wall=4, offset=y, side=-1, label=label))
    for y in (4, 6, 8):
        placards.append(PlacardSpec(wall=8, offset=y - 2, side=1,
                                    label=room()))

    look = math.radians(look_deg)
    route = []
    route += _leg(1, 1, 10, 1, step, look)
    route += _spin(10, 1, 0.0, spin_step_deg)
    route += _leg(10, 1, 10, -3, step, look)
    route += _spin(10, -3, -math.pi / 2, spin_step_deg * 3)
    route += _leg(10, -3, 10, 1, step, look)
    route += _leg(10, 1, 19, 1, step, look)
    corner = len(route)
    route += _turn(19, 1, 0.0, -math.pi / 2, spin_step_deg)
    route += _leg(19, 1, 19, 6, step, look)
    route += _spin(19, 6, math.pi / 2, spin_step_deg)
    route += _leg(19, 6, 19, 11, step, look)
    route += _leg(19, 11, 1, 11, step, look)
    route += _leg(1, 11, 1, 1, step, look)
    route = _retime(route)

    segments = []
    if losses:
        # a pure break in the corner turn while both walls are in view
        mid = corner + int(round(50.0 / spin_step_deg))
        segments.append(LossSegment(start=mid, end=mid))

    return WorldSpec(walls=walls, placards=placards, trajectory=route,
                     loss_segments=segments, noise=noise or NoiseSpec())

def corridor_world(length=12.0, placard_spacing=1.5, noise=None, step=0.3,
                   look_deg=75.0, losses=()):
    """Straight two-metre corridor along +x with placards on both walls"""
    walls = [Wall(x0=-1, y0=0, x1=length + 1, y1=0),
             Wall(x0=-1, y0=2, x1=length + 1, y1=2),
             Wall(x0=-1, y0=0, x1=-1, y1=2),
             Wall(x0=length + 1, y0=0, x1=length + 1, y1=2)]
    placards = []
    n = 0
    x = 1.0
    while x <= length - 0.5:
        n += 1
        placards.append(PlacardSpec(wall=0, offset=x + 1, side=1,
                                    label="2.{:03d}".format(100 + n)))
        placards.append(PlacardSpec(wall=1, offset=x + 1 + placard_spacing / 2,
                                    side=-1, label="2.{:03d}".format(200 + n)))
        x += placard_spacing
    route = _retime(_leg(0, 1, length, 1, step, math.radians(look_deg)))
    return WorldSpec(walls=walls, placards=placards, trajectory=route,
                     loss_segments=[LossSegment(start=s, end=e)
                                    for s, e in losses],
                     noise=noise or NoiseSpec())
