"""Hit-count voxel reconstruction of the keyframes and its 2D projection."""
import collections
import json

import cv2
import numpy as np

from signmap.geometry import EmptyCloud, backproject
from signmap.log import logger
from signmap.protocol import ValidationError

UNKNOWN  = -1
FREE     = 0
OCCUPIED = 1

PGM_OCCUPIED = 0
PGM_UNKNOWN  = 205
PGM_FREE     = 254

def correct_vertical_drift(pose, z_fixed):
    """Same pose with the translation's z set to z_fixed"""
    x, y, _ = pose.translation
    return pose.with_translation([x, y, z_fixed])

def voxel_counts(points, resolution, origin=(0.0, 0.0, 0.0)):
    """Counter of voxel index -> number of points falling in it"""
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    if not len(points):
        return collections.Counter()
    index = np.floor((points - np.asarray(origin)) / resolution).astype(np.int64)
    voxels, hits = np.unique(index, axis=0, return_counts=True)
    return collections.Counter({tuple(int(i) for i in v): int(h)
                                for v, h in zip(voxels, hits)})


class OccupancyGrid3D:
    def __init__(self, resolution=0.03, origin=(0.0, 0.0, 0.0)):
        if resolution <= 0:
            raise ValueError("resolution must be positive")
        self.resolution = float(resolution)
        self.origin = np.asarray(origin, dtype=float)
        self.counts = collections.Counter()

    def __len__(self):
        return len(self.counts)

    def __contains__(self, index):
        return tuple(index) in self.counts

    def __repr__(self):
        return "OccupancyGrid3D(resolution={}, voxels={})".format(
            self.resolution, len(self.counts))

    @property
    def occupied(self):
        return set(self.counts)

    def index_of(self, point):
        return tuple(int(i) for i in np.floor(
            (np.asarray(point, dtype=float) - self.origin) / self.resolution))

    def center_of(self, index):
        return self.origin + (np.asarray(index, dtype=float) + 0.5) * \
                self.resolution

    def insert(self, points):
        self.counts.update(voxel_counts(points, self.resolution, self.origin))
        return self

    def merge(self, other):
        """Add another grid's hit counts; resolution and origin must agree"""
        if other.resolution != self.resolution or \
                not np.array_equal(other.origin, self.origin):
            raise ValueError("cannot merge grids with different layouts")
        self.counts.update(other.counts)
        return self

    def voxel_array(self):
        """(N, 4) int array of ix, iy, iz, hits sorted by index"""
        if not self.counts:
            return np.zeros((0, 4), dtype=np.int64)
        rows = sorted((*v, h) for v, h in self.counts.items())
        return np.array(rows, dtype=np.int64)


def keyframe_points(pose, depth, k):
    """Map-frame points of a depth frame; empty when nothing is in range"""
    try:
        cloud = backproject(depth, k)
    except EmptyCloud:
        return np.zeros((0, 3))
    return pose.apply(cloud.points)

def integrate_keyframe(grid, pose, depth, k):
    """Add one keyframe's valid depth returns to the grid"""
    return grid.insert(keyframe_points(pose, depth, k))


class Grid2D:
    """Cells indexed [iy, ix]; cell (0, 0) has its corner at origin"""

    def __init__(self, resolution, origin, cells):
        self.resolution = float(resolution)
        self.origin = (float(origin[0]), float(origin[1]))
        self.cells = np.asarray(cells, dtype=np.int8)

    def __repr__(self):
        return "Grid2D(resolution={}, origin={}, shape={}, occupied={})".format(
            self.resolution, self.origin, self.cells.shape,
            int((self.cells == OCCUPIED).sum()))

    @property
    def shape(self):
        return self.cells.shape

    def cell_of(self, x, y):
        return (int(np.floor((x - self.origin[0]) / self.resolution)),
                int(np.floor((y - self.origin[1]) / self.resolution)))

    def value(self, x, y):
        ix, iy = self.cell_of(x, y)
        if 0 <= iy < self.cells.shape[0] and 0 <= ix < self.cells.shape[1]:
            return int(self.cells[iy, ix])
        return UNKNOWN

    def occupied_centers(self):
        """(N, 2) world coordinates of occupied cell centers"""
        iy, ix = np.nonzero(self.cells == OCCUPIED)
        return np.column_stack([self.origin[0] + (ix + 0.5) * self.resolution,
                                self.origin[1] + (iy + 0.5) * self.resolution])

    def to_pixel(self, x, y, scale=1):
        """Image (col, row) of a world point; the top image row is max y"""
        ix = (x - self.origin[0]) / self.resolution
        iy = (y - self.origin[1]) / self.resolution
        return ix * scale, (self.cells.shape[0] - iy) * scale

    def image(self):
        pgm = np.full(self.cells.shape, PGM_UNKNOWN, dtype=np.uint8)
        pgm[self.cells == OCCUPIED] = PGM_OCCUPIED
        pgm[self.cells == FREE] = PGM_FREE
        return np.flipud(pgm)

    def sidecar(self):
        return {"resolution": self.resolution, "origin_x": self.origin[0],
                "origin_y": self.origin[1]}


def project_2d(grid, z_min=0.2, z_max=1.8, min_column_hits=3):
    """Occupied: at least min_column_hits voxels with centers in [z_min, z_max].
    Free: otherwise empty columns with voxels below the slab (seen floor).
    """
    if not z_min < z_max:
        raise ValueError("z_min must be below z_max")
    voxels = grid.voxel_array()
    res = grid.resolution
    if not len(voxels):
        return Grid2D(res, grid.origin[:2], np.full((1, 1), UNKNOWN))

    lo = voxels[:, :2].min(axis=0)
    hi = voxels[:, :2].max(axis=0)
    nx, ny = hi - lo + 1
    z = grid.origin[2] + (voxels[:, 2] + 0.5) * res
    ix, iy = voxels[:, 0] - lo[0], voxels[:, 1] - lo[1]

    in_slab = np.zeros((ny, nx), dtype=np.int64)
    np.add.at(in_slab, (iy[(z >= z_min) & (z <= z_max)],
                        ix[(z >= z_min) & (z <= z_max)]), 1)
    below = np.zeros((ny, nx), dtype=bool)
    below[iy[z < z_min], ix[z < z_min]] = True

    cells = np.full((ny, nx), UNKNOWN, dtype=np.int8)
    cells[below & (in_slab == 0)] = FREE
    cells[in_slab >= max(min_column_hits, 1)] = OCCUPIED
    origin = (grid.origin[0] + lo[0] * res, grid.origin[1] + lo[1] * res)
    return Grid2D(res, origin, cells)


def format_voxels(grid):
    return "".join("{} {} {} {}\n".format(*row) for row in grid.voxel_array())

def parse_voxels(text, resolution=0.03, origin=(0.0, 0.0, 0.0)):
    grid = OccupancyGrid3D(resolution, origin)
    for line in text.splitlines():
        fields = line.split()
        if not fields:
            continue
        if len(fields) != 4:
            raise ValidationError("voxel line needs 4 fields: " + line)
        try:
            ix, iy, iz, hits = (int(f) for f in fields)
        except ValueError:
            raise ValidationError("invalid voxel line: " + line)
        grid.counts[(ix, iy, iz)] += hits
    return grid

def save_map(grid2d, pgm_path, json_path):
    if not cv2.imwrite(pgm_path, grid2d.image()):
        raise OSError("cannot write image: " + pgm_path)
    with open(json_path, "w") as f:
        f.write(json.dumps(grid2d.sidecar(), indent=1) + "\n")
    logger.debug("Saved {} map to {}".format(grid2d.shape, pgm_path))

def load_map(pgm_path, json_path):
    image = cv2.imread(pgm_path, cv2.IMREAD_UNCHANGED)
    if image is None:
        raise ValidationError("cannot read map image: " + pgm_path)
    try:
        with open(json_path) as f:
            meta = json.load(f)
        resolution = float(meta["resolution"])
        origin = (float(meta["origin_x"]), float(meta["origin_y"]))
    except (OSError, ValueError, KeyError, TypeError) as e:
        raise ValidationError("invalid map sidecar {}: {}".format(json_path, e))

    image = np.flipud(image)
    cells = np.full(image.shape, UNKNOWN, dtype=np.int8)
    cells[image == PGM_OCCUPIED] = OCCUPIED
    cells[image == PGM_FREE] = FREE
    return Grid2D(resolution, origin, cells)
