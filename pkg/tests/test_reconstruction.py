import os
import tempfile
from unittest import TestCase

import numpy as np

from signmap.geometry import CameraIntrinsics, Pose3, camera_pose
from signmap.protocol import ValidationError
from signmap.reconstruction import (FREE, OCCUPIED, PGM_FREE, PGM_OCCUPIED,
                                    PGM_UNKNOWN, UNKNOWN, Grid2D,
                                    OccupancyGrid3D, correct_vertical_drift,
                                    format_voxels, integrate_keyframe,
                                    load_map, parse_voxels, project_2d,
                                    save_map)

def column(x, y, z0, z1, res=0.03):
    """Points stacked one per voxel from z0 up to z1"""
    zs = np.arange(z0, z1, res) + res / 2
    return np.column_stack([np.full(len(zs), x), np.full(len(zs), y), zs])

def occupied_set(grid2d):
    return {tuple(c) for c in np.round(grid2d.occupied_centers(), 6)}

class TestOccupancyGrid(TestCase):

    def test_index(self):
        grid = OccupancyGrid3D(0.03).insert([[0.1, 0.1, 1.0]])
        self.assertEqual(grid.occupied, {(3, 3, 33)})
        self.assertTrue((3, 3, 33) in grid)
        self.assertEqual(grid.index_of([0.1, 0.1, 1.0]), (3, 3, 33))
        np.testing.assert_allclose(grid.center_of((3, 3, 33)),
                                   [0.105, 0.105, 1.005])

    def test_doubling(self):
        points = np.random.default_rng(0).uniform(-1, 1, (500, 3))
        once = OccupancyGrid3D().insert(points)
        twice = OccupancyGrid3D().insert(points).insert(points)
        self.assertEqual(once.occupied, twice.occupied)
        for v, hits in once.counts.items():
            self.assertEqual(twice.counts[v], 2 * hits)

    def test_translation(self):
        points = np.random.default_rng(1).uniform(-2, 2, (300, 3))
        shift = np.array([1.0, -1.5, 0.5])
        a = OccupancyGrid3D(0.5).insert(points)
        b = OccupancyGrid3D(0.5).insert(points + shift)
        moved = {(x + 2, y - 3, z + 1) for x, y, z in a.occupied}
        self.assertEqual(moved, b.occupied)

    def test_merge(self):
        a = OccupancyGrid3D().insert([[0, 0, 0]])
        b = OccupancyGrid3D().insert([[0, 0, 0], [1, 1, 1]])
        a.merge(b)
        self.assertEqual(a.counts[(0, 0, 0)], 2)
        self.assertEqual(len(a), 2)
        with self.assertRaises(ValueError):
            a.merge(OccupancyGrid3D(0.05))
        with self.assertRaises(ValueError):
            OccupancyGrid3D(0)

    def test_integrate_keyframe(self):
        k = CameraIntrinsics()
        depth = np.zeros((k.height, k.width), dtype=np.uint16)
        depth[64, 64] = 20000
        pose = camera_pose(1.01, 2.01, 1.21, 0)
        grid = integrate_keyframe(OccupancyGrid3D(), pose, depth, k)
        self.assertEqual(grid.occupied, {grid.index_of([3.01, 2.01, 1.21])})

        empty = integrate_keyframe(OccupancyGrid3D(), pose,
                                   np.zeros_like(depth), k)
        self.assertEqual(len(empty), 0)


class TestProject(TestCase):

    def test_empty(self):
        grid2d = project_2d(OccupancyGrid3D())
        self.assertEqual(grid2d.shape, (1, 1))
        self.assertEqual(grid2d.cells[0, 0], UNKNOWN)

    def test_single_voxel(self):
        grid = OccupancyGrid3D().insert([[0.1, 0.1, 1.0]])
        grid2d = project_2d(grid, min_column_hits=1)
        self.assertEqual(grid2d.shape, (1, 1))
        self.assertEqual(grid2d.cells[0, 0], OCCUPIED)
        self.assertEqual(grid2d.value(0.1, 0.1), OCCUPIED)
        self.assertEqual(grid2d.value(5.0, 5.0), UNKNOWN)

        self.assertEqual(project_2d(grid).cells[0, 0], UNKNOWN)

    def test_column(self):
        wall = column(0.5, 0.5, 0.0, 2.4)
        floor = [[1.0, 0.5, 0.01]]
        grid2d = project_2d(OccupancyGrid3D().insert(np.vstack([wall, floor])))
        self.assertEqual(grid2d.value(0.5, 0.5), OCCUPIED)
        self.assertEqual(grid2d.value(1.0, 0.5), FREE)
        self.assertEqual(grid2d.value(0.75, 0.5), UNKNOWN)

    def test_slab_only(self):
        # voxels above z_max never count
        grid = OccupancyGrid3D().insert(column(0.0, 0.0, 1.9, 2.4))
        self.assertEqual(project_2d(grid).cells.max(), UNKNOWN)

    def test_bounds(self):
        with self.assertRaises(ValueError):
            project_2d(OccupancyGrid3D(), 1.0, 1.0)
        with self.assertRaises(ValueError):
            project_2d(OccupancyGrid3D(), 1.5, 1.0)

    def test_monotone(self):
        rng = np.random.default_rng(2)
        grid = OccupancyGrid3D()
        before = set()
        for _ in range(10):
            grid.insert(rng.uniform([-0.1, -0.1, 0], [0.1, 0.1, 2.5],
                                    (40, 3)))
            after = occupied_set(project_2d(grid))
            self.assertTrue(before <= after)
            before = after
        self.assertTrue(before)


class TestGrid2D(TestCase):

    def test_image(self):
        cells = np.array([[OCCUPIED, FREE], [UNKNOWN, FREE]])
        grid2d = Grid2D(0.1, (0, 0), cells)
        image = grid2d.image()
        # bottom image row is the lowest y
        np.testing.assert_array_equal(image, [[PGM_UNKNOWN, PGM_FREE],
                                              [PGM_OCCUPIED, PGM_FREE]])
        self.assertEqual(grid2d.to_pixel(0.0, 0.0), (0.0, 2.0))
        self.assertEqual(grid2d.to_pixel(0.2, 0.2, 2), (4.0, 0.0))
        np.testing.assert_allclose(grid2d.occupied_centers(), [[0.05, 0.05]])

    def test_save_load(self):
        cells = np.random.default_rng(3).integers(-1, 2, (7, 9))
        grid2d = Grid2D(0.03, (-1.5, 2.25), cells)
        with tempfile.TemporaryDirectory() as root:
            pgm = os.path.join(root, "map.pgm")
            meta = os.path.join(root, "map.json")
            save_map(grid2d, pgm, meta)
            loaded = load_map(pgm, meta)
        np.testing.assert_array_equal(loaded.cells, grid2d.cells)
        self.assertEqual(loaded.resolution, 0.03)
        self.assertEqual(loaded.origin, (-1.5, 2.25))

    def test_load_errors(self):
        with tempfile.TemporaryDirectory() as root:
            pgm = os.path.join(root, "map.pgm")
            meta = os.path.join(root, "map.json")
            with self.assertRaises(ValidationError):
                load_map(pgm, meta)
            save_map(Grid2D(0.1, (0, 0), np.zeros((2, 2))), pgm, meta)
            with open(meta, "w") as f:
                f.write('{"resolution": 0.1}')
            with self.assertRaises(ValidationError):
                load_map(pgm, meta)


class TestVoxelFile(TestCase):

    def test_format(self):
        grid = OccupancyGrid3D().insert([[0.1, 0.1, 1.0], [0.1, 0.1, 1.0],
                                         [-0.01, 0, 0]])
        self.assertEqual(format_voxels(grid), "-1 0 0 1\n3 3 33 2\n")
        self.assertEqual(parse_voxels(format_voxels(grid)).counts, grid.counts)
        self.assertEqual(format_voxels(OccupancyGrid3D()), "")

    def test_parse_errors(self):
        with self.assertRaises(ValidationError):
            parse_voxels("1 2 3\n")
        with self.assertRaises(ValidationError):
            parse_voxels("1 2 3 x\n")
        self.assertEqual(len(parse_voxels("\n1 2 3 4\n\n")), 1)


class TestVerticalDrift(TestCase):

    def test_fixed_height(self):
        pose = Pose3.from_rotvec([0.01, 0.02, 0.5], [1, 2, 1.31])
        fixed = correct_vertical_drift(pose, 1.2)
        np.testing.assert_allclose(fixed.translation, [1, 2, 1.2])
        np.testing.assert_array_equal(fixed.rotation_matrix,
                                      pose.rotation_matrix)
