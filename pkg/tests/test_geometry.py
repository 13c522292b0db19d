import math
from unittest import TestCase

import numpy as np
from scipy.spatial.transform import Rotation

from signmap.geometry import (BehindCamera, CameraIntrinsics, EmptyCloud,
                              Pose3, PointCloud, backproject, camera_pose,
                              compose, inverse, project, project_points,
                              relative_error, transform_cloud, wrap_angle)

def random_pose(rng):
    return Pose3(Rotation.random(random_state=rng.integers(1 << 31)).as_quat(),
                 rng.normal(0.0, 2.0, 3))

small = CameraIntrinsics(fx=10, fy=10, cx=5, cy=5, width=20, height=20)

class TestPose(TestCase):

    def test_identity_compose(self):
        p = Pose3.from_rotvec([0.1, -0.2, 0.3], [1.0, 2.0, 3.0])
        q = compose(Pose3.identity(), p)
        np.testing.assert_allclose(q.matrix(), p.matrix(), atol=1e-12)

    def test_inverse(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            p = random_pose(rng)
            dist, angle = relative_error(compose(p, inverse(p)),
                                         Pose3.identity())
            self.assertLess(dist, 1e-9)
            self.assertLess(angle, 1e-9)
            self.assertAlmostEqual(np.linalg.norm(compose(p, inverse(p))
                                                  .rotation), 1.0, places=9)

    def test_z_rotations(self):
        quarter = Pose3.from_yaw(math.pi / 2)
        half = compose(quarter, quarter)
        np.testing.assert_allclose(half.rotation_matrix,
                                   Pose3.from_yaw(math.pi).rotation_matrix,
                                   atol=1e-12)
        self.assertAlmostEqual(half.angle(), math.pi, places=9)

    def test_associative(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            a, b, c = (random_pose(rng) for _ in range(3))
            left = compose(compose(a, b), c)
            right = compose(a, compose(b, c))
            np.testing.assert_allclose(left.matrix(), right.matrix(),
                                       atol=1e-9)

    def test_invalid_quaternion(self):
        with self.assertRaises(ValueError):
            Pose3([0, 0, 0, 0])
        with self.assertRaises(ValueError):
            Pose3([float("nan"), 0, 0, 1])

    def test_immutable(self):
        p = Pose3.identity()
        with self.assertRaises(ValueError):
            p.translation[0] = 1.0

    def test_camera_pose(self):
        pose = camera_pose(1.0, 2.0, 1.2, 0.0)
        # optical axis along +x, image right along -y, image down along -z
        np.testing.assert_allclose(pose.apply([0.0, 0.0, 1.0]),
                                   [2.0, 2.0, 1.2], atol=1e-12)
        np.testing.assert_allclose(pose.apply([1.0, 0.0, 0.0]),
                                   [1.0, 1.0, 1.2], atol=1e-12)
        np.testing.assert_allclose(pose.apply([0.0, 1.0, 0.0]),
                                   [1.0, 2.0, 0.2], atol=1e-12)

        turned = camera_pose(0.0, 0.0, 0.0, math.pi / 2)
        np.testing.assert_allclose(turned.apply([0.0, 0.0, 1.0]),
                                   [0.0, 1.0, 0.0], atol=1e-12)

    def test_wrap_angle(self):
        self.assertAlmostEqual(wrap_angle(math.pi), math.pi)
        self.assertAlmostEqual(wrap_angle(-math.pi), math.pi)
        self.assertAlmostEqual(wrap_angle(3 * math.pi / 2), -math.pi / 2)
        np.testing.assert_allclose(wrap_angle([0.0, 2 * math.pi + 0.1]),
                                   [0.0, 0.1], atol=1e-12)


class TestCloud(TestCase):

    def test_transform_identity(self):
        cloud = PointCloud(np.arange(12.0).reshape(4, 3))
        out = transform_cloud(Pose3.identity(), cloud)
        np.testing.assert_array_equal(out.points, cloud.points)
        self.assertEqual(out.frame, "map")

    def test_transform_translation(self):
        out = transform_cloud(Pose3(None, [1, 0, 0]), PointCloud([[0, 0, 0]]))
        np.testing.assert_array_equal(out.points, [[1.0, 0.0, 0.0]])

    def test_transform_oracle(self):
        rng = np.random.default_rng(3)
        pose = random_pose(rng)
        cloud = PointCloud(rng.normal(size=(100, 3)))
        out = transform_cloud(pose, cloud)
        m = pose.matrix()
        for p, q in zip(cloud.points, out.points):
            np.testing.assert_allclose(q, (m @ np.append(p, 1.0))[:3],
                                       atol=1e-12)

    def test_transform_composition(self):
        rng = np.random.default_rng(4)
        a, b = random_pose(rng), random_pose(rng)
        cloud = PointCloud(rng.normal(size=(50, 3)))
        np.testing.assert_allclose(
            transform_cloud(compose(a, b), cloud).points,
            transform_cloud(a, transform_cloud(b, cloud)).points, atol=1e-9)

    def test_non_finite(self):
        with self.assertRaises(ValueError):
            PointCloud([[0.0, float("inf"), 1.0]])


class TestBackproject(TestCase):

    def test_principal_point(self):
        k = CameraIntrinsics()
        depth = np.zeros((k.height, k.width), dtype=np.uint16)
        depth[64, 64] = 20000
        cloud = backproject(depth, k)
        np.testing.assert_allclose(cloud.points, [[0.0, 0.0, 2.0]])

    def test_unit_tangent(self):
        depth = np.zeros((20, 20), dtype=np.uint16)
        depth[5, 15] = 10000
        cloud = backproject(depth, small)
        np.testing.assert_allclose(cloud.points, [[1.0, 0.0, 1.0]])

    def test_roi_count(self):
        depth = np.zeros((20, 20), dtype=np.uint16)
        depth[2, 2] = depth[3, 4] = depth[5, 5] = 10000
        depth[6, 6] = 10000        # outside the roi
        depth[4, 4] = 30000        # beyond depth_max
        cloud = backproject(depth, small, (2, 2, 6, 6))
        self.assertEqual(len(cloud), 3)

    def test_empty(self):
        depth = np.zeros((20, 20), dtype=np.uint16)
        with self.assertRaises(EmptyCloud):
            backproject(depth, small)
        depth[0, 0] = 100          # 0.01 m, below depth_min
        with self.assertRaises(EmptyCloud):
            backproject(depth, small)

    def test_bad_roi(self):
        depth = np.full((20, 20), 10000, dtype=np.uint16)
        with self.assertRaises(ValueError):
            backproject(depth, small, (0, 0, 21, 5))
        with self.assertRaises(ValueError):
            backproject(depth, small, (4, 4, 4, 8))

    def test_wrong_shape(self):
        with self.assertRaises(ValueError):
            backproject(np.ones((10, 10), dtype=np.uint16), small)


class TestProject(TestCase):

    def test_examples(self):
        k = CameraIntrinsics()
        self.assertEqual(project([0, 0, 1], k), (k.cx, k.cy))
        self.assertEqual(project([1, 0, 1], k), (k.cx + k.fx, k.cy))
        with self.assertRaises(BehindCamera):
            project([0, 0, 0], k)
        with self.assertRaises(BehindCamera):
            project_points(np.array([[0, 0, 1], [0, 0, -1]]), k)

    def test_round_trip(self):
        k = CameraIntrinsics()
        rng = np.random.default_rng(5)
        depth = rng.integers(3000, 28000, size=(k.height, k.width))\
                .astype(np.uint16)
        depth[rng.random(depth.shape) < 0.2] = 0
        cloud = backproject(depth, k)
        uv = project_points(cloud.points, k)
        v, u = np.nonzero(depth)
        np.testing.assert_allclose(uv, np.column_stack([u, v]), atol=1e-6)


class TestIntrinsics(TestCase):

    def test_defaults(self):
        k = CameraIntrinsics()
        self.assertEqual((k.width, k.height), (128, 128))
        self.assertEqual((k.depth_min, k.depth_max), (0.25, 2.88))

    def test_invalid(self):
        with self.assertRaises(ValueError):
            CameraIntrinsics(cx=128)
        with self.assertRaises(ValueError):
            CameraIntrinsics(depth_min=3.0)
        with self.assertRaises(ValueError):
            CameraIntrinsics(fx=0)

    def test_scaled(self):
        k = CameraIntrinsics().scaled(4)
        self.assertEqual((k.width, k.height), (512, 512))
        self.assertEqual((k.fx, k.cx), (280.0, 256.0))
