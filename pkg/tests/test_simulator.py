import math
from unittest import TestCase

import numpy as np

from signmap.geometry import (backproject, camera_pose, inverse,
                              project_points, relative_error)
from signmap.simulator import (FLOOR, PLACARD, WALL, Scene, placard_visible,
                               raycast_depth, raycast_meters,
                               render_detections, simulate_keyframe,
                               simulate_run)
from signmap.world import (InvalidSpec, LossSegment, NoiseSpec, PlacardSpec,
                           Wall, Waypoint, WorldSpec, check_spec,
                           corridor_world, template_world)

def wall_at(x, placards=(), **kwargs):
    """A single wall across the x axis at distance x, facing the origin"""
    return WorldSpec(walls=[Wall(x0=x, y0=-3, x1=x, y1=3)],
                     placards=list(placards),
                     trajectory=[Waypoint(x=0, y=0, yaw=0)], **kwargs)

class TestRaycast(TestCase):

    def test_frontal(self):
        scene = Scene(wall_at(2.0))
        k = scene.spec.intrinsics
        depth, kinds = raycast_meters(scene, camera_pose(0, 0, 1.2, 0), k)
        self.assertAlmostEqual(depth[64, 64], 2.0)
        self.assertEqual(kinds[64, 64], WALL)
        # a flat wall has the same z-depth everywhere
        self.assertTrue(np.allclose(depth[np.isfinite(depth)], 2.0))

        raw = raycast_depth(scene, camera_pose(0, 0, 1.2, 0), k)
        self.assertEqual(raw.dtype, np.uint16)
        self.assertEqual(raw[64, 64], 20000)

    def test_parallel(self):
        scene = Scene(wall_at(2.0))
        k = scene.spec.intrinsics
        raw = raycast_depth(scene, camera_pose(0, 0, 1.2, math.pi / 2), k)
        self.assertEqual(raw[64, 64], 0)

    def test_oblique(self):
        scene = Scene(wall_at(2.0))
        k = scene.spec.intrinsics
        depth, _ = raycast_meters(scene, camera_pose(0, 0, 1.2, math.pi / 4),
                                  k)
        self.assertAlmostEqual(depth[64, 64], 2 * math.sqrt(2))

    def test_points_on_wall(self):
        scene = Scene(wall_at(2.0))
        k = scene.spec.intrinsics
        pose = camera_pose(0.3, -0.4, 1.2, math.radians(20))
        depth, _ = raycast_meters(scene, pose, k)
        rays, _, _ = k.pixel_rays()
        valid = np.isfinite(depth)
        points = pose.apply(rays[valid] * depth[valid][:, None])
        self.assertLess(np.abs(points[:, 0] - 2.0).max(), 1e-6)

        raw = raycast_depth(scene, pose, k)
        cloud = backproject(raw, k)
        self.assertLess(np.abs(pose.apply(cloud.points)[:, 0] - 2.0).max(),
                        2e-4)

    def test_floor_and_range(self):
        spec = corridor_world(length=4)
        scene = Scene(spec)
        k = spec.intrinsics
        depth, kinds = raycast_meters(scene, camera_pose(1, 1, 1.2, 0), k)
        self.assertEqual(kinds[127, 64], FLOOR)
        raw = raycast_depth(scene, camera_pose(1, 1, 1.2, 0), k)
        far = np.isfinite(depth) & (depth > k.depth_max)
        self.assertTrue(far.any())
        self.assertTrue(np.all(raw[far] == 0))


class TestDetections(TestCase):

    def setUp(self):
        self.spec = wall_at(1.5, [PlacardSpec(wall=0, offset=3, height=1.2,
                                              label="3.112")])
        self.scene = Scene(self.spec)
        self.k = self.spec.intrinsics

    def test_bbox(self):
        pose = camera_pose(0, 0, 1.2, 0)
        found = render_detections(self.scene, pose, self.k, NoiseSpec(),
                                  np.random.default_rng(0))
        self.assertEqual(len(found), 1)
        det, index = found[0]
        self.assertEqual(index, 0)
        corners = inverse(pose).apply(self.scene.geometry[0].corners())
        uv = project_points(corners, self.k)
        oracle = [uv[:, 0].min(), uv[:, 1].min(), uv[:, 0].max(),
                  uv[:, 1].max()]
        self.assertLess(np.abs(np.array(det.bbox) - oracle).max(), 2)
        self.assertTrue(0.92 <= det.confidence <= 0.99)

    def test_behind(self):
        pose = camera_pose(0, 0, 1.2, math.pi)
        self.assertEqual(render_detections(self.scene, pose, self.k,
                                           NoiseSpec(),
                                           np.random.default_rng(0)), [])

    def test_hidden(self):
        spec = wall_at(1.5, [PlacardSpec(wall=0, offset=3, height=1.2,
                                         label="MEN", detectable=False)])
        scene = Scene(spec)
        pose = camera_pose(0, 0, 1.2, 0)
        self.assertFalse(placard_visible(scene, scene.faces[0],
                                         scene.geometry[0], pose, self.k))

    def test_false_positive(self):
        pose = camera_pose(0, 0, 1.2, 0)
        found = render_detections(self.scene, pose, self.k,
                                  NoiseSpec(false_positive_rate=1.0),
                                  np.random.default_rng(0))
        self.assertEqual([i for _, i in found], [0, None])

    def test_only_visible(self):
        spec = corridor_world(length=6)
        scene = Scene(spec)
        for wp in spec.trajectory:
            pose = camera_pose(wp.x, wp.y, 1.2, wp.yaw)
            visible = {g.index for f, g in zip(scene.faces, scene.geometry)
                       if placard_visible(scene, f, g, pose, spec.intrinsics)}
            found = render_detections(scene, pose, spec.intrinsics,
                                      spec.noise, np.random.default_rng(0))
            indices = [i for _, i in found]
            self.assertNotIn(None, indices)
            self.assertTrue(set(indices) <= visible)
            self.assertLessEqual(len(visible) - len(indices), 1)

    def test_keyframe(self):
        pose = camera_pose(0, 0, 1.2, 0)
        raw, color, dets = simulate_keyframe(self.scene, pose,
                                             np.random.default_rng(0))
        self.assertEqual(raw.shape, (128, 128))
        self.assertEqual(color.shape, (512, 512))
        self.assertEqual(color.dtype, np.uint8)
        u0, v0, u1, v1 = (4 * c for c in dets[0].bbox)
        roi = color[v0:v1, u0:u1]
        self.assertEqual(int(roi.min()), 30)
        self.assertEqual(int(roi.max()), 240)
        _, kinds = raycast_meters(self.scene, pose, self.k, self.scene.faces)
        self.assertEqual(kinds[64, 64], PLACARD)


class TestRun(TestCase):

    def test_deterministic(self):
        noise = NoiseSpec(depth_sigma=0.002, detection_jitter_px=1,
                          drift_sigma_m=0.01, drift_sigma_yaw=0.002,
                          false_positive_rate=0.1)
        spec = corridor_world(length=4, noise=noise, losses=[(5, 7)])
        a, b = simulate_run(spec, 3), simulate_run(spec, 3)
        for kf in a.keyframes():
            other = b.registry[kf.id]
            self.assertEqual(kf.pose, other.pose)
            self.assertEqual(kf.detections, other.detections)
            np.testing.assert_array_equal(a.depth(kf.id), b.depth(kf.id))
            np.testing.assert_array_equal(a.color(kf.id), b.color(kf.id))

        c = simulate_run(spec, 4)
        self.assertFalse(all(np.array_equal(a.depth(i), c.depth(i))
                             for i in a.registry.keys()))

    def test_noiseless_poses(self):
        run = simulate_run(corridor_world(length=4))
        self.assertEqual(len(run.registry.submaps), 1)
        for kf in run.keyframes():
            dist, angle = relative_error(kf.pose,
                                         run.groundtruth.trajectory[kf.id])
            self.assertLess(dist + angle, 1e-12)

    def test_loss(self):
        spec = corridor_world(length=4, losses=[(5, 7)])
        run = simulate_run(spec)
        registry = run.registry
        self.assertEqual(sorted(registry.submaps), [0, 1])
        self.assertEqual([kf.id for kf in registry.submaps[0]],
                         [0, 1, 2, 3, 4])
        self.assertEqual(registry.submaps[1][0].id, 7)
        self.assertEqual(len(registry), len(spec.trajectory) - 2)
        self.assertEqual([(e.last_id, e.origin_id)
                          for e in registry.loss_events], [(4, 7)])
        # the new submap starts at its first keyframe
        np.testing.assert_allclose(registry[7].pose.matrix(), np.eye(4),
                                   atol=1e-12)
        self.assertEqual(registry.unanchored(), [1])

    def test_groundtruth(self):
        run = simulate_run(corridor_world(length=4))
        placards = run.groundtruth.placards
        self.assertEqual(len(placards), 4)
        self.assertEqual(placards[0]["label"], "2.101")
        self.assertAlmostEqual(placards[0]["theta_rad"], math.pi / 2)
        self.assertEqual(run.groundtruth.world["walls"][0]["x0"], -1)

    def test_invalid(self):
        spec = corridor_world(length=4)
        with self.assertRaises(InvalidSpec):
            simulate_run(spec.model_copy(update={
                "loss_segments": [LossSegment(start=5, end=50)]}))


class TestWorld(TestCase):

    def test_template(self):
        spec = check_spec(template_world())
        self.assertGreaterEqual(len(spec.placards), 30)
        self.assertEqual(len(spec.loss_segments), 1)
        segment = spec.loss_segments[0]
        self.assertEqual(segment.start, segment.end)
        route = spec.trajectory
        last, origin = route[segment.start - 1], route[segment.end]
        self.assertEqual((last.x, last.y, origin.x, origin.y), (19, 1, 19, 1))
        self.assertAlmostEqual(math.degrees(last.yaw), -40.0)
        self.assertAlmostEqual(math.degrees(origin.yaw), -50.0)
        self.assertEqual(template_world(losses=False).loss_segments, [])
        labels = {p.label for p in spec.placards}
        self.assertTrue({"MEN", "WOMEN", "GENDER INCLUSIVE", "STAIR1",
                         "STAIR2"} <= labels)

    def test_corridor(self):
        spec = check_spec(corridor_world())
        self.assertEqual(spec.trajectory[0].x, 0)
        self.assertEqual([p.side for p in spec.placards[:2]], [1, -1])

    def test_check_spec(self):
        base = corridor_world(length=4)
        bad = [
            {"walls": []},
            {"walls": [Wall(x0=0, y0=0, x1=1, y1=1)]},
            {"walls": [Wall(x0=0, y0=0, x1=0, y1=0)]},
            {"placards": [PlacardSpec(wall=9, offset=1)]},
            {"placards": [PlacardSpec(wall=0, offset=0.05)]},
            {"placards": [PlacardSpec(wall=0, offset=1, label="men")]},
            {"placards": [PlacardSpec(wall=0, offset=1, height=2.45)]},
            {"trajectory": []},
            {"loss_segments": [LossSegment(start=5, end=4)]},
            {"loss_segments": [LossSegment(start=3, end=5),
                               LossSegment(start=4, end=6)]},
            {"noise": NoiseSpec(confidence_min=0.99, confidence_max=0.9)},
        ]
        for update in bad:
            with self.assertRaises(InvalidSpec, msg=str(update)):
                check_spec(base.model_copy(update=update))
