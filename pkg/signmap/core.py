import asyncio
import json
import os
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from typing import NamedTuple

from signmap.aggregation import aggregate, landmarks_csv, landmarks_json
from signmap.backends import get_backends
from signmap.config import PipelineConfig
from signmap.evaluation import evaluate, format_table, scatter_csv
from signmap.fs import ensure_dir, save_text, write_dataset
from signmap.log import logger
from signmap.mapgraph import resolve_losses
from signmap.placards import filter_detections, read_placard
from signmap.protocol import format_poses
from signmap.reconstruction import (OccupancyGrid3D, correct_vertical_drift,
                                    format_voxels, keyframe_points,
                                    project_2d, save_map, voxel_counts)
from signmap.render import render_map, save_png
from signmap.simulator import simulate_run

TRAJECTORY = "trajectory.txt"
VOXELS = "voxels.txt"
MAP_PGM = "map.pgm"
MAP_JSON = "map.json"
MERGE_REPORT = "merge_report.json"
OBSERVATIONS = "observations.json"
LANDMARKS_JSON = "landmarks.json"
LANDMARKS_CSV = "landmarks.csv"
DISCARDED = "discarded.json"
REPORT_JSON = "report.json"
REPORT_TXT = "report.txt"
SCATTER = "scatter.csv"
MAP_PNG = "map.png"

def _json(obj):
    return json.dumps(obj, indent=1) + "\n"


class MapResult(NamedTuple):
    registry: object
    poses: "OrderedDict"
    grid: OccupancyGrid3D
    grid2d: object


class SignmapCore:
    """Runs the offline stages; every stage reads in-memory inputs, writes
    its outputs under `out` and returns them"""

    def __init__(self, out, config=None):
        self.out = out
        self.config = config or PipelineConfig()
        self.executor = ThreadPoolExecutor(self.config.workers)

    def path(self, name):
        return os.path.join(self.out, name)

    async def run(self, fn, *args):
        """Run a blocking call in the worker pool"""
        loop = asyncio.get_running_loop()
        return await loop.run_in_executor(self.executor, fn, *args)

    async def save(self, name, text):
        await save_text(asyncio.get_running_loop(), self.path(name), text)

    def close(self):
        self.executor.shutdown()

    async def simulate(self, spec, seed=0):
        """Dataset of a simulated run, written to out"""
        dataset = await self.run(simulate_run, spec, seed)
        ensure_dir(self.out)
        await self.run(write_dataset, dataset, self.out)
        dataset.root = self.out
        return dataset

    async def map(self, dataset):
        """Merge submaps, pin the camera height and build the voxel and 2D
        maps of the anchored keyframes"""
        cfg = self.config
        ensure_dir(self.out)
        registry = await self.run(resolve_losses, dataset.registry, dataset,
                                  cfg.mapping.icp, cfg.mapping.merge_strategy)

        poses = registry.global_poses()
        if cfg.reconstruction.correct_drift:
            poses = OrderedDict((i, correct_vertical_drift(
                p, cfg.reconstruction.camera_height)) for i, p in poses.items())
        for m in registry.unanchored():
            logger.warning("Submap {} is not anchored, {} keyframes left out"
                           .format(m, len(registry.submaps[m])))

        res = cfg.reconstruction.resolution
        counts = await asyncio.gather(*[self.run(self._integrate, dataset, i, p,
                                                 res)
                                        for i, p in poses.items()])
        grid = OccupancyGrid3D(res)
        for c in counts:
            grid.counts.update(c)
        grid2d = project_2d(grid, cfg.reconstruction.z_min,
                            cfg.reconstruction.z_max,
                            cfg.reconstruction.min_column_hits)

        await self.save(TRAJECTORY, format_poses(poses))
        await self.save(VOXELS, format_voxels(grid))
        await self.run(save_map, grid2d, self.path(MAP_PGM), self.path(MAP_JSON))
        await self.save(MERGE_REPORT, _json({
            "strategy": cfg.mapping.merge_strategy,
            "events": [e.as_dict() for e in registry.loss_events],
            "unanchored_submaps": registry.unanchored(),
        }))
        logger.info("Mapped {} keyframes into {} voxels, 2D map {}".format(
            len(poses), len(grid), grid2d.shape))
        return MapResult(registry, poses, grid, grid2d)

    @staticmethod
    def _integrate(dataset, kf_id, pose, resolution):
        points = keyframe_points(pose, dataset.depth(kf_id), dataset.intrinsics)
        return voxel_counts(points, resolution)

    async def semantics(self, dataset, poses, backend=None):
        """Observations of every anchored keyframe, in keyframe order"""
        params = self.config.placards
        segmenter, transcriber = get_backends(backend or params.backend,
                                              dataset.root,
                                              params.line_threshold)
        ensure_dir(self.out)
        per_kf = await asyncio.gather(*[
            self.run(self._read_keyframe, dataset, dataset.registry[i], pose,
                     segmenter, transcriber)
            for i, pose in poses.items() if i in dataset.registry])
        observations = [o for batch in per_kf for o in batch]
        await self.save(OBSERVATIONS, _json([o.as_dict() for o in observations]))
        logger.info("Read {} observations from {} keyframes".format(
            len(observations), len(per_kf)))
        return observations

    def _read_keyframe(self, dataset, kf, pose, segmenter, transcriber):
        params = self.config.placards
        kept = {id(d) for d in filter_detections(kf.detections,
                                                 params.confidence_threshold)}
        wanted = [(j, d) for j, d in enumerate(kf.detections) if id(d) in kept]
        if not wanted:
            return []
        depth, color = dataset.depth(kf.id), dataset.color(kf.id)
        found = []
        for j, det in wanted:
            obs = read_placard(kf, det, depth, color, dataset.intrinsics, pose,
                               segmenter, transcriber, params, j)
            if obs is not None:
                found.append(obs)
        return found

    async def aggregate(self, observations, grid2d):
        ensure_dir(self.out)
        landmarks, discarded = await self.run(aggregate, observations, grid2d,
                                              self.config.aggregation)
        await self.save(LANDMARKS_JSON, _json(landmarks_json(landmarks)))
        await self.save(LANDMARKS_CSV, landmarks_csv(landmarks))
        await self.save(DISCARDED, _json([o.as_dict() for o in discarded]))
        return landmarks, discarded

    async def evaluate(self, trials, reference, pairs=None):
        """Reports of [(name, landmarks)] against one reference list"""
        ensure_dir(self.out)
        reports = [(name, evaluate(landmarks, reference, self.config.evaluation,
                                   pairs))
                   for name, landmarks in trials]
        await self.save(REPORT_JSON, _json(OrderedDict(
            (name, r.model_dump()) for name, r in reports)))
        await self.save(REPORT_TXT, format_table(reports))
        await self.save(SCATTER, scatter_csv(reports))
        return reports

    async def render(self, grid2d, landmarks=(), discarded=(), poses=None):
        params = self.config.render
        trajectory = [(p.translation[0], p.translation[1])
                      for p in (poses or {}).values()]
        image = render_map(grid2d, landmarks, discarded, trajectory,
                           params.scale, params.tick_length)
        ensure_dir(self.out)
        await self.run(save_png, self.path(MAP_PNG), image)
        return image

    async def pipeline(self, dataset, backend=None):
        """map, semantics and aggregate in one go"""
        mapped = await self.map(dataset)
        observations = await self.semantics(dataset, mapped.poses, backend)
        landmarks, discarded = await self.aggregate(observations, mapped.grid2d)
        return mapped, observations, landmarks, discarded
