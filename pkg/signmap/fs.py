"""Dataset layout on disk.

    <root>/intrinsics.json
    <root>/trajectory.txt          kf_id map_id tx ty tz qx qy qz qw
    <root>/losses.txt              last_kf_id origin_kf_id
    <root>/depth/<kf_id>.pgm       16-bit raw depth
    <root>/color/<kf_id>.pgm       8-bit grayscale
    <root>/detections/<kf_id>.json
    <root>/groundtruth/            placards.json, trajectory.txt, world.json
"""
import json
import os
import pathlib

import cv2
import numpy as np
import pydantic

from signmap.geometry import CameraIntrinsics
from signmap.log import logger
from signmap.protocol import (ValidationError, format_detections,
                              format_losses, format_poses, format_trajectory,
                              parse_detections, parse_losses, parse_poses,
                              parse_trajectory)
from signmap.registry import Keyframe, MapRegistry

INTRINSICS = "intrinsics.json"
TRAJECTORY = "trajectory.txt"
LOSSES     = "losses.txt"
DEPTH      = "depth"
COLOR      = "color"
DETECTIONS = "detections"
GROUNDTRUTH = "groundtruth"

def get_config_path():
    return os.getenv("SIGNMAP_CONFIG")

def read_file(path, mode="rb"):
    if os.path.exists(path):
        with open(path, mode) as f:
            data = f.read()
        return data

def write_file(path, data, mode="wb"):
    with open(path, mode) as f: f.write(data)

def ensure_dir(path):
    pathlib.Path(path).mkdir(parents=True, exist_ok=True)
    return path

def read_pgm(path, depth=False):
    """Single-channel image; 16-bit for depth frames, 8-bit luminance
    otherwise"""
    if not os.path.exists(path):
        raise ValidationError("missing image file: " + path)
    image = cv2.imread(path, cv2.IMREAD_UNCHANGED)
    if image is None:
        raise ValidationError("cannot decode image file: " + path)
    if depth:
        if image.ndim != 2 or image.dtype != np.uint16:
            raise ValidationError("depth frame is not 16-bit single channel: "
                                  + path)
        return image
    if image.ndim == 3:
        image = cv2.cvtColor(image, cv2.COLOR_BGR2GRAY)
    if image.dtype != np.uint8:
        image = (image // 257).astype(np.uint8)
    return image

def write_pgm(path, image):
    if not cv2.imwrite(path, np.ascontiguousarray(image)):
        raise OSError("cannot write image: " + path)

def load_json(path):
    data = read_file(path, "r")
    if data is None:
        raise ValidationError("missing file: " + path)
    try:
        return json.loads(data)
    except ValueError as e:
        raise ValidationError("invalid JSON in {}: {}".format(path, e))

def save_json(path, obj):
    write_file(path, json.dumps(obj, indent=1) + "\n", "w")

def load_model(model, path):
    """Validate a JSON file against a pydantic model"""
    data = read_file(path, "r")
    if data is None:
        raise ValidationError("missing file: " + path)
    try:
        return model.model_validate_json(data)
    except pydantic.ValidationError as e:
        raise ValidationError("invalid {}: {}".format(path, e))

async def save_text(loop, path, text):
    """Write a text file to the disc"""
    await loop.run_in_executor(None, write_file, path, text, "w")


class MemoryFrames:
    def __init__(self):
        self.depth_frames = {}
        self.color_frames = {}

    def depth(self, kf_id):
        return self.depth_frames[kf_id]

    def color(self, kf_id):
        return self.color_frames.get(kf_id)


class DiskFrames:
    def __init__(self, root):
        self.root = root

    def depth(self, kf_id):
        return read_pgm(os.path.join(self.root, DEPTH, "{}.pgm".format(kf_id)),
                        depth=True)

    def color(self, kf_id):
        path = os.path.join(self.root, COLOR, "{}.pgm".format(kf_id))
        if not os.path.exists(path):
            return None
        return read_pgm(path)


class GroundTruth:
    """placards: [{x, y, z, theta_rad, label}]; trajectory: {kf_id: pose}"""

    def __init__(self, placards=None, trajectory=None, world=None,
                 correspondence=None):
        self.placards = list(placards or [])
        self.trajectory = dict(trajectory or {})
        self.world = world
        self.correspondence = correspondence


class Dataset:
    def __init__(self, intrinsics, registry, frames, groundtruth=None,
                 root=None):
        self.intrinsics = intrinsics
        self.registry = registry
        self.frames = frames
        self.groundtruth = groundtruth
        self.root = root

    def depth(self, kf_id):
        return self.frames.depth(kf_id)

    def color(self, kf_id):
        return self.frames.color(kf_id)

    def keyframes(self):
        return [self.registry[i] for i in sorted(self.registry.keys())]


def load_groundtruth(root):
    gt_dir = os.path.join(root, GROUNDTRUTH)
    if not os.path.isdir(gt_dir):
        return None

    placards_path = os.path.join(gt_dir, "placards.json")
    placards = load_json(placards_path) if os.path.exists(placards_path) \
            else []
    text = read_file(os.path.join(gt_dir, TRAJECTORY), "r")
    trajectory = parse_poses(text) if text else {}
    world_path = os.path.join(gt_dir, "world.json")
    world = load_json(world_path) if os.path.exists(world_path) else None
    corr = read_file(os.path.join(gt_dir, "correspondence.csv"), "r")
    return GroundTruth(placards, trajectory, world, corr)

def load_dataset(root):
    """Read and check a dataset directory; frames stay on disk"""
    if not os.path.isdir(root):
        raise ValidationError("dataset directory not found: " + root)

    k = load_model(CameraIntrinsics, os.path.join(root, INTRINSICS))

    traj_path = os.path.join(root, TRAJECTORY)
    text = read_file(traj_path, "r")
    if text is None:
        raise ValidationError("missing file: " + traj_path)
    try:
        entries = parse_trajectory(text)
    except ValidationError as e:
        raise ValidationError("{}: {}".format(traj_path, e))

    registry = MapRegistry()
    for kf_id, map_id, pose in entries:
        depth_path = os.path.join(root, DEPTH, "{}.pgm".format(kf_id))
        if not os.path.exists(depth_path):
            raise ValidationError("missing depth frame: " + depth_path)

        det_path = os.path.join(root, DETECTIONS, "{}.json".format(kf_id))
        try:
            detections = parse_detections(read_file(det_path, "r"),
                                          k.width, k.height)
        except ValidationError as e:
            raise ValidationError("{}: {}".format(det_path, e))
        try:
            registry.add(Keyframe(kf_id, map_id, pose, detections))
        except ValueError as e:
            raise ValidationError("{}: {}".format(traj_path, e))

    loss_path = os.path.join(root, LOSSES)
    text = read_file(loss_path, "r")
    try:
        for last_id, origin_id in parse_losses(text or ""):
            registry.add_loss(last_id, origin_id)
    except ValueError as e:
        raise ValidationError("{}: {}".format(loss_path, e))

    logger.info("Loaded dataset {}: {} keyframes, {} submaps, {} losses".format(
        root, len(registry), len(registry.submaps), len(registry.loss_events)))
    return Dataset(k, registry, DiskFrames(root), load_groundtruth(root), root)

def write_dataset(dataset, root):
    """Write a dataset in the layout above; output is byte-reproducible"""
    for sub in (DEPTH, COLOR, DETECTIONS):
        ensure_dir(os.path.join(root, sub))

    write_file(os.path.join(root, INTRINSICS),
               dataset.intrinsics.model_dump_json(indent=1) + "\n", "w")

    keyframes = dataset.keyframes()
    write_file(os.path.join(root, TRAJECTORY), format_trajectory(
        [(kf.id, kf.map_id, kf.pose) for kf in keyframes]), "w")
    write_file(os.path.join(root, LOSSES), format_losses(
        [(e.last_id, e.origin_id) for e in dataset.registry.loss_events]), "w")

    for kf in keyframes:
        write_pgm(os.path.join(root, DEPTH, "{}.pgm".format(kf.id)),
                  dataset.depth(kf.id))
        color = dataset.color(kf.id)
        if color is not None:
            write_pgm(os.path.join(root, COLOR, "{}.pgm".format(kf.id)), color)
        write_file(os.path.join(root, DETECTIONS, "{}.json".format(kf.id)),
                   format_detections(kf.detections) + "\n", "w")

    gt = dataset.groundtruth
    if gt is not None:
        gt_dir = ensure_dir(os.path.join(root, GROUNDTRUTH))
        save_json(os.path.join(gt_dir, "placards.json"), gt.placards)
        write_file(os.path.join(gt_dir, TRAJECTORY),
                   format_poses(gt.trajectory), "w")
        if gt.world is not None:
            save_json(os.path.join(gt_dir, "world.json"), gt.world)
        if gt.correspondence is not None:
            write_file(os.path.join(gt_dir, "correspondence.csv"),
                       gt.correspondence, "w")
    logger.info("Wrote dataset {} ({} keyframes)".format(root, len(keyframes)))
