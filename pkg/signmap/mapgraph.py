"""Submap merging after tracking loss: ICP between the last localized frame
of the old submap and the origin frame of the new one."""
from typing import Literal, NamedTuple, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.spatial import cKDTree
from scipy.spatial.transform import Rotation

from signmap.geometry import (EmptyCloud, Pose3, backproject, compose,
                              inverse)
from signmap.log import logger
from signmap.registry import LossEvent, UnanchoredOldMap

MIN_POINTS = 10
# smallest covariance eigenvalue over the sum, above it a point is no plane
PLANAR_CURVATURE = 0.01

ICP   = "icp"
SEED  = "seed"
NONE  = "none"
MERGE_STRATEGIES = (ICP, SEED, NONE)

POINT = "point"
PLANE = "plane"

class InsufficientPoints(Exception):
    pass

class NoCorrespondences(Exception):
    pass

class PoorAlignment(Exception):
    pass


class IcpParams(BaseModel):
    model_config = ConfigDict(extra="forbid")

    max_iterations: int = Field(50, gt=0)
    convergence_tol_m: float = Field(1e-4, gt=0)
    convergence_tol_rad: float = Field(1e-4, gt=0)
    max_correspondence_dist: float = Field(0.5, gt=0)
    subsample_voxel: float = Field(0.05, gt=0)
    metric: Literal["point", "plane"] = POINT
    # level i of n runs on 2**(n-1-i) times the voxel with the correspondence
    # distance halved per level
    levels: int = Field(1, ge=1, le=6)
    normal_neighbors: int = Field(10, ge=4)
    # alignments with a larger final rms are reported unmerged
    max_rms: Optional[float] = Field(None, gt=0)
    # weakest over strongest constrained direction of a plane fit
    min_constraint: Optional[float] = Field(None, gt=0, lt=1)


# what resolve_losses runs unless told otherwise
MERGE_ICP = IcpParams(metric=PLANE, levels=3, max_rms=0.02,
                      min_constraint=1e-3)
# camera motion between the last and the origin frame of a loss
ADJACENT_FRAMES = Pose3.identity()


class IcpResult(NamedTuple):
    pose: Pose3
    rms: float
    iterations: int
    # truncated cost per level, starting at each level's initial guess
    history: list
    # conditioning of the final plane fit, None for point-to-point
    constraint: Optional[float] = None


def _voxel_indices(points, voxel):
    keys = np.floor(points / voxel).astype(np.int64)
    _, first = np.unique(keys, axis=0, return_index=True)
    return np.sort(first)

def voxel_downsample(points, voxel):
    """Keep the first point falling in each voxel, in input order"""
    points = np.asarray(points, dtype=float)
    if len(points) == 0:
        return points
    return points[_voxel_indices(points, voxel)]

def estimate_normals(points, k=10):
    """Unit normal and planarity flag of every point from its k nearest
    neighbours"""
    points = np.asarray(points, dtype=float)
    k = min(k, len(points))
    _, idx = cKDTree(points).query(points, k=k)
    neighbours = points[idx]
    centered = neighbours - neighbours.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / k
    w, v = np.linalg.eigh(cov)
    curvature = w[:, 0] / np.maximum(w.sum(axis=1), 1e-18)
    return v[:, :, 0], curvature < PLANAR_CURVATURE

def best_fit_transform(source, target):
    """Least-squares rotation and translation taking source onto target
    (paired rows), via SVD of the cross-covariance"""
    mean_s = source.mean(axis=0)
    mean_t = target.mean(axis=0)
    h = (source - mean_s).T @ (target - mean_t)
    u, _, vt = np.linalg.svd(h)
    r = vt.T @ u.T
    if np.linalg.det(r) < 0:
        vt[2, :] *= -1
        r = vt.T @ u.T
    return r, mean_t - r @ mean_s

def _plane_system(source, target, normals):
    """Linearized point-to-plane rows about the source centroid, rotation
    columns scaled by the cloud radius"""
    center = source.mean(axis=0)
    p = source - center
    scale = max(float(np.sqrt(np.mean(np.sum(p ** 2, axis=1)))), 1e-9)
    a = np.hstack([np.cross(p, normals) / scale, normals])
    b = np.einsum("ij,ij->i", target - source, normals)
    return a, b, center, scale

def best_fit_plane_transform(source, target, normals):
    """Rotation and translation minimizing the point-to-plane distances of
    paired rows; unconstrained directions are left at zero"""
    a, b, center, scale = _plane_system(source, target, normals)
    x = np.linalg.lstsq(a, b, rcond=None)[0]
    r = Rotation.from_rotvec(x[:3] / scale).as_matrix()
    return r, center + x[3:] - r @ center

def plane_constraint(source, target, normals):
    """Smallest over largest eigenvalue of the plane fit's normal matrix"""
    if len(source) < 6:
        return 0.0
    a, _, _, _ = _plane_system(source, target, normals)
    w = np.linalg.eigvalsh(a.T @ a / len(a))
    return float(w[0] / w[-1]) if w[-1] > 0 else 0.0

def _rotation_angle(r):
    return float(np.arccos(np.clip((np.trace(r) - 1.0) / 2.0, -1.0, 1.0)))

def _schedule(params):
    n = params.levels
    return [(params.subsample_voxel * 2 ** (n - 1 - i),
             params.max_correspondence_dist / 2 ** i) for i in range(n)]

def icp_align(source, target, init=None, params=None):
    """Align the source cloud to the target cloud.

    Returns the pose mapping source points into the target frame, the rms
    residual over correspondences within the final correspondence distance,
    and the number of pose updates over all levels. The source is thinned
    with the level's voxel; the target is thinned on coarse levels only.
    The plane metric matches against planar target points and their normals.
    """
    params = params or IcpParams()
    init = init or Pose3.identity()
    plane = params.metric == PLANE

    source_points = np.asarray(source.points, dtype=float)
    target_points = np.asarray(target.points, dtype=float)
    src = voxel_downsample(source_points, params.subsample_voxel)
    if len(src) < MIN_POINTS or len(voxel_downsample(
            target_points, params.subsample_voxel)) < MIN_POINTS:
        raise InsufficientPoints("need {} points after subsampling, got "
                "{} and {}".format(MIN_POINTS, len(src), len(target_points)))

    if plane:
        all_normals, planar = estimate_normals(target_points,
                                               params.normal_neighbors)
    r, t = init.rotation_matrix, np.array(init.translation)
    history = []
    iterations = 0

    for level, (voxel, max_dist) in enumerate(_schedule(params)):
        src = voxel_downsample(source_points, voxel)
        keep = _voxel_indices(target_points, voxel) \
                if voxel > params.subsample_voxel \
                else np.arange(len(target_points))
        if plane:
            keep = keep[planar[keep]]
            normals = all_normals[keep]
        tgt = target_points[keep]
        if len(tgt) < 3:
            raise InsufficientPoints("{} usable target points".format(len(tgt)))

        tree = cKDTree(tgt)
        steps = 0
        converged = False
        while True:
            moved = src @ r.T + t
            dist, idx = tree.query(moved, distance_upper_bound=max_dist)
            inliers = np.isfinite(dist)
            pairs = idx[inliers]
            if plane:
                residual = np.abs(np.einsum("ij,ij->i",
                    moved[inliers] - tgt[pairs], normals[pairs]))
            else:
                residual = dist[inliers]
            cost = np.full(len(src), max_dist)
            cost[inliers] = np.minimum(residual, max_dist)
            history.append(float(np.sqrt(np.mean(cost ** 2))))

            if level == 0 and steps == 0 and not inliers.any():
                raise NoCorrespondences("no pairs within {} m".format(max_dist))
            if converged or steps >= params.max_iterations \
                    or inliers.sum() < (6 if plane else 3):
                break

            if plane:
                dr, dt = best_fit_plane_transform(moved[inliers], tgt[pairs],
                                                  normals[pairs])
            else:
                dr, dt = best_fit_transform(moved[inliers], tgt[pairs])
            r, t = dr @ r, dr @ t + dt
            steps += 1
            converged = np.linalg.norm(dt) < params.convergence_tol_m and \
                    _rotation_angle(dr) < params.convergence_tol_rad
        iterations += steps

    rms = float(np.sqrt(np.mean(residual ** 2))) if inliers.any() \
            else float("inf")
    constraint = plane_constraint(moved[inliers], tgt[pairs],
                                  normals[pairs]) if plane else None
    logger.debug("icp: {} iterations, rms {:.5f} m, {} inliers".format(
        iterations, rms, int(inliers.sum())))
    return IcpResult(Pose3.from_matrix(r, t), rms, iterations, history,
                     constraint)

def check_alignment(result, params):
    """Raise PoorAlignment when a fit misses the acceptance limits"""
    if params.max_rms is not None and result.rms > params.max_rms:
        raise PoorAlignment("rms {:.4f} m above {} m".format(result.rms,
                                                              params.max_rms))
    if params.min_constraint is not None and result.constraint is not None \
            and result.constraint < params.min_constraint:
        raise PoorAlignment("scene constrains the fit too weakly "
                "({:.2e} below {})".format(result.constraint,
                                          params.min_constraint))

def merge_maps(registry, old_map, new_map, alignment):
    """Anchor new_map in the global frame through old_map.

    alignment maps the new submap frame into the old submap frame. Local
    keyframe poses are left untouched.
    """
    anchor = registry.anchor(old_map)
    if anchor is None:
        raise UnanchoredOldMap("submap {} has no anchor".format(old_map))

    merged = registry.copy()
    merged.set_anchor(new_map, compose(anchor, alignment))
    logger.debug("anchored submap {} through submap {}".format(new_map,
                                                               old_map))
    return merged

def _seed_alignment(last_kf, origin_kf, camera_delta):
    """old submap <- new submap, given last camera <- origin camera"""
    return compose(compose(last_kf.pose, camera_delta), inverse(origin_kf.pose))

def resolve_losses(registry, dataset, params=None, strategy=ICP):
    """Merge submaps across every loss event, in order.

    dataset must offer `intrinsics` and `depth(kf_id)`. ICP starts from the
    adjacent-frame seed: the camera did not move between the two frames.
    Events that cannot be aligned, or whose fit fails `check_alignment`, are
    marked unmerged and their submaps stay unanchored.
    """
    params = params or MERGE_ICP
    if strategy not in MERGE_STRATEGIES:
        raise ValueError("unknown merge strategy: " + str(strategy))

    registry = registry.copy()
    if strategy == NONE:
        for event in registry.loss_events:
            event.status, event.reason = LossEvent.UNMERGED, "merging disabled"
        return registry

    events = registry.loss_events
    for event in events:
        last_kf, origin_kf = registry[event.last_id], registry[event.origin_id]
        old_map, new_map = last_kf.map_id, origin_kf.map_id

        if old_map == new_map or registry.is_anchored(new_map):
            event.status = LossEvent.UNMERGED
            event.reason = "submap {} is already anchored".format(new_map)
            logger.warning("loss event {} -> {}: {}".format(
                event.last_id, event.origin_id, event.reason))
            continue

        try:
            if strategy == ICP:
                target = backproject(dataset.depth(event.last_id),
                                     dataset.intrinsics)
                source = backproject(dataset.depth(event.origin_id),
                                     dataset.intrinsics)
                result = icp_align(source, target, ADJACENT_FRAMES, params)
                event.rms, event.iterations = result.rms, result.iterations
                check_alignment(result, params)
                delta = result.pose
            else:
                delta = Pose3.identity()

            registry = merge_maps(registry, old_map, new_map,
                    _seed_alignment(last_kf, origin_kf, delta))
        except (EmptyCloud, InsufficientPoints, NoCorrespondences,
                PoorAlignment, UnanchoredOldMap) as e:
            event.status, event.reason = LossEvent.UNMERGED, str(e)
            logger.warning("loss event {} -> {} unmerged: {}".format(
                event.last_id, event.origin_id, e))
        else:
            event.status = LossEvent.MERGED
            logger.info("merged submap {} into submap {} (rms {})".format(
                new_map, old_map, event.rms))

    # merge_maps copies the registry, so re-attach the updated events
    registry.loss_events = events
    return registry
