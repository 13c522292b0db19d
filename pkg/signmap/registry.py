from collections import OrderedDict

from signmap.geometry import Pose3, compose

class UnanchoredOldMap(Exception):
    pass


class Keyframe:
    """One localized RGB-D sample; pose is submap frame <- camera"""

    __slots__ = ("id", "map_id", "pose", "detections")

    def __init__(self, id, map_id, pose, detections=None):
        self.id = int(id)
        self.map_id = int(map_id)
        self.pose = pose
        self.detections = list(detections or [])

    def __repr__(self):
        return "Keyframe(id={}, map_id={}, detections={})".format(
                self.id, self.map_id, len(self.detections))


class LossEvent:
    """Tracking loss between the last keyframe of one submap and the origin
    keyframe of the next"""

    __slots__ = ("last_id", "origin_id", "status", "rms", "iterations",
                 "reason")

    PENDING  = "pending"
    MERGED   = "merged"
    UNMERGED = "unmerged"

    def __init__(self, last_id, origin_id):
        self.last_id = int(last_id)
        self.origin_id = int(origin_id)
        self.status = LossEvent.PENDING
        self.rms = None
        self.iterations = None
        self.reason = ""

    def copy(self):
        event = LossEvent(self.last_id, self.origin_id)
        event.status, event.rms = self.status, self.rms
        event.iterations, event.reason = self.iterations, self.reason
        return event

    def as_dict(self):
        return {"last_keyframe_id": self.last_id,
                "origin_keyframe_id": self.origin_id,
                "status": self.status, "rms": self.rms,
                "iterations": self.iterations, "reason": self.reason}

    def __repr__(self):
        return "LossEvent({} -> {}, {})".format(self.last_id, self.origin_id,
                                                self.status)


class MapRegistry:
    """Submaps keyed by map id, their anchors (global <- submap) and the
    tracking-loss events that separate them"""

    def __init__(self):
        self._KEYFRAMES = OrderedDict()
        self._SUBMAPS = {}
        self._ANCHORS = {}
        self.loss_events = []

    def __str__(self):
        return "MapRegistry(submaps={}, keyframes={}, anchored={})".format(
            sorted(self._SUBMAPS), len(self._KEYFRAMES), sorted(self._ANCHORS))

    def __len__(self):
        return len(self._KEYFRAMES)

    def __contains__(self, kf_id):
        return kf_id in self._KEYFRAMES

    def __getitem__(self, kf_id):
        return self._KEYFRAMES[kf_id]

    def add(self, kf):
        if kf.id in self._KEYFRAMES:
            raise ValueError("Keyframe already exists: " + str(kf.id))

        self._KEYFRAMES[kf.id] = kf
        self._SUBMAPS.setdefault(kf.map_id, []).append(kf)
        self._reset_root()

    def update(self, keyframes):
        for kf in keyframes: self.add(kf)

    def add_loss(self, last_id, origin_id):
        if last_id not in self._KEYFRAMES or origin_id not in self._KEYFRAMES:
            raise ValueError("Loss event references unknown keyframe: "
                             "{} {}".format(last_id, origin_id))
        self.loss_events.append(LossEvent(last_id, origin_id))

    def _reset_root(self):
        """Submap 0 (the lowest id) is the global frame"""
        root = min(self._SUBMAPS)
        if len(self._ANCHORS) <= 1:
            self._ANCHORS = {root: Pose3.identity()}

    def keys(self):
        return self._KEYFRAMES.keys()

    def values(self):
        return self._KEYFRAMES.values()

    @property
    def submaps(self):
        return {m: list(kfs) for m, kfs in sorted(self._SUBMAPS.items())}

    @property
    def anchors(self):
        return dict(self._ANCHORS)

    def map_of(self, kf_id):
        return self._KEYFRAMES[kf_id].map_id

    def anchor(self, map_id):
        return self._ANCHORS.get(map_id)

    def is_anchored(self, map_id):
        return map_id in self._ANCHORS

    def set_anchor(self, map_id, pose):
        if map_id not in self._SUBMAPS:
            raise KeyError("No such submap: " + str(map_id))
        self._ANCHORS[map_id] = pose

    def unanchored(self):
        return [m for m in sorted(self._SUBMAPS) if m not in self._ANCHORS]

    def global_pose(self, kf_id):
        """global <- camera, or None when the submap is not anchored"""
        kf = self._KEYFRAMES[kf_id]
        anchor = self._ANCHORS.get(kf.map_id)
        if anchor is None:
            return None
        return compose(anchor, kf.pose)

    def global_poses(self):
        """Ordered {kf_id: global pose} for every anchored keyframe"""
        poses = OrderedDict()
        for kf_id in sorted(self._KEYFRAMES):
            pose = self.global_pose(kf_id)
            if pose is not None:
                poses[kf_id] = pose
        return poses

    def copy(self):
        """Shallow copy; keyframes are shared, anchors and events are not"""
        other = MapRegistry()
        other._KEYFRAMES = OrderedDict(self._KEYFRAMES)
        other._SUBMAPS = {m: list(kfs) for m, kfs in self._SUBMAPS.items()}
        other._ANCHORS = dict(self._ANCHORS)
        other.loss_events = [e.copy() for e in self.loss_events]
        return other
