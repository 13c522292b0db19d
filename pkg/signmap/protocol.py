"""Text and JSON record formats of the dataset layout and stage outputs."""
import csv
import io
import json
import math

from signmap.geometry import Pose3

class ValidationError(Exception):
    pass


class Detection:
    """Detector output in depth-image pixels; bbox is [u0, v0, u1, v1) """

    __slots__ = ("bbox", "confidence")

    def __init__(self, bbox, confidence):
        self.bbox = tuple(int(x) for x in bbox)
        self.confidence = float(confidence)

    def __repr__(self):
        return "Detection(bbox={}, confidence={})".format(list(self.bbox),
                                                         self.confidence)

    def __eq__(self, other):
        return isinstance(other, Detection) and self.bbox == other.bbox and \
                self.confidence == other.confidence

    def as_dict(self):
        return {"bbox": list(self.bbox), "confidence": self.confidence}

    def check(self, width, height):
        """Raise ValidationError unless the record fits a width x height image"""
        u0, v0, u1, v1 = self.bbox
        if not (0 <= u0 < u1 <= width and 0 <= v0 < v1 <= height):
            raise ValidationError("bbox {} outside {}x{} image".format(
                list(self.bbox), width, height))
        if not 0.0 <= self.confidence <= 1.0:
            raise ValidationError("confidence out of range: " +
                                  str(self.confidence))
        return self

    @classmethod
    def parse(cls, record, width, height):
        try:
            bbox, confidence = record["bbox"], record["confidence"]
            if len(bbox) != 4:
                raise ValueError("bbox needs four values")
            det = cls(bbox, confidence)
        except (KeyError, TypeError, ValueError) as e:
            raise ValidationError("invalid detection record: " + str(e))
        return det.check(width, height)


def parse_detections(data, width, height):
    """Detection list from the JSON text of detections/<kf_id>.json"""
    try:
        records = json.loads(data) if data else []
    except ValueError as e:
        raise ValidationError("detections are not valid JSON: " + str(e))
    if not isinstance(records, list):
        raise ValidationError("detections must be a JSON list")
    return [Detection.parse(r, width, height) for r in records]

def format_detections(detections):
    return json.dumps([d.as_dict() for d in detections])


def _pose_fields(fields, line):
    try:
        values = [float(x) for x in fields]
    except ValueError:
        raise ValidationError("invalid number in line: " + line)
    if not all(math.isfinite(v) for v in values):
        raise ValidationError("non-finite value in line: " + line)
    try:
        return Pose3(values[3:7], values[0:3])
    except ValueError as e:
        raise ValidationError(str(e) + ": " + line)

def _lines(text):
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            yield line

def _format_pose(pose):
    return " ".join("{:.9f}".format(v) for v in
                    list(pose.translation) + list(pose.rotation))

def parse_trajectory(text):
    """[(kf_id, map_id, pose)] from "kf_id map_id tx ty tz qx qy qz qw" lines"""
    keyframes = []
    for line in _lines(text):
        fields = line.split()
        if len(fields) != 9:
            raise ValidationError("trajectory line needs 9 fields: " + line)
        try:
            kf_id, map_id = int(fields[0]), int(fields[1])
        except ValueError:
            raise ValidationError("invalid keyframe or map id: " + line)
        keyframes.append((kf_id, map_id, _pose_fields(fields[2:], line)))
    return keyframes

def format_trajectory(keyframes):
    return "".join("{} {} {}\n".format(kf_id, map_id, _format_pose(pose))
                   for kf_id, map_id, pose in keyframes)

def parse_poses(text):
    """{kf_id: pose} from "kf_id tx ty tz qx qy qz qw" lines"""
    poses = {}
    for line in _lines(text):
        fields = line.split()
        if len(fields) != 8:
            raise ValidationError("pose line needs 8 fields: " + line)
        try:
            kf_id = int(fields[0])
        except ValueError:
            raise ValidationError("invalid keyframe id: " + line)
        poses[kf_id] = _pose_fields(fields[1:], line)
    return poses

def format_poses(poses):
    return "".join("{} {}\n".format(kf_id, _format_pose(poses[kf_id]))
                   for kf_id in sorted(poses))

def parse_losses(text):
    """[(last_kf_id, origin_kf_id)]"""
    losses = []
    for line in _lines(text):
        fields = line.split()
        if len(fields) != 2:
            raise ValidationError("loss line needs 2 fields: " + line)
        try:
            losses.append((int(fields[0]), int(fields[1])))
        except ValueError:
            raise ValidationError("invalid keyframe id: " + line)
    return losses

def format_losses(losses):
    return "".join("{} {}\n".format(a, b) for a, b in losses)

def parse_correspondence(text):
    """[(landmark_id, reference_id)] from "landmark_id, reference_id" rows;
    a header row is skipped"""
    pairs = []
    for row in csv.reader(io.StringIO(text)):
        row = [x.strip() for x in row]
        if not row or not any(row) or row[0].startswith("#"):
            continue
        if len(row) != 2:
            raise ValidationError("correspondence row needs 2 fields: " +
                                  ",".join(row))
        try:
            pairs.append((int(row[0]), int(row[1])))
        except ValueError:
            if pairs:
                raise ValidationError("invalid correspondence row: " +
                                      ",".join(row))
    return pairs

def format_rows(columns, rows):
    """CSV text with a header row; floats keep full precision"""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([repr(v) if isinstance(v, float) else v
                         for v in (row[c] for c in columns)])
    return out.getvalue()
