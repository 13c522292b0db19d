"""Pluggable line segmentation and transcription backends.

A segmenter returns line boxes (u0, v0, u1, v1) of a rectified grayscale
placard, top to bottom. A transcriber turns one binary line image into a
string, possibly empty.
"""
import json
import os
import threading
from collections import OrderedDict
from typing import NamedTuple, Optional

import numpy as np

from signmap import codematrix
from signmap.fs import read_file
from signmap.log import logger

MOCK          = "mock"
NULL          = "null"
EXTERNAL_FILE = "external-file"
BACKENDS = (MOCK, NULL, EXTERNAL_FILE)

class ReadContext(NamedTuple):
    keyframe_id: Optional[int] = None
    detection_index: Optional[int] = None
    line_index: Optional[int] = None
    threshold: Optional[int] = None


class NullLineSegmenter:
    """The whole image is one line"""

    def segment(self, rectified, context=None):
        h, w = np.asarray(rectified).shape[:2]
        return [(0, 0, w, h)]


class MarkerLineSegmenter:
    """Finds the code markers the simulator paints, one per text line"""

    def __init__(self, threshold=128):
        self.threshold = threshold

    def segment(self, rectified, context=None):
        image = np.asarray(rectified)
        h, w = image.shape[:2]
        black = (image < self.threshold).astype(np.uint8)

        boxes = []
        for x, y, bw, bh in codematrix.find_markers(black):
            pad_x = int(np.ceil(bw / codematrix.MARKER_W))
            pad_y = int(np.ceil(bh / codematrix.MARKER_H))
            boxes.append((max(x - pad_x, 0), max(y - pad_y, 0),
                          min(x + bw + pad_x, w), min(y + bh + pad_y, h)))
        boxes.sort(key=lambda b: (b[1], b[0]))
        return boxes


class NullTranscriber:

    def transcribe(self, binary, context=None):
        return ""


class CodeMatrixTranscriber:
    """Decodes the simulator's code markers"""

    def transcribe(self, binary, context=None):
        return codematrix.decode(binary)


class ExternalFileTranscriber:
    """Reads precomputed strings from transcripts/<kf_id>.json, a list with
    one entry (string or null) per raw detection of the keyframe"""

    def __init__(self, root, cache_size=32):
        self.root = root
        self.cache_size = cache_size
        # keyframe id -> strings, least recently used first
        self._cache = OrderedDict()
        self._lock = threading.Lock()

    def _read(self, kf_id):
        path = os.path.join(self.root, "transcripts", "{}.json".format(kf_id))
        data = read_file(path, "r")
        try:
            return json.loads(data) if data else []
        except ValueError:
            logger.warning("Invalid transcript file: " + path)
            return []

    def _load(self, kf_id):
        with self._lock:
            if kf_id in self._cache:
                self._cache.move_to_end(kf_id)
                return self._cache[kf_id]
        strings = self._read(kf_id)
        with self._lock:
            self._cache[kf_id] = strings
            while len(self._cache) > self.cache_size:
                self._cache.popitem(last=False)
        return strings

    def transcribe(self, binary, context=None):
        if context is None or context.keyframe_id is None:
            return ""
        strings = self._load(context.keyframe_id)
        index = context.detection_index
        if index is None or index >= len(strings) or strings[index] is None:
            return ""
        return str(strings[index])


def get_backends(name, root=None, threshold=128):
    """(segmenter, transcriber) pair for a backend name"""
    if name == MOCK:
        return MarkerLineSegmenter(threshold), CodeMatrixTranscriber()
    elif name == NULL:
        return NullLineSegmenter(), NullTranscriber()
    elif name == EXTERNAL_FILE:
        if root is None:
            raise ValueError("external-file backend needs a dataset root")
        return NullLineSegmenter(), ExternalFileTranscriber(root)
    raise ValueError("unknown backend: " + str(name))
