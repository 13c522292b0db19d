"""Annotated raster of the 2D map: trajectory, landmarks with heading ticks
and discarded observations."""
import math

import cv2
import numpy as np

TRAJECTORY_COLOR = (0, 0, 255)
LANDMARK_COLOR = (255, 0, 0)
DISCARDED_COLOR = (0, 165, 255)

def _pixel(grid2d, x, y, scale):
    col, row = grid2d.to_pixel(x, y, scale)
    return int(math.floor(col)), int(math.floor(row))

def render_map(grid2d, landmarks=(), discarded=(), trajectory=(), scale=2,
               tick_length=0.3):
    """BGR image of the map at `scale` pixels per cell"""
    gray = grid2d.image()
    gray = cv2.resize(gray, (gray.shape[1] * scale, gray.shape[0] * scale),
                      interpolation=cv2.INTER_NEAREST)
    image = cv2.cvtColor(gray, cv2.COLOR_GRAY2BGR)

    path = np.array([_pixel(grid2d, x, y, scale) for x, y in trajectory],
                    dtype=np.int32)
    if len(path) > 1:
        cv2.polylines(image, [path.reshape(-1, 1, 2)], False, TRAJECTORY_COLOR,
                      1)

    radius = max(scale, 2)
    for o in discarded:
        cv2.circle(image, _pixel(grid2d, o.position[0], o.position[1], scale),
                   radius, DISCARDED_COLOR, -1)

    for lm in landmarks:
        x, y = lm.position[0], lm.position[1]
        tip = _pixel(grid2d, x + tick_length * math.cos(lm.theta),
                     y + tick_length * math.sin(lm.theta), scale)
        center = _pixel(grid2d, x, y, scale)
        cv2.line(image, center, tip, LANDMARK_COLOR, 1)
        cv2.circle(image, center, radius, LANDMARK_COLOR, -1)
    return image

def save_png(path, image):
    if not cv2.imwrite(path, image):
        raise OSError("cannot write image: " + path)
