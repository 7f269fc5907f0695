"""Pupil localization from eye landmarks and eye-sketch rendering.

Each eye is a six-point polygon taken from the standard 68-point facial
landmark layout (points 36-41 left eye, 42-47 right eye, zero-based).
The pupil is the intensity-weighted center of mass of the pixels inside
the polygon, weighting by inverse intensity (255 - gray) so dark pixels
dominate.  The sketch frame is black with white one-pixel eye outlines
and filled red pupil discs.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ClipWarning, DimensionError, SubPixelEyeWarning

LEFT_EYE = slice(36, 42)
RIGHT_EYE = slice(42, 48)
WHITE = (255, 255, 255)
RED = (255, 0, 0)
PUPIL_RADIUS_FRACTION = 0.15


def to_gray(rgb: np.ndarray) -> np.ndarray:
    """Rec.601 luma, rounded half-up to uint8."""
    rgb = np.asarray(rgb, dtype=np.float64)
    luma = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
    return np.floor(luma + 0.5).astype(np.uint8)


def _polygon_area(points: np.ndarray) -> float:
    x = points[:, 0]
    y = points[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _orient(p, q, r) -> float:
    return (q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0])


def _segments_cross(p1, p2, p3, p4) -> bool:
    d1 = _orient(p3, p4, p1)
    d2 = _orient(p3, p4, p2)
    d3 = _orient(p1, p2, p3)
    d4 = _orient(p1, p2, p4)
    return ((d1 > 0) != (d2 > 0)) and ((d3 > 0) != (d4 > 0)) and d1 != 0 and d2 != 0 and d3 != 0 and d4 != 0


def _is_simple(points: np.ndarray) -> bool:
    n = len(points)
    for i in range(n):
        a, b = points[i], points[(i + 1) % n]
        for j in range(i + 1, n):
            if j == i or (j + 1) % n == i or (i + 1) % n == j:
                continue
            c, d = points[j], points[(j + 1) % n]
            if _segments_cross(a, b, c, d):
                return False
    return True


def _validate_eye_polygon(points: np.ndarray, name: str) -> np.ndarray:
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if points.shape != (6, 2):
        raise DimensionError(f"{name} eye needs 6 points, got {points.shape}")
    if abs(_polygon_area(points)) == 0.0:
        raise ValueError(f"{name} eye polygon has zero area")
    if not _is_simple(points):
        raise ValueError(f"{name} eye polygon self-intersects")
    return points


@dataclass
class EyeLandmarks:
    """Six landmark points per eye, in pixels."""

    left: np.ndarray
    right: np.ndarray

    def __post_init__(self):
        self.left = _validate_eye_polygon(self.left, "left")
        self.right = _validate_eye_polygon(self.right, "right")

    @classmethod
    def from_68(cls, points68: np.ndarray) -> "EyeLandmarks":
        points68 = np.asarray(points68, dtype=np.float64).reshape(-1, 2)
        if points68.shape[0] != 68:
            raise DimensionError(f"expected 68 landmarks, got {points68.shape[0]}")
        return cls(points68[LEFT_EYE], points68[RIGHT_EYE])


@dataclass
class PupilPair:
    """Detected pupil position per eye, in pixels."""

    left: np.ndarray
    right: np.ndarray

    def __post_init__(self):
        self.left = np.asarray(self.left, dtype=np.float64).reshape(2)
        self.right = np.asarray(self.right, dtype=np.float64).reshape(2)


@dataclass
class EyeSketchFrame:
    """Black canvas with white eye outlines and red pupil discs."""

    rgb: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.rgb = np.asarray(self.rgb, dtype=np.uint8)


def _centers_in_polygon(cx: np.ndarray, cy: np.ndarray, poly: np.ndarray) -> np.ndarray:
    """Even-odd crossing test for a grid of points against a polygon."""
    inside = np.zeros(cx.shape, dtype=bool)
    n = poly.shape[0]
    j = n - 1
    with np.errstate(divide="ignore", invalid="ignore"):
        for i in range(n):
            xi, yi = poly[i]
            xj, yj = poly[j]
            crosses = (yi > cy) != (yj > cy)
            x_at = (xj - xi) * (cy - yi) / (yj - yi) + xi
            inside ^= crosses & (cx < x_at)
            j = i
    return inside


def detect_pupil(eye_polygon: np.ndarray, gray_frame: np.ndarray) -> np.ndarray:
    """Inverse-intensity center of mass inside an eye polygon.

    Args:
        eye_polygon: (6, 2) points in pixels, inside the frame, with
            positive area.
        gray_frame: (H, W) intensities in [0, 255].

    Returns:
        (2,) pupil position in pixels.  If the polygon covers no pixel
        center the vertex centroid is returned with a
        :class:`SubPixelEyeWarning`; if every covered pixel is pure white
        the unweighted centroid of the covered centers is used.
    """
    poly = np.asarray(eye_polygon, dtype=np.float64).reshape(-1, 2)
    if poly.shape != (6, 2):
        raise DimensionError(f"eye polygon needs 6 points, got {poly.shape}")
    gray = np.asarray(gray_frame, dtype=np.float64)
    if gray.ndim != 2:
        raise DimensionError("gray_frame must be 2-D")
    h, w = gray.shape
    if gray.size and (gray.min() < 0.0 or gray.max() > 255.0):
        raise ValueError("gray_frame values must lie in [0, 255]")
    if abs(_polygon_area(poly)) == 0.0:
        raise ValueError("eye polygon has zero area")
    if poly[:, 0].min() < 0 or poly[:, 0].max() > w or poly[:, 1].min() < 0 or poly[:, 1].max() > h:
        raise ValueError("eye polygon extends outside the frame")

    u0 = max(0, int(math.floor(poly[:, 0].min() - 0.5)))
    u1 = min(w - 1, int(math.ceil(poly[:, 0].max())))
    v0 = max(0, int(math.floor(poly[:, 1].min() - 0.5)))
    v1 = min(h - 1, int(math.ceil(poly[:, 1].max())))
    if u1 < u0 or v1 < v0:
        warnings.warn("eye polygon covers no pixel center", SubPixelEyeWarning)
        return poly.mean(axis=0)

    uu, vv = np.meshgrid(np.arange(u0, u1 + 1), np.arange(v0, v1 + 1))
    cx = uu + 0.5
    cy = vv + 0.5
    inside = _centers_in_polygon(cx, cy, poly)
    if not inside.any():
        warnings.warn("eye polygon covers no pixel center", SubPixelEyeWarning)
        return poly.mean(axis=0)

    px = cx[inside]
    py = cy[inside]
    weight = 255.0 - gray[vv[inside], uu[inside]]
    total = weight.sum()
    if total == 0.0:
        return np.array([px.mean(), py.mean()])
    return np.array([(weight * px).sum() / total, (weight * py).sum() / total])


def detect_pupils(landmarks: EyeLandmarks, gray_frame: np.ndarray) -> PupilPair:
    """Run :func:`detect_pupil` on both eyes."""
    return PupilPair(
        detect_pupil(landmarks.left, gray_frame),
        detect_pupil(landmarks.right, gray_frame),
    )


def _round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _draw_line(canvas: np.ndarray, x0: int, y0: int, x1: int, y1: int, color) -> None:
    # Integer Bresenham, all octants.
    dx = abs(x1 - x0)
    sx = 1 if x0 < x1 else -1
    dy = -abs(y1 - y0)
    sy = 1 if y0 < y1 else -1
    err = dx + dy
    while True:
        canvas[y0, x0] = color
        if x0 == x1 and y0 == y1:
            break
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy


def _draw_disc(canvas: np.ndarray, center: np.ndarray, radius: int, color) -> None:
    size_y, size_x = canvas.shape[:2]
    u0 = max(0, int(math.floor(center[0] - radius - 1.0)))
    u1 = min(size_x - 1, int(math.ceil(center[0] + radius)))
    v0 = max(0, int(math.floor(center[1] - radius - 1.0)))
    v1 = min(size_y - 1, int(math.ceil(center[1] + radius)))
    if u1 < u0 or v1 < v0:
        return
    uu, vv = np.meshgrid(np.arange(u0, u1 + 1), np.arange(v0, v1 + 1))
    hit = (uu + 0.5 - center[0]) ** 2 + (vv + 0.5 - center[1]) ** 2 <= radius * radius
    canvas[vv[hit], uu[hit]] = color


def _eye_width(points: np.ndarray) -> float:
    lo = points[int(np.argmin(points[:, 0]))]
    hi = points[int(np.argmax(points[:, 0]))]
    return float(np.hypot(hi[0] - lo[0], hi[1] - lo[1]))


def render_eye_sketch(landmarks: EyeLandmarks, pupils: PupilPair, size: int = 256) -> EyeSketchFrame:
    """Render the eye conditioning frame.

    White closed outlines connect each eye's landmarks in order; a filled
    red disc marks each pupil, drawn last so it paints over the outline.
    Disc radius is max(1, round(0.15 * eye width)) where eye width is the
    distance between the horizontally extreme landmarks.  Coordinates
    outside [0, size) are clipped with a :class:`ClipWarning`.  Output is
    byte-deterministic.
    """
    canvas = np.zeros((size, size, 3), dtype=np.uint8)
    all_coords = np.vstack([landmarks.left, landmarks.right, pupils.left, pupils.right])
    if all_coords.min() < 0.0 or all_coords.max() >= size:
        warnings.warn("eye coordinates outside the canvas were clipped", ClipWarning)

    for eye in (landmarks.left, landmarks.right):
        ipts = np.clip(np.floor(eye + 0.5).astype(np.int64), 0, size - 1)
        for i in range(6):
            x0, y0 = ipts[i]
            x1, y1 = ipts[(i + 1) % 6]
            _draw_line(canvas, int(x0), int(y0), int(x1), int(y1), WHITE)

    for eye, pupil in ((landmarks.left, pupils.left), (landmarks.right, pupils.right)):
        radius = max(1, _round_half_up(PUPIL_RADIUS_FRACTION * _eye_width(eye)))
        _draw_disc(canvas, pupil, radius, RED)

    return EyeSketchFrame(canvas)
