"""Software rasterizer and semantic face-coordinate image rendering.

Pixels are sampled at their centers (u + 0.5, v + 0.5).  A triangle is
front-facing when its projected vertices have positive signed area
(counter-clockwise order); back faces and zero-area triangles are culled.
Pixel centers exactly on an edge belong to the triangle whose directed
edge is a top or left edge, so shared edges are owned by exactly one
triangle.  Depth is interpolated barycentrically; the front-most triangle
wins and exact depth ties go to the lower triangle index.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numba
import numpy as np

from .camera import CameraPose, project
from .errors import CorruptMaskError, DimensionError
from .model import FaceShape, NormalizedMeanFace

NONE_INDEX = -1
NONE_U32 = 0xFFFFFFFF


@dataclass
class VisibilityMask:
    """Per-pixel index of the front-most triangle (NONE_INDEX if empty)."""

    triangle_index: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.triangle_index = np.asarray(self.triangle_index, dtype=np.int32)
        if self.triangle_index.ndim != 2:
            raise DimensionError("triangle_index grid must be 2-D")

    @property
    def height(self) -> int:
        return self.triangle_index.shape[0]

    @property
    def width(self) -> int:
        return self.triangle_index.shape[1]

    def covered(self) -> np.ndarray:
        """Boolean grid of pixels hit by any triangle."""
        return self.triangle_index != NONE_INDEX


@dataclass
class NmfcImage:
    """RGB image whose facial pixels encode mean-face coordinates."""

    rgb: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.rgb = np.asarray(self.rgb, dtype=np.uint8)
        if self.rgb.ndim != 3 or self.rgb.shape[2] != 3:
            raise DimensionError("rgb must be H x W x 3")

    @property
    def height(self) -> int:
        return self.rgb.shape[0]

    @property
    def width(self) -> int:
        return self.rgb.shape[1]


@numba.njit(cache=True)
def _raster_kernel(pts, depth, tris, width, height, index_grid, zbuf):  # pragma: no cover
    for t in range(tris.shape[0]):
        i0 = tris[t, 0]
        i1 = tris[t, 1]
        i2 = tris[t, 2]
        ax, ay, za = pts[i0, 0], pts[i0, 1], depth[i0]
        bx, by, zb = pts[i1, 0], pts[i1, 1], depth[i1]
        cx, cy, zc = pts[i2, 0], pts[i2, 1], depth[i2]
        area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        if area <= 0.0:
            continue
        # bbox clamped in float space first so extreme coordinates cannot
        # overflow the int cast; coverage itself is decided by the edge
        # functions, the bbox only bounds the scan
        lo_x = min(2.0 + width, max(-2.0, min(ax, min(bx, cx)) - 0.5))
        hi_x = min(2.0 + width, max(-2.0, max(ax, max(bx, cx)) - 0.5))
        lo_y = min(2.0 + height, max(-2.0, min(ay, min(by, cy)) - 0.5))
        hi_y = min(2.0 + height, max(-2.0, max(ay, max(by, cy)) - 0.5))
        u0 = max(0, int(np.floor(lo_x)))
        u1 = min(width - 1, int(np.ceil(hi_x)))
        v0 = max(0, int(np.floor(lo_y)))
        v1 = min(height - 1, int(np.ceil(hi_y)))
        for v in range(v0, v1 + 1):
            py = v + 0.5
            for u in range(u0, u1 + 1):
                px = u + 0.5
                e_ab = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
                e_bc = (cx - bx) * (py - by) - (cy - by) * (px - bx)
                e_ca = (ax - cx) * (py - cy) - (ay - cy) * (px - cx)
                ok_ab = e_ab > 0.0 or (
                    e_ab == 0.0
                    and (by - ay < 0.0 or (by - ay == 0.0 and bx - ax > 0.0))
                )
                ok_bc = e_bc > 0.0 or (
                    e_bc == 0.0
                    and (cy - by < 0.0 or (cy - by == 0.0 and cx - bx > 0.0))
                )
                ok_ca = e_ca > 0.0 or (
                    e_ca == 0.0
                    and (ay - cy < 0.0 or (ay - cy == 0.0 and ax - cx > 0.0))
                )
                if ok_ab and ok_bc and ok_ca:
                    z = (e_bc * za + e_ca * zb + e_ab * zc) / area
                    if z > zbuf[v, u]:
                        zbuf[v, u] = z
                        index_grid[v, u] = t


def rasterize_visibility(
    pose: CameraPose,
    shape: FaceShape,
    triangles: np.ndarray,
    width: int,
    height: int,
) -> VisibilityMask:
    """Rasterize a posed shape into a triangle-index grid.

    Off-screen geometry simply yields NONE pixels; there is no clipping
    error path.
    """
    if width <= 0 or height <= 0:
        raise DimensionError(f"invalid raster size {width}x{height}")
    triangles = np.ascontiguousarray(np.asarray(triangles, dtype=np.int64).reshape(-1, 3))
    points, depth = project(pose, shape)
    if triangles.size and triangles.max() >= points.shape[0]:
        raise DimensionError("triangle index exceeds vertex count")
    index_grid = np.full((height, width), NONE_INDEX, dtype=np.int32)
    zbuf = np.full((height, width), -np.inf, dtype=np.float64)
    _raster_kernel(
        np.ascontiguousarray(points),
        np.ascontiguousarray(depth),
        triangles,
        width,
        height,
        index_grid,
        zbuf,
    )
    return VisibilityMask(index_grid)


def nmfc_color_table(nmf: NormalizedMeanFace, triangles: np.ndarray) -> np.ndarray:
    """(T, 3) uint8 color per triangle: its vertex-color centroid.

    Colors come from a fixed normalized mean face, so a given triangle
    receives the same color in every frame and pose.  Rounding is
    half-away-from-zero.
    """
    triangles = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    colors = nmf.colors.reshape(-1, 3)
    if triangles.size and triangles.max() >= colors.shape[0]:
        raise DimensionError("triangle index exceeds color count")
    centroid = (colors[triangles[:, 0]] + colors[triangles[:, 1]] + colors[triangles[:, 2]]) / 3.0
    return np.floor(255.0 * centroid + 0.5).astype(np.uint8)


def render_nmfc(
    mask: VisibilityMask,
    nmf: NormalizedMeanFace,
    triangles: np.ndarray,
    color_table: np.ndarray | None = None,
) -> NmfcImage:
    """Color a visibility mask with per-triangle semantic colors.

    Pixels with no triangle are exactly black.  ``color_table`` may be
    passed to amortize the centroid lookup across frames.
    """
    if color_table is None:
        color_table = nmfc_color_table(nmf, triangles)
    t_count = color_table.shape[0]
    idx = mask.triangle_index
    if idx.size:
        bad = (idx != NONE_INDEX) & ((idx < 0) | (idx >= t_count))
        if bad.any():
            raise CorruptMaskError(
                f"mask references triangle {int(idx[bad][0])} outside [0, {t_count})"
            )
    rgb = np.zeros((mask.height, mask.width, 3), dtype=np.uint8)
    covered = idx != NONE_INDEX
    rgb[covered] = color_table[idx[covered]]
    return NmfcImage(rgb)


def nmfc_facial_mask(image: NmfcImage) -> np.ndarray:
    """Boolean facial-area grid: true where any channel is nonzero."""
    return (image.rgb != 0).any(axis=2)
