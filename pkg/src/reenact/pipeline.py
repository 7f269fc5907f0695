"""End-to-end orchestration: ROI cropping, parameter routing, conditional
input generation, and the nearest-neighbor stand-in renderer.

The conditional input for a frame is the pair (semantic face image, eye
sketch).  Parameter routing decides, per reenactment mode, which stream
supplies expression, camera, and eye motion; identity always comes from
the target's sequence average so the rendered head keeps the target's
geometry.
"""

from __future__ import annotations

import enum
import os
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import (
    DimensionError,
    EmptyInputError,
    OutOfFrameError,
    TargetExhaustedError,
)
from .eyes import EyeSketchFrame, render_eye_sketch
from .model import MorphableModel, ShapeCoefficients, assemble_shape, normalized_mean_face
from .camera import CameraPose
from .nmfc import NmfcImage, nmfc_color_table, rasterize_visibility, render_nmfc
from .util import parallel_map
from . import streams

NN_PATCH = 32


@dataclass(frozen=True)
class BoundingBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        for name in ("x_min", "y_min", "x_max", "y_max"):
            object.__setattr__(self, name, float(getattr(self, name)))
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"degenerate box {self}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)


class ReenactmentMode(enum.Enum):
    SELF = "self"
    FACE = "face"
    HEAD = "head"


@dataclass
class RoutedFrame:
    """Per-frame conditioning parameters after mode routing."""

    coeffs: ShapeCoefficients
    pose: CameraPose
    eye_source: str  # "source" or "target"


@dataclass
class ConditionalInput:
    """Paired conditioning images for one frame."""

    nmfc: NmfcImage
    eye_sketch: EyeSketchFrame

    def __post_init__(self):
        if (self.nmfc.height, self.nmfc.width) != self.eye_sketch.rgb.shape[:2]:
            raise DimensionError("nmfc and eye sketch dimensions differ")


def average_bounding_box(
    boxes,
    frame_width: int | None = None,
    frame_height: int | None = None,
) -> BoundingBox:
    """Coordinate-wise mean box, squared to its max side, then clamped.

    Squaring keeps the fixed ROI compatible with the square crop target;
    clamping (applied only when frame dimensions are given) may truncate
    the square at the frame border.
    """
    boxes = list(boxes)
    if not boxes:
        raise EmptyInputError("no bounding boxes to average")
    arr = np.array(
        [[b.x_min, b.y_min, b.x_max, b.y_max] for b in boxes], dtype=np.float64
    )
    x_min, y_min, x_max, y_max = arr.mean(axis=0)
    side = max(x_max - x_min, y_max - y_min)
    cx = (x_min + x_max) / 2.0
    cy = (y_min + y_max) / 2.0
    x_min, x_max = cx - side / 2.0, cx + side / 2.0
    y_min, y_max = cy - side / 2.0, cy + side / 2.0
    if frame_width is not None:
        x_min = max(0.0, x_min)
        x_max = min(float(frame_width), x_max)
    if frame_height is not None:
        y_min = max(0.0, y_min)
        y_max = min(float(frame_height), y_max)
    return BoundingBox(x_min, y_min, x_max, y_max)


def crop_roi(frame: np.ndarray, box: BoundingBox, size: int = 256) -> np.ndarray:
    """Crop a box from a frame and resize to size x size.

    The box is rounded to whole pixels; indices outside the frame
    replicate the nearest edge pixel.  When the rounded box is already
    size x size and fully inside, the pixels are copied verbatim.  Raises
    :class:`OutOfFrameError` when the box misses the frame entirely.
    """
    frame = np.asarray(frame)
    if frame.ndim != 3 or frame.shape[2] != 3:
        raise DimensionError(f"expected H x W x 3 frame, got {frame.shape}")
    h, w = frame.shape[:2]
    x0 = int(np.floor(box.x_min + 0.5))
    x1 = int(np.floor(box.x_max + 0.5))
    y0 = int(np.floor(box.y_min + 0.5))
    y1 = int(np.floor(box.y_max + 0.5))
    if x1 <= x0:
        x1 = x0 + 1
    if y1 <= y0:
        y1 = y0 + 1
    if x1 <= 0 or x0 >= w or y1 <= 0 or y0 >= h:
        raise OutOfFrameError(f"box {box} does not overlap a {w}x{h} frame")
    cols = np.clip(np.arange(x0, x1), 0, w - 1)
    rows = np.clip(np.arange(y0, y1), 0, h - 1)
    patch = frame[np.ix_(rows, cols)]
    if patch.shape[0] == size and patch.shape[1] == size:
        return patch.copy()
    img = Image.fromarray(np.ascontiguousarray(patch, dtype=np.uint8), mode="RGB")
    return np.asarray(img.resize((size, size), Image.BILINEAR))


def route_parameters(
    mode: ReenactmentMode,
    source,
    target,
    target_avg_identity: np.ndarray,
) -> list[RoutedFrame]:
    """Select per-frame conditioning parameters for a reenactment mode.

    HEAD transfers the source's full motion (pose, expression, eyes) onto
    the target's average identity.  FACE keeps the target's own camera
    and eye streams, frame-aligned with the source expressions, and fails
    with :class:`TargetExhaustedError` if the target runs out of frames.
    SELF is HEAD with the source being the target's own footage.
    """
    source = list(source)
    target = list(target)
    if not source:
        raise EmptyInputError("empty source sequence")
    avg = np.asarray(target_avg_identity, dtype=np.float64).reshape(-1)

    routed = []
    if mode in (ReenactmentMode.HEAD, ReenactmentMode.SELF):
        for rec in source:
            routed.append(
                RoutedFrame(
                    coeffs=ShapeCoefficients(avg, rec.coeffs.expression),
                    pose=rec.pose,
                    eye_source="source",
                )
            )
    elif mode is ReenactmentMode.FACE:
        if len(target) < len(source):
            raise TargetExhaustedError(
                f"target has {len(target)} frames for {len(source)} source frames"
            )
        for rec, tgt in zip(source, target):
            routed.append(
                RoutedFrame(
                    coeffs=ShapeCoefficients(avg, rec.coeffs.expression),
                    pose=tgt.pose,
                    eye_source="target",
                )
            )
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return routed


def generate_conditional_input(
    model: MorphableModel,
    routed,
    eye_frames,
    size: int = 256,
    out_dir=None,
) -> list[ConditionalInput]:
    """Render the per-frame (semantic image, eye sketch) pairs.

    Args:
        model: morphable model supplying topology and the color code.
        routed: per-frame :class:`RoutedFrame` parameters.
        eye_frames: per-frame (EyeLandmarks, PupilPair) tuples from the
            stream selected by the routing.
        size: square output resolution.
        out_dir: when given, the pairs are also written as
            ``nmfc_%06d.png`` / ``eyes_%06d.png`` streams.

    Frames are rendered independently (worker count follows H2H_THREADS)
    and collected in order, so output is deterministic.
    """
    routed = list(routed)
    eye_frames = list(eye_frames)
    if len(eye_frames) != len(routed):
        raise DimensionError(
            f"{len(routed)} routed frames vs {len(eye_frames)} eye frames"
        )
    nmf = normalized_mean_face(model)
    table = nmfc_color_table(nmf, model.triangles)

    def render_one(args) -> ConditionalInput:
        frame, (landmarks, pupils) = args
        shape = assemble_shape(model, frame.coeffs)
        mask = rasterize_visibility(frame.pose, shape, model.triangles, size, size)
        image = render_nmfc(mask, nmf, model.triangles, color_table=table)
        sketch = render_eye_sketch(landmarks, pupils, size=size)
        return ConditionalInput(nmfc=image, eye_sketch=sketch)

    pairs = parallel_map(render_one, zip(routed, eye_frames))
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        for i, ci in enumerate(pairs):
            streams.write_png(os.path.join(out_dir, streams.frame_name("nmfc", i)), ci.nmfc.rgb)
            streams.write_png(os.path.join(out_dir, streams.frame_name("eyes", i)), ci.eye_sketch.rgb)
    return pairs


def _box_downsample(rgb: np.ndarray, out: int = NN_PATCH) -> np.ndarray:
    """Mean-pool an image onto an out x out grid (bins may differ by 1px)."""
    h, w = rgb.shape[:2]
    out = min(out, h, w)  # images smaller than the grid pool per-pixel
    data = rgb.astype(np.float64)
    row_edges = (np.arange(out) * h) // out
    col_edges = (np.arange(out) * w) // out
    pooled = np.add.reduceat(np.add.reduceat(data, row_edges, axis=0), col_edges, axis=1)
    row_sizes = np.diff(np.append(row_edges, h))
    col_sizes = np.diff(np.append(col_edges, w))
    return pooled / (row_sizes[:, None, None] * col_sizes[None, :, None])


class NearestNeighborIndex:
    """Retrieval index over (conditioning image, frame) training pairs.

    Matching happens on box-downsampled conditioning images; ties go to
    the lowest training index.  This is a deliberately simple stand-in
    for a learned renderer so self-reenactment experiments can run
    end to end.
    """

    def __init__(self, train_pairs):
        train_pairs = list(train_pairs)
        if not train_pairs:
            raise EmptyInputError("empty training set")
        self.frames = [np.asarray(frame, dtype=np.uint8) for _, frame in train_pairs]
        keys = []
        shape = None
        for nmfc_img, _ in train_pairs:
            rgb = nmfc_img.rgb if isinstance(nmfc_img, NmfcImage) else np.asarray(nmfc_img)
            if shape is None:
                shape = rgb.shape
            elif rgb.shape != shape:
                raise DimensionError("training conditioning images differ in size")
            keys.append(_box_downsample(rgb).reshape(-1))
        self._keys = np.stack(keys)
        self._shape = shape

    def render(self, query) -> np.ndarray:
        rgb = query.rgb if isinstance(query, NmfcImage) else np.asarray(query)
        if rgb.shape != self._shape:
            raise DimensionError(
                f"query shape {rgb.shape} does not match training {self._shape}"
            )
        q = _box_downsample(rgb).reshape(-1)
        dists = ((self._keys - q) ** 2).sum(axis=1)
        return self.frames[int(np.argmin(dists))]


def nn_baseline_render(train_pairs, query) -> np.ndarray:
    """One-shot nearest-neighbor retrieval (see NearestNeighborIndex)."""
    return NearestNeighborIndex(train_pairs).render(query)
