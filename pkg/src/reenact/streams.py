"""File formats and frame-stream ingest/egress.

All numbered streams are zero-based ``prefix_%06d.ext`` files; a gap in
the numbering aborts the run so parallel streams cannot silently
desynchronize.
"""

from __future__ import annotations

import csv
import os
import re

import numpy as np
from PIL import Image

from .camera import CameraPose
from .errors import DimensionError, IngestError
from .model import ShapeCoefficients
from .nmfc import NONE_INDEX, NONE_U32, VisibilityMask
from .recon import FrameObservation, FrameRecovery
from .util import read_json, write_json


def frame_name(prefix: str, index: int, ext: str = "png") -> str:
    return f"{prefix}_{index:06d}.{ext}"


def write_png(path, rgb: np.ndarray) -> None:
    rgb = np.asarray(rgb, dtype=np.uint8)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise DimensionError(f"expected H x W x 3 image, got {rgb.shape}")
    Image.fromarray(rgb, mode="RGB").save(path, format="PNG")


def read_png(path) -> np.ndarray:
    try:
        with Image.open(path) as img:
            return np.asarray(img.convert("RGB"))
    except OSError as exc:
        raise IngestError(f"cannot read image {path}: {exc}") from exc


def list_stream(directory, prefix: str, ext: str = "png") -> list[str]:
    """Paths of a numbered stream, validated gap-free from zero."""
    pattern = re.compile(rf"^{re.escape(prefix)}_(\d{{6}})\.{re.escape(ext)}$")
    try:
        entries = sorted(os.listdir(directory))
    except OSError as exc:
        raise IngestError(f"cannot list {directory}: {exc}") from exc
    indexed = {}
    for name in entries:
        m = pattern.match(name)
        if m:
            indexed[int(m.group(1))] = os.path.join(directory, name)
    if not indexed:
        raise IngestError(f"no {prefix}_*.{ext} files in {directory}")
    expected = set(range(len(indexed)))
    if set(indexed) != expected:
        missing = sorted(expected - set(indexed))[:5]
        raise IngestError(
            f"{prefix} stream in {directory} is not gap-free from 0 "
            f"(first missing: {missing})"
        )
    return [indexed[i] for i in range(len(indexed))]


def read_frame_stream(directory, prefix: str = "frame") -> np.ndarray:
    """(T, H, W, 3) uint8 stack of a PNG stream; shapes must be uniform."""
    paths = list_stream(directory, prefix)
    frames = [read_png(p) for p in paths]
    shapes = {f.shape for f in frames}
    if len(shapes) != 1:
        raise IngestError(f"frame sizes differ in {directory}: {sorted(shapes)}")
    return np.stack(frames)


def write_frame_stream(directory, frames, prefix: str = "frame") -> list[str]:
    os.makedirs(directory, exist_ok=True)
    paths = []
    for i, frame in enumerate(frames):
        path = os.path.join(directory, frame_name(prefix, i))
        write_png(path, frame)
        paths.append(path)
    return paths


def write_mask_u32(path, mask: VisibilityMask) -> None:
    """Debug dump: little-endian uint32 grid, 0xFFFFFFFF for empty pixels."""
    grid = mask.triangle_index.astype(np.int64)
    out = np.where(grid == NONE_INDEX, NONE_U32, grid).astype("<u4")
    out.tofile(path)


def read_mask_u32(path, width: int, height: int) -> VisibilityMask:
    data = np.fromfile(path, dtype="<u4")
    if data.size != width * height:
        raise IngestError(f"{path}: expected {width * height} entries, found {data.size}")
    grid = data.astype(np.int64).reshape(height, width)
    grid[grid == NONE_U32] = NONE_INDEX
    return VisibilityMask(grid.astype(np.int32))


# --- dense observation sequences -------------------------------------------


def write_observations(directory, observations) -> None:
    observations = list(observations)
    os.makedirs(directory, exist_ok=True)
    if not observations:
        raise IngestError("refusing to write an empty observation directory")
    n3 = observations[0].vertices.size
    write_json(
        os.path.join(directory, "obs_manifest.json"),
        {"vertex_count": n3 // 3, "frame_count": len(observations)},
    )
    for i, obs in enumerate(observations):
        if obs.vertices.size != n3:
            raise DimensionError("observations have inconsistent lengths")
        obs.vertices.astype("<f4").tofile(os.path.join(directory, frame_name("frame", i, "f32")))


def read_observations(directory) -> list[FrameObservation]:
    manifest_path = os.path.join(directory, "obs_manifest.json")
    try:
        manifest = read_json(manifest_path)
    except (OSError, ValueError) as exc:
        raise IngestError(f"cannot read {manifest_path}: {exc}") from exc
    try:
        n = int(manifest["vertex_count"])
        count = int(manifest["frame_count"])
    except (KeyError, TypeError, ValueError) as exc:
        raise IngestError(f"bad observation manifest {manifest_path}: {exc}") from exc
    observations = []
    for i in range(count):
        path = os.path.join(directory, frame_name("frame", i, "f32"))
        if not os.path.exists(path):
            raise IngestError(f"observation stream has a gap at index {i} ({path})")
        data = np.fromfile(path, dtype="<f4")
        if data.size != 3 * n:
            raise IngestError(f"{path}: expected {3 * n} values, found {data.size}")
        observations.append(FrameObservation(data.astype(np.float64), frame_index=i))
    return observations


# --- recovery sequences -----------------------------------------------------


def write_recovery(path, recoveries) -> None:
    payload = [
        {
            "frame_index": rec.frame_index,
            "pose": rec.pose.to_dict(),
            "identity": rec.coeffs.identity,
            "expression": rec.coeffs.expression,
            "residual_rms": rec.residual_rms,
        }
        for rec in recoveries
    ]
    write_json(path, payload)


def read_recovery(path) -> list[FrameRecovery]:
    try:
        payload = read_json(path)
    except (OSError, ValueError) as exc:
        raise IngestError(f"cannot read recovery {path}: {exc}") from exc
    if not isinstance(payload, list):
        raise IngestError(f"recovery {path} must be a JSON array")
    recoveries = []
    for entry in payload:
        try:
            recoveries.append(
                FrameRecovery(
                    pose=CameraPose.from_dict(entry["pose"]),
                    coeffs=ShapeCoefficients(
                        np.asarray(entry["identity"], dtype=np.float64),
                        np.asarray(entry["expression"], dtype=np.float64),
                    ),
                    residual_rms=float(entry["residual_rms"]),
                    frame_index=int(entry["frame_index"]),
                )
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise IngestError(f"bad recovery entry in {path}: {exc}") from exc
    indices = [r.frame_index for r in recoveries]
    if indices != list(range(len(recoveries))):
        raise IngestError(
            f"recovery {path} frame indices are not 0..{len(recoveries) - 1}; "
            "refusing to desynchronize streams"
        )
    return recoveries


# --- CSV inputs ---------------------------------------------------------------


def _read_csv_rows(path, row_width: int, what: str) -> list[tuple[int, np.ndarray]]:
    rows = []
    try:
        with open(path, newline="") as fh:
            for lineno, row in enumerate(csv.reader(fh)):
                if not row:
                    continue
                try:
                    idx = int(float(row[0]))
                except ValueError:
                    if lineno == 0:
                        continue  # tolerate a header line
                    raise IngestError(f"{path}:{lineno + 1}: bad frame index {row[0]!r}")
                if len(row) != row_width + 1:
                    raise IngestError(
                        f"{path}:{lineno + 1}: expected {row_width + 1} columns, got {len(row)}"
                    )
                try:
                    values = np.array([float(v) for v in row[1:]], dtype=np.float64)
                except ValueError as exc:
                    raise IngestError(f"{path}:{lineno + 1}: {exc}") from exc
                rows.append((idx, values))
    except OSError as exc:
        raise IngestError(f"cannot read {what} CSV {path}: {exc}") from exc
    if not rows:
        raise IngestError(f"{what} CSV {path} is empty")
    indices = sorted(i for i, _ in rows)
    if indices != list(range(len(rows))):
        raise IngestError(f"{what} CSV {path} frame indices are not 0..{len(rows) - 1}")
    rows.sort(key=lambda r: r[0])
    return rows


def read_landmarks_csv(path) -> np.ndarray:
    """(T, 68, 2) landmark array from rows of frame_index + 136 floats."""
    rows = _read_csv_rows(path, 136, "landmark")
    return np.stack([values.reshape(68, 2) for _, values in rows])


def write_landmarks_csv(path, landmarks) -> None:
    landmarks = np.asarray(landmarks, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for i, frame in enumerate(landmarks):
            writer.writerow([i] + [f"{v:.17g}" for v in frame.reshape(-1)])


def read_boxes_csv(path) -> np.ndarray:
    """(T, 4) x_min, y_min, x_max, y_max rows ordered by frame index."""
    rows = _read_csv_rows(path, 4, "bounding box")
    return np.stack([values for _, values in rows])


# --- feature files -----------------------------------------------------------


def _sidecar_path(path) -> str:
    base, _ = os.path.splitext(str(path))
    return base + ".json"


def read_features(path) -> np.ndarray:
    """Row-major n x d float32 matrix with a {n, d} JSON sidecar."""
    sidecar = _sidecar_path(path)
    try:
        meta = read_json(sidecar)
        n = int(meta["n"])
        d = int(meta["d"])
    except (OSError, ValueError, KeyError, TypeError) as exc:
        raise IngestError(f"cannot read feature sidecar {sidecar}: {exc}") from exc
    try:
        data = np.fromfile(path, dtype="<f4")
    except OSError as exc:
        raise IngestError(f"cannot read features {path}: {exc}") from exc
    if data.size != n * d:
        raise IngestError(f"{path}: expected {n * d} values, found {data.size}")
    return data.astype(np.float64).reshape(n, d)


def write_features(path, features) -> None:
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 2:
        raise DimensionError("feature matrix must be 2-D")
    features.astype("<f4").tofile(path)
    write_json(_sidecar_path(path), {"n": features.shape[0], "d": features.shape[1]})
