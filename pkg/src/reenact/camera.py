"""Scaled-orthographic camera: projection, Euler angles, pose estimation.

Angle convention used everywhere in this package: intrinsic yaw about the
y axis, then pitch about the x axis, then roll about the z axis, applied
as ``R = Rz(roll) @ Rx(pitch) @ Ry(yaw)``.  Projection drops the rotated z
coordinate; the retained per-vertex depth is the rotated z expressed in
image units (scaled), with larger values nearer the camera.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateConfigError, DimensionError, GimbalLockWarning
from .model import FaceShape

GIMBAL_EPS = 1e-6


def wrap_angle(a: float) -> float:
    """Wrap an angle in radians into (-pi, pi]."""
    w = (a + math.pi) % (2.0 * math.pi) - math.pi
    if w == -math.pi:
        return math.pi
    return w


@dataclass(frozen=True)
class CameraPose:
    """Six-parameter pose: Euler rotation, 2D pixel translation, scale."""

    yaw: float
    pitch: float
    roll: float
    tx: float
    ty: float
    scale: float

    def __post_init__(self):
        values = (self.yaw, self.pitch, self.roll, self.tx, self.ty, self.scale)
        if not all(math.isfinite(v) for v in values):
            raise ValueError(f"pose parameters must be finite, got {values}")
        if self.scale <= 0.0:
            raise ValueError(f"scale must be positive, got {self.scale}")
        for name in ("yaw", "pitch", "roll"):
            v = getattr(self, name)
            if not (-math.pi < v <= math.pi):
                raise ValueError(f"{name}={v} outside (-pi, pi]")

    @property
    def rotation(self) -> np.ndarray:
        return compose_rotation(self.yaw, self.pitch, self.roll)

    @property
    def translation(self) -> np.ndarray:
        return np.array([self.tx, self.ty], dtype=np.float64)

    def to_dict(self) -> dict:
        return {
            "yaw": self.yaw,
            "pitch": self.pitch,
            "roll": self.roll,
            "tx": self.tx,
            "ty": self.ty,
            "scale": self.scale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CameraPose":
        return cls(d["yaw"], d["pitch"], d["roll"], d["tx"], d["ty"], d["scale"])

    @classmethod
    def identity(cls) -> "CameraPose":
        return cls(0.0, 0.0, 0.0, 0.0, 0.0, 1.0)


def compose_rotation(yaw: float, pitch: float, roll: float) -> np.ndarray:
    """Rotation matrix for the package's intrinsic y-x-z convention."""
    cy, sy = math.cos(yaw), math.sin(yaw)
    cp, sp = math.cos(pitch), math.sin(pitch)
    cr, sr = math.cos(roll), math.sin(roll)
    ry = np.array([[cy, 0.0, sy], [0.0, 1.0, 0.0], [-sy, 0.0, cy]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cp, -sp], [0.0, sp, cp]])
    rz = np.array([[cr, -sr, 0.0], [sr, cr, 0.0], [0.0, 0.0, 1.0]])
    return rz @ rx @ ry


def decompose_rotation(r: np.ndarray) -> tuple[float, float, float]:
    """Euler angles (yaw, pitch, roll) of a proper rotation matrix.

    At gimbal lock (|pitch| within 1e-6 of pi/2) yaw and roll are not
    separable; roll is pinned to zero, yaw absorbs the remaining turn, and
    a :class:`GimbalLockWarning` is emitted.
    """
    r = np.asarray(r, dtype=np.float64)
    if r.shape != (3, 3):
        raise DimensionError(f"rotation matrix must be 3x3, got {r.shape}")
    if np.linalg.norm(r.T @ r - np.eye(3)) > 1e-6:
        raise ValueError("matrix is not orthonormal")
    if np.linalg.det(r) < 0.0:
        raise ValueError("matrix is a reflection, not a rotation")

    sp = min(1.0, max(-1.0, r[2, 1]))
    pitch = math.asin(sp)
    if abs(abs(pitch) - math.pi / 2.0) < GIMBAL_EPS:
        warnings.warn("pitch at +/-90 degrees; roll pinned to 0", GimbalLockWarning)
        pitch = math.copysign(math.pi / 2.0, sp)
        yaw = math.atan2(r[0, 2], r[0, 0])
        roll = 0.0
    else:
        yaw = math.atan2(-r[2, 0], r[2, 2])
        roll = math.atan2(-r[0, 1], r[1, 1])
    return wrap_angle(yaw), wrap_angle(pitch), wrap_angle(roll)


def project(pose: CameraPose, shape: FaceShape) -> tuple[np.ndarray, np.ndarray]:
    """Project a shape to image space.

    Returns:
        points: (N, 2) pixel coordinates.
        depth: (N,) scaled camera-axis coordinate, larger = nearer.
    """
    rotated = shape.points() @ pose.rotation.T
    points = pose.scale * rotated[:, :2] + pose.translation
    depth = pose.scale * rotated[:, 2]
    return points, depth


def _similarity_fit(src: np.ndarray, dst: np.ndarray):
    """Least-squares similarity ``dst ~ s * R @ src + t`` for 3D point sets.

    Reflections are rejected by flipping the sign of the smallest singular
    direction of the cross-covariance when its determinant demands it.
    """
    n = src.shape[0]
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    src_c = src - mu_s
    dst_c = dst - mu_d
    cov = dst_c.T @ src_c / n
    u, d, vt = np.linalg.svd(cov)
    sign = np.ones(3)
    if np.linalg.det(u) * np.linalg.det(vt) < 0.0:
        sign[2] = -1.0
    rot = u @ np.diag(sign) @ vt
    var_src = (src_c**2).sum() / n
    if var_src == 0.0:
        raise DegenerateConfigError("model points are all identical")
    scale = float((d * sign).sum() / var_src)
    if scale <= 0.0:
        raise DegenerateConfigError("observations do not determine a positive scale")
    t = mu_d - scale * (rot @ mu_s)
    return rot, scale, t


def _require_full_rank(model_points: np.ndarray) -> None:
    centered = model_points - model_points.mean(axis=0)
    sv = np.linalg.svd(centered, compute_uv=False)
    if sv[0] == 0.0 or sv[2] < 1e-9 * sv[0]:
        raise DegenerateConfigError(
            "model points are collinear or coplanar; pose is not recoverable"
        )


def estimate_pose(
    model_points: np.ndarray,
    observed_points: np.ndarray,
    depths: np.ndarray | None = None,
) -> tuple[CameraPose, float]:
    """Fit a scaled-orthographic pose to 2D-3D correspondences.

    With per-vertex ``depths`` the observations form image-space 3D points
    and a full similarity fit is solved in closed form (the depth
    translation is discarded from the returned pose).  Without depths the
    missing z is re-estimated from the current pose and the similarity fit
    re-run until the image-plane residual stops improving.

    Args:
        model_points: (N, 3) model-space points, N >= 4, non-coplanar.
        observed_points: (N, 2) pixel observations.
        depths: optional (N,) image-space depths, larger = nearer.

    Returns:
        (pose, residual_rms) where residual_rms is the root-mean-square of
        the residual coordinates (x, y, and depth when fitted, with the
        depth offset removed internally), in pixels.
    """
    model_points = np.asarray(model_points, dtype=np.float64).reshape(-1, 3)
    observed_points = np.asarray(observed_points, dtype=np.float64).reshape(-1, 2)
    if model_points.shape[0] != observed_points.shape[0]:
        raise DimensionError(
            f"{model_points.shape[0]} model points vs "
            f"{observed_points.shape[0]} observations"
        )
    if model_points.shape[0] < 4:
        raise DegenerateConfigError("need at least 4 correspondences")
    _require_full_rank(model_points)

    if depths is not None:
        depths = np.asarray(depths, dtype=np.float64).reshape(-1)
        if depths.size != model_points.shape[0]:
            raise DimensionError("depths length does not match points")
        obs3 = np.hstack([observed_points, depths[:, None]])
        rot, scale, t3 = _similarity_fit(model_points, obs3)
        resid = obs3 - (scale * (model_points @ rot.T) + t3)
        rms = math.sqrt(float((resid**2).mean()))
        return _pose_from(rot, scale, t3), rms

    # No depth channel: alternate between hallucinating z from the current
    # pose and re-solving the similarity; each round cannot increase the
    # image-plane error.  Convergence is geometric.
    rot, scale, t2 = _planar_init(model_points, observed_points)
    t3 = np.array([t2[0], t2[1], 0.0])
    prev = None
    err = math.inf
    resid2 = observed_points
    for _ in range(200):
        z = scale * (model_points @ rot[2]) + t3[2]
        obs3 = np.hstack([observed_points, z[:, None]])
        rot, scale, t3 = _similarity_fit(model_points, obs3)
        resid2 = observed_points - (scale * (model_points @ rot[:2].T) + t3[:2])
        err = float((resid2**2).sum())
        if prev is not None and prev - err <= 1e-16 * prev:
            break
        prev = err
    rms = math.sqrt(err / resid2.size)
    return _pose_from(rot, scale, t3), rms


def _planar_init(model_points: np.ndarray, observed_points: np.ndarray):
    """Closed-form starting pose from the 2x3 cross-covariance."""
    n = model_points.shape[0]
    mu_v = model_points.mean(axis=0)
    mu_q = observed_points.mean(axis=0)
    vc = model_points - mu_v
    qc = observed_points - mu_q
    cov = qc.T @ vc / n
    u, _, vt = np.linalg.svd(cov)
    upper = u @ vt[:2]
    rot = np.vstack([upper, np.cross(upper[0], upper[1])])
    proj = vc @ upper.T
    denom = float((proj**2).sum())
    if denom == 0.0:
        raise DegenerateConfigError("projected model points are degenerate")
    scale = float((qc * proj).sum() / denom)
    if scale <= 0.0:
        # only a starting value; the refinement loop fixes the magnitude
        scale = abs(scale) if scale != 0.0 else 1.0
    t2 = mu_q - scale * (upper @ mu_v)
    return rot, scale, t2


def _pose_from(rot: np.ndarray, scale: float, t3: np.ndarray) -> CameraPose:
    yaw, pitch, roll = decompose_rotation(rot)
    return CameraPose(yaw, pitch, roll, float(t3[0]), float(t3[1]), scale)
