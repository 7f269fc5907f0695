"""Per-frame shape/pose recovery from dense image-space vertex observations.

Observations arrive as full 3D vertex sets in image coordinates (x, y in
pixels, z a relative depth), topology-aligned with the model.  Recovery
alternates pose estimation against the current shape with coefficient
projection of the de-posed observations, starting from the mean shape.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .camera import CameraPose, estimate_pose
from .errors import ConvergenceWarning, DimensionError, EmptyInputError
from .model import FaceShape, MorphableModel, ShapeCoefficients, assemble_shape, project_to_bases

MAX_ALTERNATIONS = 10
COEFF_TOL = 1e-6


@dataclass
class FrameObservation:
    """Dense image-space vertices for one frame."""

    vertices: np.ndarray
    frame_index: int = 0

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1)
        if self.vertices.size % 3 != 0:
            raise DimensionError("observation length must be a multiple of 3")
        if not np.all(np.isfinite(self.vertices)):
            raise DimensionError("observation contains non-finite values")
        if self.frame_index < 0:
            raise ValueError(f"frame_index must be >= 0, got {self.frame_index}")

    def points(self) -> np.ndarray:
        return self.vertices.reshape(-1, 3)


@dataclass
class FrameRecovery:
    """Recovered pose plus basis coefficients for one frame."""

    pose: CameraPose
    coeffs: ShapeCoefficients
    residual_rms: float
    frame_index: int = 0

    def __post_init__(self):
        if self.residual_rms < 0.0:
            raise ValueError("residual_rms must be >= 0")


def recover_frame(model: MorphableModel, obs: FrameObservation) -> FrameRecovery:
    """Alternate pose estimation and coefficient projection for one frame.

    Each round fits the camera against the current shape estimate, maps
    the observations back to model space under that camera, and projects
    them onto the bases.  Iteration stops when the coefficient vector
    moves by less than 1e-6 (relative to max(1, its norm)) or after
    10 rounds, in which case the best iterate is returned and a
    :class:`ConvergenceWarning` is raised.
    """
    obs_pts = obs.points()
    if obs_pts.shape[0] != model.vertex_count:
        raise DimensionError(
            f"observation has {obs_pts.shape[0]} vertices, model has {model.vertex_count}"
        )
    obs_xy = obs_pts[:, :2]
    obs_z = obs_pts[:, 2]

    coeffs = ShapeCoefficients.zeros(model.identity_dim, model.expression_dim)
    shape_pts = model.mean_shape.reshape(-1, 3)
    best: tuple[float, CameraPose, ShapeCoefficients] | None = None
    prev_rms = math.inf
    converged = False

    for _ in range(MAX_ALTERNATIONS):
        pose, rms = estimate_pose(shape_pts, obs_xy, depths=obs_z)
        # Alternation is a coordinate descent on the same residual, so it
        # must never increase it.
        assert rms <= prev_rms * (1.0 + 1e-9) + 1e-12, (rms, prev_rms)
        prev_rms = rms
        if best is None or rms < best[0]:
            best = (rms, pose, coeffs)

        deposed = _depose(obs_pts, pose, shape_pts)
        new_coeffs = project_to_bases(model, FaceShape(deposed.ravel()))
        old = np.concatenate([coeffs.identity, coeffs.expression])
        new = np.concatenate([new_coeffs.identity, new_coeffs.expression])
        coeffs = new_coeffs
        shape_pts = assemble_shape(model, coeffs).points()
        if np.linalg.norm(new - old) <= COEFF_TOL * max(1.0, np.linalg.norm(old)):
            converged = True
            break

    pose, rms = estimate_pose(shape_pts, obs_xy, depths=obs_z)
    if best is None or rms <= best[0]:
        best = (rms, pose, coeffs)
    if not converged:
        warnings.warn(
            f"coefficients did not settle within {MAX_ALTERNATIONS} rounds; "
            "returning best iterate",
            ConvergenceWarning,
        )
    rms, pose, coeffs = best
    return FrameRecovery(pose=pose, coeffs=coeffs, residual_rms=rms, frame_index=obs.frame_index)


def _depose(obs_pts: np.ndarray, pose: CameraPose, shape_pts: np.ndarray) -> np.ndarray:
    """Map image-space observations back to model space.

    The observation depth channel carries an arbitrary offset; the best
    constant offset against the current shape is removed before applying
    the inverse similarity, otherwise it would leak into the coefficients.
    """
    rot = pose.rotation
    tz = float((obs_pts[:, 2] - pose.scale * (shape_pts @ rot[2])).mean())
    t3 = np.array([pose.tx, pose.ty, tz])
    return (obs_pts - t3) @ rot / pose.scale


def average_identity(recoveries) -> np.ndarray:
    """Arithmetic mean of the identity vectors across frames."""
    recoveries = list(recoveries)
    if not recoveries:
        raise EmptyInputError("no recoveries to average")
    dims = {r.coeffs.identity.size for r in recoveries}
    if len(dims) != 1:
        raise DimensionError(f"inconsistent identity dimensions: {sorted(dims)}")
    stacked = np.stack([r.coeffs.identity for r in recoveries])
    return stacked.mean(axis=0)
