"""Quantitative evaluation suite for real/generated sequence pairs.

Pixel metrics operate in 0-255 RGB space.  Parameter metrics consume the
recovery outputs; embedding metrics (FID, MMD^2) consume externally
extracted feature matrices.  Every metric is symmetric in its two
sequence arguments and zero on identical inputs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import CameraPose
from .errors import (
    DimensionError,
    EmptyMaskError,
    InvalidFeatureError,
)
from .recon import average_identity

FID_EIGENVALUE_CLIP = 1e-10
MMD_BANDWIDTH_FLOOR = 1e-12


@dataclass
class MetricReport:
    """Named scalar results; fields are None when not computed."""

    apd: float | None = None
    mapd: float | None = None
    aed: float | None = None
    ard_degrees: float | None = None
    dai: float | None = None
    aeld: float | None = None
    fid: float | None = None
    mmd2: float | None = None

    def to_dict(self) -> dict:
        return {
            "apd": self.apd,
            "mapd": self.mapd,
            "aed": self.aed,
            "ard_degrees": self.ard_degrees,
            "dai": self.dai,
            "aeld": self.aeld,
            "fid": self.fid,
            "mmd2": self.mmd2,
        }


def _as_sequence(frames) -> np.ndarray:
    arr = np.asarray(frames)
    if arr.ndim != 4 or arr.shape[3] != 3:
        raise DimensionError(f"expected T x H x W x 3 frames, got {arr.shape}")
    if arr.shape[0] == 0:
        raise DimensionError("empty frame sequence")
    return arr


def _pixel_distances(real, fake) -> np.ndarray:
    real = _as_sequence(real)
    fake = _as_sequence(fake)
    if real.shape != fake.shape:
        raise DimensionError(f"sequence shapes differ: {real.shape} vs {fake.shape}")
    diff = real.astype(np.float64) - fake.astype(np.float64)
    return np.sqrt((diff**2).sum(axis=3))


def apd(real, fake) -> float:
    """Mean per-pixel RGB Euclidean distance over all pixels and frames."""
    return float(_pixel_distances(real, fake).mean())


def mapd(real, fake, masks) -> float:
    """APD restricted to mask-true pixels, pooled over all frames."""
    dist = _pixel_distances(real, fake)
    masks = np.asarray(masks, dtype=bool)
    if masks.shape != dist.shape:
        raise DimensionError(f"mask shape {masks.shape} does not match frames {dist.shape}")
    count = int(masks.sum())
    if count == 0:
        raise EmptyMaskError("no pixel selected by any mask")
    return float(dist[masks].sum() / count)


def aed(real_coeffs, fake_coeffs) -> float:
    """Mean over frames of the L1 expression-coefficient distance."""
    real = np.asarray(real_coeffs, dtype=np.float64)
    fake = np.asarray(fake_coeffs, dtype=np.float64)
    if real.shape != fake.shape or real.ndim != 2:
        raise DimensionError(f"expression arrays differ: {real.shape} vs {fake.shape}")
    return float(np.abs(real - fake).sum(axis=1).mean())


def _wrap_degrees(d: np.ndarray) -> np.ndarray:
    return (d + 180.0) % 360.0 - 180.0


def ard(real_poses, fake_poses) -> float:
    """Mean absolute Euler-angle discrepancy in degrees.

    Per frame, the absolute yaw/pitch/roll differences (wrapped into
    (-180, 180]) are averaged; the result is the mean over frames.
    """
    real_poses = list(real_poses)
    fake_poses = list(fake_poses)
    if len(real_poses) != len(fake_poses):
        raise DimensionError(f"{len(real_poses)} poses vs {len(fake_poses)}")
    if not real_poses:
        raise DimensionError("empty pose sequences")

    def angles(p: CameraPose) -> np.ndarray:
        return np.degrees([p.yaw, p.pitch, p.roll])

    diffs = np.array([angles(a) - angles(b) for a, b in zip(real_poses, fake_poses)])
    return float(np.abs(_wrap_degrees(diffs)).mean())


def dai(real_recoveries, fake_recoveries) -> float:
    """L1 distance between the sequence-average identity vectors."""
    real_avg = average_identity(real_recoveries)
    fake_avg = average_identity(fake_recoveries)
    if real_avg.shape != fake_avg.shape:
        raise DimensionError(
            f"identity dims differ: {real_avg.shape} vs {fake_avg.shape}"
        )
    return float(np.abs(real_avg - fake_avg).sum())


def _eye_points(entry) -> np.ndarray:
    landmarks, pupils = entry
    return np.vstack([landmarks.left, landmarks.right, pupils.left, pupils.right])


def aeld(real_eyes, fake_eyes) -> float:
    """Mean Euclidean distance over the 14 eye points (12 landmarks + 2 pupils).

    Both arguments are sequences of (EyeLandmarks, PupilPair) per frame.
    """
    real_eyes = list(real_eyes)
    fake_eyes = list(fake_eyes)
    if len(real_eyes) != len(fake_eyes):
        raise DimensionError(f"{len(real_eyes)} frames vs {len(fake_eyes)}")
    if not real_eyes:
        raise DimensionError("empty eye sequences")
    total = 0.0
    for a, b in zip(real_eyes, fake_eyes):
        pa = _eye_points(a)
        pb = _eye_points(b)
        total += float(np.linalg.norm(pa - pb, axis=1).mean())
    return total / len(real_eyes)


def _validate_features(features, minimum: int) -> np.ndarray:
    arr = np.asarray(features, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionError(f"feature matrix must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise InvalidFeatureError("feature matrix contains non-finite values")
    if arr.shape[0] < minimum:
        raise InvalidFeatureError(
            f"need at least {minimum} feature rows, got {arr.shape[0]}"
        )
    return arr


def _psd_sqrt_eigenvalues(mat: np.ndarray) -> np.ndarray:
    w = np.linalg.eigvalsh((mat + mat.T) / 2.0)
    return np.sqrt(np.where(w < FID_EIGENVALUE_CLIP, 0.0, w))


def _psd_sqrt(mat: np.ndarray) -> np.ndarray:
    w, v = np.linalg.eigh((mat + mat.T) / 2.0)
    w = np.where(w < FID_EIGENVALUE_CLIP, 0.0, w)
    return (v * np.sqrt(w)) @ v.T


def fid_from_features(a, b) -> float:
    """Frechet distance between Gaussian fits of two feature sets.

    ||mu_a - mu_b||^2 + Tr(S_a + S_b - 2 (S_a S_b)^(1/2)), with unbiased
    covariances.  The cross term is computed through the symmetric
    product S_a^(1/2) S_b S_a^(1/2), whose eigenvalues are clipped at
    1e-10 before the square root to absorb rounding noise.
    """
    a = _validate_features(a, minimum=2)
    b = _validate_features(b, minimum=2)
    if a.shape[1] != b.shape[1]:
        raise DimensionError(f"feature dims differ: {a.shape[1]} vs {b.shape[1]}")
    mu_a = a.mean(axis=0)
    mu_b = b.mean(axis=0)
    cov_a = np.cov(a, rowvar=False, ddof=1).reshape(a.shape[1], a.shape[1])
    cov_b = np.cov(b, rowvar=False, ddof=1).reshape(b.shape[1], b.shape[1])
    sqrt_a = _psd_sqrt(cov_a)
    cross = _psd_sqrt_eigenvalues(sqrt_a @ cov_b @ sqrt_a).sum()
    mean_term = float(((mu_a - mu_b) ** 2).sum())
    return mean_term + float(np.trace(cov_a) + np.trace(cov_b) - 2.0 * cross)


def median_heuristic_bandwidth(a, b) -> float:
    """Median pairwise distance over the pooled set (diagonal included).

    Including the zero self-distances keeps the bandwidth invariant under
    duplicating both sets, which the MMD estimator relies on.  Degenerate
    all-identical inputs are floored at 1e-12.
    """
    a = _validate_features(a, minimum=1)
    b = _validate_features(b, minimum=1)
    pooled = np.vstack([a, b])
    sq = _pairwise_sq_dists(pooled, pooled)
    med = float(np.median(np.sqrt(np.maximum(sq, 0.0))))
    return max(med, MMD_BANDWIDTH_FLOOR)


def _pairwise_sq_dists(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    xx = (x**2).sum(axis=1)[:, None]
    yy = (y**2).sum(axis=1)[None, :]
    return xx + yy - 2.0 * (x @ y.T)


def mmd2_from_features(a, b, bandwidth: float | None = None) -> float:
    """Biased (V-statistic) squared maximum mean discrepancy, RBF kernel.

    The kernel is exp(-||x-y||^2 / (2 sigma^2)) with sigma from
    :func:`median_heuristic_bandwidth` unless given.  The V-statistic is
    nonnegative by construction; rounding noise is clamped at zero.
    """
    a = _validate_features(a, minimum=1)
    b = _validate_features(b, minimum=1)
    if a.shape[1] != b.shape[1]:
        raise DimensionError(f"feature dims differ: {a.shape[1]} vs {b.shape[1]}")
    if bandwidth is None:
        bandwidth = median_heuristic_bandwidth(a, b)
    if bandwidth <= 0.0:
        bandwidth = MMD_BANDWIDTH_FLOOR
    gamma = 1.0 / (2.0 * bandwidth * bandwidth)

    def kernel_mean(x, y) -> float:
        return float(np.exp(-gamma * np.maximum(_pairwise_sq_dists(x, y), 0.0)).mean())

    value = kernel_mean(a, a) + kernel_mean(b, b) - 2.0 * kernel_mean(a, b)
    return max(value, 0.0)
