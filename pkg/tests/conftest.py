"""Shared fixtures: synthetic meshes, models, and reference oracles."""

import os

# Pin numeric libraries to one thread so timing-sensitive tests measure
# single-core behavior and results stay machine-independent.
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")

import numpy as np
import pytest

from reenact import (
    CameraPose,
    FaceShape,
    MorphableModel,
    ShapeCoefficients,
    assemble_shape,
    project,
)
from reenact.nmfc import NONE_INDEX
from reenact.recon import FrameObservation


def dome_mesh(grid: int = 71, extent: float = 50.0):
    """Face-sized curved sheet: grid x grid vertices, 2(grid-1)^2 triangles.

    Triangles are wound so they face the camera under an identity pose.
    """
    lin = np.linspace(-extent, extent, grid)
    u, v = np.meshgrid(lin, lin)
    z = 0.6 * extent - (u**2 + v**2) / (2.4 * extent)
    vertices = np.column_stack([u.ravel(), v.ravel(), z.ravel()]).ravel()
    tris = []
    for i in range(grid - 1):
        for j in range(grid - 1):
            a = i * grid + j
            b = a + 1
            c = a + grid
            d = c + 1
            tris.append((a, b, c))
            tris.append((b, d, c))
    return vertices, np.array(tris, dtype=np.int64)


def dome_model(grid: int, n_id: int, n_exp: int, seed: int = 415) -> MorphableModel:
    vertices, tris = dome_mesh(grid)
    rng = np.random.default_rng(seed)
    basis, _ = np.linalg.qr(rng.normal(size=(vertices.size, n_id + n_exp)))
    return MorphableModel(vertices, basis[:, :n_id], basis[:, n_id:], tris)


def random_model(rng, n: int = 40, n_id: int = 3, n_exp: int = 2, spread: float = 10.0):
    """Small model over a random (non-coplanar) point cloud."""
    mean = rng.normal(size=3 * n) * spread
    basis, _ = np.linalg.qr(rng.normal(size=(3 * n, n_id + n_exp)))
    tris = np.array([[i, i + 1, i + 2] for i in range(n - 2)], dtype=np.int64)
    return MorphableModel(mean, basis[:, :n_id], basis[:, n_id:], tris)


def observation_from(model, coeffs: ShapeCoefficients, pose: CameraPose, frame_index: int = 0):
    """Noiseless synthetic observation: project the assembled shape."""
    pts, depth = project(pose, assemble_shape(model, coeffs))
    return FrameObservation(np.column_stack([pts, depth]).ravel(), frame_index)


@pytest.fixture(scope="session")
def face5k() -> MorphableModel:
    """~5K vertices / ~10K triangles, 40 identity + 20 expression modes."""
    return dome_model(grid=71, n_id=40, n_exp=20)


@pytest.fixture(scope="session")
def face_small() -> MorphableModel:
    """441 vertices / 800 triangles; fast enough for end-to-end runs."""
    return dome_model(grid=21, n_id=6, n_exp=4, seed=77)


def exhaustive_visibility_oracle(points, depth, triangles, width, height):
    """Reference rasterization: evaluate every pixel against every triangle.

    No bounding boxes and no incremental z-buffer: coverage and depth are
    computed densely and the winner is picked per pixel (front-most, exact
    depth ties to the lowest triangle index).  Edge functions, the
    top/left ownership rule, and barycentric depth use the same formulas
    as the production kernel so shared-edge and equal-depth ties resolve
    identically.
    """
    pts = np.asarray(points, dtype=np.float64)
    z = np.asarray(depth, dtype=np.float64)
    tris = np.asarray(triangles, dtype=np.int64).reshape(-1, 3)
    px = (np.arange(width, dtype=np.float64) + 0.5)[None, :, None]
    py = (np.arange(height, dtype=np.float64) + 0.5)[:, None, None]

    ax = pts[tris[:, 0], 0][None, None, :]
    ay = pts[tris[:, 0], 1][None, None, :]
    bx = pts[tris[:, 1], 0][None, None, :]
    by = pts[tris[:, 1], 1][None, None, :]
    cx = pts[tris[:, 2], 0][None, None, :]
    cy = pts[tris[:, 2], 1][None, None, :]
    za = z[tris[:, 0]][None, None, :]
    zb = z[tris[:, 1]][None, None, :]
    zc = z[tris[:, 2]][None, None, :]

    area = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)

    def edge_ok(e, dx, dy):
        return (e > 0.0) | ((e == 0.0) & ((dy < 0.0) | ((dy == 0.0) & (dx > 0.0))))

    e_ab = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
    e_bc = (cx - bx) * (py - by) - (cy - by) * (px - bx)
    e_ca = (ax - cx) * (py - cy) - (ay - cy) * (px - cx)
    cover = (
        (area > 0.0)
        & edge_ok(e_ab, bx - ax, by - ay)
        & edge_ok(e_bc, cx - bx, cy - by)
        & edge_ok(e_ca, ax - cx, ay - cy)
    )
    with np.errstate(divide="ignore", invalid="ignore"):
        zpix = (e_bc * za + e_ca * zb + e_ab * zc) / area
    zpix = np.where(cover, zpix, -np.inf)
    winner = np.argmax(zpix, axis=2).astype(np.int64)
    grid = np.where(np.max(zpix, axis=2) == -np.inf, NONE_INDEX, winner)
    return grid.astype(np.int32)


def shape_from_points(points3d) -> FaceShape:
    return FaceShape(np.asarray(points3d, dtype=np.float64).ravel())
