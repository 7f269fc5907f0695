"""Linear morphable face model: shape assembly and coefficient recovery.

A face shape is the model mean plus identity and expression offsets drawn
from two orthonormal bases.  The model also provides the normalized mean
face whose coordinates serve as the semantic color code for rendering.

Model directory layout (all binary files little-endian):
    manifest.json   {vertex_count, identity_dim, expression_dim,
                     triangle_count, version: 1}
    mean_shape.f32  3N float32
    u_id.f32        3N x n_i float32, column-major
    u_exp.f32       3N x n_e float32, column-major
    triangles.u32   T uint32 triples
"""

from __future__ import annotations

import os
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateModelError, DimensionError, ModelLoadError
from .util import read_json, write_json

ORTHONORMALITY_TOL = 1e-5


@dataclass
class ShapeCoefficients:
    """Per-frame basis weights: identity vector plus expression vector."""

    identity: np.ndarray
    expression: np.ndarray

    def __post_init__(self):
        self.identity = np.asarray(self.identity, dtype=np.float64).reshape(-1)
        self.expression = np.asarray(self.expression, dtype=np.float64).reshape(-1)

    @classmethod
    def zeros(cls, identity_dim: int, expression_dim: int) -> "ShapeCoefficients":
        return cls(np.zeros(identity_dim), np.zeros(expression_dim))


@dataclass
class FaceShape:
    """Dense shape as a flat [x1, y1, z1, ..., xN, yN, zN] vector."""

    vertices: np.ndarray

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1)
        if self.vertices.size % 3 != 0:
            raise DimensionError(f"vertex vector length {self.vertices.size} not divisible by 3")
        if not np.all(np.isfinite(self.vertices)):
            raise DimensionError("shape contains non-finite coordinates")

    @property
    def vertex_count(self) -> int:
        return self.vertices.size // 3

    def points(self) -> np.ndarray:
        """(N, 3) view of the vertex vector."""
        return self.vertices.reshape(-1, 3)


@dataclass
class NormalizedMeanFace:
    """Mean-face coordinates rescaled into [0, 1], used as vertex colors."""

    colors: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.colors = np.asarray(self.colors, dtype=np.float64).reshape(-1)


class MorphableModel:
    """Immutable mean shape, orthonormal bases, and triangle topology.

    All arrays are validated and frozen at construction, so one instance
    can be shared freely between worker threads.
    """

    def __init__(self, mean_shape, identity_basis, expression_basis, triangles):
        mean_shape = np.array(mean_shape, dtype=np.float64).reshape(-1)
        identity_basis = np.array(identity_basis, dtype=np.float64)
        expression_basis = np.array(expression_basis, dtype=np.float64)
        triangles = np.array(triangles, dtype=np.int64).reshape(-1, 3)

        if mean_shape.size % 3 != 0:
            raise DimensionError("mean shape length must be a multiple of 3")
        n3 = mean_shape.size
        for name, basis in (("identity", identity_basis), ("expression", expression_basis)):
            if basis.ndim != 2 or basis.shape[0] != n3:
                raise DimensionError(
                    f"{name} basis must be {n3} x k, got {basis.shape}"
                )
            self._check_orthonormal(name, basis)
            if basis.shape[1] >= n3:
                warnings.warn(
                    f"{name} basis has {basis.shape[1]} columns for only {n3} "
                    "coordinates; expected far fewer components than coordinates"
                )

        n = n3 // 3
        if triangles.size and (triangles.min() < 0 or triangles.max() >= n):
            raise ModelLoadError("triangle index out of range")
        degenerate = (
            (triangles[:, 0] == triangles[:, 1])
            | (triangles[:, 1] == triangles[:, 2])
            | (triangles[:, 0] == triangles[:, 2])
        )
        if degenerate.any():
            raise ModelLoadError(
                f"{int(degenerate.sum())} triangle(s) repeat a vertex index"
            )

        self.mean_shape = mean_shape
        self.identity_basis = identity_basis
        self.expression_basis = expression_basis
        self.triangles = triangles
        # Joint basis and its Gram matrix back the least-squares projection.
        self._joint_basis = np.ascontiguousarray(
            np.hstack([identity_basis, expression_basis])
        )
        self._gram = self._joint_basis.T @ self._joint_basis
        for arr in (
            self.mean_shape,
            self.identity_basis,
            self.expression_basis,
            self.triangles,
            self._joint_basis,
            self._gram,
        ):
            arr.setflags(write=False)

    @staticmethod
    def _check_orthonormal(name: str, basis: np.ndarray) -> None:
        gram = basis.T @ basis
        err = np.abs(gram - np.eye(basis.shape[1])).max() if basis.size else 0.0
        if err > ORTHONORMALITY_TOL:
            raise ModelLoadError(
                f"{name} basis is not orthonormal (max |U^T U - I| = {err:.3g})"
            )

    @property
    def vertex_count(self) -> int:
        return self.mean_shape.size // 3

    @property
    def identity_dim(self) -> int:
        return self.identity_basis.shape[1]

    @property
    def expression_dim(self) -> int:
        return self.expression_basis.shape[1]

    @property
    def triangle_count(self) -> int:
        return self.triangles.shape[0]


def assemble_shape(model: MorphableModel, coeffs: ShapeCoefficients) -> FaceShape:
    """Mean shape plus identity offsets plus expression offsets.

    Args:
        model: loaded morphable model.
        coeffs: basis weights; lengths must match the model dimensions.

    Returns:
        Dense shape in model units.
    """
    if coeffs.identity.size != model.identity_dim:
        raise DimensionError(
            f"identity length {coeffs.identity.size} != model {model.identity_dim}"
        )
    if coeffs.expression.size != model.expression_dim:
        raise DimensionError(
            f"expression length {coeffs.expression.size} != model {model.expression_dim}"
        )
    vertices = (
        model.mean_shape
        + model.identity_basis @ coeffs.identity
        + model.expression_basis @ coeffs.expression
    )
    return FaceShape(vertices)


def project_to_bases(model: MorphableModel, shape: FaceShape) -> ShapeCoefficients:
    """Least-squares basis weights for a dense shape.

    Solves the normal equations on the joint [identity | expression] basis
    in one shot, so any cross-correlation between the two sub-bases is
    handled exactly rather than sequentially.
    """
    if shape.vertices.size != model.mean_shape.size:
        raise DimensionError(
            f"shape length {shape.vertices.size} != model {model.mean_shape.size}"
        )
    rhs = model._joint_basis.T @ (shape.vertices - model.mean_shape)
    weights = np.linalg.solve(model._gram, rhs)
    return ShapeCoefficients(weights[: model.identity_dim], weights[model.identity_dim :])


def normalized_mean_face(model: MorphableModel) -> NormalizedMeanFace:
    """Rescale the mean shape into [0, 1] with one global affine map.

    A single min/max over all coordinates is used (not per axis), which
    preserves the relative proportions of the color space.  Raises
    :class:`DegenerateModelError` when any axis of the mean shape has zero
    extent, since such a model cannot produce distinctive colors.
    """
    pts = model.mean_shape.reshape(-1, 3)
    extents = pts.max(axis=0) - pts.min(axis=0)
    if np.any(extents == 0.0):
        raise DegenerateModelError("mean shape has zero extent on at least one axis")
    lo = model.mean_shape.min()
    hi = model.mean_shape.max()
    return NormalizedMeanFace((model.mean_shape - lo) / (hi - lo))


def _read_binary(path, dtype, count: int) -> np.ndarray:
    try:
        data = np.fromfile(path, dtype=dtype)
    except OSError as exc:
        raise ModelLoadError(f"cannot read {path}: {exc}") from exc
    if data.size != count:
        raise ModelLoadError(f"{path}: expected {count} values, found {data.size}")
    return data


def load_model_dir(path) -> MorphableModel:
    """Load and validate a model directory (see module docstring)."""
    manifest_path = os.path.join(path, "manifest.json")
    try:
        manifest = read_json(manifest_path)
    except (OSError, ValueError) as exc:
        raise ModelLoadError(f"cannot read {manifest_path}: {exc}") from exc
    required = ("vertex_count", "identity_dim", "expression_dim", "triangle_count", "version")
    missing = [k for k in required if k not in manifest]
    if missing:
        raise ModelLoadError(f"manifest missing fields: {missing}")
    if manifest["version"] != 1:
        raise ModelLoadError(f"unsupported model version {manifest['version']}")

    n = int(manifest["vertex_count"])
    n_id = int(manifest["identity_dim"])
    n_exp = int(manifest["expression_dim"])
    n_tri = int(manifest["triangle_count"])

    mean = _read_binary(os.path.join(path, "mean_shape.f32"), "<f4", 3 * n)
    u_id = _read_binary(os.path.join(path, "u_id.f32"), "<f4", 3 * n * n_id)
    u_exp = _read_binary(os.path.join(path, "u_exp.f32"), "<f4", 3 * n * n_exp)
    tris = _read_binary(os.path.join(path, "triangles.u32"), "<u4", 3 * n_tri)

    return MorphableModel(
        mean.astype(np.float64),
        u_id.astype(np.float64).reshape((3 * n, n_id), order="F"),
        u_exp.astype(np.float64).reshape((3 * n, n_exp), order="F"),
        tris.astype(np.int64).reshape(-1, 3),
    )


def save_model_dir(path, model: MorphableModel) -> None:
    """Write a model directory in the on-disk (float32) format."""
    os.makedirs(path, exist_ok=True)
    write_json(
        os.path.join(path, "manifest.json"),
        {
            "vertex_count": model.vertex_count,
            "identity_dim": model.identity_dim,
            "expression_dim": model.expression_dim,
            "triangle_count": model.triangle_count,
            "version": 1,
        },
    )
    model.mean_shape.astype("<f4").tofile(os.path.join(path, "mean_shape.f32"))
    np.asfortranarray(model.identity_basis.astype("<f4")).ravel(order="F").tofile(
        os.path.join(path, "u_id.f32")
    )
    np.asfortranarray(model.expression_basis.astype("<f4")).ravel(order="F").tofile(
        os.path.join(path, "u_exp.f32")
    )
    model.triangles.astype("<u4").ravel().tofile(os.path.join(path, "triangles.u32"))
