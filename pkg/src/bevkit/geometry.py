"""Pose algebra for SE(3)/SE(2) and the metric bird's-eye-view pixel grid.

Conventions used throughout the package:

* Vehicle frame: x forward, y left, z up, meters.
* BEV grid: pixel (u, v) with u along image columns and v along rows.
  Forward (vehicle +x) points toward decreasing v, left (vehicle +y)
  toward increasing u.  The grid origin ``(o_x, o_y)`` is the pixel
  location of the vehicle origin and defaults to the grid center.
* Angles are radians and always wrapped to (-pi, pi].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidCameraError, ShapeError

TWO_PI = 2.0 * math.pi

# A rotation block is accepted as orthonormal when ||R^T R - I||_F and
# |det R - 1| stay below this; beyond it we refuse, in between we repair.
ORTHONORMALITY_TOL = 1e-9


def wrap_angle(theta):
    """Wrap an angle or an array of angles to the interval (-pi, pi]."""
    wrapped = np.mod(theta, TWO_PI)
    wrapped = np.where(wrapped > math.pi, wrapped - TWO_PI, wrapped)
    if np.ndim(theta) == 0:
        return float(wrapped)
    return wrapped


def rot_z(theta: float) -> np.ndarray:
    """3x3 rotation about the vehicle z (up) axis."""
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def closest_rotation(m: np.ndarray) -> np.ndarray:
    """Project a near-rotation 3x3 matrix onto SO(3) via SVD."""
    u, _, vt = np.linalg.svd(np.asarray(m, dtype=float))
    r = u @ vt
    if np.linalg.det(r) < 0.0:
        u = u.copy()
        u[:, -1] = -u[:, -1]
        r = u @ vt
    return r


def _rotation_drift(r: np.ndarray) -> float:
    return float(np.linalg.norm(r.T @ r - np.eye(3)))


@dataclass(frozen=True)
class Pose3:
    """Rigid transform in SE(3), stored as a 4x4 homogeneous matrix.

    The rotation block must be orthonormal with determinant +1 within
    1e-9 and the bottom row must be exactly (0, 0, 0, 1).
    """

    matrix: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrix, dtype=float)
        if m.shape != (4, 4):
            raise ShapeError(f"pose matrix must be 4x4, got {m.shape}")
        if not np.all(np.isfinite(m)):
            raise ValueError("pose matrix contains non-finite entries")
        if not np.array_equal(m[3], np.array([0.0, 0.0, 0.0, 1.0])):
            raise ValueError("pose bottom row must be exactly (0, 0, 0, 1)")
        r = m[:3, :3]
        if _rotation_drift(r) > ORTHONORMALITY_TOL:
            raise ValueError("rotation block is not orthonormal within 1e-9")
        if abs(np.linalg.det(r) - 1.0) > ORTHONORMALITY_TOL:
            raise ValueError("rotation block must have determinant +1")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @staticmethod
    def identity() -> "Pose3":
        return Pose3(np.eye(4))

    @staticmethod
    def from_rt(rotation: np.ndarray, translation: np.ndarray) -> "Pose3":
        """Build a pose from a 3x3 rotation and a length-3 translation."""
        rotation = np.asarray(rotation, dtype=float)
        translation = np.asarray(translation, dtype=float)
        if rotation.shape != (3, 3):
            raise ShapeError(f"rotation must be 3x3, got {rotation.shape}")
        if translation.shape != (3,):
            raise ShapeError(f"translation must have shape (3,), got {translation.shape}")
        m = np.eye(4)
        m[:3, :3] = rotation
        m[:3, 3] = translation
        return Pose3(m)

    @property
    def rotation(self) -> np.ndarray:
        return self.matrix[:3, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.matrix[:3, 3]

    def inverse(self) -> "Pose3":
        """Analytic inverse [R^T | -R^T t]; stays in SE(3) by construction."""
        r_t = self.matrix[:3, :3].T
        m = np.eye(4)
        m[:3, :3] = r_t
        m[:3, 3] = -r_t @ self.matrix[:3, 3]
        return Pose3(m)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform points of shape (..., 3) or homogeneous (..., 4)."""
        points = np.asarray(points, dtype=float)
        if points.shape[-1] == 3:
            return points @ self.matrix[:3, :3].T + self.matrix[:3, 3]
        if points.shape[-1] == 4:
            return points @ self.matrix.T
        raise ShapeError(f"points must end in dim 3 or 4, got {points.shape}")


def compose(a: Pose3, b: Pose3) -> Pose3:
    """Matrix product a * b, re-orthonormalizing when drift exceeds 1e-9."""
    m = a.matrix @ b.matrix
    if _rotation_drift(m[:3, :3]) > ORTHONORMALITY_TOL:
        m[:3, :3] = closest_rotation(m[:3, :3])
    return Pose3(m)


def relative_pose(a: Pose3, b: Pose3) -> Pose3:
    """Transform taking frame a to frame b: inverse(a) * b."""
    return compose(a.inverse(), b)


@dataclass(frozen=True)
class Pose2:
    """Planar rigid motion: yaw ``theta`` plus translation (tx, ty) in meters.

    ``theta`` is wrapped to (-pi, pi] on construction.
    """

    theta: float
    tx: float
    ty: float

    def __post_init__(self):
        theta = float(self.theta)
        if not (math.isfinite(theta) and math.isfinite(float(self.tx)) and math.isfinite(float(self.ty))):
            raise ValueError("Pose2 fields must be finite")
        object.__setattr__(self, "theta", wrap_angle(theta))
        object.__setattr__(self, "tx", float(self.tx))
        object.__setattr__(self, "ty", float(self.ty))

    @staticmethod
    def identity() -> "Pose2":
        return Pose2(0.0, 0.0, 0.0)


def pose2_to_pose3(pose: Pose2) -> Pose3:
    """Embed a planar motion into SE(3), z translation zero."""
    m = np.eye(4)
    m[:3, :3] = rot_z(pose.theta)
    m[0, 3] = pose.tx
    m[1, 3] = pose.ty
    return Pose3(m)


def pose3_to_pose2(pose: Pose3) -> Pose2:
    """Project onto the ground plane: yaw from the x-axis heading, (tx, ty).

    The z translation and any roll/pitch are discarded.
    """
    m = pose.matrix
    return Pose2(math.atan2(m[1, 0], m[0, 0]), m[0, 3], m[1, 3])


@dataclass(frozen=True)
class BevGridSpec:
    """Geometry of the metric BEV grid.

    ``resolution_m`` is the side length of one pixel in meters.
    ``origin_px`` is the (o_x, o_y) pixel position of the vehicle origin;
    when omitted it defaults to the grid center ((W-1)/2, (H-1)/2).
    """

    height_px: int
    width_px: int
    resolution_m: float
    origin_px: tuple[float, float] | None = None

    def __post_init__(self):
        if int(self.height_px) < 1 or int(self.width_px) < 1:
            raise ValueError("grid dimensions must be >= 1 pixel")
        object.__setattr__(self, "height_px", int(self.height_px))
        object.__setattr__(self, "width_px", int(self.width_px))
        res = float(self.resolution_m)
        if not (math.isfinite(res) and res > 0.0):
            raise ValueError("resolution must be a positive finite number of meters")
        object.__setattr__(self, "resolution_m", res)
        if self.origin_px is None:
            origin = ((self.width_px - 1) / 2.0, (self.height_px - 1) / 2.0)
        else:
            origin = (float(self.origin_px[0]), float(self.origin_px[1]))
            if not all(math.isfinite(c) for c in origin):
                raise ValueError("grid origin must be finite")
        object.__setattr__(self, "origin_px", origin)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height_px, self.width_px)


def pixel_to_vehicle(u, v, grid: BevGridSpec) -> np.ndarray:
    """Map BEV pixel coordinates to homogeneous vehicle-frame points.

    Accepts scalars or broadcastable arrays; returns shape (..., 4) with
    z = 0 and w = 1.  The map is x = (o_y - v) * r, y = (u - o_x) * r.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    o_x, o_y = grid.origin_px
    x = (o_y - v) * grid.resolution_m
    y = (u - o_x) * grid.resolution_m
    x, y = np.broadcast_arrays(x, y)
    out = np.stack([x, y, np.zeros_like(x), np.ones_like(x)], axis=-1)
    return out


def vehicle_to_pixel(points: np.ndarray, grid: BevGridSpec):
    """Map homogeneous vehicle-frame points (..., 4) to BEV pixels (u, v).

    The w component divides through, so scaled homogeneous points are fine.
    Exact inverse of :func:`pixel_to_vehicle` for w = 1 points.
    """
    points = np.asarray(points, dtype=float)
    if points.shape[-1] != 4:
        raise ShapeError(f"expected homogeneous points (..., 4), got {points.shape}")
    w = points[..., 3]
    if np.any(w == 0.0):
        raise ValueError("homogeneous w component must be nonzero")
    x = points[..., 0] / w
    y = points[..., 1] / w
    o_x, o_y = grid.origin_px
    u = o_x + y / grid.resolution_m
    v = o_y - x / grid.resolution_m
    if u.ndim == 0:
        return float(u), float(v)
    return u, v


@dataclass(frozen=True)
class CameraModel:
    """Pinhole camera: 3x3 intrinsics K and 3x4 camera-to-vehicle extrinsics.

    K must be upper triangular with strictly positive diagonal (zero skew
    is the usual case but skew is permitted).  The extrinsic rotation block
    must be orthonormal within 1e-9.
    """

    intrinsics: np.ndarray
    extrinsics: np.ndarray

    def __post_init__(self):
        k = np.array(self.intrinsics, dtype=float)
        e = np.array(self.extrinsics, dtype=float)
        if k.shape != (3, 3):
            raise InvalidCameraError(f"intrinsics must be 3x3, got {k.shape}")
        if e.shape != (3, 4):
            raise InvalidCameraError(f"extrinsics must be 3x4, got {e.shape}")
        if not (np.all(np.isfinite(k)) and np.all(np.isfinite(e))):
            raise InvalidCameraError("camera matrices contain non-finite entries")
        if k[1, 0] != 0.0 or k[2, 0] != 0.0 or k[2, 1] != 0.0:
            raise InvalidCameraError("intrinsics must be upper triangular")
        if np.any(np.diag(k) <= 0.0):
            raise InvalidCameraError("intrinsic diagonal entries must be positive")
        r = e[:, :3]
        if _rotation_drift(r) > ORTHONORMALITY_TOL or abs(np.linalg.det(r) - 1.0) > ORTHONORMALITY_TOL:
            raise InvalidCameraError("extrinsic rotation is not a proper rotation within 1e-9")
        k.flags.writeable = False
        e.flags.writeable = False
        object.__setattr__(self, "intrinsics", k)
        object.__setattr__(self, "extrinsics", e)

    @property
    def rotation(self) -> np.ndarray:
        return self.extrinsics[:, :3]

    @property
    def translation(self) -> np.ndarray:
        return self.extrinsics[:, 3]
