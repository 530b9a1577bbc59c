"""Dense BEV optical flow induced by planar ego-motion, and its inverse.

The forward direction turns a relative planar pose into the flow field a
perfect BEV feature matcher would observe; the inverse recovers the pose
from a (possibly noisy, possibly weighted) flow field in closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateGeometryError, DegenerateInputError, ShapeError
from .geometry import BevGridSpec, Pose2, pixel_to_vehicle

# H = sum_i w_i p_i q_i^T is considered rank zero, and the rotation fit
# hopeless, when its largest singular value falls below this times the
# matrix magnitude.
_RANK_TOL = 1e-12


@dataclass(frozen=True)
class FlowField:
    """A dense BEV flow field: data[0] = du, data[1] = dv, shape (2, H, W).

    Stored as float64; the grid gives the metric interpretation.
    """

    data: np.ndarray
    grid: BevGridSpec

    def __post_init__(self):
        d = np.array(self.data, dtype=float)
        if d.ndim != 3 or d.shape[0] != 2:
            raise ShapeError(f"flow must have shape (2, H, W), got {d.shape}")
        if d.shape[1] != self.grid.height_px or d.shape[2] != self.grid.width_px:
            raise ShapeError(
                f"flow shape {d.shape[1:]} does not match grid {self.grid.shape}"
            )
        if not np.all(np.isfinite(d)):
            raise ValueError("flow contains non-finite entries")
        d.flags.writeable = False
        object.__setattr__(self, "data", d)

    @property
    def du(self) -> np.ndarray:
        return self.data[0]

    @property
    def dv(self) -> np.ndarray:
        return self.data[1]


class FlowStats:
    """Summary statistics over an endpoint-error map."""

    def __init__(self, epe: np.ndarray):
        epe = np.asarray(epe, dtype=float).ravel()
        if epe.size == 0:
            raise DegenerateInputError("endpoint-error map is empty")
        self._epe = epe
        self.mean_epe = float(epe.mean())
        self.max_epe = float(epe.max())

    def frac_below(self, threshold_px: float) -> float:
        """Fraction of pixels with endpoint error strictly below the threshold."""
        return float(np.count_nonzero(self._epe < threshold_px) / self._epe.size)


def displacement_at(t_rel: Pose2, grid: BevGridSpec, u, v):
    """Flow (du, dv) induced by ``t_rel`` at pixel coordinates (u, v).

    Accepts scalars or arrays.  Algebraically this carries the pixel into
    the vehicle frame, applies the motion, and projects back, but it is
    evaluated in factored pixel-space form

        du = sin(theta) * b + (cos(theta) - 1) * a + ty / r
        dv = (1 - cos(theta)) * b + sin(theta) * a - tx / r

    with a = u - o_x, b = o_y - v, so that zero motion produces exactly
    zero flow with no rounding residue.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    o_x, o_y = grid.origin_px
    r = grid.resolution_m
    a = u - o_x
    b = o_y - v
    c = math.cos(t_rel.theta)
    s = math.sin(t_rel.theta)
    du = s * b + (c - 1.0) * a + t_rel.ty / r
    dv = (1.0 - c) * b + s * a - t_rel.tx / r
    return du, dv


def construct_flow_gt(t_rel: Pose2, grid: BevGridSpec) -> FlowField:
    """Dense ground-truth flow for a relative planar motion on the grid."""
    vs, us = np.meshgrid(
        np.arange(grid.height_px, dtype=float),
        np.arange(grid.width_px, dtype=float),
        indexing="ij",
    )
    du, dv = displacement_at(t_rel, grid, us, vs)
    return FlowField(np.stack([du, dv]), grid)


def in_grid_mask(flow: FlowField) -> np.ndarray:
    """Boolean mask of pixels whose displaced location stays on the grid.

    A displaced location (u + du, v + dv) counts as on-grid when it lies
    within the pixel-center lattice, i.e. 0 <= u' <= W-1 and 0 <= v' <= H-1.
    """
    grid = flow.grid
    vs, us = np.meshgrid(
        np.arange(grid.height_px, dtype=float),
        np.arange(grid.width_px, dtype=float),
        indexing="ij",
    )
    u_new = us + flow.data[0]
    v_new = vs + flow.data[1]
    return (
        (u_new >= 0.0)
        & (u_new <= grid.width_px - 1.0)
        & (v_new >= 0.0)
        & (v_new <= grid.height_px - 1.0)
    )


def solve_pose_from_flow(flow: FlowField, weights: np.ndarray | None = None) -> Pose2:
    """Recover the planar motion that best explains a BEV flow field.

    Solves the weighted least-squares problem over vehicle-frame point
    correspondences (source pixel, source pixel + flow) for a rotation
    plus translation; the rotation comes from the SVD of the 2x2 weighted
    cross-covariance with a determinant correction so the result is a
    proper rotation.

    Args:
        flow: dense flow field on a BEV grid.
        weights: optional per-pixel nonnegative weights, shape (H, W).
            Omitted means uniform.

    Raises:
        DegenerateInputError: fewer than two pixels carry positive weight.
        DegenerateGeometryError: the weighted point set is effectively a
            single location, so the rotation is unconstrained.
    """
    grid = flow.grid
    h, w = grid.shape
    if weights is None:
        wts = np.ones((h, w))
    else:
        wts = np.asarray(weights, dtype=float)
        if wts.shape != (h, w):
            raise ShapeError(f"weights shape {wts.shape} does not match grid {grid.shape}")
        if not np.all(np.isfinite(wts)) or np.any(wts < 0.0):
            raise ValueError("weights must be finite and nonnegative")
    if np.count_nonzero(wts > 0.0) < 2:
        raise DegenerateInputError("need at least two pixels with positive weight")

    vs, us = np.meshgrid(
        np.arange(h, dtype=float), np.arange(w, dtype=float), indexing="ij"
    )
    src = pixel_to_vehicle(us, vs, grid)[..., :2].reshape(-1, 2)
    dst = pixel_to_vehicle(us + flow.data[0], vs + flow.data[1], grid)[..., :2].reshape(-1, 2)
    wf = wts.reshape(-1)

    wsum = wf.sum()
    src_c = (wf[:, None] * src).sum(axis=0) / wsum
    dst_c = (wf[:, None] * dst).sum(axis=0) / wsum
    p = src - src_c
    q = dst - dst_c
    cross = (wf[:, None] * p).T @ q

    u_m, sigma, vt_m = np.linalg.svd(cross)
    if sigma[0] <= _RANK_TOL * max(1.0, float(np.abs(cross).max())):
        raise DegenerateGeometryError("point set is concentrated at one location")
    d = np.sign(np.linalg.det(vt_m.T @ u_m.T))
    if d == 0.0:
        d = 1.0
    rot = vt_m.T @ np.diag([1.0, d]) @ u_m.T
    theta = math.atan2(rot[1, 0], rot[0, 0])
    t = dst_c - rot @ src_c
    return Pose2(theta, float(t[0]), float(t[1]))


def flow_error_map(pred: FlowField, gt: FlowField):
    """Per-pixel endpoint error between two flow fields plus summary stats.

    Returns (epe, stats) where epe has shape (H, W).
    """
    if pred.data.shape != gt.data.shape:
        raise ShapeError(
            f"flow shapes differ: {pred.data.shape} vs {gt.data.shape}"
        )
    diff = pred.data - gt.data
    epe = np.sqrt(diff[0] ** 2 + diff[1] ** 2)
    return epe, FlowStats(epe)


def l1_flow_loss(
    pred: FlowField,
    gt: FlowField,
    reduction: str = "mean",
    mask: np.ndarray | None = None,
) -> float:
    """L1 flow supervision loss: |du_pred - du_gt| + |dv_pred - dv_gt|.

    ``reduction`` is "mean" (per-pixel average, the default) or "sum".
    ``mask`` optionally restricts the loss to True pixels, e.g. the
    in-grid mask for motions that carry content off the grid edge.
    """
    if pred.data.shape != gt.data.shape:
        raise ShapeError(
            f"flow shapes differ: {pred.data.shape} vs {gt.data.shape}"
        )
    if reduction not in ("mean", "sum"):
        raise ValueError(f"unknown reduction {reduction!r}")
    per_px = np.abs(pred.data - gt.data).sum(axis=0)
    if mask is not None:
        mask = np.asarray(mask, dtype=bool)
        if mask.shape != per_px.shape:
            raise ShapeError(f"mask shape {mask.shape} does not match flow {per_px.shape}")
        if not mask.any():
            raise DegenerateInputError("mask excludes every pixel")
        per_px = per_px[mask]
    if reduction == "sum":
        return float(per_px.sum())
    return float(per_px.mean())
