"""Parsers, writers, config, and synthetic data for the toolkit.

Text trajectory formats:

* KITTI: one pose per line, 12 floats = row-major 3x4 [R | t].
* TUM: ``timestamp tx ty tz qx qy qz qw`` per line, ``#`` comments.
* CSV: the TUM fields, comma-separated, with an optional header line.

Binary tensors travel in a tiny container: magic ``BVT1``, then a u32
little-endian rank, rank u32 dims, and a row-major float32 payload.  The
byte length must match the header exactly.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import FormatError, ParseError, ShapeError
from .evaluation import LogScaleCurve, Trajectory
from .flow import FlowField
from .geometry import (
    ORTHONORMALITY_TOL,
    BevGridSpec,
    CameraModel,
    Pose2,
    closest_rotation,
    pose2_to_pose3,
    wrap_angle,
)
from .losses import LossWeights
from .sampler import (
    DEFAULT_HIGH_DEG,
    DEFAULT_LOW_DEG,
    DEFAULT_MAX_DISP_M,
    DEFAULT_WINDOW_S,
    PairRecord,
)

# Rotations parsed from text are accepted when orthonormal within this,
# then snapped to the closest exact rotation if they drift past the
# strict pose tolerance.
_PARSE_ROT_TOL = 1e-4

_BVT1_MAGIC = b"BVT1"


# ---------------------------------------------------------------------------
# trajectory text formats


def _parse_floats(fields: list[str], lineno: int) -> list[float]:
    try:
        values = [float(f) for f in fields]
    except ValueError as exc:
        raise ParseError(f"non-numeric field: {exc}", line=lineno) from None
    if not all(math.isfinite(v) for v in values):
        raise ParseError("non-finite value", line=lineno)
    return values


def _accept_rotation(r: np.ndarray, lineno: int) -> np.ndarray:
    drift = float(np.linalg.norm(r.T @ r - np.eye(3)))
    det = float(np.linalg.det(r))
    if drift > _PARSE_ROT_TOL or abs(det - 1.0) > _PARSE_ROT_TOL:
        raise ParseError(
            f"rotation not orthonormal within {_PARSE_ROT_TOL:g} "
            f"(drift {drift:.2e}, det {det:.6f})",
            line=lineno,
        )
    if drift > ORTHONORMALITY_TOL or abs(det - 1.0) > ORTHONORMALITY_TOL:
        return closest_rotation(r)
    return r


def parse_kitti_poses(text: str, timestamps: np.ndarray | None = None) -> Trajectory:
    """Parse KITTI-style pose lines (12 floats: row-major 3x4 [R | t]).

    Rotations must be orthonormal within 1e-4; those drifting past 1e-9
    are re-orthonormalized so downstream pose algebra sees valid rotations.
    Without explicit timestamps, frames are stamped 0, 1, 2, ...

    Raises:
        ParseError: wrong field count, non-numeric or non-finite values,
            or a non-orthonormal rotation; the message names the line.
    """
    poses = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            raise ParseError("blank line in pose file", line=lineno)
        fields = line.split()
        if len(fields) != 12:
            raise ParseError(f"expected 12 fields, got {len(fields)}", line=lineno)
        values = _parse_floats(fields, lineno)
        m = np.eye(4)
        m[:3, :4] = np.array(values).reshape(3, 4)
        m[:3, :3] = _accept_rotation(m[:3, :3], lineno)
        poses.append(m)
    if not poses:
        raise ParseError("pose file contains no poses", line=1)
    if timestamps is None:
        timestamps = np.arange(len(poses), dtype=float)
    return Trajectory(np.asarray(timestamps, dtype=float), np.array(poses))


def write_kitti_poses(traj: Trajectory) -> str:
    """Serialize as KITTI pose lines; timestamps are not representable."""
    lines = []
    for pose in traj.poses:
        lines.append(" ".join(f"{v:.17g}" for v in pose[:3, :4].reshape(-1)))
    return "\n".join(lines) + "\n"


def _trajectory_from_rows(rows: list[tuple[int, list[float]]]) -> Trajectory:
    timestamps = []
    poses = []
    last_t = None
    for lineno, values in rows:
        t, tx, ty, tz, qx, qy, qz, qw = values
        qnorm = math.sqrt(qx * qx + qy * qy + qz * qz + qw * qw)
        if abs(qnorm - 1.0) > _PARSE_ROT_TOL:
            raise ParseError(
                f"quaternion norm {qnorm:.6f} not 1 within {_PARSE_ROT_TOL:g}",
                line=lineno,
            )
        if last_t is not None and t <= last_t:
            raise ParseError(
                f"timestamp {t!r} not strictly increasing", line=lineno
            )
        last_t = t
        m = np.eye(4)
        # scipy renormalizes the quaternion, giving an exact rotation
        m[:3, :3] = Rotation.from_quat([qx, qy, qz, qw]).as_matrix()
        m[:3, 3] = (tx, ty, tz)
        timestamps.append(t)
        poses.append(m)
    if not poses:
        raise ParseError("trajectory file contains no poses", line=1)
    return Trajectory(np.array(timestamps), np.array(poses))


def parse_tum_trajectory(text: str) -> Trajectory:
    """Parse TUM-style lines: ``timestamp tx ty tz qx qy qz qw``.

    Blank lines and ``#`` comments are skipped.  Quaternions must be unit
    within 1e-4 (they are renormalized on conversion); timestamps must be
    strictly increasing.

    Raises:
        ParseError: malformed content; the message names the line.
    """
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        fields = line.split()
        if len(fields) != 8:
            raise ParseError(f"expected 8 fields, got {len(fields)}", line=lineno)
        rows.append((lineno, _parse_floats(fields, lineno)))
    return _trajectory_from_rows(rows)


def write_tum_trajectory(traj: Trajectory) -> str:
    """Serialize as TUM lines (quaternions in x, y, z, w order)."""
    lines = []
    for t, pose in zip(traj.timestamps, traj.poses):
        q = Rotation.from_matrix(pose[:3, :3]).as_quat()
        tx, ty, tz = pose[:3, 3]
        lines.append(
            f"{t:.9f} {tx:.17g} {ty:.17g} {tz:.17g} "
            f"{q[0]:.17g} {q[1]:.17g} {q[2]:.17g} {q[3]:.17g}"
        )
    return "\n".join(lines) + "\n"


_CSV_HEADER = "timestamp,tx,ty,tz,qx,qy,qz,qw"


def parse_csv_trajectory(text: str) -> Trajectory:
    """Parse the comma-separated twin of the TUM format.

    An optional first header line (starting with ``timestamp`` or ``#``)
    is skipped.
    """
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if lineno == 1 and line.lower().startswith("timestamp"):
            continue
        fields = [f.strip() for f in line.split(",")]
        if len(fields) != 8:
            raise ParseError(f"expected 8 comma-separated fields, got {len(fields)}", line=lineno)
        rows.append((lineno, _parse_floats(fields, lineno)))
    return _trajectory_from_rows(rows)


def write_csv_trajectory(traj: Trajectory) -> str:
    """Serialize as CSV with a header line."""
    lines = [_CSV_HEADER]
    for t, pose in zip(traj.timestamps, traj.poses):
        q = Rotation.from_matrix(pose[:3, :3]).as_quat()
        tx, ty, tz = pose[:3, 3]
        lines.append(
            f"{t:.9f},{tx:.17g},{ty:.17g},{tz:.17g},"
            f"{q[0]:.17g},{q[1]:.17g},{q[2]:.17g},{q[3]:.17g}"
        )
    return "\n".join(lines) + "\n"


_TRAJECTORY_PARSERS = {
    "kitti": parse_kitti_poses,
    "tum": parse_tum_trajectory,
    "csv": parse_csv_trajectory,
}

_TRAJECTORY_WRITERS = {
    "kitti": write_kitti_poses,
    "tum": write_tum_trajectory,
    "csv": write_csv_trajectory,
}


def parse_trajectory(text: str, fmt: str) -> Trajectory:
    """Dispatch to the parser for ``fmt`` in {kitti, tum, csv}."""
    try:
        parser = _TRAJECTORY_PARSERS[fmt]
    except KeyError:
        raise ValueError(f"unknown trajectory format {fmt!r}") from None
    return parser(text)


def write_trajectory(traj: Trajectory, fmt: str) -> str:
    """Dispatch to the writer for ``fmt`` in {kitti, tum, csv}."""
    try:
        writer = _TRAJECTORY_WRITERS[fmt]
    except KeyError:
        raise ValueError(f"unknown trajectory format {fmt!r}") from None
    return writer(traj)


# ---------------------------------------------------------------------------
# binary tensor interchange


def write_bvt1(array: np.ndarray) -> bytes:
    """Encode an array as BVT1 bytes (float32 payload, row-major)."""
    array = np.asarray(array)
    if array.ndim < 1:
        raise FormatError("rank-0 tensors are not representable")
    header = _BVT1_MAGIC + struct.pack("<I", array.ndim)
    header += struct.pack(f"<{array.ndim}I", *array.shape)
    payload = np.ascontiguousarray(array, dtype="<f4").tobytes()
    return header + payload


def read_bvt1(data: bytes) -> np.ndarray:
    """Decode BVT1 bytes into a float32 array.

    Raises:
        FormatError: bad magic, zero rank, or a byte length that does not
            match the declared dimensions exactly.
    """
    if len(data) < 8:
        raise FormatError(f"truncated header: {len(data)} bytes")
    if data[:4] != _BVT1_MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, expected {_BVT1_MAGIC!r}")
    (rank,) = struct.unpack_from("<I", data, 4)
    if rank == 0:
        raise FormatError("rank-0 tensors are not representable")
    if len(data) < 8 + 4 * rank:
        raise FormatError(f"truncated dimension list for rank {rank}")
    dims = struct.unpack_from(f"<{rank}I", data, 8)
    count = 1
    for d in dims:
        count *= d
    expected = 8 + 4 * rank + 4 * count
    if len(data) != expected:
        raise FormatError(
            f"payload length mismatch: {len(data)} bytes, header implies {expected}"
        )
    values = np.frombuffer(data, dtype="<f4", count=count, offset=8 + 4 * rank)
    return values.reshape(dims).copy()


# ---------------------------------------------------------------------------
# pipeline configuration


@dataclass(frozen=True)
class SamplerConfig:
    """Thresholds for pair selection."""

    window_s: float = DEFAULT_WINDOW_S
    max_disp_m: float = DEFAULT_MAX_DISP_M
    low_deg: float = DEFAULT_LOW_DEG
    high_deg: float = DEFAULT_HIGH_DEG


@dataclass(frozen=True)
class PipelineConfig:
    """Everything the CLI needs to interpret tensors geometrically."""

    grid: BevGridSpec
    camera: CameraModel
    depth_bins: np.ndarray
    radius_pv: int = 3
    radius_bev: int = 5
    sampler: SamplerConfig = field(default_factory=SamplerConfig)
    loss_weights: LossWeights = field(default_factory=LossWeights)


def _default_camera() -> CameraModel:
    # forward-looking camera 1.5 m up: optical axis along vehicle +x,
    # image x along -y (left is +y), image y along -z
    k = np.array([[100.0, 0.0, 64.0], [0.0, 100.0, 64.0], [0.0, 0.0, 1.0]])
    r = np.array([[0.0, 0.0, 1.0], [-1.0, 0.0, 0.0], [0.0, -1.0, 0.0]])
    e = np.hstack([r, np.array([[0.0], [0.0], [1.5]])])
    return CameraModel(intrinsics=k, extrinsics=e)


def default_config() -> PipelineConfig:
    """The stock configuration: 128x128 grid at 0.8 m, 64 depth bins."""
    return PipelineConfig(
        grid=BevGridSpec(height_px=128, width_px=128, resolution_m=0.8),
        camera=_default_camera(),
        depth_bins=np.linspace(1.0, 52.2, 64),
    )


def _require_keys(section: dict, allowed: set[str], where: str):
    unknown = sorted(set(section) - allowed)
    if unknown:
        raise ParseError(f"unknown {where} keys: {', '.join(unknown)}")


def parse_config(text: str) -> PipelineConfig:
    """Parse a JSON pipeline config, strictly.

    Every section is optional and falls back to the stock configuration,
    but unknown keys anywhere are rejected so typos cannot silently
    change an experiment.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    if not isinstance(doc, dict):
        raise ParseError("config root must be a JSON object")
    _require_keys(
        doc,
        {"grid", "camera", "depth_bins", "correlation", "sampler", "loss_weights"},
        "config",
    )
    base = default_config()

    grid = base.grid
    if "grid" in doc:
        sec = doc["grid"]
        _require_keys(sec, {"h", "w", "resolution_m", "origin"}, "grid")
        origin = sec.get("origin")
        if origin is not None and (not isinstance(origin, list) or len(origin) != 2):
            raise ParseError("grid.origin must be a two-element [o_x, o_y] list")
        grid = BevGridSpec(
            height_px=sec.get("h", 128),
            width_px=sec.get("w", 128),
            resolution_m=sec.get("resolution_m", 0.8),
            origin_px=tuple(origin) if origin is not None else None,
        )

    camera = base.camera
    if "camera" in doc:
        sec = doc["camera"]
        _require_keys(sec, {"K", "E"}, "camera")
        k_vals = np.array(sec.get("K", base.camera.intrinsics.reshape(-1)), dtype=float)
        e_vals = np.array(sec.get("E", base.camera.extrinsics.reshape(-1)), dtype=float)
        if k_vals.size != 9:
            raise ParseError("camera.K must hold 9 row-major reals")
        if e_vals.size != 12:
            raise ParseError("camera.E must hold 12 row-major reals")
        camera = CameraModel(intrinsics=k_vals.reshape(3, 3), extrinsics=e_vals.reshape(3, 4))

    depth_bins = base.depth_bins
    if "depth_bins" in doc:
        sec = doc["depth_bins"]
        _require_keys(sec, {"count", "min_m", "max_m"}, "depth_bins")
        count = int(sec.get("count", 64))
        if count < 1:
            raise ParseError("depth_bins.count must be >= 1")
        depth_bins = np.linspace(float(sec.get("min_m", 1.0)), float(sec.get("max_m", 52.2)), count)
        if np.any(depth_bins <= 0.0) or (count > 1 and np.any(np.diff(depth_bins) <= 0.0)):
            raise ParseError("depth bins must be positive and strictly increasing")

    radius_pv, radius_bev = base.radius_pv, base.radius_bev
    if "correlation" in doc:
        sec = doc["correlation"]
        _require_keys(sec, {"radius_pv", "radius_bev"}, "correlation")
        radius_pv = int(sec.get("radius_pv", radius_pv))
        radius_bev = int(sec.get("radius_bev", radius_bev))
        if radius_pv < 0 or radius_bev < 0:
            raise ParseError("correlation radii must be >= 0")

    sampler = base.sampler
    if "sampler" in doc:
        sec = doc["sampler"]
        _require_keys(sec, {"window_s", "max_disp_m", "low_deg", "high_deg"}, "sampler")
        sampler = SamplerConfig(
            window_s=float(sec.get("window_s", DEFAULT_WINDOW_S)),
            max_disp_m=float(sec.get("max_disp_m", DEFAULT_MAX_DISP_M)),
            low_deg=float(sec.get("low_deg", DEFAULT_LOW_DEG)),
            high_deg=float(sec.get("high_deg", DEFAULT_HIGH_DEG)),
        )

    weights = base.loss_weights
    if "loss_weights" in doc:
        sec = doc["loss_weights"]
        _require_keys(sec, {"alpha", "beta", "lambda1", "lambda2"}, "loss_weights")
        weights = LossWeights(
            alpha=float(sec.get("alpha", 10.0)),
            beta=float(sec.get("beta", 10.0)),
            lambda1=float(sec.get("lambda1", 1.0)),
            lambda2=float(sec.get("lambda2", 1.0)),
        )

    return PipelineConfig(
        grid=grid,
        camera=camera,
        depth_bins=depth_bins,
        radius_pv=radius_pv,
        radius_bev=radius_bev,
        sampler=sampler,
        loss_weights=weights,
    )


# ---------------------------------------------------------------------------
# timestamp association


def associate_by_timestamp(
    times_a: np.ndarray, times_b: np.ndarray, max_dt_s: float
) -> list[tuple[int, int]]:
    """Greedy monotone matching of two timestamp streams.

    Walks both streams once; each a-frame takes the nearest unclaimed
    b-frame within ``max_dt_s``.  Indices are strictly increasing on both
    sides of the returned pairing.
    """
    times_a = np.asarray(times_a, dtype=float)
    times_b = np.asarray(times_b, dtype=float)
    if max_dt_s < 0.0:
        raise ValueError("max_dt_s must be >= 0")
    pairs: list[tuple[int, int]] = []
    j_start = 0
    for i, ta in enumerate(times_a):
        best_j = -1
        best_dt = None
        j = j_start
        while j < times_b.size:
            dt = float(times_b[j] - ta)
            if dt > max_dt_s:
                break
            if abs(dt) <= max_dt_s and (best_dt is None or abs(dt) < best_dt):
                best_j = j
                best_dt = abs(dt)
            j += 1
        if best_j >= 0:
            pairs.append((i, best_j))
            j_start = best_j + 1
    return pairs


# ---------------------------------------------------------------------------
# synthetic trajectories

_PRIMITIVE_KINDS = ("straight", "arc", "stop")


@dataclass(frozen=True)
class MotionPrimitive:
    """One leg of a synthetic drive.

    ``straight`` moves at ``speed_mps`` with fixed heading; ``arc`` adds a
    constant yaw rate (degrees per second, nonzero); ``stop`` holds still.
    """

    kind: str
    duration_s: float
    speed_mps: float = 0.0
    yaw_rate_dps: float = 0.0

    def __post_init__(self):
        if self.kind not in _PRIMITIVE_KINDS:
            raise ValueError(f"kind must be one of {_PRIMITIVE_KINDS}, got {self.kind!r}")
        if not (math.isfinite(self.duration_s) and self.duration_s > 0.0):
            raise ValueError("duration must be positive")
        if self.kind == "arc" and self.yaw_rate_dps == 0.0:
            raise ValueError("arc primitives need a nonzero yaw rate")
        if self.kind == "stop" and (self.speed_mps != 0.0 or self.yaw_rate_dps != 0.0):
            raise ValueError("stop primitives must not move")


@dataclass(frozen=True)
class SynthSpec:
    """Recipe for a ground-truth drive plus a corrupted odometry estimate.

    The estimate integrates the ground-truth frame-to-frame motions after
    multiplying translations by ``scale_drift`` and adding zero-mean
    Gaussian noise (``noise_trans_m`` per planar axis, ``noise_yaw_deg``).
    With no noise and unit drift the estimate equals the ground truth.
    """

    primitives: tuple[MotionPrimitive, ...]
    dt_s: float = 0.1
    noise_trans_m: float = 0.0
    noise_yaw_deg: float = 0.0
    scale_drift: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if not self.primitives:
            raise ValueError("need at least one motion primitive")
        if not (math.isfinite(self.dt_s) and self.dt_s > 0.0):
            raise ValueError("dt must be positive")
        if self.noise_trans_m < 0.0 or self.noise_yaw_deg < 0.0:
            raise ValueError("noise magnitudes must be >= 0")
        if not (math.isfinite(self.scale_drift) and self.scale_drift > 0.0):
            raise ValueError("scale drift must be positive")
        object.__setattr__(self, "primitives", tuple(self.primitives))


def parse_synth_spec(text: str) -> SynthSpec:
    """Parse a JSON synth spec, strictly (unknown keys rejected)."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    if not isinstance(doc, dict):
        raise ParseError("synth spec root must be a JSON object")
    _require_keys(
        doc,
        {"primitives", "dt_s", "noise_trans_m", "noise_yaw_deg", "scale_drift", "seed"},
        "synth spec",
    )
    if "primitives" not in doc or not isinstance(doc["primitives"], list):
        raise ParseError("synth spec needs a 'primitives' list")
    prims = []
    for i, sec in enumerate(doc["primitives"]):
        if not isinstance(sec, dict):
            raise ParseError(f"primitive {i} must be a JSON object")
        _require_keys(sec, {"kind", "duration_s", "speed_mps", "yaw_rate_dps"}, f"primitive {i}")
        try:
            prims.append(
                MotionPrimitive(
                    kind=sec.get("kind", ""),
                    duration_s=float(sec.get("duration_s", 0.0)),
                    speed_mps=float(sec.get("speed_mps", 0.0)),
                    yaw_rate_dps=float(sec.get("yaw_rate_dps", 0.0)),
                )
            )
        except ValueError as exc:
            raise ParseError(f"primitive {i}: {exc}") from None
    try:
        return SynthSpec(
            primitives=tuple(prims),
            dt_s=float(doc.get("dt_s", 0.1)),
            noise_trans_m=float(doc.get("noise_trans_m", 0.0)),
            noise_yaw_deg=float(doc.get("noise_yaw_deg", 0.0)),
            scale_drift=float(doc.get("scale_drift", 1.0)),
            seed=int(doc.get("seed", 0)),
        )
    except ValueError as exc:
        raise ParseError(str(exc)) from None


def _primitive_pose(prim: MotionPrimitive, start: Pose2, tau: float) -> Pose2:
    """Closed-form pose ``tau`` seconds into a primitive from ``start``.

    Arcs use the exact circle equations, so sampled endpoints sit on the
    true circle rather than on an integrated polyline.
    """
    if prim.kind == "stop":
        return start
    theta0 = start.theta
    v = prim.speed_mps
    if prim.kind == "straight":
        return Pose2(
            theta0,
            start.tx + v * tau * math.cos(theta0),
            start.ty + v * tau * math.sin(theta0),
        )
    omega = math.radians(prim.yaw_rate_dps)
    theta = theta0 + omega * tau
    radius = v / omega
    return Pose2(
        theta,
        start.tx + radius * (math.sin(theta) - math.sin(theta0)),
        start.ty - radius * (math.cos(theta) - math.cos(theta0)),
    )


def synth_trajectory(spec: SynthSpec) -> tuple[Trajectory, Trajectory]:
    """Generate (ground truth, corrupted estimate) trajectories.

    Ground truth is sampled every ``dt_s`` seconds from the closed-form
    motion (endpoint included when total duration is a multiple of dt).
    The estimate recomposes the per-step relative motions after applying
    scale drift and noise; it is bit-identical to the ground truth when
    both corruptions are off.
    """
    durations = [p.duration_s for p in spec.primitives]
    total = sum(durations)
    n_steps = int(math.floor(total / spec.dt_s + 1e-9))
    times = np.arange(n_steps + 1, dtype=float) * spec.dt_s

    starts: list[Pose2] = [Pose2.identity()]
    for prim in spec.primitives:
        starts.append(_primitive_pose(prim, starts[-1], prim.duration_s))
    bounds = np.cumsum([0.0] + durations)

    gt_planar: list[Pose2] = []
    for t in times:
        # np.searchsorted over primitive start times; clamp the endpoint
        idx = int(np.searchsorted(bounds, t, side="right")) - 1
        idx = min(idx, len(spec.primitives) - 1)
        gt_planar.append(_primitive_pose(spec.primitives[idx], starts[idx], t - bounds[idx]))
    gt_poses = np.array([pose2_to_pose3(p).matrix for p in gt_planar])
    gt = Trajectory(times, gt_poses)

    if spec.noise_trans_m == 0.0 and spec.noise_yaw_deg == 0.0 and spec.scale_drift == 1.0:
        return gt, Trajectory(times, gt_poses)

    rng = np.random.default_rng(spec.seed)
    noise_yaw = math.radians(spec.noise_yaw_deg)
    est_mats = [gt_poses[0]]
    for k in range(1, len(times)):
        prev = gt_planar[k - 1]
        cur = gt_planar[k]
        # relative planar motion in the previous frame's coordinates
        dtheta = wrap_angle(cur.theta - prev.theta)
        dx_w = cur.tx - prev.tx
        dy_w = cur.ty - prev.ty
        c, s = math.cos(prev.theta), math.sin(prev.theta)
        rel = Pose2(dtheta, c * dx_w + s * dy_w, -s * dx_w + c * dy_w)
        corrupted = Pose2(
            rel.theta + noise_yaw * rng.standard_normal(),
            rel.tx * spec.scale_drift + spec.noise_trans_m * rng.standard_normal(),
            rel.ty * spec.scale_drift + spec.noise_trans_m * rng.standard_normal(),
        )
        est_mats.append(est_mats[-1] @ pose2_to_pose3(corrupted).matrix)
    return gt, Trajectory(times, np.array(est_mats))


# ---------------------------------------------------------------------------
# CSV side outputs


_PAIRS_HEADER = "anchor_id,partner_id,yaw_diff_deg,displacement_m"


def write_pairs_csv(records: list[PairRecord]) -> str:
    """Serialize drawn or enumerated pairs as CSV."""
    lines = [_PAIRS_HEADER]
    for r in records:
        lines.append(f"{r.anchor_id},{r.partner_id},{r.yaw_diff_deg:.17g},{r.displacement_m:.17g}")
    return "\n".join(lines) + "\n"


def parse_pairs_csv(text: str) -> list[PairRecord]:
    """Parse the pairs CSV written by :func:`write_pairs_csv`."""
    records = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if lineno == 1 and line.lower().startswith("anchor_id"):
            continue
        fields = [f.strip() for f in line.split(",")]
        if len(fields) != 4:
            raise ParseError(f"expected 4 comma-separated fields, got {len(fields)}", line=lineno)
        try:
            records.append(
                PairRecord(
                    anchor_id=int(fields[0]),
                    partner_id=int(fields[1]),
                    yaw_diff_deg=float(fields[2]),
                    displacement_m=float(fields[3]),
                )
            )
        except ValueError as exc:
            raise ParseError(f"bad pair record: {exc}", line=lineno) from None
    return records


def write_flow_csv(flow: FlowField) -> str:
    """Debug dump of a flow field: one ``u,v,du,dv`` row per pixel.

    Rows iterate v (grid rows) in the outer loop and u in the inner one.
    """
    lines = ["u,v,du,dv"]
    du = flow.data[0]
    dv = flow.data[1]
    for v in range(flow.grid.height_px):
        for u in range(flow.grid.width_px):
            lines.append(f"{u},{v},{du[v, u]:.17g},{dv[v, u]:.17g}")
    return "\n".join(lines) + "\n"


def write_scale_curve_csv(curve: LogScaleCurve) -> str:
    """Serialize a per-segment log-scale curve as ``segment_index,log2_scale``."""
    lines = ["segment_index,log2_scale"]
    for idx, val in zip(curve.segment_indices, curve.values):
        lines.append(f"{int(idx)},{val:.17g}")
    return "\n".join(lines) + "\n"


def flow_to_bvt1(flow: FlowField) -> bytes:
    """Encode a flow field's (2, H, W) data as BVT1 bytes."""
    return write_bvt1(flow.data)


def flow_from_bvt1(data: bytes, grid: BevGridSpec) -> FlowField:
    """Decode BVT1 bytes into a flow field on the given grid.

    Raises:
        ShapeError: the tensor is not (2, H, W) for the grid.
    """
    arr = read_bvt1(data)
    if arr.ndim != 3 or arr.shape[0] != 2:
        raise ShapeError(f"flow tensor must have shape (2, H, W), got {arr.shape}")
    return FlowField(arr.astype(float), grid)
