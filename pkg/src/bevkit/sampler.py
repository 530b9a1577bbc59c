"""Rotation-aware training pair selection over a posed frame sequence.

Pairs within a temporal window and a displacement budget are split by
relative yaw magnitude into a high-rotation list and a standard list;
draws then oversample the high-rotation list to rebalance turning data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateInputError, NoPairsError
from .geometry import Pose3, pose3_to_pose2, relative_pose

DEFAULT_WINDOW_S = 60.0
DEFAULT_MAX_DISP_M = 4.0
DEFAULT_LOW_DEG = 15.0
DEFAULT_HIGH_DEG = 45.0
DEFAULT_HIGH_FRACTION = 0.7


@dataclass(frozen=True)
class FrameIndex:
    """One posed frame of a sequence: integer id, timestamp, world pose."""

    id: int
    timestamp: float
    pose: Pose3

    def __post_init__(self):
        object.__setattr__(self, "id", int(self.id))
        ts = float(self.timestamp)
        if not math.isfinite(ts):
            raise ValueError("timestamp must be finite")
        object.__setattr__(self, "timestamp", ts)


@dataclass(frozen=True)
class PairRecord:
    """A candidate training pair with its relative-motion summary.

    ``yaw_diff_deg`` is the absolute relative yaw in degrees, in [0, 180];
    ``displacement_m`` is the planar distance between the two frames.
    """

    anchor_id: int
    partner_id: int
    yaw_diff_deg: float
    displacement_m: float


@dataclass
class PairLists:
    """The two candidate pools for one anchor (or a whole sequence)."""

    high: list[PairRecord] = field(default_factory=list)
    standard: list[PairRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.high) + len(self.standard)


def merge_pair_lists(per_anchor: dict[int, PairLists]) -> PairLists:
    """Concatenate per-anchor lists (in anchor-id order) into one pool."""
    merged = PairLists()
    for anchor in sorted(per_anchor):
        merged.high.extend(per_anchor[anchor].high)
        merged.standard.extend(per_anchor[anchor].standard)
    return merged


def build_pair_lists(
    frames: list[FrameIndex],
    window_s: float = DEFAULT_WINDOW_S,
    max_disp_m: float = DEFAULT_MAX_DISP_M,
    low_deg: float = DEFAULT_LOW_DEG,
    high_deg: float = DEFAULT_HIGH_DEG,
) -> dict[int, PairLists]:
    """Classify every admissible ordered pair around each anchor frame.

    A partner is admissible when its timestamp lies within ``window_s``
    of the anchor (inclusive, both directions) and the planar displacement
    is at most ``max_disp_m``.  Admissible pairs with absolute relative
    yaw in [low_deg, high_deg] (inclusive ends) go to the high-rotation
    list; pairs strictly below ``low_deg`` go to the standard list; pairs
    above ``high_deg`` are discarded as unreliable.

    Args:
        frames: posed frames with nondecreasing timestamps.

    Returns:
        Mapping anchor id -> PairLists for that anchor; empty for an
        empty sequence.
    """
    if not frames:
        return {}
    if not (0.0 <= low_deg <= high_deg):
        raise ValueError("need 0 <= low_deg <= high_deg")
    if window_s < 0.0 or max_disp_m < 0.0:
        raise ValueError("window and displacement budgets must be >= 0")
    times = np.array([f.timestamp for f in frames], dtype=float)
    if np.any(np.diff(times) < 0.0):
        raise ValueError("frame timestamps must be nondecreasing")

    out: dict[int, PairLists] = {}
    n = len(frames)
    for i, anchor in enumerate(frames):
        lists = PairLists()
        lo = int(np.searchsorted(times, anchor.timestamp - window_s, side="left"))
        hi = int(np.searchsorted(times, anchor.timestamp + window_s, side="right"))
        for j in range(lo, min(hi, n)):
            if j == i:
                continue
            rel = pose3_to_pose2(relative_pose(anchor.pose, frames[j].pose))
            disp = math.hypot(rel.tx, rel.ty)
            if disp > max_disp_m:
                continue
            yaw = abs(math.degrees(rel.theta))
            if yaw > high_deg:
                continue
            record = PairRecord(
                anchor_id=anchor.id,
                partner_id=frames[j].id,
                yaw_diff_deg=yaw,
                displacement_m=disp,
            )
            if yaw >= low_deg:
                lists.high.append(record)
            else:
                lists.standard.append(record)
        out[anchor.id] = lists
    return out


def sample_pair(
    lists: PairLists,
    rng: np.random.Generator,
    high_fraction: float = DEFAULT_HIGH_FRACTION,
) -> PairRecord:
    """Draw one pair, preferring the high-rotation list.

    With probability ``high_fraction`` the draw comes from the high list,
    otherwise from the standard list; an empty chosen list falls back to
    the other one.  Within a list the pick is uniform.

    Raises:
        NoPairsError: both lists are empty.
    """
    if not (0.0 <= high_fraction <= 1.0):
        raise ValueError("high_fraction must lie in [0, 1]")
    if not lists.high and not lists.standard:
        raise NoPairsError("no admissible pairs to sample from")
    pool = lists.high if rng.random() < high_fraction else lists.standard
    if not pool:
        pool = lists.high if lists.high else lists.standard
    return pool[int(rng.integers(len(pool)))]


@dataclass(frozen=True)
class SamplingStats:
    """Histograms over a drawn-pair log."""

    yaw_hist: np.ndarray
    yaw_edges: np.ndarray
    disp_hist: np.ndarray
    disp_edges: np.ndarray
    high_fraction: float


def sampling_stats(
    records: list[PairRecord],
    low_deg: float = DEFAULT_LOW_DEG,
    yaw_bins: int = 36,
    disp_bins: int = 16,
) -> SamplingStats:
    """Histogram the yaw and displacement of a nonempty draw log.

    ``high_fraction`` reports the share of draws at or above ``low_deg``
    of relative yaw.
    """
    if not records:
        raise DegenerateInputError("draw log is empty")
    yaw = np.array([r.yaw_diff_deg for r in records], dtype=float)
    disp = np.array([r.displacement_m for r in records], dtype=float)
    yaw_hist, yaw_edges = np.histogram(yaw, bins=yaw_bins, range=(0.0, 180.0))
    disp_hist, disp_edges = np.histogram(disp, bins=disp_bins, range=(0.0, float(disp.max()) or 1.0))
    return SamplingStats(
        yaw_hist=yaw_hist,
        yaw_edges=yaw_edges,
        disp_hist=disp_hist,
        disp_edges=disp_edges,
        high_fraction=float(np.count_nonzero(yaw >= low_deg) / yaw.size),
    )


def frames_from_trajectory(timestamps: np.ndarray, poses: np.ndarray) -> list[FrameIndex]:
    """Wrap parallel timestamp/pose arrays as FrameIndex records, ids 0..N-1."""
    timestamps = np.asarray(timestamps, dtype=float)
    poses = np.asarray(poses, dtype=float)
    if timestamps.ndim != 1 or poses.shape != (timestamps.size, 4, 4):
        raise DegenerateInputError(
            f"need (N,) timestamps with (N, 4, 4) poses, got {timestamps.shape} and {poses.shape}"
        )
    return [
        FrameIndex(id=i, timestamp=float(timestamps[i]), pose=Pose3(poses[i]))
        for i in range(timestamps.size)
    ]
