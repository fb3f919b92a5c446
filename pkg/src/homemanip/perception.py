"""Task features from segmented clouds: handle grasps, open state, bucket rim, chair center."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional

import numpy as np

from .errors import DegenerateCloud, EmptySelection, InvalidParameter, NoGraspFound, NoRimFound
from .geometry import (Label, PointCloud, Pose, Z_AXIS, centroid, oriented_bbox, pca_planar_axes,
                       principal_axis_2x2, unit, z_bin_indices)


@dataclass(frozen=True)
class PerceptionConfig:
    min_handle_points: int = 50
    min_handle_frames: int = 10
    station_spacing: float = 0.005
    orientation_threshold: float = math.pi / 4
    rim_bin_height: float = 0.01
    # min_count per rim slice, expressed per 2000 cloud points
    rim_min_count_per_2000: float = 100.0
    rim_margin: float = 0.01
    cushion_height: float = 0.35


class GraspOrientation(Enum):
    HORIZONTAL = "horizontal"  # fingers close along a horizontal axis
    VERTICAL = "vertical"  # fingers close along world z


@dataclass(frozen=True, eq=False)
class GraspCandidate:
    """Antipodal grasp. Gripper frame: +z approaches, +y is the closing axis."""

    pose: Pose
    width: float
    orientation_class: GraspOrientation
    centroid_distance: float
    depth: float = 0.0  # handle extent along the approach axis

    @property
    def position(self) -> np.ndarray:
        return self.pose.translation

    @property
    def approach(self) -> np.ndarray:
        return self.pose.rotation[:, 2]

    @property
    def closing(self) -> np.ndarray:
        return self.pose.rotation[:, 1]


@dataclass(frozen=True, eq=False)
class HandleAccumulator:
    merged: PointCloud = field(default_factory=PointCloud.empty)
    frames_seen: int = 0


@dataclass(frozen=True, eq=False)
class RimEstimate:
    rim_points: PointCloud
    rim_height: float
    rim_center: np.ndarray
    rim_radius: float
    rim_thickness: float

    @property
    def outer_radius(self) -> float:
        return self.rim_radius + 0.5 * self.rim_thickness


def accumulate_handle(acc: HandleAccumulator, observation: PointCloud,
                      min_points: int = 50, min_frames: int = 10) -> tuple[HandleAccumulator, bool]:
    """Append this frame's handle points; ready once either threshold is met."""
    handle = observation.select(Label.HANDLE)
    merged = PointCloud.concatenate([acc.merged, handle], frame_index=observation.frame_index)
    new = HandleAccumulator(merged, acc.frames_seen + 1)
    return new, len(new.merged) >= min_points or new.frames_seen >= min_frames


def handle_axis_elevation(handle: PointCloud) -> tuple[np.ndarray, float]:
    """Planar major axis of the handle and the elevation (rad) of its principal direction.

    The elevation is taken in the vertical plane containing the planar major
    axis, using the same closed-form 2x2 eigen-solve as the planar PCA.
    """
    pts = handle.points
    try:
        major, _ = pca_planar_axes(handle)
    except DegenerateCloud:
        return np.array([1.0, 0.0, 0.0]), math.pi / 2
    d = pts - pts.mean(axis=0)
    s = d @ major
    t = d[:, 2]
    v, lam1, _ = principal_axis_2x2(float(s @ s), float(s @ t), float(t @ t))
    if lam1 <= 0:
        return major, 0.0
    return major, math.atan2(abs(v[1]), abs(v[0]))


def estimate_handle_grasps(handle: PointCloud, max_jaw_width: float,
                           approach_hint: Optional[np.ndarray] = None,
                           station_spacing: float = 0.005,
                           orientation_threshold: float = math.pi / 4) -> list[GraspCandidate]:
    """Antipodal grasps along the handle, sorted by distance to the handle centroid.

    A handle whose principal direction is within ``orientation_threshold`` of
    horizontal gets VERTICAL grasps (fingers close along z); otherwise
    HORIZONTAL. ``approach_hint`` fixes the sign of the approach axis; without
    it the approach has a nonnegative x component.
    """
    if len(handle) == 0:
        raise EmptySelection("empty handle cloud")
    if max_jaw_width <= 0:
        raise InvalidParameter("max_jaw_width must be positive")
    pts = handle.points
    c = pts.mean(axis=0)
    hint = np.array([1.0, 0.0, 0.0]) if approach_hint is None else np.asarray(approach_hint, float)
    major, elevation = handle_axis_elevation(handle)

    if elevation <= orientation_threshold:
        cls = GraspOrientation.VERTICAL
        bar = major
        approach = np.cross(Z_AXIS, bar)
        if approach @ hint < 0:
            approach = -approach
        closing = Z_AXIS.copy()
    else:
        cls = GraspOrientation.HORIZONTAL
        bar = Z_AXIS.copy()
        flat = np.array([hint[0], hint[1], 0.0])
        approach = unit(flat) if np.linalg.norm(flat) > 1e-9 else np.array([1.0, 0.0, 0.0])
        closing = np.cross(Z_AXIS, approach)
    x_axis = np.cross(closing, approach)
    R = np.column_stack([x_axis, closing, approach])

    s = pts @ bar
    w = pts @ closing
    a = pts @ approach
    s_lo, s_hi = float(s.min()), float(s.max())
    n_st = int(math.floor((s_hi - s_lo) / station_spacing)) + 1
    stations = s_lo + station_spacing * np.arange(n_st)
    if n_st > 1:
        stations += 0.5 * ((s_hi - s_lo) - station_spacing * (n_st - 1))
    out = []
    for st in stations:
        sel = np.abs(s - st) <= station_spacing
        if np.count_nonzero(sel) < 2:
            continue
        w_lo, w_hi = float(w[sel].min()), float(w[sel].max())
        width = w_hi - w_lo
        if width > max_jaw_width:
            continue
        a_lo, a_hi = float(a[sel].min()), float(a[sel].max())
        pos = st * bar + 0.5 * (w_lo + w_hi) * closing + 0.5 * (a_lo + a_hi) * approach
        out.append(GraspCandidate(Pose(R, pos), width, cls, float(np.linalg.norm(pos - c)),
                                  a_hi - a_lo))
    if not out:
        raise NoGraspFound("every antipodal width exceeds the jaw opening")
    out.sort(key=lambda g: (g.centroid_distance, *g.position.tolist()))
    return out


def detect_open_displacement(current: PointCloud, initial: PointCloud, panel_label: Label,
                             outward=(1.0, 0.0, 0.0)) -> float:
    """Signed panel-centroid displacement along the cabinet's outward axis."""
    n = unit(outward)
    return float((centroid(current, panel_label) - centroid(initial, panel_label)) @ n)


def estimate_hinge_angle(panel: PointCloud, hinge: np.ndarray, closed_direction: np.ndarray,
                         outward: np.ndarray) -> float:
    """Door opening angle from the panel's planar principal axis.

    ``closed_direction`` points from the hinge along the closed panel toward
    its free edge; the angle grows as the free edge swings along ``outward``.
    """
    major, _ = pca_planar_axes(panel)
    rel = panel.points.mean(axis=0) - hinge
    if major @ rel < 0:
        major = -major
    l = unit(np.array([closed_direction[0], closed_direction[1], 0.0]))
    u = unit(np.array([outward[0], outward[1], 0.0]))
    return math.atan2(float(major @ u), float(major @ l))


def default_rim_min_count(n_points: int, per_2000: float = 100.0) -> int:
    return max(1, int(round(per_2000 * n_points / 2000.0)))


def estimate_bucket_rim(bucket: PointCloud, bin_height: float = 0.01,
                        min_count: Optional[int] = None) -> RimEstimate:
    """Highest z-slice holding at least ``min_count`` points, summarised as a circle."""
    if len(bucket) == 0:
        raise EmptySelection("empty bucket cloud")
    if min_count is None:
        min_count = default_rim_min_count(len(bucket))
    if min_count < 1:
        raise InvalidParameter("min_count must be >= 1")
    pts = bucket.points
    _, nbins, idx = z_bin_indices(pts[:, 2], bin_height)
    counts = np.bincount(idx, minlength=nbins)
    full = np.nonzero(counts >= min_count)[0]
    if len(full) == 0:
        raise NoRimFound(f"no slice reaches {min_count} points")
    sel = idx == full[-1]
    rim = bucket.mask(sel)
    rp = rim.points
    center = np.array([rp[:, 0].mean(), rp[:, 1].mean(), rp[:, 2].mean()])
    radial = np.linalg.norm(rp[:, :2] - center[:2], axis=1)
    radius = float(radial.mean())
    if radius <= 0:
        raise NoRimFound("rim slice collapses to a point")
    return RimEstimate(rim, float(center[2]), center, radius, float(radial.max() - radial.min()))


def rim_graspable(rim: RimEstimate, max_jaw_width: float, margin: float = 0.01) -> bool:
    return rim.rim_thickness + margin <= max_jaw_width + 1e-12


def estimate_chair_center(chair: PointCloud, cushion_height: float = 0.35) -> np.ndarray:
    """Center of the PCA-aligned box around the chair's upper body."""
    upper = chair.mask(chair.points[:, 2] >= cushion_height)
    if len(upper) == 0:
        raise EmptySelection("no chair points at or above the cushion")
    axes = pca_planar_axes(upper)
    return oriented_bbox(upper, axes).center


def chair_span_along(chair: PointCloud, direction: np.ndarray, center: np.ndarray,
                     cushion_height: float = 0.35) -> tuple[float, float]:
    """Extreme offsets ``(lo, hi)`` of upper-body points from ``center`` along ``direction``."""
    upper = chair.points[chair.points[:, 2] >= cushion_height]
    if len(upper) == 0:
        raise EmptySelection("no chair points at or above the cushion")
    s = (upper - center) @ unit(direction)
    return float(s.min()), float(s.max())


def chair_extent_along(chair: PointCloud, direction: np.ndarray, center: np.ndarray,
                       cushion_height: float = 0.35) -> float:
    """Largest distance of upper-body points from ``center`` along ``direction``."""
    lo, hi = chair_span_along(chair, direction, center, cushion_height)
    return max(-lo, hi)
