"""Rigid transforms and point-cloud geometry.

World frame convention: +z is up, planar locomotion happens in x-y.
Vectors are plain ``(3,)`` float arrays; clouds are ``(N, 3)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateCloud, EmptySelection, InvalidParameter

Z_AXIS = np.array([0.0, 0.0, 1.0])


class Label(IntEnum):
    HANDLE = 0
    DOOR_PANEL = 1
    DRAWER_PANEL = 2
    BUCKET = 3
    CHAIR = 4
    TARGET_REGION = 5
    ROBOT = 6
    OTHER = 7


def vec3(x, y=None, z=None) -> np.ndarray:
    if y is None:
        v = np.asarray(x, dtype=float).reshape(3)
    else:
        v = np.array([x, y, z], dtype=float)
    if not np.all(np.isfinite(v)):
        raise InvalidParameter(f"non-finite vector {v}")
    return v


def unit(v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n == 0.0:
        raise InvalidParameter("cannot normalise a zero vector")
    return v / n


def rot_z(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def axis_angle_matrix(axis, angle: float) -> np.ndarray:
    """Rodrigues rotation about a unit ``axis``."""
    x, y, z = axis
    c, s = math.cos(angle), math.sin(angle)
    C = 1.0 - c
    return np.array([
        [c + x * x * C, x * y * C - z * s, x * z * C + y * s],
        [y * x * C + z * s, c + y * y * C, y * z * C - x * s],
        [z * x * C - y * s, z * y * C + x * s, c + z * z * C],
    ])


def rotation_log(R: np.ndarray) -> np.ndarray:
    """Axis-angle vector of a rotation matrix (angle in [0, pi])."""
    cos_t = (np.trace(R) - 1.0) / 2.0
    cos_t = min(1.0, max(-1.0, cos_t))
    theta = math.acos(cos_t)
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    if theta < 1e-9:
        return 0.5 * w
    if math.pi - theta < 1e-6:
        # near pi the skew part vanishes; recover the axis from the symmetric part
        B = (R + np.eye(3)) / 2.0
        k = int(np.argmax(np.diag(B)))
        axis = B[:, k] / math.sqrt(max(B[k, k], 1e-300))
        if np.dot(axis, w) < 0:
            axis = -axis
        return theta * unit(axis)
    return theta / (2.0 * math.sin(theta)) * w


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform ``p_world = rotation @ p_local + translation``."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        R = np.array(self.rotation, dtype=float).reshape(3, 3)
        t = np.array(self.translation, dtype=float).reshape(3)
        if not (np.all(np.isfinite(R)) and np.all(np.isfinite(t))):
            raise InvalidParameter("pose must be finite")
        if np.abs(R @ R.T - np.eye(3)).max() > 1e-6 or np.linalg.det(R) < 0:
            raise InvalidParameter("rotation is not a proper orthonormal matrix")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls()

    @classmethod
    def from_matrix(cls, T) -> "Pose":
        T = np.asarray(T, dtype=float)
        return cls(T[:3, :3], T[:3, 3])

    @classmethod
    def from_translation(cls, x, y=None, z=None) -> "Pose":
        return cls(np.eye(3), vec3(x, y, z))

    @property
    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.rotation
        T[:3, 3] = self.translation
        return T

    def __matmul__(self, other: "Pose") -> "Pose":
        return Pose(self.rotation @ other.rotation,
                    self.rotation @ other.translation + self.translation)

    compose = __matmul__

    def inverse(self) -> "Pose":
        Rt = self.rotation.T
        return Pose(Rt, -Rt @ self.translation)

    def apply(self, points) -> np.ndarray:
        p = np.asarray(points, dtype=float)
        return p @ self.rotation.T + self.translation

    def allclose(self, other: "Pose", atol: float = 1e-9) -> bool:
        return (np.allclose(self.rotation, other.rotation, atol=atol)
                and np.allclose(self.translation, other.translation, atol=atol))

    def __repr__(self) -> str:
        return f"Pose(t={np.round(self.translation, 4).tolist()})"


@dataclass(frozen=True, eq=False)
class PointCloud:
    points: np.ndarray
    labels: np.ndarray
    colors: Optional[np.ndarray] = None
    frame_index: int = 0

    def __post_init__(self):
        pts = np.array(self.points, dtype=float).reshape(-1, 3)
        labels = np.array(self.labels, dtype=np.int8).reshape(-1)
        if len(labels) != len(pts):
            raise InvalidParameter("points and labels differ in length")
        if self.colors is not None:
            colors = np.array(self.colors, dtype=float).reshape(-1, 3)
            if len(colors) != len(pts):
                raise InvalidParameter("points and colors differ in length")
            colors.setflags(write=False)
            object.__setattr__(self, "colors", colors)
        if self.frame_index < 0:
            raise InvalidParameter("frame_index must be nonnegative")
        pts.setflags(write=False)
        labels.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def empty(cls, frame_index: int = 0) -> "PointCloud":
        return cls(np.zeros((0, 3)), np.zeros(0, dtype=np.int8), None, frame_index)

    @classmethod
    def from_points(cls, points, label: Label = Label.OTHER, frame_index: int = 0) -> "PointCloud":
        pts = np.asarray(points, dtype=float).reshape(-1, 3)
        return cls(pts, np.full(len(pts), int(label), dtype=np.int8), None, frame_index)

    @classmethod
    def concatenate(cls, clouds: Sequence["PointCloud"], frame_index: Optional[int] = None) -> "PointCloud":
        clouds = list(clouds)
        if not clouds:
            return cls.empty(frame_index or 0)
        colors = None
        if all(c.colors is not None for c in clouds):
            colors = np.concatenate([c.colors for c in clouds])
        if frame_index is None:
            frame_index = max(c.frame_index for c in clouds)
        return cls(np.concatenate([c.points for c in clouds]),
                   np.concatenate([c.labels for c in clouds]), colors, frame_index)

    def __len__(self) -> int:
        return len(self.points)

    def mask(self, keep: np.ndarray) -> "PointCloud":
        colors = None if self.colors is None else self.colors[keep]
        return PointCloud(self.points[keep], self.labels[keep], colors, self.frame_index)

    def select(self, label: Optional[Label]) -> "PointCloud":
        if label is None:
            return self
        return self.mask(self.labels == int(label))

    def transformed(self, pose: Pose) -> "PointCloud":
        return PointCloud(pose.apply(self.points), self.labels, self.colors, self.frame_index)


@dataclass(frozen=True, eq=False)
class OrientedBox:
    center: np.ndarray
    axes: np.ndarray  # rows are the box axes
    half_extents: np.ndarray


def _points(cloud) -> np.ndarray:
    if isinstance(cloud, PointCloud):
        return cloud.points
    return np.asarray(cloud, dtype=float).reshape(-1, 3)


def centroid(cloud: PointCloud, label_filter: Optional[Label] = None) -> np.ndarray:
    pts = _points(cloud.select(label_filter) if isinstance(cloud, PointCloud) else cloud)
    if len(pts) == 0:
        raise EmptySelection(f"no points with label {label_filter!r}")
    return pts.mean(axis=0)


def planar_covariance(points: np.ndarray) -> np.ndarray:
    xy = points[:, :2] - points[:, :2].mean(axis=0)
    return xy.T @ xy / len(xy)


def principal_axis_2x2(a: float, b: float, c: float) -> tuple[np.ndarray, float, float]:
    """Closed-form major eigenvector of the symmetric matrix [[a, b], [b, c]].

    Returns ``(vector, major_eigenvalue, minor_eigenvalue)``; the vector has a
    nonnegative first component, ties going to +second component.
    """
    half_tr = 0.5 * (a + c)
    disc = math.hypot(0.5 * (a - c), b)
    lam1, lam2 = half_tr + disc, half_tr - disc
    scale = abs(a) + abs(c)
    if abs(b) > 1e-12 * scale:
        v = np.array([lam1 - c, b])
        # pick the better-conditioned of the two equivalent eigenvector forms
        alt = np.array([b, lam1 - a])
        if np.linalg.norm(alt) > np.linalg.norm(v):
            v = alt
    elif a >= c:
        v = np.array([1.0, 0.0])
    else:
        v = np.array([0.0, 1.0])
    v = v / np.linalg.norm(v)
    if v[0] < -1e-12 or (abs(v[0]) <= 1e-12 and v[1] < 0):
        v = -v
    return v, lam1, lam2


def pca_planar_axes(cloud: PointCloud) -> tuple[np.ndarray, np.ndarray]:
    """Principal axes of the cloud projected onto the ground plane.

    Population (1/N) covariance; the major axis points toward +x (ties to +y)
    and the minor axis is the major rotated +90 degrees about z.
    """
    pts = _points(cloud)
    if len(pts) == 0:
        raise DegenerateCloud("empty cloud")
    cov = planar_covariance(pts)
    v, lam1, _ = principal_axis_2x2(cov[0, 0], cov[0, 1], cov[1, 1])
    if lam1 <= 1e-18:
        raise DegenerateCloud("all points coincide in the ground plane")
    major = np.array([v[0], v[1], 0.0])
    minor = np.array([-v[1], v[0], 0.0])
    return major, minor


def oriented_bbox(cloud: PointCloud, axes: tuple[np.ndarray, np.ndarray]) -> OrientedBox:
    pts = _points(cloud)
    if len(pts) == 0:
        raise DegenerateCloud("empty cloud")
    major = np.asarray(axes[0], dtype=float)
    minor = np.asarray(axes[1], dtype=float)
    if (abs(np.linalg.norm(major) - 1) > 1e-9 or abs(np.linalg.norm(minor) - 1) > 1e-9
            or abs(major @ minor) > 1e-9):
        raise InvalidParameter("box axes must be orthonormal")
    A = np.stack([major, minor, np.cross(major, minor)])
    local = pts @ A.T
    lo, hi = local.min(axis=0), local.max(axis=0)
    return OrientedBox(center=0.5 * (lo + hi) @ A, axes=A, half_extents=0.5 * (hi - lo))


def z_bin_indices(z: np.ndarray, bin_height: float) -> tuple[float, int, np.ndarray]:
    if bin_height <= 0:
        raise InvalidParameter("bin_height must be positive")
    if len(z) == 0:
        raise EmptySelection("empty cloud")
    z0 = float(z.min())
    nbins = int(math.floor((float(z.max()) - z0) / bin_height)) + 1
    idx = np.minimum(np.floor((z - z0) / bin_height).astype(int), nbins - 1)
    return z0, nbins, idx


def z_slice_histogram(cloud: PointCloud, bin_height: float) -> list[tuple[float, int]]:
    """Point counts in horizontal slabs of height ``bin_height`` from min z upward."""
    pts = _points(cloud)
    if bin_height <= 0:
        raise InvalidParameter("bin_height must be positive")
    z0, nbins, idx = z_bin_indices(pts[:, 2], bin_height)
    counts = np.bincount(idx, minlength=nbins)
    return [(z0 + k * bin_height, int(n)) for k, n in enumerate(counts)]


LABEL_COLORS = {
    Label.HANDLE: (1.0, 0.1, 0.1),
    Label.DOOR_PANEL: (0.6, 0.4, 0.2),
    Label.DRAWER_PANEL: (0.7, 0.5, 0.3),
    Label.BUCKET: (0.2, 0.4, 0.9),
    Label.CHAIR: (0.3, 0.7, 0.3),
    Label.TARGET_REGION: (0.9, 0.9, 0.1),
    Label.ROBOT: (0.5, 0.5, 0.5),
    Label.OTHER: (0.8, 0.8, 0.8),
}


def write_ply(cloud: PointCloud, path) -> Path:
    """Write an ASCII PLY with per-point color and integer label."""
    path = Path(path)
    colors = cloud.colors
    if colors is None:
        colors = np.array([LABEL_COLORS[Label(int(l))] for l in cloud.labels]).reshape(-1, 3)
    rgb = np.clip(np.round(colors * 255), 0, 255).astype(int)
    lines = [
        "ply",
        "format ascii 1.0",
        "comment label-as-int " + " ".join(f"{l.value}={l.name}" for l in Label),
        f"comment frame_index {cloud.frame_index}",
        f"element vertex {len(cloud)}",
        "property float x",
        "property float y",
        "property float z",
        "property uchar red",
        "property uchar green",
        "property uchar blue",
        "property int label",
        "end_header",
    ]
    for p, c, l in zip(cloud.points, rgb, cloud.labels):
        lines.append(f"{p[0]:.6f} {p[1]:.6f} {p[2]:.6f} {c[0]} {c[1]} {c[2]} {int(l)}")
    path.write_text("\n".join(lines) + "\n")
    return path


def read_ply(path) -> PointCloud:
    text = Path(path).read_text().splitlines()
    end = text.index("end_header")
    rows = [r.split() for r in text[end + 1:] if r.strip()]
    if not rows:
        return PointCloud.empty()
    data = np.array(rows, dtype=float)
    return PointCloud(data[:, :3], data[:, 6].astype(np.int8), data[:, 3:6] / 255.0)
