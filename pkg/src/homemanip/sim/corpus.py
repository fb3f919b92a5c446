"""Seeded single-object clouds for the estimator studies.

Each instance is one egocentric frame: surface stations from the sensor
module, back-face culled against a viewpoint placed around the object.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..geometry import PointCloud, rot_z
from . import sensor
from .scenario import BucketSpec, ChairSpec


@dataclass(frozen=True, eq=False)
class ChairSample:
    cloud: PointCloud
    spec: ChairSpec
    true_center: np.ndarray  # center of the seat-plus-backrest box
    viewpoint: np.ndarray


@dataclass(frozen=True, eq=False)
class BucketSample:
    cloud: PointCloud
    spec: BucketSpec
    viewpoint: np.ndarray


def _view_around(rng, center, distance: float, height: float) -> np.ndarray:
    ang = rng.uniform(-math.pi, math.pi)
    return np.asarray(center, float) + np.array([distance * math.cos(ang), distance * math.sin(ang), height])


def occluded_chair(seed: int, n_points: int = 2000, distance: float = 1.2, height: float = 1.2) -> ChairSample:
    rng = np.random.default_rng([seed, 41])
    spec = ChairSpec(position=tuple(rng.uniform(-1, 1, 2).tolist()), yaw=float(rng.uniform(-math.pi, math.pi)),
                     seat_height=float(rng.uniform(0.42, 0.5)), seat_width=float(rng.uniform(0.4, 0.5)),
                     seat_depth=float(rng.uniform(0.4, 0.48)), back_height=float(rng.uniform(0.35, 0.45)))
    p, n, labels = sensor.chair_stations(spec, n_points, rng)
    R = rot_z(spec.yaw)
    t = np.array([*spec.position, 0.0])
    P, N = p @ R.T + t, n @ R.T
    view = _view_around(rng, t, distance, height)
    keep = sensor.visible_mask(P, N, view)
    z0 = spec.seat_height - spec.seat_thickness
    truth = np.array([t[0], t[1], 0.5 * (z0 + spec.seat_height + spec.back_height)])
    return ChairSample(PointCloud(P[keep], labels[keep]), spec, truth, view)


def bucket_with_handle(seed: int, handle: bool = True, n_points: int = 2000,
                       distance: float = 1.0, height: float = 1.3) -> BucketSample:
    rng = np.random.default_rng([seed, 43])
    radius = float(rng.uniform(0.12, 0.22))
    spec = BucketSpec(center=(0.0, 0.0), radius=radius, height=float(rng.uniform(0.25, 0.35)),
                      rim_thickness=float(min(rng.uniform(0.01, 0.12), 0.6 * radius)), handle_over_rim=handle,
                      handle_rise=float(rng.uniform(0.05, 0.15)), handle_yaw=float(rng.uniform(0, math.pi)))
    p, n, labels = sensor.bucket_stations(spec, n_points, rng)
    view = _view_around(rng, np.zeros(3), distance, height)
    keep = sensor.visible_mask(p, n, view)
    return BucketSample(PointCloud(p[keep], labels[keep]), spec, view)


def chair_center_errors(n: int = 100, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Squared planar center errors ``(pca_box, raw_mean)`` over ``n`` occluded chairs."""
    from ..perception import estimate_chair_center

    box, raw = [], []
    for i in range(n):
        s = occluded_chair(seed + i)
        est = estimate_chair_center(s.cloud)
        mean = s.cloud.points.mean(axis=0)
        box.append(float(np.sum((est[:2] - s.true_center[:2]) ** 2)))
        raw.append(float(np.sum((mean[:2] - s.true_center[:2]) ** 2)))
    return np.array(box), np.array(raw)
