"""Synthetic segmented point-cloud sensor.

Every object surface is pre-sampled once into fixed stations (local point,
outward normal, label). A frame keeps the stations whose normal faces the
head-mounted viewpoint, then drops a seeded random subset to mimic sensor
sparsity. Downward faces are never sampled: the viewpoint is always above them.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..geometry import LABEL_COLORS, Label, PointCloud
from .scenario import BucketSpec, CabinetSpec, ChairSpec, Scenario, TargetSpec

# body indices: which rigid transform moves a station
CABINET, BUCKET, CHAIR, TARGET = range(4)

_COLOR_TABLE = np.array([LABEL_COLORS[Label(i)] for i in range(len(Label))])


@dataclass(frozen=True, eq=False)
class Stations:
    points: np.ndarray  # (N, 3) in body coordinates
    normals: np.ndarray
    labels: np.ndarray  # int8
    body: np.ndarray  # int8 body index

    def __len__(self) -> int:
        return len(self.points)


def _split(n: int, weights) -> list[int]:
    """Largest-remainder allocation of ``n`` items proportionally to ``weights``."""
    w = np.asarray(weights, dtype=float)
    raw = n * w / w.sum()
    out = np.floor(raw).astype(int)
    for i in np.argsort(-(raw - out), kind="stable")[: n - out.sum()]:
        out[i] += 1
    return out.tolist()


_FACES = {"+x": (0, 1), "-x": (0, -1), "+y": (1, 1), "-y": (1, -1), "+z": (2, 1), "-z": (2, -1)}


def box_surface(lo, hi, n: int, rng, faces=("+x", "-x", "+y", "-y", "+z")):
    """Area-weighted samples on the chosen faces of an axis-aligned box."""
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    size = hi - lo
    areas = []
    for f in faces:
        ax, _ = _FACES[f]
        others = [i for i in range(3) if i != ax]
        areas.append(size[others[0]] * size[others[1]])
    counts = _split(n, areas)
    pts, nrm = [], []
    for f, k in zip(faces, counts):
        ax, sgn = _FACES[f]
        p = lo + rng.random((k, 3)) * size
        p[:, ax] = hi[ax] if sgn > 0 else lo[ax]
        v = np.zeros((k, 3))
        v[:, ax] = sgn
        pts.append(p)
        nrm.append(v)
    return np.concatenate(pts), np.concatenate(nrm)


def _stratified_angles(n: int, rng) -> np.ndarray:
    # one jittered sample per equal sector keeps partial arcs balanced about the axis
    return 2 * math.pi * (np.arange(n) + rng.uniform(0, 1, n)) / max(n, 1)


def cylinder_wall(radius: float, z0: float, z1: float, n: int, rng, inward: bool = False):
    th = _stratified_angles(n, rng)
    z = rng.uniform(z0, z1, n)
    r = np.column_stack([np.cos(th), np.sin(th), np.zeros(n)])
    return r * radius + np.outer(z, [0, 0, 1.0]), -r if inward else r


def annulus(r0: float, r1: float, z: float, n: int, rng):
    th = _stratified_angles(n, rng)
    r = np.sqrt(rng.uniform(r0 * r0, r1 * r1, n))
    pts = np.column_stack([r * np.cos(th), r * np.sin(th), np.full(n, z)])
    return pts, np.tile([0.0, 0.0, 1.0], (n, 1))


def handle_arc(radius: float, rim_z: float, rise: float, yaw: float, n: int, rng, tube: float = 0.006):
    """Tube around a half-ellipse spanning the rim diameter and peaking ``rise`` above it."""
    t = rng.uniform(0, math.pi, n)
    phi = rng.uniform(0, 2 * math.pi, n)
    d = np.array([math.cos(yaw), math.sin(yaw), 0.0])
    centre = np.outer(radius * np.cos(t), d) + np.outer(rim_z + rise * np.sin(t), [0, 0, 1.0])
    tangent = np.outer(-radius * np.sin(t), d) + np.outer(rise * np.cos(t), [0, 0, 1.0])
    tangent /= np.linalg.norm(tangent, axis=1, keepdims=True)
    side = np.cross(tangent, np.cross(d, [0, 0, 1.0]))
    side /= np.linalg.norm(side, axis=1, keepdims=True)
    binorm = np.cross(tangent, side)
    nrm = side * np.cos(phi)[:, None] + binorm * np.sin(phi)[:, None]
    return centre + tube * nrm, nrm


def cabinet_stations(cab: CabinetSpec, n: int, rng):
    """Panel and handle in the cabinet body frame.

    Body axes are (lateral, outward, up). For drawers the lateral axis points
    to the left of someone facing the cabinet and the origin is the closed
    front-face center; for doors it runs from the hinge toward the free edge
    and the origin is the hinge line at the front face.
    """
    W, H, T = cab.panel_width, cab.panel_height, cab.panel_thickness
    if cab.joint == "prismatic":
        u0, u1, label = -W / 2, W / 2, Label.DRAWER_PANEL
        hu = cab.handle_offset[0]
    else:
        u0, u1, label = 0.0, W, Label.DOOR_PANEL
        sign = 1.0 if cab.hinge_side == "right" else -1.0
        hu = W / 2 + sign * cab.handle_offset[0]
    p, q = box_surface((u0, -T, -H / 2), (u1, 0.0, H / 2), n, rng, faces=("+y", "-y", "+z", "+x", "-x"))
    L, t = cab.handle_length, cab.handle_thickness
    hv = cab.handle_standoff + t / 2
    hw = cab.handle_offset[1]
    half = np.array([t / 2, t / 2, L / 2]) if cab.handle_vertical else np.array([L / 2, t / 2, t / 2])
    c = np.array([hu, hv, hw])
    hp, hq = box_surface(c - half, c + half, n, rng)
    return (np.concatenate([p, hp]), np.concatenate([q, hq]),
            np.concatenate([np.full(len(p), int(label)), np.full(len(hp), int(Label.HANDLE))]))


def handle_segment(cab: CabinetSpec) -> tuple[np.ndarray, np.ndarray]:
    """Endpoints of the handle's centre line in the cabinet body frame."""
    if cab.joint == "prismatic":
        hu = cab.handle_offset[0]
    else:
        sign = 1.0 if cab.hinge_side == "right" else -1.0
        hu = cab.panel_width / 2 + sign * cab.handle_offset[0]
    c = np.array([hu, cab.handle_standoff + cab.handle_thickness / 2, cab.handle_offset[1]])
    axis = np.array([0.0, 0.0, 1.0]) if cab.handle_vertical else np.array([1.0, 0.0, 0.0])
    return c - axis * cab.handle_length / 2, c + axis * cab.handle_length / 2


def bucket_stations(b: BucketSpec, n: int, rng):
    """Outer wall, inner wall, rim annulus, inner floor and (optionally) the handle arc."""
    R, H, t = b.radius, b.height, b.rim_thickness
    r_in = R - t
    floor = 0.02
    shares = [45, 20, 20, 10] + ([5] if b.handle_over_rim else [])
    k = _split(n, shares)
    parts = [cylinder_wall(R, 0.0, H, k[0], rng),
             cylinder_wall(r_in, floor, H, k[1], rng, inward=True),
             annulus(r_in, R, H, k[2], rng),
             annulus(0.0, r_in, floor, k[3], rng)]
    if b.handle_over_rim:
        parts.append(handle_arc(R, H, b.handle_rise, b.handle_yaw, k[4], rng))
    pts = np.concatenate([p for p, _ in parts])
    nrm = np.concatenate([q for _, q in parts])
    return pts, nrm, np.full(len(pts), int(Label.BUCKET))


def chair_boxes(c: ChairSpec) -> list[tuple[np.ndarray, np.ndarray, tuple[str, ...]]]:
    """Seat, backrest and legs as boxes in the chair frame (backrest on local +x)."""
    a, b = c.seat_depth / 2, c.seat_width / 2
    sh, st = c.seat_height, c.seat_thickness
    side = ("+x", "-x", "+y", "-y")
    boxes = [(np.array([-a, -b, sh - st]), np.array([a, b, sh]), side + ("+z",)),
             (np.array([a - c.back_thickness, -b, sh]), np.array([a, b, sh + c.back_height]), side + ("+z",))]
    s = c.leg_size
    for x in (-a, a - s):
        for y in (-b, b - s):
            boxes.append((np.array([x, y, 0.0]), np.array([x + s, y + s, sh - st]), side))
    return boxes


def chair_stations(c: ChairSpec, n: int, rng):
    boxes = chair_boxes(c)
    areas = []
    for lo, hi, faces in boxes:
        size = hi - lo
        areas.append(sum(np.prod(np.delete(size, _FACES[f][0])) for f in faces))
    counts = _split(n, areas)
    pts, nrm = [], []
    for (lo, hi, faces), k in zip(boxes, counts):
        p, q = box_surface(lo, hi, k, rng, faces)
        pts.append(p)
        nrm.append(q)
    pts = np.concatenate(pts)
    return pts, np.concatenate(nrm), np.full(len(pts), int(Label.CHAIR))


def target_stations(t: TargetSpec, n: int, rng):
    p, q = annulus(0.0, t.platform_radius, t.platform_height, n, rng)
    return p, q, np.full(len(p), int(Label.TARGET_REGION))


def build_stations(scenario: Scenario) -> Stations:
    rng = np.random.default_rng([scenario.seed, 7919])
    n = scenario.points_per_object
    pts, nrm, lab, body = [], [], [], []

    def add(res, idx):
        p, q, l = res
        pts.append(p)
        nrm.append(q)
        lab.append(l)
        body.append(np.full(len(p), idx))

    if scenario.cabinet is not None:
        add(cabinet_stations(scenario.cabinet, n, rng), CABINET)
    if scenario.bucket is not None:
        add(bucket_stations(scenario.bucket, n, rng), BUCKET)
    if scenario.chair is not None:
        add(chair_stations(scenario.chair, n, rng), CHAIR)
    if scenario.target is not None:
        add(target_stations(scenario.target, max(100, n // 3), rng), TARGET)
    return Stations(np.concatenate(pts), np.concatenate(nrm),
                    np.concatenate(lab).astype(np.int8), np.concatenate(body).astype(np.int8))


def world_stations(stations: Stations, transforms: dict[int, tuple[np.ndarray, np.ndarray]]):
    """Station points and normals in world coordinates."""
    P = np.empty_like(stations.points)
    N = np.empty_like(stations.normals)
    for idx, (R, t) in transforms.items():
        sel = stations.body == idx
        P[sel] = stations.points[sel] @ R.T + t
        N[sel] = stations.normals[sel] @ R.T
    return P, N


def visible_mask(points: np.ndarray, normals: np.ndarray, viewpoint) -> np.ndarray:
    """Back-face culling: a station is visible when its normal faces the viewpoint."""
    return np.einsum("ij,ij->i", normals, np.asarray(viewpoint, float) - points) > 0.0


def render(stations: Stations, transforms, viewpoint, seed: int, frame_index: int,
           keep_probability: float = 1.0) -> PointCloud:
    P, N = world_stations(stations, transforms)
    keep = visible_mask(P, N, viewpoint)
    if keep_probability < 1.0:
        keep &= np.random.default_rng([seed, frame_index]).random(len(P)) < keep_probability
    labels = stations.labels[keep]
    return PointCloud(P[keep], labels, _COLOR_TABLE[labels], frame_index)
