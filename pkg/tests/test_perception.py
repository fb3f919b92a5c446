import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from homemanip.errors import EmptySelection, NoGraspFound, NoRimFound
from homemanip.geometry import Label, PointCloud, Pose, rot_z
from homemanip.perception import (GraspOrientation, HandleAccumulator, RimEstimate, accumulate_handle,
                                  detect_open_displacement, estimate_bucket_rim, estimate_chair_center,
                                  estimate_handle_grasps, estimate_hinge_angle, rim_graspable)
from homemanip.sim import sensor
from homemanip.sim.corpus import bucket_with_handle, occluded_chair
from homemanip.sim.scenario import BucketSpec, ChairSpec

seeds = st.integers(0, 2**31 - 1)


def handle_frame(n, frame=0):
    pts = np.zeros((n + 5, 3))
    labels = [Label.HANDLE] * n + [Label.DOOR_PANEL] * 5
    return PointCloud(pts, labels, frame_index=frame)


# -- accumulation -------------------------------------------------------
def test_accumulate_60_points_ready():
    acc, ready = accumulate_handle(HandleAccumulator(), handle_frame(60))
    assert ready and len(acc.merged) == 60 and acc.frames_seen == 1


def test_accumulate_ten_frames():
    acc = HandleAccumulator()
    for i in range(9):
        acc, ready = accumulate_handle(acc, handle_frame(3, i))
        assert not ready
    acc, ready = accumulate_handle(acc, handle_frame(3, 9))
    assert ready and len(acc.merged) == 30


def test_accumulate_empty_frames():
    acc = HandleAccumulator()
    for i in range(10):
        acc, ready = accumulate_handle(acc, handle_frame(0, i))
    assert ready and len(acc.merged) == 0 and acc.frames_seen == 10


@given(st.lists(st.integers(0, 30), min_size=1, max_size=25))
def test_accumulate_monotone(counts):
    acc, was_ready, prev = HandleAccumulator(), False, 0
    for i, c in enumerate(counts):
        acc, ready = accumulate_handle(acc, handle_frame(c, i))
        assert len(acc.merged) >= prev and acc.frames_seen == i + 1
        assert ready or not was_ready
        prev, was_ready = len(acc.merged), ready


# -- handle grasps ------------------------------------------------------
def bar(length, thickness, axis="x", n=1500, seed=0, center=(1.0, 0.2, 0.8)):
    rng = np.random.default_rng(seed)
    half = np.array([length / 2, thickness / 2, thickness / 2])
    if axis == "z":
        half = half[[1, 2, 0]]
    pts, _ = sensor.box_surface(-half, half, n, rng, faces=("+x", "-x", "+y", "-y", "+z", "-z"))
    return PointCloud.from_points(pts + np.asarray(center), Label.HANDLE), np.asarray(center)


def test_bar_along_x_gives_vertical_grasp():
    h, c = bar(0.12, 0.02)
    top = estimate_handle_grasps(h, 0.08)[0]
    assert top.orientation_class is GraspOrientation.VERTICAL
    assert top.width == pytest.approx(0.02, abs=2e-3)
    assert np.linalg.norm(top.position - c) < 0.01
    assert np.allclose(top.closing, [0, 0, 1], atol=1e-6)


def test_bar_along_z_gives_horizontal_grasp():
    h, _ = bar(0.12, 0.02, axis="z")
    top = estimate_handle_grasps(h, 0.08)[0]
    assert top.orientation_class is GraspOrientation.HORIZONTAL
    assert abs(top.closing[2]) < 1e-6


def test_fat_bar_no_grasp():
    h, _ = bar(0.12, 0.12)
    with pytest.raises(NoGraspFound):
        estimate_handle_grasps(h, 0.08)


@given(seeds, st.floats(0.06, 0.18), st.floats(0.01, 0.03), st.sampled_from(["x", "z"]))
def test_grasp_candidate_invariants(seed, length, thick, axis):
    h, _ = bar(length, thick, axis, n=400, seed=seed)
    out = estimate_handle_grasps(h, 0.08)
    d = [g.centroid_distance for g in out]
    assert d == sorted(d)
    for g in out:
        assert 0 <= g.width <= 0.08 and g.centroid_distance >= 0
        assert abs(np.linalg.norm(g.closing) - 1) < 1e-9
        if g.orientation_class is GraspOrientation.VERTICAL:
            assert np.allclose(g.closing, [0, 0, 1], atol=1e-6)
        else:
            assert abs(g.closing[2]) < 1e-6
    # deterministic
    again = estimate_handle_grasps(h, 0.08)
    assert [g.position.tolist() for g in again] == [g.position.tolist() for g in out]


# -- open state ---------------------------------------------------------
def panel(seed=0):
    rng = np.random.default_rng(seed)
    p, _ = sensor.box_surface((0, -0.02, -0.3), (0.45, 0.0, 0.3), 600, rng)
    return PointCloud.from_points(p, Label.DOOR_PANEL)


def test_open_identity():
    c = panel()
    assert detect_open_displacement(c, c, Label.DOOR_PANEL, (0, 1, 0)) == 0.0


def test_open_translation():
    c = panel()
    moved = c.transformed(Pose.from_translation(0, 0.25, 0))
    assert detect_open_displacement(moved, c, Label.DOOR_PANEL, (0, 1, 0)) == pytest.approx(0.25, abs=1e-6)


def test_open_rotated_door_matches_transform_oracle():
    c = panel()
    R = rot_z(math.radians(30))  # hinge on the z axis through the origin
    rotated = c.transformed(Pose(R, np.zeros(3)))
    oracle = float((R @ c.points.mean(axis=0) - c.points.mean(axis=0)) @ np.array([0, 1.0, 0]))
    assert detect_open_displacement(rotated, c, Label.DOOR_PANEL, (0, 1, 0)) == pytest.approx(oracle, abs=1e-9)
    phi = estimate_hinge_angle(rotated, np.zeros(3), np.array([1.0, 0, 0]), np.array([0, 1.0, 0]))
    assert phi == pytest.approx(math.radians(30), abs=0.02)


def test_open_missing_label():
    with pytest.raises(EmptySelection):
        detect_open_displacement(panel(), PointCloud.empty(), Label.DOOR_PANEL)


@given(seeds)
def test_open_self_zero(seed):
    c = panel(seed % 1000)
    assert detect_open_displacement(c, c, Label.DOOR_PANEL, (0.3, -0.7, 0)) == 0.0


# -- rims ---------------------------------------------------------------
def cylinder(n=2000, radius=0.15, height=0.3, seed=0):
    rng = np.random.default_rng(seed)
    pts, _ = sensor.cylinder_wall(radius, 0.0, height, n, rng)
    # a rim band at the top so the highest slice is full
    top, _ = sensor.cylinder_wall(radius, height - 0.004, height, 300, rng)
    return np.concatenate([pts, top])


def test_rim_plain_cylinder():
    rim = estimate_bucket_rim(PointCloud.from_points(cylinder(), Label.BUCKET), 0.01, 100)
    assert abs(rim.rim_height - 0.3) <= 0.01
    assert abs(rim.rim_radius - 0.15) <= 0.01
    assert np.all(np.abs(rim.rim_points.points[:, 2] - rim.rim_height) <= 0.01)


def test_rim_skips_handle_over_rim():
    rng = np.random.default_rng(1)
    arc, _ = sensor.handle_arc(0.15, 0.3, 0.1, 0.4, 40, rng)
    pts = np.concatenate([cylinder(), arc])
    rim = estimate_bucket_rim(PointCloud.from_points(pts, Label.BUCKET), 0.01, 100)
    assert arc[:, 2].max() > 0.35
    assert abs(rim.rim_height - 0.3) <= 0.01


def test_rim_no_full_slice():
    pts = np.random.default_rng(0).random((50, 3))
    with pytest.raises(NoRimFound):
        estimate_bucket_rim(PointCloud.from_points(pts, Label.BUCKET), 0.01, 100)


@given(seeds)
def test_rim_permutation_and_low_points_invariant(seed):
    rng = np.random.default_rng(seed)
    pts = cylinder(seed=seed % 100)
    base = estimate_bucket_rim(PointCloud.from_points(pts, Label.BUCKET), 0.01, 100)
    perm = estimate_bucket_rim(PointCloud.from_points(pts[rng.permutation(len(pts))], Label.BUCKET), 0.01, 100)
    assert perm.rim_height == pytest.approx(base.rim_height, abs=1e-12)
    assert np.allclose(perm.rim_center, base.rim_center, atol=1e-6)
    # extra points strictly below the rim bin, kept inside the existing z range
    z0 = pts[:, 2].min()
    low = np.column_stack([rng.normal(0, 0.05, (300, 2)), rng.uniform(z0, 0.2, 300)])
    more = estimate_bucket_rim(PointCloud.from_points(np.concatenate([pts, low]), Label.BUCKET), 0.01, 100)
    assert more.rim_height == pytest.approx(base.rim_height, abs=1e-12)
    assert np.allclose(more.rim_center, base.rim_center, atol=1e-6)


def rim_of(thickness):
    return RimEstimate(PointCloud.empty(), 0.3, np.zeros(3), 0.15, thickness)


@pytest.mark.parametrize("t, expected", [(0.02, True), (0.10, False), (0.069, True), (0.07, True), (0.0701, False)])
def test_rim_graspable(t, expected):
    assert rim_graspable(rim_of(t), 0.08, 0.01) is expected


def test_corpus_bucket_rim_found():
    s = bucket_with_handle(3, handle=True)
    rim = estimate_bucket_rim(s.cloud, 0.01)
    assert abs(rim.rim_height - s.spec.height) <= 0.01


# -- chairs -------------------------------------------------------------
def full_chair(seed=0, yaw=0.4, pos=(0.5, -0.3)):
    spec = ChairSpec(position=pos, yaw=yaw)
    p, _, labels = sensor.chair_stations(spec, 3000, np.random.default_rng(seed))
    R = rot_z(yaw)
    pts = p @ R.T + np.array([*pos, 0.0])
    return PointCloud(pts, labels), spec


def test_chair_full_view_center():
    c, spec = full_chair()
    est = estimate_chair_center(c)
    assert np.linalg.norm(est[:2] - np.array(spec.position)) < 0.02


def test_chair_occluded_beats_raw_mean():
    s = occluded_chair(7)
    est = estimate_chair_center(s.cloud)
    raw = s.cloud.points.mean(axis=0)
    assert np.linalg.norm(est[:2] - s.true_center[:2]) < np.linalg.norm(raw[:2] - s.true_center[:2])


def test_chair_two_points_midpoint():
    c = PointCloud.from_points([[0, 0, 0.5], [1, 1, 0.7]], Label.CHAIR)
    assert np.allclose(estimate_chair_center(c), [0.5, 0.5, 0.6])


def test_chair_nothing_above_cushion():
    with pytest.raises(EmptySelection):
        estimate_chair_center(PointCloud.from_points([[0, 0, 0.1]], Label.CHAIR))


@given(st.floats(-math.pi, math.pi), st.floats(-2, 2), st.floats(-2, 2))
def test_chair_center_planar_equivariance(theta, dx, dy):
    c, _ = full_chair(seed=1)
    T = Pose(rot_z(theta), [dx, dy, 0.0])
    a = estimate_chair_center(c)
    b = estimate_chair_center(c.transformed(T))
    assert np.allclose(b, T.apply(a), atol=1e-6)
