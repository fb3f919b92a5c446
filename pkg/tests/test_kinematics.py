"""FK is checked against a scipy-based oracle built straight from the model JSON."""
import json
import math
from importlib import resources

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from homemanip.diagnostics import fd_jacobian, naive_fk, near_seed_request, pose_errors, random_state
from homemanip.errors import DimensionMismatch, NonFiniteTarget, UnknownFrame
from homemanip.geometry import Pose
from homemanip.kinematics import (IkRequest, IkTarget, JointKind, JointSpec, KinematicModel, FixedFrame,
                                  clamp_to_limits, forward_kinematics, jacobian, load_stock_model, solve_ik,
                                  within_limits)

Rotation = pytest.importorskip("scipy.spatial.transform").Rotation

MODELS = ("single_arm", "dual_arm")
seeds = st.integers(0, 2**31 - 1)


def scipy_fk(name, q, frame):
    d = json.loads(resources.files("homemanip.models").joinpath(f"{name}.json").read_text())
    links = {}
    for i, j in enumerate(d["joints"]):
        links[j["child"]] = (j["parent"], j.get("origin") or {}, i, j)
    for f in d.get("frames", []):
        links[f["name"]] = (f["parent"], f.get("origin") or {}, -1, None)
    fixed_axes = {"prismatic_x": (1, 0, 0), "prismatic_y": (0, 1, 0), "prismatic_z": (0, 0, 1),
                  "revolute_z": (0, 0, 1)}

    def world(link):
        if link == "world":
            return Rotation.identity(), np.zeros(3)
        parent, origin, i, j = links[link]
        R, t = world(parent)
        o_R = Rotation.from_euler("xyz", origin.get("rpy", (0, 0, 0)))
        t = t + R.apply(origin.get("xyz", (0, 0, 0)))
        R = R * o_R
        if j is not None:
            axis = np.array(j.get("axis", fixed_axes.get(j["kind"], (0, 0, 1))), float)
            axis /= np.linalg.norm(axis)
            if j["kind"].startswith("prismatic"):
                t = t + R.apply(axis * q[i])
            else:
                R = R * Rotation.from_rotvec(axis * q[i])
        return R, t

    R, t = world(frame)
    return R.as_matrix(), t


@pytest.fixture(scope="module", params=MODELS)
def model(request):
    return load_stock_model(request.param)


def test_dof_counts():
    assert load_stock_model("single_arm").dof == 13
    assert load_stock_model("dual_arm").dof == 22


def test_zero_configuration_is_origin_chain(model):
    q = np.zeros(model.dof)
    for f in model.gripper_frames:
        P = forward_kinematics(model, q, f)
        T = np.eye(4)
        for link in model.path(f):
            T = T @ Pose(model._R0[link], model._t0[link]).matrix
        assert np.allclose(P.matrix, T, atol=1e-12)


def tiny_model():
    j = JointSpec("slide", JointKind.PRISMATIC_X, "world", "cart", Pose.from_translation(0, 1, 0), -1, 1, 1.0)
    r = JointSpec("spin", JointKind.REVOLUTE_Z, "cart", "arm", Pose(), -3, 3, 1.0)
    tip = FixedFrame("tip", "arm", Pose.from_translation(0.5, 0, 0))
    return KinematicModel([j, r], [tip], ["tip"], "cart")


def test_single_prismatic():
    m = tiny_model()
    P = forward_kinematics(m, [0.5, 0.0], "cart")
    assert np.allclose(P.translation, [0.5, 1.0, 0.0])


def test_prismatic_and_revolute_columns():
    m = tiny_model()
    q = np.array([0.2, 0.7])
    J = jacobian(m, q, "tip")
    assert np.allclose(J[:, 0], [1, 0, 0, 0, 0, 0])
    r = forward_kinematics(m, q, "tip").translation - forward_kinematics(m, q, "arm").translation
    assert np.allclose(J[:3, 1], np.cross([0, 0, 1], r))
    assert np.allclose(J[3:, 1], [0, 0, 1])


@given(seeds)
def test_fk_matches_scipy_oracle(seed):
    for name in MODELS:
        m = load_stock_model(name)
        q = random_state(m, np.random.default_rng(seed))
        for f in m.gripper_frames + ("head",):
            R, t = scipy_fk(name, q, f)
            P = forward_kinematics(m, q, f)
            assert np.allclose(P.rotation, R, atol=1e-12)
            assert np.allclose(P.translation, t, atol=1e-12)


@given(seeds)
def test_fk_compositional(seed):
    m = load_stock_model("dual_arm")
    q = random_state(m, np.random.default_rng(seed))
    for link in m.path("left_gripper")[1:]:
        parent = m.link_parent(link)
        child = forward_kinematics(m, q, link)
        step = naive_fk(m, q, link)
        assert np.allclose(child.matrix, forward_kinematics(m, q, parent).matrix
                           @ np.linalg.inv(naive_fk(m, q, parent)) @ step, atol=1e-12)


@given(seeds)
def test_jacobian_matches_finite_differences(seed):
    m = load_stock_model("single_arm")
    q = random_state(m, np.random.default_rng(seed))
    f = m.gripper_frames[0]
    assert np.abs(jacobian(m, q, f) - fd_jacobian(m, q, f)).max() < 1e-4


def test_jacobian_off_path_columns_zero():
    m = load_stock_model("dual_arm")
    q = random_state(m, np.random.default_rng(0))
    J = jacobian(m, q, "right_gripper")
    off = [i for i in range(m.dof) if i not in m.path_joints("right_gripper")]
    assert off and np.all(J[:, off] == 0.0)


def test_fk_errors(model):
    with pytest.raises(UnknownFrame):
        forward_kinematics(model, np.zeros(model.dof), "nope")
    with pytest.raises(DimensionMismatch):
        forward_kinematics(model, np.zeros(model.dof + 1), model.gripper_frames[0])


# -- clamping -----------------------------------------------------------
def test_clamp(model):
    q = random_state(model, np.random.default_rng(1))
    assert np.array_equal(clamp_to_limits(model, q), q)
    i = 5
    q2 = q.copy()
    q2[i] = model.upper[i] + 1
    assert clamp_to_limits(model, q2)[i] == model.upper[i]
    assert np.array_equal(clamp_to_limits(model, model.lower - 1), model.lower)


# -- IK -----------------------------------------------------------------
def test_ik_near_seed_roundtrip():
    m = load_stock_model("single_arm")
    rng = np.random.default_rng(11)
    for _ in range(20):
        req, _ = near_seed_request(m, rng, m.gripper_frames)
        res = solve_ik(m, req)
        pos, rot = pose_errors(m, res.q, req.targets)
        assert res.achieved and pos < 1e-3 and math.degrees(rot) < 0.5


def test_ik_dual_roundtrip():
    m = load_stock_model("dual_arm")
    rng = np.random.default_rng(12)
    for _ in range(10):
        req, _ = near_seed_request(m, rng, m.gripper_frames)
        res = solve_ik(m, req)
        assert res.achieved
        assert all(p < 1e-3 and math.degrees(r) < 0.5 for p, r in res.residuals)


def test_ik_unreachable_target():
    m = load_stock_model("single_arm")
    q0 = m.zero()
    P = forward_kinematics(m, q0, m.gripper_frames[0])
    far = Pose(P.rotation, P.translation + [0, 0, 10.0])  # base cannot climb
    res = solve_ik(m, IkRequest((IkTarget(m.gripper_frames[0], far),), q0))
    assert not res.achieved
    assert within_limits(m, res.q)
    assert all(math.isfinite(p) and math.isfinite(r) for p, r in res.residuals)
    # oracle: no sampled configuration gets the tool within 5 m of the target
    rng = np.random.default_rng(0)
    best = min(np.linalg.norm(forward_kinematics(m, rng.uniform(m.lower, m.upper), m.gripper_frames[0]).translation
                              - far.translation) for _ in range(300))
    assert best > 5 and res.residuals[0][0] <= best + 1e-9


@given(seeds, st.floats(-3, 3), st.floats(-3, 3), st.floats(-1, 3))
def test_ik_always_within_limits(seed, x, y, z):
    m = load_stock_model("single_arm")
    rng = np.random.default_rng(seed)
    q0 = random_state(m, rng)
    tgt = Pose(Rotation.random(random_state=seed % 2**32).as_matrix(), [x, y, z])
    res = solve_ik(m, IkRequest((IkTarget(m.gripper_frames[0], tgt),), q0, base_min_distance=0.35,
                                max_iterations=30))
    assert within_limits(m, res.q)


def test_ik_base_distance_constraint():
    m = load_stock_model("single_arm")
    rng = np.random.default_rng(4)
    hits = 0
    for _ in range(30):
        req, _ = near_seed_request(m, rng, m.gripper_frames, base_min_distance=0.35)
        res = solve_ik(m, req)
        if res.achieved:
            hits += 1
            b = forward_kinematics(m, res.q, m.base_frame).translation
            t = req.targets[0].pose.translation
            assert math.hypot(*(t - b)[:2]) >= 0.35 - 1e-6
    assert hits > 0


def test_ik_deterministic():
    m = load_stock_model("dual_arm")
    req, _ = near_seed_request(m, np.random.default_rng(8), m.gripper_frames)
    a, b = solve_ik(m, req), solve_ik(m, req)
    assert np.array_equal(a.q, b.q) and a.residuals == b.residuals


def test_ik_rejects_bad_requests():
    m = load_stock_model("single_arm")
    P = forward_kinematics(m, m.zero(), m.gripper_frames[0])
    with pytest.raises(DimensionMismatch):
        solve_ik(m, IkRequest((IkTarget(m.gripper_frames[0], P),), np.zeros(3)))
    with pytest.raises(NonFiniteTarget):
        solve_ik(m, IkRequest((IkTarget(m.gripper_frames[0], P, orientation_weight=math.nan),), m.zero()))
