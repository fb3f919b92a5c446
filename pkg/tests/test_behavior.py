import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from homemanip.behavior import (BaseWaypoint, GripperAction, GripperCommand, GripperPoses, Hold, Node,
                                NodeStatus, PolicyConfig, TaskContext, build_tree, circular_pull_waypoints,
                                resolve_target, tick, tree_dot, tree_json)
from homemanip.behavior.context import Branch
from homemanip.behavior.tree import make_tree, success_path_budget
from homemanip.errors import InvalidParameter
from homemanip.geometry import PointCloud
from homemanip.kinematics import forward_kinematics, load_stock_model, within_limits
from homemanip.sim.scenario import generate_scenario
from homemanip.sim.world import Simulator
from homemanip.task import Task, TaskInfo

from conftest import trace

EMPTY = PointCloud.empty()
Q = np.zeros(3)


def always(ctx, p):
    return True


def never(ctx, p):
    return False


def const(target):
    return lambda ctx, p: (ctx, target)


# -- executor -----------------------------------------------------------
def test_success_on_entry_hands_over_in_same_tick():
    wp = BaseWaypoint(1.0, 2.0)
    tree = make_tree("t", [Node("A", const(Hold()), always, on_success="B"),
                           Node("B", const(wp), never, on_failure="B", on_success="C"),
                           Node("C", terminal=True, succeeded=always)], "A")
    tree, _, target, status, done = tick(tree, None, EMPTY, Q)
    assert target is wp and tree.current == "B" and status is NodeStatus.RUNNING and not done
    assert tree.history == ("A", "B")


def test_budget_exhaustion_takes_failure_edge():
    tree = make_tree("t", [Node("A", const(Hold()), never, on_success="C", on_failure="B", budget=3),
                           Node("B", const(BaseWaypoint(0.0)), never, on_success="C", on_failure="A"),
                           Node("C", terminal=True, succeeded=always)], "A")
    for _ in range(3):
        tree, *_ = tick(tree, None, EMPTY, Q)
        assert tree.current == "A"
    tree, _, target, *_ = tick(tree, None, EMPTY, Q)
    assert tree.current == "B" and isinstance(target, BaseWaypoint)


def test_episode_limit_ends_episode():
    tree = make_tree("t", [Node("A", const(Hold()), never, on_success="C", on_failure="A", budget=50),
                           Node("C", terminal=True, succeeded=always)], "A")
    for k in range(200):
        tree, _, _, _, done = tick(tree, None, EMPTY, Q)
        assert done == (k == 199)


def test_terminal_node_finishes():
    tree = make_tree("t", [Node("A", const(Hold()), always, terminal=True)], "A")
    tree, _, _, status, done = tick(tree, None, EMPTY, Q)
    assert done and status is NodeStatus.SUCCESS and tree.finished_successfully


def test_entry_failure_is_a_failure_not_an_exception():
    from homemanip.behavior.tree import NodeFailure

    def boom(ctx, p):
        raise NodeFailure("no target")

    tree = make_tree("t", [Node("A", boom, on_success="C", on_failure="B"),
                           Node("B", const(BaseWaypoint(0.0)), never, on_success="C", on_failure="A"),
                           Node("C", terminal=True, succeeded=always)], "A")
    tree, *_ = tick(tree, None, EMPTY, Q)
    assert tree.current == "B"


def test_goal_jump():
    goal = {"hit": False}
    tree = make_tree("t", [Node("A", const(Hold()), never, on_success="C", on_failure="A"),
                           Node("C", terminal=True, succeeded=always)], "A",
                     goal=lambda ctx, p: goal["hit"], goal_node="C")
    tree, *_ = tick(tree, None, EMPTY, Q)
    goal["hit"] = True
    tree, _, _, status, done = tick(tree, None, EMPTY, Q)
    assert done and status is NodeStatus.SUCCESS


@pytest.mark.parametrize("nodes, initial", [
    ([Node("A", on_success="missing", terminal=False)], "A"),  # dangling edge
    ([Node("A", succeeded=always, terminal=True), Node("B", terminal=True)], "A"),  # unreachable
    ([Node("A", on_success="B", on_failure="A"), Node("B", on_success="A")], "A"),  # no terminal
    ([Node("A", on_success="B", budget=150), Node("B", terminal=True, budget=60)], "A"),  # over budget
])
def test_validation_rejects(nodes, initial):
    with pytest.raises(InvalidParameter):
        make_tree("bad", nodes, initial)


@pytest.mark.parametrize("task", list(Task))
def test_stock_trees_validate(task):
    tree = build_tree(task)
    assert success_path_budget(tree) <= 200
    assert '"initial"' in tree_json(tree) and tree_dot(tree).startswith("digraph")


def test_circular_variant_validates():
    tree = build_tree(Task.OPEN_DOOR, PolicyConfig(circular_pull=True))
    assert "CircularPull" in tree.nodes and "DiagonalPull" not in tree.nodes
    assert success_path_budget(tree) <= 200


def test_drawer_tree_shape():
    tree = build_tree(Task.OPEN_DRAWER)
    order = ["AccumulateHandle", "PreGrasp", "Grasp", "CloseGripper", "PullBase", "CheckOpen"]
    for a, b in zip(order, order[1:]):
        assert tree.nodes[a].on_success == b
    assert all(tree.nodes[n].on_failure == "AccumulateHandle" for n in order)


# -- circular pull geometry ----------------------------------------------
@given(st.floats(-2, 2), st.floats(-2, 2), st.floats(0.1, 0.8), st.floats(-math.pi, math.pi),
       st.floats(0.2, 2.0), st.integers(1, 30))
def test_circular_waypoints(hx, hy, r, a0, sweep, n):
    hinge = np.array([hx, hy, 0.0])
    start = hinge + [r * math.cos(a0), r * math.sin(a0), 0.7]
    wps = circular_pull_waypoints(hinge, start, sweep, n)
    assert wps.shape == (n, 3)
    rel = wps[:, :2] - hinge[:2]
    assert np.allclose(np.linalg.norm(rel, axis=1), r, atol=1e-6)
    ang = np.unwrap(np.concatenate([[a0], np.arctan2(rel[:, 1], rel[:, 0])]))
    steps = np.diff(ang)
    assert np.all(steps > 0) and np.allclose(steps, sweep / n, atol=1e-9)
    assert np.allclose(wps[:, 2], 0.7)


def test_ten_key_poses():
    wps = circular_pull_waypoints([0, 0, 0], [0.5, 0, 0.8], math.pi / 2)
    assert len(wps) == 10
    assert np.allclose(wps[-1], [0, 0.5, 0.8], atol=1e-12)


# -- target resolution ----------------------------------------------------
def test_resolve_hold_and_base_waypoint():
    m = load_stock_model("single_arm")
    q = generate_scenario("drawer", 0).start_state()
    assert np.array_equal(resolve_target(Hold(), m, q), q)
    b = [q[m.joint_index(n)] for n in ("base_x", "base_y", "base_yaw", "torso")]
    assert np.array_equal(resolve_target(BaseWaypoint(*b), m, q), q)


def test_resolve_gripper_command():
    m = load_stock_model("dual_arm")
    q = generate_scenario("bucket", 0).start_state()
    closed = resolve_target(GripperCommand(GripperAction.CLOSE), m, q)
    assert np.all(closed[list(m.finger_joints)] == m.lower[list(m.finger_joints)])
    opened = resolve_target(GripperCommand(GripperAction.OPEN, ("left_gripper",)), m, closed)
    left = list(m.fingers["left_gripper"])
    right = list(m.fingers["right_gripper"])
    assert np.all(opened[left] == m.upper[left]) and np.all(opened[right] == m.lower[right])


def test_resolve_gripper_poses_roundtrip():
    m = load_stock_model("single_arm")
    q = generate_scenario("drawer", 2).start_state()
    f = m.gripper_frames[0]
    target = GripperPoses(((f, forward_kinematics(m, q, f)),))
    out = resolve_target(target, m, q)
    assert np.linalg.norm(forward_kinematics(m, out, f).translation - forward_kinematics(m, q, f).translation) < 1e-3


def test_context_branch_only_for_bucket():
    ctx = TaskContext.initial(Task.OPEN_DRAWER, load_stock_model("single_arm"), TaskInfo(Task.OPEN_DRAWER))
    with pytest.raises(ValueError):
        ctx.with_(branch=Branch.HUG)


# -- drawer -------------------------------------------------------------
def test_drawer_nominal_phases():
    result, records = trace(generate_scenario("drawer", 0))
    assert result.success
    # the episode stops once the drawer is open, so CheckOpen may not get a tick
    order = ("AccumulateHandle", "PreGrasp", "Grasp", "CloseGripper", "PullBase", "CheckOpen")
    assert result.history == order[:len(result.history)] and len(result.history) >= 5


def test_drawer_never_leaves_joint_limits():
    m = load_stock_model("single_arm")
    for seed in range(5):
        _, records = trace(generate_scenario("drawer", seed))
        assert all(within_limits(m, ctx.desired) for *_, ctx in records)


def test_drawer_slip_returns_to_accumulate():
    def slip(world, tree, ctx, target, records):
        if tree.current == "PullBase" and world.attachment is not None and world.object_joint > 0.05:
            return replace(world, attachment=None)
        return None

    result, _ = trace(generate_scenario("drawer", 1), perturb=slip)
    h = result.history
    assert "PullBase" in h
    assert h[h.index("PullBase") + 1] == "AccumulateHandle"


def test_drawer_already_open():
    s = generate_scenario("drawer", 0)
    s = replace(s, cabinet=replace(s.cabinet, initial_joint=s.cabinet.joint_range))
    sim = Simulator(s)
    world, cloud = sim.reset()
    assert sim.check_success(world) == (True, True)
    # the tree agrees on its first tick, before any motion
    s2 = replace(s, cabinet=replace(s.cabinet, initial_joint=0.0))
    tree = build_tree(Task.OPEN_DRAWER)
    ctx = TaskContext.initial(Task.OPEN_DRAWER, sim.model, s.info())
    closed_cloud = Simulator(s2).reset()[1]
    tree, ctx, *_ = tick(tree, ctx, closed_cloud, world.q)
    tree, ctx, _, status, done = tick(tree, ctx, cloud, world.q)
    assert tree.current == "CheckOpen" and done and status is NodeStatus.SUCCESS


def test_tick_deterministic():
    s = generate_scenario("door", 4)
    sim = Simulator(s)
    world, cloud = sim.reset()
    ctx = TaskContext.initial(s.task, sim.model, s.info())
    a = tick(build_tree(s.task), ctx, cloud, world.q)
    b = tick(build_tree(s.task), ctx, cloud, world.q)
    assert a[0].current == b[0].current and a[3] is b[3]
    assert type(a[2]) is type(b[2])


def test_running_node_keeps_target_kind():
    for task, seed in (("drawer", 0), ("door", 0), ("bucket", 0), ("chair", 0)):
        _, records = trace(generate_scenario(task, seed))
        kinds = {}
        for visit, node, target, *_ in records:
            kinds.setdefault((visit, node), set()).add(target.kind)
        assert all(len(k) == 1 for k in kinds.values()), task


# -- door ---------------------------------------------------------------
@pytest.mark.parametrize("side, sign", [("right", -1), ("left", 1)])
def test_door_diagonal_direction(side, sign):
    for seed in range(40):
        s = generate_scenario("door", seed)
        if s.cabinet.hinge_side == side:
            break
    _, records = trace(s)
    pulls = [ctx for _, node, _, _, ctx in records if node == "DiagonalPull"]
    ctx = pulls[0]
    d = ctx.notes["pull_to"] - ctx.notes["pull_from"]
    lateral = float(d @ s.info().left[:2])
    outward = float(d @ s.info().outward[:2])
    assert np.sign(lateral) == sign and outward > 0


def test_door_nominal_phases():
    result, _ = trace(generate_scenario("door", 0))
    assert result.success
    assert result.history[:5] == ("AccumulateHandle", "PreGrasp", "Grasp", "CloseGripper", "DiagonalPull")
    assert result.history[-1] in ("PryPush", "CheckOpen")


def test_door_open_during_pull_skips_pry():
    def swing(world, tree, ctx, target, records):
        if tree.current == "DiagonalPull":
            return replace(world, object_joint=math.radians(95), attachment=None)
        return None

    result, _ = trace(generate_scenario("door", 0), perturb=swing)
    assert result.success and "PryPush" not in result.history
    assert result.history[-1] in ("DiagonalPull", "CheckOpen")


def test_door_circular_pull_enabled():
    result, records = trace(generate_scenario("door", 0), policy=PolicyConfig(circular_pull=True))
    assert "CircularPull" in result.history
    circle = next(ctx.notes["circle"] for _, n, _, _, ctx in records if n == "CircularPull")
    assert len(circle) == 10


# -- bucket -------------------------------------------------------------
def find_bucket(thin: bool):
    for seed in range(100):
        s = generate_scenario("bucket", seed)
        if (s.bucket.rim_thickness <= 0.05) == thin and not (0.05 < s.bucket.rim_thickness < 0.08):
            return s
    raise AssertionError("no bucket found")


def test_thin_rim_is_grasped_diametrically():
    s = find_bucket(thin=True)
    result, records = trace(s)
    assert result.branch == "prehensile" and result.success
    target = next(t for _, n, t, _, _ in records if n == "Prehensile/DualGrasp")
    c = np.array(s.bucket.center)
    u, v = (pose.translation[:2] - c for _, pose in target.poses)
    angle = math.degrees(math.acos(np.clip(u @ v / (np.linalg.norm(u) * np.linalg.norm(v)), -1, 1)))
    assert angle >= 175.0


def test_thick_rim_is_hugged():
    s = find_bucket(thin=False)
    result, _ = trace(s)
    assert result.branch == "hug" and result.success
    assert "Hug/Hug" in result.history


def test_bucket_tilt_takes_failure_edge():
    s = find_bucket(thin=True)
    m = load_stock_model("dual_arm")
    j = m.joint_index("r_j2")
    state = {"done": False}

    def tilt(world, tree, ctx, target, records):
        if tree.current.endswith("LiftViaTorso") and not state["done"]:
            state["done"] = True
            q = world.q.copy()
            q[j] += 0.25  # drops the right gripper well below the left
            return replace(world, q=q)
        return None

    result, _ = trace(s, perturb=tilt)
    h = result.history
    i = max(k for k, n in enumerate(h) if n.endswith("LiftViaTorso"))
    assert state["done"] and "EstimateRim" in h[h.index("Prehensile/LiftViaTorso") + 1:]


# -- chair --------------------------------------------------------------
def test_chair_nominal_phases():
    result, _ = trace(generate_scenario("chair", 1))
    assert result.success
    assert result.history[:4] == ("EstimateChair", "ApproachBase", "Hug", "PushToTarget")


def test_chair_at_target_immediately():
    s = generate_scenario("chair", 0)
    s = replace(s, chair=replace(s.chair, position=s.target.center))
    result, _ = trace(s)
    assert result.success and result.steps_used <= 1


def test_nudge_reduces_error_every_tick():
    s = generate_scenario("chair", 3)
    s = replace(s, keep_probability=1.0, target=replace(s.target, radius=0.05))
    d = math.hypot(*np.subtract(s.chair.position, s.target.center))
    result, records = trace(s, policy=PolicyConfig(push_fraction=1 - 0.3 / d))
    err = [math.hypot(*(w.object_position[:2] - s.target.center)) for _, n, _, w, _ in records if n == "Nudge"]
    assert result.success and "Nudge" in result.history
    assert err[0] > 0.2 and np.all(np.diff(err) < 0)
