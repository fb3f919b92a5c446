"""Acceptance criteria, one test each, at their stated tolerances.

Every test prints a single ``[PASS]``/``[FAIL]`` line. Run directly
(``python tests/test_acceptance.py``) for just the summary lines.
"""
import math
import sys
import time
from contextlib import nullcontext
from pathlib import Path

import numpy as np
import pytest

from homemanip.cli import main as cli_main
from homemanip.control import (JointGroup, action_to_velocity, lowpass_alpha, pid_step, velocity_to_action,
                               ControllerBank)
from homemanip.diagnostics import check_fk, check_jacobian, near_seed_request, pose_errors
from homemanip.geometry import Label, PointCloud
from homemanip.kinematics import forward_kinematics, load_stock_model, solve_ik, within_limits
from homemanip.perception import HandleAccumulator, accumulate_handle, estimate_bucket_rim
from homemanip.sim.corpus import bucket_with_handle, chair_center_errors
from homemanip.sim.runner import evaluate
from homemanip.task import Task

MODELS = ("single_arm", "dual_arm")


@pytest.fixture
def report(capsys):
    def emit(n, ok, detail):
        ctx = capsys.disabled() if capsys is not None else nullcontext()
        with ctx:
            print(f"\n[{'PASS' if ok else 'FAIL'}] criterion {n}: {detail}")
        assert ok, detail
    return emit


def test_1_kinematics_oracles(report):
    t0 = time.perf_counter()
    reports = []
    for name in MODELS:
        m = load_stock_model(name)
        reports += [check_fk(m, 200, seed=0, tol=1e-12), check_jacobian(m, 200, seed=0, tol=1e-4)]
    dt = time.perf_counter() - t0
    ok = all(r.passed == r.cases for r in reports) and dt < 10
    worst = ", ".join(f"{r.name} {r.passed}/{r.cases} worst {r.worst:.1e}" for r in reports)
    report(1, ok, f"{worst}; {dt:.1f}s")


def test_2_ik_round_trip(report):
    t0 = time.perf_counter()
    parts, ok = [], True
    for name, dual in (("single_arm", False), ("dual_arm", False), ("dual_arm", True)):
        m = load_stock_model(name)
        rng = np.random.default_rng([0, 3 + int(dual)])
        frames = m.gripper_frames if dual else m.gripper_frames[:1]
        good = inside = 0
        for _ in range(500):
            req, _ = near_seed_request(m, rng, frames)
            res = solve_ik(m, req)
            pos, rot = pose_errors(m, res.q, req.targets)
            inside += within_limits(m, res.q)
            good += res.achieved and pos < 1e-3 and math.degrees(rot) < 0.5
        ok &= good >= 495 and inside == 500
        parts.append(f"{name}{'/dual' if dual else ''} {good}/500 (limits {inside}/500)")
    dt = time.perf_counter() - t0
    ok &= dt < 60
    report(2, ok, "; ".join(parts) + f"; {dt:.1f}s")


def test_3_base_distance(report):
    d_min = 0.35
    achieved, held, tried = 0, 0, 0
    rng = np.random.default_rng(31)
    while achieved < 200 and tried < 2000:
        m = load_stock_model(MODELS[tried % 2])
        tried += 1
        req, _ = near_seed_request(m, rng, m.gripper_frames, base_min_distance=d_min)
        res = solve_ik(m, req)
        if not res.achieved:
            continue
        achieved += 1
        b = forward_kinematics(m, res.q, m.base_frame).translation
        held += all(math.hypot(*(t.pose.translation - b)[:2]) >= d_min - 1e-6 for t in req.targets)
    report(3, achieved == 200 and held == 200, f"{held}/{achieved} achieved solves keep the base distance "
                                                 f"({tried} requests)")


def test_4_chair_estimator(report):
    t0 = time.perf_counter()
    box, raw = chair_center_errors(100, seed=0)
    dt = time.perf_counter() - t0
    ratio = box.mean() / raw.mean()
    report(4, ratio <= 0.5 and dt < 30,
           f"PCA-box MSE {box.mean():.5f} vs centroid MSE {raw.mean():.5f} (ratio {ratio:.3f}); {dt:.1f}s")


def test_5_rim_bin(report):
    hits = {}
    for handle in (True, False):
        n = 0
        for seed in range(100):
            s = bucket_with_handle(seed, handle=handle)
            rim = estimate_bucket_rim(s.cloud.select(Label.BUCKET))
            n += abs(rim.rim_height - s.spec.height) <= 0.01
        hits[handle] = n
    report(5, hits[True] >= 95 and hits[False] == 100,
           f"with handle {hits[True]}/100, handle-free {hits[False]}/100")


def test_6_control_contract(report):
    rng = np.random.default_rng(6)
    lo = rng.uniform(-3, 0, 1000)
    lim = np.column_stack([lo, lo + rng.uniform(0.1, 5, 1000)])
    a = rng.uniform(-1, 1, 1000)
    trip = float(np.max(np.abs(velocity_to_action(action_to_velocity(a, lim), lim) - a)))
    alpha = lowpass_alpha(0.01, 40.0)
    settle = {}
    for group in JointGroup:
        bank, q, out = ControllerBank((group,), dt=0.01), 0.0, []
        for _ in range(1500):
            bank, v = pid_step(bank, [1.0], [q])
            q += v[0] * 0.01
            out.append(q)
        out = np.array(out)
        first = int(np.argmax(np.abs(out - 1.0) < 0.01)) + 1
        settle[group] = (first, float(out.max() - 1.0))
    # the settling contract is stated for the Arm gains (shared by the gripper);
    # the slow base-rotation loop is listed for information
    arm_first, arm_over = settle[JointGroup.ARM]
    ok = trip <= 1e-12 and abs(alpha - 0.7153) <= 1e-4 and arm_first <= 150 and arm_over < 0.2
    others = ", ".join(f"{g.value} {f} steps/{100 * o:.0f}%" for g, (f, o) in settle.items() if g is not JointGroup.ARM)
    report(6, ok, f"round-trip {trip:.1e}, alpha {alpha:.5f}, arm settles by step {arm_first} with "
                  f"{100 * arm_over:.1f}% overshoot (others: {others})")


def _frame(n_handle, i):
    pts = np.zeros((n_handle + 3, 3))
    return PointCloud(pts, [Label.HANDLE] * n_handle + [Label.DRAWER_PANEL] * 3, frame_index=i)


def test_7_accumulation_boundary(report):
    cases = wrong = 0
    # boundary cells first: 49/50 points in one frame, 9/10 frames of sparse points
    grid = [(49, 1), (50, 1), (0, 9), (0, 10), (4, 9), (4, 10), (49, 9), (50, 9)]
    grid += [(k, f) for k in (0, 1, 5, 6, 7, 24, 25, 26) for f in range(1, 13)]
    for per_frame, frames in grid:
        acc = HandleAccumulator()
        for i in range(frames):
            acc, ready = accumulate_handle(acc, _frame(per_frame, i))
            expected = per_frame * (i + 1) >= 50 or (i + 1) >= 10
            cases += 1
            wrong += ready != expected
    # uneven frames that cross 50 exactly
    acc = HandleAccumulator()
    for i, k in enumerate((20, 20, 9)):
        acc, ready = accumulate_handle(acc, _frame(k, i))
    acc, ready_50 = accumulate_handle(acc, _frame(1, 3))
    ok = wrong == 0 and not ready and ready_50
    report(7, ok, f"{cases - wrong}/{cases} grid cells match the 50-point/10-frame rule; 49 -> {ready}, "
                  f"50 -> {ready_50}")


TARGETS = {Task.OPEN_DRAWER: 0.90, Task.OPEN_DOOR: 0.70, Task.MOVE_BUCKET: 0.70, Task.PUSH_CHAIR: 0.70}


def test_8_task_suite(report):
    t0 = time.perf_counter()
    summaries = {t: evaluate(t, 100, seed=0) for t in TARGETS}
    dt = time.perf_counter() - t0
    rates = {t: s.rate for t, s in summaries.items()}
    steps_ok = all(r.steps_used <= 200 for s in summaries.values() for r in s.results)
    branches = summaries[Task.MOVE_BUCKET].branches
    ordering = rates[Task.OPEN_DRAWER] >= rates[Task.OPEN_DOOR]
    ok = (all(rates[t] >= v for t, v in TARGETS.items()) and steps_ok and ordering
          and branches.get("hug", 0) > 0 and branches.get("prehensile", 0) > 0 and dt < 300)
    detail = ", ".join(f"{t.value} {rates[t]:.2f}" for t in TARGETS)
    report(8, ok, f"{detail}; bucket branches {branches}; drawer >= door {ordering}; {dt:.0f}s")


def test_9_determinism(report, tmp_path):
    digests = []
    for k in (0, 1):
        out = tmp_path / f"e{k}"
        import contextlib
        import io
        with contextlib.redirect_stdout(io.StringIO()):
            cli_main(["eval", "--episodes", "8", "--seed", "17", "--out", str(out)])
        digests.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
    same = digests[0] == digests[1] and len(digests[0]) == 3
    report(9, same, f"two eval runs, seed 17: {len(digests[0])} files byte-identical = {same}")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
