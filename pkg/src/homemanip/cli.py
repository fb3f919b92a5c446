"""Command line: ``homemanip {run,eval,ik-check,trees}``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .behavior.tasks import build_tree
from .behavior.tree import tree_dot, tree_json
from .diagnostics import ik_check
from .kinematics import load_stock_model
from .models import model_json
from .sim.runner import evaluate, run_episode, summary_text, write_eval, write_run
from .sim.scenario import Scenario, generate_scenario
from .task import Task

log = logging.getLogger("homemanip")


def _tasks(arg: str) -> list[Task]:
    if arg == "all":
        return list(Task)
    return [Task.parse(t) for t in arg.split(",")]


def cmd_run(args) -> int:
    if args.scenario:
        scenario = Scenario.load(args.scenario)
    else:
        if not args.task:
            raise SystemExit("run needs --task or --scenario")
        scenario = generate_scenario(args.task, args.seed)
    out = Path(args.out) if args.out else None
    clouds = out / "clouds" if (out is not None and args.dump_clouds) else None
    result = run_episode(scenario, cloud_dir=clouds)
    if out is not None:
        write_run(scenario, result, out)
        (out / "model.json").write_text(model_json(scenario.robot))
    reason = "-" if result.failure_reason is None else result.failure_reason.value
    print(f"{scenario.task.value} seed={scenario.seed} success={int(result.success)} "
          f"steps={result.steps_used} failure={reason}")
    print("nodes: " + " > ".join(result.history))
    return 0 if result.success else 1


def cmd_eval(args) -> int:
    summaries = []
    for task in _tasks(args.task or "all"):
        log.info("evaluating %s on %d episodes", task.value, args.episodes)
        summaries.append(evaluate(task, args.episodes, args.seed))
    text = summary_text(summaries)
    if args.out:
        write_eval(summaries, args.out)
    print(text, end="")
    return 0


def cmd_ik_check(args) -> int:
    reports = ik_check(args.seed, n_fk=args.states, n_ik=args.requests)
    for r in reports:
        print(r.line())
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        data = [{"check": r.name, "cases": r.cases, "passed": r.passed, "worst": r.worst} for r in reports]
        (out / "ik_check.json").write_text(json.dumps(data, indent=2) + "\n")
    ok = all(r.rate >= (0.99 if r.name.startswith("ik") else 1.0) for r in reports)
    return 0 if ok else 1


def cmd_trees(args) -> int:
    out = Path(args.out) if args.out else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    for task in _tasks(args.task or "all"):
        tree = build_tree(task)
        if out is None:
            print(tree_dot(tree), end="")
            continue
        (out / f"{task.value}.json").write_text(tree_json(tree))
        (out / f"{task.value}.dot").write_text(tree_dot(tree))
        print(f"wrote {task.value}.json and {task.value}.dot")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="homemanip", description="Mobile manipulation pipeline in a kinematic sim.")
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="one episode with a full trajectory log")
    run.add_argument("--task")
    run.add_argument("--seed", type=int, default=0)
    run.add_argument("--scenario", help="scenario JSON file; overrides --task/--seed")
    run.add_argument("--out", help="directory for scenario, model, trajectory and result files")
    run.add_argument("--dump-clouds", action="store_true", help="write one PLY per step under OUT/clouds")
    run.set_defaults(func=cmd_run)

    ev = sub.add_parser("eval", help="batch of seeded episodes")
    ev.add_argument("--task", help="task name, comma list, or 'all' (default)")
    ev.add_argument("--seed", type=int, default=0)
    ev.add_argument("--episodes", type=int, default=100)
    ev.add_argument("--out")
    ev.set_defaults(func=cmd_eval)

    ik = sub.add_parser("ik-check", help="FK/Jacobian/IK self-test on the stock models")
    ik.add_argument("--seed", type=int, default=0)
    ik.add_argument("--states", type=int, default=200)
    ik.add_argument("--requests", type=int, default=500)
    ik.add_argument("--out")
    ik.set_defaults(func=cmd_ik_check)

    tr = sub.add_parser("trees", help="dump behavior-tree graphs as JSON and DOT")
    tr.add_argument("--task")
    tr.add_argument("--out")
    tr.set_defaults(func=cmd_trees)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "episodes", 1) < 1:
        raise SystemExit("--episodes must be >= 1")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
