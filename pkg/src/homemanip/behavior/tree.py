"""Finite-state behavior-tree executor.

A tree is a set of named nodes joined by success and failure edges. Each
tick evaluates the current node; a node that succeeds or fails hands over to
its successor within the same tick, so the emitted target always belongs to
the node that is running when the tick ends.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Callable, Mapping, NamedTuple, Optional

import numpy as np

from ..errors import InvalidParameter
from ..geometry import PointCloud
from .targets import Hold, MotionTarget


class NodeStatus(Enum):
    RUNNING = "running"
    SUCCESS = "success"
    FAILURE = "failure"


class Percept(NamedTuple):
    cloud: PointCloud
    q: np.ndarray


class NodeFailure(Exception):
    """Raised by a node's ``enter`` when it cannot produce a target."""

    def __init__(self, reason: str, context: Any = None):
        super().__init__(reason)
        self.context = context


def _never(ctx, percept) -> bool:
    return False


def _always(ctx, percept) -> bool:
    return True


def _hold(ctx, percept):
    return ctx, Hold()


@dataclass(frozen=True, eq=False)
class Node:
    name: str
    enter: Callable = _hold  # (ctx, percept) -> (ctx, MotionTarget)
    succeeded: Callable = _never
    failed: Callable = _never
    on_success: Optional[str] = None
    on_failure: Optional[str] = None
    # a branching node picks its success edge at run time among ``branches``
    branch: Optional[Callable] = None
    branches: tuple[str, ...] = ()
    update: Optional[Callable] = None  # (ctx, percept) -> ctx, every tick while active
    retarget: Optional[Callable] = None  # (ctx, percept, target) -> (ctx, target)
    budget: int = 40
    terminal: bool = False
    doc: str = ""

    def success_edges(self) -> tuple[str, ...]:
        if self.branch is not None:
            return self.branches
        return () if self.on_success is None else (self.on_success,)


@dataclass(frozen=True, eq=False)
class BehaviorTree:
    name: str
    nodes: Mapping[str, Node]
    initial: str
    episode_limit: int = 200
    # jump straight to ``goal_node`` once ``goal`` holds, from any node
    goal: Optional[Callable] = None
    goal_node: Optional[str] = None
    perceive: Optional[Callable] = None  # (ctx, percept) -> ctx, every tick
    max_hops: int = 8
    current: Optional[str] = None
    entered: bool = False
    target: Optional[MotionTarget] = None
    node_ticks: int = 0
    total_ticks: int = 0
    status: NodeStatus = NodeStatus.RUNNING
    done: bool = False
    history: tuple[str, ...] = ()

    @property
    def finished_successfully(self) -> bool:
        return self.done and self.status is NodeStatus.SUCCESS


def make_tree(name: str, nodes, initial: str, **kw) -> BehaviorTree:
    tree = BehaviorTree(name, {n.name: n for n in nodes}, initial, **kw)
    validate(tree)
    return tree


def success_path_budget(tree: BehaviorTree) -> int:
    """Largest sum of node budgets along any success-edge path from the initial node."""
    memo: dict[str, int] = {}

    def longest(name: str, stack: frozenset) -> int:
        if name in stack:
            raise InvalidParameter(f"success edges of {tree.name} form a cycle through {name}")
        if name in memo:
            return memo[name]
        node = tree.nodes[name]
        nxt = [longest(s, stack | {name}) for s in node.success_edges()]
        memo[name] = node.budget + (max(nxt) if nxt else 0)
        return memo[name]

    return longest(tree.initial, frozenset())


def validate(tree: BehaviorTree) -> None:
    nodes = tree.nodes
    if tree.initial not in nodes:
        raise InvalidParameter(f"initial node {tree.initial} does not exist")
    if tree.goal_node is not None and tree.goal_node not in nodes:
        raise InvalidParameter(f"goal node {tree.goal_node} does not exist")
    for n in nodes.values():
        for e in n.success_edges() + ((n.on_failure,) if n.on_failure else ()):
            if e not in nodes:
                raise InvalidParameter(f"{n.name} points at missing node {e}")
        if n.budget < 1:
            raise InvalidParameter(f"{n.name} needs a positive budget")
        if not n.terminal and not n.success_edges():
            raise InvalidParameter(f"non-terminal node {n.name} has no success edge")
    seen, todo = set(), [tree.initial]
    while todo:
        cur = todo.pop()
        if cur in seen:
            continue
        seen.add(cur)
        n = nodes[cur]
        todo.extend(n.success_edges())
        if n.on_failure:
            todo.append(n.on_failure)
    if seen != set(nodes):
        raise InvalidParameter(f"unreachable nodes: {sorted(set(nodes) - seen)}")
    terminals = {k for k, n in nodes.items() if n.terminal}
    for k in nodes:
        reach, todo = set(), [k]
        while todo:
            cur = todo.pop()
            if cur in reach:
                continue
            reach.add(cur)
            todo.extend(nodes[cur].success_edges())
        if not reach & terminals:
            raise InvalidParameter(f"no terminal reachable from {k} through success edges")
    total = success_path_budget(tree)
    if total > tree.episode_limit:
        raise InvalidParameter(f"success-path budgets of {tree.name} sum to {total} > {tree.episode_limit}")


def tick(tree: BehaviorTree, context, observation: PointCloud, state) -> tuple:
    """One control tick: ``(tree', context', target, status, episode_done)``."""
    percept = Percept(observation, np.asarray(state, dtype=float))
    if tree.done:
        return tree, context, tree.target or Hold(), tree.status, True
    ctx = context
    if tree.perceive is not None:
        ctx = tree.perceive(ctx, percept)
    name = tree.current or tree.initial
    entering = not tree.entered
    target = tree.target
    ticks = tree.node_ticks
    history = tree.history
    if tree.goal is not None and name != tree.goal_node and tree.goal(ctx, percept):
        name, entering = tree.goal_node, True
    status, done = NodeStatus.RUNNING, False
    hops = 0
    while True:
        node = tree.nodes[name]
        entry_failed = False
        if entering:
            history = history + (name,)
            ticks = 0
            try:
                ctx, target = node.enter(ctx, percept)
            except NodeFailure as exc:
                entry_failed = True
                if exc.context is not None:
                    ctx = exc.context
                target = Hold()
        elif node.retarget is not None:
            ctx, target = node.retarget(ctx, percept, target)
        if not entry_failed and node.update is not None:
            ctx = node.update(ctx, percept)
        if entry_failed:
            outcome = NodeStatus.FAILURE
        elif node.succeeded(ctx, percept):
            outcome = NodeStatus.SUCCESS
        elif node.failed(ctx, percept) or ticks >= node.budget:
            outcome = NodeStatus.FAILURE
        else:
            outcome = NodeStatus.RUNNING
        if outcome is NodeStatus.RUNNING:
            entering = False
            break
        if outcome is NodeStatus.SUCCESS and node.terminal:
            status, done, entering = NodeStatus.SUCCESS, True, False
            break
        if outcome is NodeStatus.SUCCESS:
            nxt = node.branch(ctx) if node.branch is not None else node.on_success
        else:
            nxt = node.on_failure
        if nxt is None:
            status, done, entering = NodeStatus.FAILURE, True, False
            break
        name, entering = nxt, True
        hops += 1
        if hops >= tree.max_hops:
            # enter the next node on the following tick instead of spinning here
            target, status = Hold(), outcome
            break
    ticks += 1
    total = tree.total_ticks + 1
    if total >= tree.episode_limit:
        done = True
    new = replace(tree, current=name, entered=not entering, target=target, node_ticks=ticks,
                  total_ticks=total, status=status, done=done, history=history)
    return new, ctx, target, status, done


# -- graph dumps ---------------------------------------------------------
def tree_graph(tree: BehaviorTree) -> dict:
    nodes = []
    edges = []
    for n in tree.nodes.values():
        nodes.append({"name": n.name, "budget": n.budget, "terminal": n.terminal,
                      "dynamic": n.retarget is not None, "doc": n.doc})
        for s in n.success_edges():
            edges.append({"from": n.name, "to": s, "on": "success"})
        if n.on_failure:
            edges.append({"from": n.name, "to": n.on_failure, "on": "failure"})
    if tree.goal_node is not None:
        edges.append({"from": "*", "to": tree.goal_node, "on": "goal"})
    return {"tree": tree.name, "initial": tree.initial, "episode_limit": tree.episode_limit,
            "success_path_budget": success_path_budget(tree), "nodes": nodes, "edges": edges}


def tree_json(tree: BehaviorTree) -> str:
    return json.dumps(tree_graph(tree), indent=2) + "\n"


def tree_dot(tree: BehaviorTree) -> str:
    g = tree_graph(tree)
    lines = [f'digraph "{g["tree"]}" {{', "  rankdir=LR;"]
    for n in g["nodes"]:
        shape = "doublecircle" if n["terminal"] else "box"
        lines.append(f'  "{n["name"]}" [shape={shape}, label="{n["name"]}\\n({n["budget"]})"];')
    style = {"success": "solid", "failure": "dashed", "goal": "dotted"}
    for e in g["edges"]:
        if e["from"] == "*":
            continue
        lines.append(f'  "{e["from"]}" -> "{e["to"]}" [style={style[e["on"]]}];')
    lines.append("}")
    return "\n".join(lines) + "\n"
