"""Behavior trees, motion targets and the per-episode task context."""
from .context import Branch, TaskContext
from .targets import BaseWaypoint, GripperAction, GripperCommand, GripperPoses, Hold, resolve_target
from .tasks import PolicyConfig, build_tree, circular_pull_waypoints
from .tree import BehaviorTree, Node, NodeFailure, NodeStatus, tick, tree_dot, tree_json

__all__ = ["Branch", "TaskContext", "BaseWaypoint", "GripperAction", "GripperCommand", "GripperPoses", "Hold",
           "resolve_target", "PolicyConfig", "build_tree", "circular_pull_waypoints", "BehaviorTree", "Node",
           "NodeFailure", "NodeStatus", "tick", "tree_dot", "tree_json"]
