"""Perception, behavior-tree, IK and PID pipeline for household mobile manipulation."""

__version__ = "0.1.0"
