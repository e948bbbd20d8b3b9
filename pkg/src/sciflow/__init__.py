"""Desk-scale science gateway stack.

Subsystems: workflow model and archives, sweep planner, DAG engine,
compute-backend bridge, persistent repository, portal service + CLI, and the
MD post-processing toolkit.
"""

__version__ = "0.1.0"
