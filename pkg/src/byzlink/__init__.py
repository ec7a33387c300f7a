"""Iterative approximate consensus under transient Byzantine link failures.

Graph condition checkers, a trim-and-average simulator with pluggable link
adversaries, and matrix-based verification of recorded executions.
"""

from .adversary import DROPPED, AdversaryConfig
from .conditions import check_condition_p, check_condition_s
from .graph import DiGraph, decompose, fig1_graph, source_components
from .matrix import build_transition_matrix, verify_row_bound
from .protocol import ExecutionTrace, SimulationConfig, compute_t_end, run, update_step
from .reduction import count_r, enumerate_reduced_graphs

__version__ = "0.1.0"

__all__ = [
    "DROPPED", "AdversaryConfig", "DiGraph", "ExecutionTrace", "SimulationConfig",
    "build_transition_matrix", "check_condition_p", "check_condition_s", "compute_t_end",
    "count_r", "decompose", "enumerate_reduced_graphs", "fig1_graph", "run",
    "source_components", "update_step", "verify_row_bound",
]
