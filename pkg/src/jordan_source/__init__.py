"""Infection source estimation with Jordan centers on discrete-time spreading models."""

from .graph import Graph, GraphError, LazyTree, infection_range, load_edge_list, minimal_connected_subgraph
from .spreading import (InfectionOutcome, InfectionPath, ModelKind, NodeState, SpreadParams,
                        log_path_probability, simulate, validate_assumptions)

__version__ = "0.1.0"

__all__ = [
    "Graph", "GraphError", "LazyTree", "infection_range", "load_edge_list",
    "minimal_connected_subgraph", "InfectionOutcome", "InfectionPath", "ModelKind", "NodeState",
    "SpreadParams", "log_path_probability", "simulate", "validate_assumptions",
]
