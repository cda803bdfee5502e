"""Design of tree-shaped multi-beam radio networks by tabu search."""
from .model import Instance, Node, RootedTopology, Topology, is_valid_topology, load_instance, root_at
from .configuration import Design, Partition, check_design
from .objective import evaluate_objective
from .search import exhaustive_solver, initial_topology, solve, tabu1, tabu2, tbs

__version__ = "0.1.0"

__all__ = [
    "Design",
    "Instance",
    "Node",
    "Partition",
    "RootedTopology",
    "Topology",
    "check_design",
    "evaluate_objective",
    "exhaustive_solver",
    "initial_topology",
    "is_valid_topology",
    "load_instance",
    "root_at",
    "solve",
    "tabu1",
    "tabu2",
    "tbs",
]
