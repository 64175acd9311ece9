"""crslab: a simulation laboratory for random-order contention resolution on graph matchings.

Subpackages cover graph instances and arrival processes, selection-function
machinery with certificates, two contention-resolution engines (the recursive
self-sampling scheme and the two-phase pruned scheme), coupled-execution and
trajectory diagnostics, and a reproducible experiment harness with a CLI.
"""

from .graph import Graph, generate
from .selection import SelectionFunction, vertex_selection, edge_selection

__all__ = [
    "Graph",
    "generate",
    "SelectionFunction",
    "vertex_selection",
    "edge_selection",
]

__version__ = "0.1.0"
