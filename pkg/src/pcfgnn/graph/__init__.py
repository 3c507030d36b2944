"""
Interaction graph construction and storage.
"""

from pcfgnn.graph.interaction import Adjacency, Edge, InteractionGraph, build_graph, neighbors
from pcfgnn.graph.storage import export_graph_tsv, load_graph, save_graph

__all__ = [
    "Adjacency",
    "Edge",
    "InteractionGraph",
    "build_graph",
    "export_graph_tsv",
    "load_graph",
    "neighbors",
    "save_graph",
]
