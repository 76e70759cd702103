"""graphgear: adaptive intra- and inter-query parallelism for graph queries."""

from graphgear.algorithms import ExecutionMode, Runtime, bfs, descriptor_for, pagerank
from graphgear.graph import Graph, generate_rmat, load_edge_list

__all__ = ["ExecutionMode", "Graph", "Runtime", "bfs", "descriptor_for", "generate_rmat", "load_edge_list",
           "pagerank"]
