"""
Immutable graph topology: forward and reverse CSR adjacency, edge-list ingestion,
RMAT generation and the statistics gathered while the adjacency lists are built.
"""

import gzip
import logging
import math
from pathlib import Path
from typing import Iterable, TextIO

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from graphgear.errors import GraphFormatError

logger = logging.getLogger(__name__)

VERTEX_DTYPE = np.int64
MAX_COUNT = np.iinfo(np.int64).max


class GraphStats(BaseModel):
    model_config = ConfigDict(frozen=True)

    mean_out_degree: float = Field(ge=0)
    max_out_degree: int = Field(ge=0)
    reachable_count: int = Field(ge=0)
    vertex_count: int = Field(ge=0)
    edge_count: int = Field(ge=0)

    @property
    def degree_ratio(self) -> float:
        """max/mean out-degree, the variance indicator."""
        if self.mean_out_degree == 0:
            return 0.0
        return self.max_out_degree / self.mean_out_degree


class RmatParams(BaseModel):
    model_config = ConfigDict(frozen=True)

    scale: int = Field(ge=1)
    edge_factor: float = Field(16.0, gt=0)
    a: float = Field(0.57, ge=0)
    b: float = Field(0.19, ge=0)
    c: float = Field(0.19, ge=0)
    d: float = Field(0.05, ge=0)
    seed: int = 0

    @model_validator(mode="after")
    def _probabilities_sum_to_one(self):
        total = self.a + self.b + self.c + self.d
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"quadrant probabilities must sum to 1, got {total}")
        return self


def _csr(keys: np.ndarray, values: np.ndarray, vertex_count: int) -> tuple[np.ndarray, np.ndarray]:
    counts = np.bincount(keys, minlength=vertex_count)
    offsets = np.zeros(vertex_count + 1, dtype=VERTEX_DTYPE)
    np.cumsum(counts, out=offsets[1:])
    order = np.argsort(keys, kind="stable")
    return offsets, values[order].astype(VERTEX_DTYPE, copy=False)


def _freeze(*arrays: np.ndarray) -> None:
    for array in arrays:
        array.flags.writeable = False


class Graph:
    """Directed graph in CSR layout with its transpose. Immutable after construction."""

    def __init__(self, offsets, targets, reverse_offsets, reverse_targets, stats: GraphStats | None = None):
        self.offsets = offsets
        self.targets = targets
        self.reverse_offsets = reverse_offsets
        self.reverse_targets = reverse_targets
        _freeze(self.offsets, self.targets, self.reverse_offsets, self.reverse_targets)
        self.stats = stats if stats is not None else build_stats(self)

    @classmethod
    def from_edges(cls, sources, targets, vertex_count: int | None = None) -> "Graph":
        sources = np.asarray(sources, dtype=VERTEX_DTYPE)
        targets = np.asarray(targets, dtype=VERTEX_DTYPE)
        if sources.shape != targets.shape:
            raise ValueError("sources and targets must have the same length")
        if vertex_count is None:
            vertex_count = int(max(sources.max(initial=-1), targets.max(initial=-1))) + 1
        if sources.size and (min(sources.min(), targets.min()) < 0
                             or max(sources.max(), targets.max()) >= vertex_count):
            raise ValueError(f"edge endpoint outside [0, {vertex_count})")
        offsets, forward = _csr(sources, targets, vertex_count)
        reverse_offsets, reverse = _csr(targets, sources, vertex_count)
        return cls(offsets, forward, reverse_offsets, reverse)

    @property
    def vertex_count(self) -> int:
        return len(self.offsets) - 1

    @property
    def edge_count(self) -> int:
        return len(self.targets)

    def out_degrees(self) -> np.ndarray:
        return np.diff(self.offsets)

    def in_degrees(self) -> np.ndarray:
        return np.diff(self.reverse_offsets)

    def _check_vertex(self, v: int) -> None:
        if not 0 <= v < self.vertex_count:
            raise IndexError(f"vertex {v} out of range [0, {self.vertex_count})")

    def out_degree(self, v: int) -> int:
        self._check_vertex(v)
        return int(self.offsets[v + 1] - self.offsets[v])

    def neighbors(self, v: int) -> np.ndarray:
        self._check_vertex(v)
        return self.targets[self.offsets[v]:self.offsets[v + 1]]

    def in_neighbors(self, v: int) -> np.ndarray:
        self._check_vertex(v)
        return self.reverse_targets[self.reverse_offsets[v]:self.reverse_offsets[v + 1]]

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Edge list (sources, targets) in CSR order."""
        sources = np.repeat(np.arange(self.vertex_count, dtype=VERTEX_DTYPE), self.out_degrees())
        return sources, self.targets

    def transpose(self) -> "Graph":
        return Graph(self.reverse_offsets.copy(), self.reverse_targets.copy(),
                     self.offsets.copy(), self.targets.copy())

    def __repr__(self) -> str:
        return f"Graph(vertices={self.vertex_count}, edges={self.edge_count})"


def build_stats(graph: Graph) -> GraphStats:
    out_degrees = graph.out_degrees()
    vertex_count = graph.vertex_count
    edge_count = graph.edge_count
    # A vertex with an incoming edge is never isolated.
    reachable = int(np.count_nonzero(graph.in_degrees()))
    return GraphStats(
        mean_out_degree=edge_count / vertex_count if vertex_count else 0.0,
        max_out_degree=int(out_degrees.max(initial=0)),
        reachable_count=reachable,
        vertex_count=vertex_count,
        edge_count=edge_count,
    )


def out_degree(graph: Graph, v: int) -> int:
    return graph.out_degree(v)


def neighbors(graph: Graph, v: int) -> np.ndarray:
    return graph.neighbors(v)


def in_neighbors(graph: Graph, v: int) -> np.ndarray:
    return graph.in_neighbors(v)


def ingest_edge_list(text_stream: Iterable[str]) -> Graph:
    """Parse '#'-commented lines of "source target" pairs into a Graph."""
    sources: list[int] = []
    targets: list[int] = []
    for line_number, line in enumerate(text_stream, start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        tokens = stripped.split()
        if len(tokens) != 2:
            raise GraphFormatError(f"expected two vertex ids, got {len(tokens)} fields", line_number)
        if not all(token.isascii() and token.isdigit() for token in tokens):
            raise GraphFormatError(f"vertex ids must be non-negative integers: {stripped!r}", line_number)
        sources.append(int(tokens[0]))
        targets.append(int(tokens[1]))
    if not sources:
        raise GraphFormatError("edge list contains no edges")
    graph = Graph.from_edges(sources, targets)
    logger.debug(f"Ingested {graph!r}")
    return graph


def _open_text(path: Path) -> TextIO:
    if path.suffix == ".gz":
        return gzip.open(path, "rt", encoding="utf-8")
    return open(path, "r", encoding="utf-8")


def load_edge_list(path: str | Path) -> Graph:
    path = Path(path)
    logger.info(f"Loading edge list from {path}")
    with _open_text(path) as stream:
        graph = ingest_edge_list(stream)
    logger.info(f"Loaded {graph!r}")
    return graph


def write_edge_list(graph: Graph, path: str | Path, comment: str | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    sources, targets = graph.edges()
    with open(path, "w", encoding="utf-8") as f:
        if comment:
            f.write(f"# {comment}\n")
        f.write(f"# vertices {graph.vertex_count} edges {graph.edge_count}\n")
        np.savetxt(f, np.column_stack((sources, targets)), fmt="%d")
    logger.info(f"Wrote {graph.edge_count} edges to {path}")


def rmat_edges(params: RmatParams) -> tuple[np.ndarray, np.ndarray]:
    vertex_count = 2 ** params.scale
    if params.scale >= 63 or params.edge_factor * vertex_count >= MAX_COUNT:
        raise OverflowError(f"RMAT scale {params.scale} with edge factor {params.edge_factor} overflows the edge count")
    edge_count = round(params.edge_factor * vertex_count)
    rng = np.random.default_rng(params.seed)
    sources = np.zeros(edge_count, dtype=VERTEX_DTYPE)
    targets = np.zeros(edge_count, dtype=VERTEX_DTYPE)
    ab, abc = params.a + params.b, params.a + params.b + params.c
    for bit in range(params.scale):
        r = rng.random(edge_count)
        # quadrants: a=(0,0) b=(0,1) c=(1,0) d=(1,1)
        sources |= (r >= ab).astype(VERTEX_DTYPE) << bit
        targets |= (((r >= params.a) & (r < ab)) | (r >= abc)).astype(VERTEX_DTYPE) << bit
    return sources, targets


def generate_rmat(params: RmatParams) -> Graph:
    sources, targets = rmat_edges(params)
    graph = Graph.from_edges(sources, targets, vertex_count=2 ** params.scale)
    logger.debug(f"Generated RMAT scale={params.scale} edge_factor={params.edge_factor}: {graph!r}")
    return graph


def required_scale(vertex_count: int) -> int:
    return max(1, math.ceil(math.log2(max(vertex_count, 2))))
