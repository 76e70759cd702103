"""
Traversal behavior estimators.

Predict how many vertices the next iteration touches (|U_j|) and newly finds (|F_j|),
assuming every reachable vertex is equally likely to be hit by an edge. Regular graphs use
the global mean out-degree; skewed graphs use the true degrees of a frontier sample.
"""

import logging
import math
from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from graphgear.errors import EstimationError
from graphgear.graph import Graph, GraphStats

logger = logging.getLogger(__name__)

SAMPLE_CAP = 8192
DEGREE_RATIO_THRESHOLD = 1.1


class StatisticsMode(str, Enum):
    GLOBAL_STATS = "GlobalStats"
    LOCAL_SAMPLE = "LocalSample"


class FrontierSample(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    degrees: np.ndarray
    frontier_size: int = Field(ge=0)
    sample_cap: int = Field(SAMPLE_CAP, ge=1)

    @model_validator(mode="after")
    def _check_sample_size(self) -> "FrontierSample":
        if self.sampled_count > min(self.sample_cap, self.frontier_size):
            raise ValueError(f"sample of {self.sampled_count} degrees exceeds min(cap {self.sample_cap}, "
                             f"frontier {self.frontier_size})")
        return self

    @property
    def sampled_count(self) -> int:
        return len(self.degrees)


class TraversalEstimate(BaseModel):
    model_config = ConfigDict(frozen=True)

    touched: float
    found_raw: float
    found_clamped: float
    unvisited_count: int
    mode: StatisticsMode


def select_statistics_mode(stats: GraphStats, threshold: float = DEGREE_RATIO_THRESHOLD) -> StatisticsMode:
    if stats.mean_out_degree <= 0:
        return StatisticsMode.GLOBAL_STATS
    if stats.max_out_degree / stats.mean_out_degree > threshold:
        return StatisticsMode.LOCAL_SAMPLE
    return StatisticsMode.GLOBAL_STATS


def sample_frontier(graph: Graph, frontier: np.ndarray, sample_cap: int = SAMPLE_CAP) -> FrontierSample:
    """Out-degrees of the first `sample_cap` frontier entries, in queue order."""
    head = np.asarray(frontier[:sample_cap], dtype=np.int64)
    degrees = graph.offsets[head + 1] - graph.offsets[head]
    return FrontierSample(degrees=degrees, frontier_size=len(frontier), sample_cap=sample_cap)


def _frontier_size(frontier) -> int:
    """Accept a frontier queue or its length."""
    return int(frontier) if np.ndim(frontier) == 0 else len(frontier)


def _log_miss_probability(stats: GraphStats, frontier_size: int, sample: FrontierSample | None) -> float:
    """log of the probability that a reachable vertex is hit by no frontier vertex."""
    reach = stats.reachable_count
    if frontier_size == 0:
        return 0.0
    if sample is None or sample.sampled_count == 0:
        p = min(stats.mean_out_degree / reach, 1.0)
        return frontier_size * math.log1p(-p) if p < 1.0 else -math.inf
    p = np.minimum(sample.degrees / reach, 1.0)
    if np.any(p >= 1.0):
        return -math.inf
    log_product = float(np.sum(np.log1p(-p)))
    # geometric extrapolation from the sample to the full frontier
    return log_product * (frontier_size / sample.sampled_count)


def _miss_probability(stats: GraphStats, frontier_size: int, sample: FrontierSample | None) -> float:
    return math.exp(_log_miss_probability(stats, frontier_size, sample))


def estimate_touched(stats: GraphStats, frontier, sample: FrontierSample | None = None) -> float:
    """|U_j|; `sample` selects the sampled product, None the mean-degree form."""
    frontier_size = _frontier_size(frontier)
    reach = stats.reachable_count
    if reach <= 0:
        raise EstimationError("no reachable vertices to estimate over")
    touched = (1.0 - _miss_probability(stats, frontier_size, sample)) * reach
    return min(max(touched, 0.0), float(reach))


def estimate_found(stats: GraphStats, frontier, unvisited_count: int,
                   sample: FrontierSample | None = None) -> tuple[float, float]:
    """|F_j| as written, and clamped to [0, min(touched, unvisited)]."""
    frontier_size = _frontier_size(frontier)
    reach = stats.reachable_count
    if reach <= 0:
        raise EstimationError("no reachable vertices to estimate over")
    if unvisited_count < 0 or unvisited_count > reach:
        raise EstimationError(f"unvisited_count {unvisited_count} outside [0, {reach}]")
    miss = _miss_probability(stats, frontier_size, sample)
    found_raw = (1.0 - (unvisited_count / reach) * miss) * reach
    touched = min(max((1.0 - miss) * reach, 0.0), float(reach))
    found_clamped = max(0.0, min(found_raw, touched, float(unvisited_count)))
    return found_raw, found_clamped


def estimate_traversal(graph: Graph, frontier: np.ndarray, unvisited_count: int,
                       mode: StatisticsMode | None = None) -> TraversalEstimate:
    stats = graph.stats
    mode = mode or select_statistics_mode(stats)
    sample = sample_frontier(graph, frontier) if mode is StatisticsMode.LOCAL_SAMPLE else None
    frontier_size = len(frontier)
    if stats.reachable_count == 0:
        return TraversalEstimate(touched=0.0, found_raw=0.0, found_clamped=0.0,
                                 unvisited_count=0, mode=mode)
    touched = estimate_touched(stats, frontier_size, sample)
    found_raw, found_clamped = estimate_found(stats, frontier_size, unvisited_count, sample)
    logger.debug(f"Estimate ({mode.value}): |S|={frontier_size} touched={touched:.1f} "
                 f"found={found_clamped:.1f} (raw {found_raw:.1f}) unvisited={unvisited_count}")
    return TraversalEstimate(touched=touched, found_raw=found_raw, found_clamped=found_clamped,
                             unvisited_count=unvisited_count, mode=mode)
