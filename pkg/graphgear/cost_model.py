"""
Per-item and per-vertex cost model, parallel profitability and thread bounds.

Costs are in nanoseconds. An item (vertex, edge or found vertex) costs its arithmetic,
plain memory and atomic operations weighted by their latencies; the per-vertex total adds
the vertex's share of edges and found vertices.
"""

import logging
import math
from enum import Enum
from typing import Callable, Protocol

from pydantic import BaseModel, ConfigDict, Field

from graphgear.config import CostModelConfig, read_key_values
from graphgear.graph import MAX_COUNT

logger = logging.getLogger(__name__)


class LatencySource(Protocol):
    def mem_latency(self, size: float) -> float: ...

    def atomic_latency(self, threads: int, size: float) -> float: ...


class ItemKind(str, Enum):
    VERTEX = "vertex"
    EDGE = "edge"
    FOUND_VERTEX = "found_vertex"


class ItemCounts(BaseModel):
    model_config = ConfigDict(frozen=True)

    ops: int = Field(0, ge=0)
    mem: int = Field(0, ge=0)
    atomics: int = Field(0, ge=0)


class AlgorithmDescriptor(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    vertex: ItemCounts = ItemCounts()
    edge: ItemCounts = ItemCounts()
    found_vertex: ItemCounts = ItemCounts()
    bytes_per_vertex: int = Field(0, ge=0)
    bytes_per_frontier_entry: int = Field(0, ge=0)
    constant_bytes: int = Field(0, ge=0)

    def counts(self, kind: ItemKind) -> ItemCounts:
        return getattr(self, kind.value)


class ThreadBounds(BaseModel):
    model_config = ConfigDict(frozen=True)

    t_min: int = Field(ge=1)
    t_max: int = Field(ge=1)
    parallel_profitable: bool

    @classmethod
    def sequential(cls) -> "ThreadBounds":
        return cls(t_min=1, t_max=1, parallel_profitable=False)


class IterationCosts(BaseModel):
    model_config = ConfigDict(frozen=True)

    s_size: int = Field(ge=0)
    e_size: int = Field(ge=0)
    f_size: float = Field(ge=0)
    footprint: int = Field(ge=0)
    vertex_cost: float = Field(ge=0)
    edge_cost: float = Field(ge=0)
    c_total_seq: float = Field(ge=0)
    c_total_para: tuple[float, ...]

    def parallel_cost(self, threads: int) -> float:
        return self.c_total_para[min(threads, len(self.c_total_para)) - 1]


_DESCRIPTOR_ITEM_KEYS = {
    f"{kind.value.upper()}_{field.upper()}": (kind.value, field)
    for kind in ItemKind for field in ("ops", "mem", "atomics")
}
_DESCRIPTOR_BYTE_KEYS = {"BYTES_PER_VERTEX", "BYTES_PER_FRONTIER_ENTRY", "CONSTANT_BYTES"}


def load_descriptor(path, base: AlgorithmDescriptor) -> AlgorithmDescriptor:
    """Override descriptor counts from a KEY=value file (e.g. EDGE_ATOMICS=1, BYTES_PER_VERTEX=8)."""
    data = base.model_dump()
    for key, value in read_key_values(path).items():
        if key in _DESCRIPTOR_ITEM_KEYS:
            kind, field = _DESCRIPTOR_ITEM_KEYS[key]
            data[kind][field] = int(value)
        elif key in _DESCRIPTOR_BYTE_KEYS:
            data[key.lower()] = int(value)
        else:
            logger.warning(f"Ignoring unknown descriptor key {key} in {path}")
    return AlgorithmDescriptor(**data)


def estimate_footprint(descriptor: AlgorithmDescriptor, vertex_count: int, s_size: int, f_size: float) -> int:
    """Touched-memory estimate M in bytes (linear in the graph and frontier sizes)."""
    footprint = (descriptor.constant_bytes
                 + descriptor.bytes_per_vertex * vertex_count
                 + descriptor.bytes_per_frontier_entry * (s_size + math.ceil(f_size)))
    if footprint > MAX_COUNT:
        raise OverflowError(f"memory footprint {footprint} overflows")
    return footprint


def sub_cost(descriptor: AlgorithmDescriptor, kind: ItemKind, threads: int, size: float,
             machine: LatencySource, config: CostModelConfig) -> float:
    if threads < 1:
        raise ValueError(f"thread count must be >= 1, got {threads}")
    counts = descriptor.counts(kind)
    if counts.ops == counts.mem == counts.atomics == 0:
        return 0.0
    mem = machine.mem_latency(size)
    # a single thread's atomic update costs a plain memory access
    atomic = mem if threads == 1 else machine.atomic_latency(threads, size)
    return counts.ops * config.l_op_ns + counts.atomics * atomic + counts.mem * mem


def total_cost_per_vertex(descriptor: AlgorithmDescriptor, threads: int, size: float, s_size: int, e_size: int,
                          f_size: float, machine: LatencySource, config: CostModelConfig) -> float:
    if s_size <= 0:
        raise ValueError("total cost per vertex needs a non-empty frontier")
    return (sub_cost(descriptor, ItemKind.VERTEX, threads, size, machine, config)
            + e_size / s_size * sub_cost(descriptor, ItemKind.EDGE, threads, size, machine, config)
            + f_size / s_size * sub_cost(descriptor, ItemKind.FOUND_VERTEX, threads, size, machine, config))


def iteration_costs(descriptor: AlgorithmDescriptor, vertex_count: int, s_size: int, e_size: int, f_size: float,
                    machine: LatencySource, config: CostModelConfig) -> IterationCosts:
    footprint = estimate_footprint(descriptor, vertex_count, s_size, f_size)
    para = tuple(total_cost_per_vertex(descriptor, t, footprint, s_size, e_size, f_size, machine, config)
                 for t in range(1, config.max_cores + 1))
    return IterationCosts(
        s_size=s_size, e_size=e_size, f_size=f_size, footprint=footprint,
        vertex_cost=sub_cost(descriptor, ItemKind.VERTEX, 1, footprint, machine, config),
        edge_cost=sub_cost(descriptor, ItemKind.EDGE, 1, footprint, machine, config),
        c_total_seq=para[0], c_total_para=para,
    )


def min_vertices_for_parallel(config: CostModelConfig, c_v_total_seq: float) -> int:
    if c_v_total_seq <= 0:
        raise ValueError("sequential per-vertex cost must be positive")
    return max(1, math.ceil((config.t_min_ns + config.para_startup_ns) / c_v_total_seq))


def _speedup_holds(config: CostModelConfig, c_seq: float, c_para: Callable[[int], float],
                   s_size: int, threads: int) -> bool:
    # strict: equality is not profitable
    return c_seq > c_para(threads) / threads + config.t_overhead_ns * threads / s_size


def _enough_work(config: CostModelConfig, c_para: Callable[[int], float], s_size: int, threads: int) -> bool:
    return s_size * c_para(threads) / threads >= config.t_min_ns + config.para_startup_ns


def thread_bounds_scan(config: CostModelConfig, c_seq: float, c_para: Callable[[int], float],
                       s_size: int) -> ThreadBounds:
    """Reference bounds: exhaustive scan of T in [2, P]."""
    if s_size <= 0:
        return ThreadBounds.sequential()
    speedup = [t for t in range(2, config.max_cores + 1) if _speedup_holds(config, c_seq, c_para, s_size, t)]
    if not speedup:
        return ThreadBounds.sequential()
    usable = [t for t in speedup if _enough_work(config, c_para, s_size, t)]
    if not usable or min(speedup) > max(usable):
        return ThreadBounds.sequential()
    return ThreadBounds(t_min=min(speedup), t_max=max(usable), parallel_profitable=True)


def _doubling_estimate(config: CostModelConfig, c_seq: float, c_para: Callable[[int], float],
                       s_size: int) -> tuple[float, float]:
    """Thread bounds from the doubling loop with per-step J_min/J_max as originally stated."""
    min_not_set = True
    t_min = t_max = 0.0
    min_work = config.t_min_ns + config.para_startup_ns
    t = 1
    while t <= config.max_cores:
        work = s_size * c_para(t)
        j_max = max(t, work / min_work)
        j_min = (work + j_max * config.t_overhead_ns) / (s_size * c_seq)
        if t_max and t_max <= j_min:
            break
        if j_max > j_min:
            t_max = j_max
            if min_not_set:
                t_min = j_min
                min_not_set = False
        elif not min_not_set:
            break
        t *= 2
    return t_min, t_max


def _bisect_first(lo: int, hi: int, predicate: Callable[[int], bool]) -> int:
    """Smallest t in [lo, hi] with predicate(t), for predicates false...true over the range."""
    while lo < hi:
        mid = (lo + hi) // 2
        if predicate(mid):
            hi = mid
        else:
            lo = mid + 1
    return lo


def _bisect_last(lo: int, hi: int, predicate: Callable[[int], bool]) -> int:
    """Largest t in [lo, hi] with predicate(t), for predicates true...false over the range."""
    while lo < hi:
        mid = (lo + hi + 1) // 2
        if predicate(mid):
            lo = mid
        else:
            hi = mid - 1
    return lo


def thread_bounds_fast(config: CostModelConfig, c_seq: float, c_para: Callable[[int], float],
                       s_size: int) -> ThreadBounds:
    """Thread bounds from a doubling pass over T = 1, 2, 4, ... refined by bisection.

    Exact against thread_bounds_scan whenever C_para(T)/T + overhead term is strictly unimodal
    in T and the per-thread work C_para(T)/T is monotone or quasi-convex over the speedup range.
    """
    p = config.max_cores
    if p < 2 or s_size <= 0:
        return ThreadBounds.sequential()

    def spread(t: int) -> float:
        return c_para(t) / t + config.t_overhead_ns * t / s_size

    powers = []
    t = 2
    while t <= p:
        powers.append(t)
        t *= 2
    if powers[-1] != p:
        powers.append(p)
    best = min(range(len(powers)), key=lambda i: spread(powers[i]))
    lo = powers[best - 1] if best > 0 else 2
    hi = powers[best + 1] if best + 1 < len(powers) else p
    while hi - lo > 2:
        third = (hi - lo) // 3
        if spread(lo + third) <= spread(hi - third):
            hi = hi - third
        else:
            lo = lo + third
    cheapest = min(range(lo, hi + 1), key=spread)

    def speedup(t: int) -> bool:
        return _speedup_holds(config, c_seq, c_para, s_size, t)

    if not speedup(cheapest):
        bounds = ThreadBounds.sequential()
    else:
        t_min = _bisect_first(2, cheapest, speedup)
        t_last = _bisect_last(cheapest, p, speedup)

        def enough(t: int) -> bool:
            return _enough_work(config, c_para, s_size, t)

        # the work condition fails on one interval of [t_min, t_last]
        if enough(t_last):
            bounds = ThreadBounds(t_min=t_min, t_max=t_last, parallel_profitable=True)
        elif enough(t_min):
            bounds = ThreadBounds(t_min=t_min, t_max=_bisect_last(t_min, t_last, enough), parallel_profitable=True)
        else:
            bounds = ThreadBounds.sequential()

    j_min, j_max = _doubling_estimate(config, c_seq, c_para, s_size)
    if bounds.parallel_profitable and (math.ceil(j_min) != bounds.t_min or min(int(j_max), p) != bounds.t_max):
        logger.debug(f"Doubling estimate J_min={j_min:.2f} J_max={j_max:.2f} diverges from "
                     f"refined bounds [{bounds.t_min}, {bounds.t_max}]")
    return bounds


def plan_threads(costs: IterationCosts, config: CostModelConfig) -> ThreadBounds:
    """Profitability check followed by the thread bounds for one iteration."""
    if costs.s_size == 0 or costs.c_total_seq <= 0:
        return ThreadBounds.sequential()
    needed = min_vertices_for_parallel(config, costs.c_total_seq)
    if costs.s_size < needed:
        logger.debug(f"|S|={costs.s_size} below {needed} vertices needed for parallel execution")
        return ThreadBounds.sequential()
    return thread_bounds_fast(config, costs.c_total_seq, costs.parallel_cost, costs.s_size)
