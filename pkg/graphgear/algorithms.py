"""
BFS (top-down) and PageRank (push and pull) with sequential and parallel kernels.

Every algorithm runs in one of three execution modes: `sequential` (one package, plain
writes), `simple` (equal-size packages, parallel kernel on every granted worker) and
`scheduler` (estimates, cost model, thread bounds and the selective-sequential protocol).
Parallel kernels write shared per-vertex state only through AtomicArray.

Operation counts of the descriptors were taken by hand from the kernels below:

    bfs      vertex: read offsets[v], offsets[v+1]            ops 2  mem 2
             edge: read target, test visited flag              ops 1  mem 2
             found vertex: claim flag, write level             ops 1  mem 2  atomics 1
             memory: visited flag per vertex, 8 bytes per frontier/next-frontier entry
    pr-push  vertex: read rank, degree, write contribution     ops 2  mem 3
             edge: read target, add contribution               ops 1  mem 1  atomics 1
             memory: rank + accumulator, 16 bytes per vertex
    pr-pull  vertex: read in-offsets, write sum                ops 3  mem 4
             edge: read source, read contribution              ops 1  mem 2
             memory: rank + accumulator, 16 bytes per vertex
"""

import logging
import time
from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict

from graphgear.atomics import AtomicArray
from graphgear.config import (CostModelConfig, PageRankConfig, SchedulerConfig, cost_config_from_env,
                              scheduler_config_from_env)
from graphgear.cost_model import (AlgorithmDescriptor, ItemCounts, IterationCosts, LatencySource, ThreadBounds,
                                  iteration_costs, plan_threads)
from graphgear.errors import ProfileError
from graphgear.estimators import estimate_traversal
from graphgear.graph import Graph
from graphgear.scheduler import (ExecutionPlan, IterationResult, PackagingMode, WorkerPool, WorkPackage,
                                 generate_packages, run_simple, schedule_and_run, simple_plan)

logger = logging.getLogger(__name__)

UNSET = -1

DESCRIPTORS = {
    "bfs": AlgorithmDescriptor(
        name="bfs",
        vertex=ItemCounts(ops=2, mem=2),
        edge=ItemCounts(ops=1, mem=2),
        found_vertex=ItemCounts(ops=1, mem=2, atomics=1),
        bytes_per_vertex=1,
        bytes_per_frontier_entry=8,
        constant_bytes=64,
    ),
    "pr-push": AlgorithmDescriptor(
        name="pr-push",
        vertex=ItemCounts(ops=2, mem=3),
        edge=ItemCounts(ops=1, mem=1, atomics=1),
        bytes_per_vertex=16,
        constant_bytes=64,
    ),
    "pr-pull": AlgorithmDescriptor(
        name="pr-pull",
        vertex=ItemCounts(ops=3, mem=4),
        edge=ItemCounts(ops=1, mem=2),
        bytes_per_vertex=16,
        constant_bytes=64,
    ),
}


class ExecutionMode(str, Enum):
    SEQUENTIAL = "sequential"
    SIMPLE = "simple"
    SCHEDULER = "scheduler"


class PageRankVariant(str, Enum):
    PUSH = "push"
    PULL = "pull"


def descriptor_for(variant: str) -> AlgorithmDescriptor:
    try:
        return DESCRIPTORS[variant]
    except KeyError:
        raise ValueError(f"unknown algorithm variant {variant!r}, expected one of {sorted(DESCRIPTORS)}") from None


class IterationReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    index: int
    frontier_size: int
    preparation_ns: int
    elapsed_ns: int
    touched_estimate: float | None = None
    found_estimate: float | None = None
    bounds: ThreadBounds | None = None
    packaging: PackagingMode | None = None
    dispatch: IterationResult | None = None


class BfsResult(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    levels: np.ndarray
    traversed_edges: int
    iterations: tuple[IterationReport, ...]


class PageRankResult(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    ranks: np.ndarray
    iterations: int
    rank_sums: tuple[float, ...]
    processed_edges: int
    reports: tuple[IterationReport, ...]


class Runtime:
    """Execution resources shared by the queries of one harness run."""

    def __init__(self, pool: WorkerPool | None = None, machine: LatencySource | None = None,
                 cost_config: CostModelConfig | None = None, scheduler_config: SchedulerConfig | None = None,
                 descriptors: dict[str, AlgorithmDescriptor] | None = None):
        self.pool = pool
        self.machine = machine
        self.max_threads = pool.max_workers if pool is not None else 1
        if cost_config is None:
            measured = getattr(getattr(machine, "table", None), "overheads", None)
            cost_config = cost_config_from_env(measured, max_cores=self.max_threads)
        self.cost_config = cost_config
        self.scheduler_config = scheduler_config or scheduler_config_from_env()
        self.descriptors = dict(descriptors or {})
        for variant in self.descriptors:
            descriptor_for(variant)

    def require_machine(self) -> LatencySource:
        if self.machine is None:
            raise ProfileError("scheduler mode needs a machine profile")
        return self.machine

    def descriptor(self, variant: str) -> AlgorithmDescriptor:
        """The descriptor loaded for this runtime, or the built-in one."""
        return self.descriptors.get(variant) or descriptor_for(variant)


def _expand(graph: Graph, vertices: np.ndarray) -> np.ndarray:
    """Targets of all out-edges of `vertices`, in CSR order per vertex."""
    starts = graph.offsets[vertices]
    degrees = graph.offsets[vertices + 1] - starts
    total = int(degrees.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64)
    # index of each edge: its vertex's start plus its rank inside the vertex's run
    run_starts = np.repeat(np.cumsum(degrees) - degrees, degrees)
    edge_index = np.repeat(starts, degrees) + (np.arange(total) - run_starts)
    return graph.targets[edge_index]


def _plan_iteration(graph: Graph, frontier: np.ndarray, unvisited: int, descriptor: AlgorithmDescriptor,
                    runtime: Runtime, edge_count: int, found: float | None = None):
    machine = runtime.require_machine()
    estimate = None
    if found is None:
        estimate = estimate_traversal(graph, frontier, unvisited)
        found = estimate.found_clamped
    costs: IterationCosts = iteration_costs(descriptor, graph.vertex_count, len(frontier), edge_count, found,
                                            machine, runtime.cost_config)
    bounds = plan_threads(costs, runtime.cost_config)
    bounds = bounds.model_copy(update={"t_max": min(bounds.t_max, runtime.max_threads)}) \
        if bounds.parallel_profitable else bounds
    if bounds.parallel_profitable and bounds.t_max < bounds.t_min:
        bounds = ThreadBounds.sequential()
    plan = generate_packages(frontier, graph, graph.stats, costs, bounds, runtime.scheduler_config)
    return plan, estimate


def _execute(mode: ExecutionMode, frontier_size: int, plan: ExecutionPlan | None, sequential_kernel,
             parallel_kernel, runtime: Runtime) -> IterationResult | None:
    if mode is ExecutionMode.SEQUENTIAL:
        sequential_kernel(WorkPackage(start=0, length=frontier_size, cost=0.0), 0)
        return None
    if mode is ExecutionMode.SIMPLE:
        return run_simple(plan, parallel_kernel, runtime.pool)
    return schedule_and_run(plan, sequential_kernel, parallel_kernel, runtime.pool, runtime.scheduler_config)


def bfs(graph: Graph, source: int, mode: ExecutionMode | str = ExecutionMode.SEQUENTIAL,
        runtime: Runtime | None = None) -> BfsResult:
    mode = ExecutionMode(mode)
    runtime = runtime or Runtime()
    n = graph.vertex_count
    if not 0 <= source < n:
        raise IndexError(f"source {source} out of range [0, {n})")
    descriptor = runtime.descriptor("bfs")
    in_degrees = graph.in_degrees()
    reach = graph.stats.reachable_count

    levels = np.full(n, UNSET, dtype=np.int64)
    visited = AtomicArray(np.zeros(n, dtype=np.uint8))
    levels[source] = 0
    visited.values[source] = 1
    found_reachable = int(in_degrees[source] > 0)
    frontier = np.array([source], dtype=np.int64)
    depth = 0
    traversed = 0
    reports = []
    buffers: list[list[np.ndarray]] = [[] for _ in range(max(runtime.max_threads, 1))]

    while frontier.size:
        started = time.perf_counter_ns()
        next_level = depth + 1
        current = frontier

        def sequential_kernel(package: WorkPackage, worker_id: int) -> None:
            candidates = _expand(graph, current[package.start:package.stop])
            fresh = np.unique(candidates[visited.values[candidates] == 0])
            visited.values[fresh] = 1
            levels[fresh] = next_level
            buffers[worker_id].append(fresh)

        def parallel_kernel(package: WorkPackage, worker_id: int) -> None:
            candidates = _expand(graph, current[package.start:package.stop])
            claimed = visited.compare_and_set(candidates, 0, 1)
            levels[claimed] = next_level
            buffers[worker_id].append(claimed)

        edge_count = int((graph.offsets[current + 1] - graph.offsets[current]).sum())
        plan, estimate = None, None
        if mode is ExecutionMode.SCHEDULER:
            plan, estimate = _plan_iteration(graph, current, reach - found_reachable, descriptor, runtime, edge_count)
        elif mode is ExecutionMode.SIMPLE:
            plan = simple_plan(len(current), runtime.max_threads, runtime.scheduler_config)
        prepared = time.perf_counter_ns()

        dispatch = _execute(mode, len(current), plan, sequential_kernel, parallel_kernel, runtime)
        parts = [part for buffer in buffers for part in buffer]
        for buffer in buffers:
            buffer.clear()
        frontier = np.sort(np.concatenate(parts)) if parts else np.empty(0, dtype=np.int64)
        found_reachable += int(np.count_nonzero(in_degrees[frontier]))
        traversed += edge_count

        reports.append(IterationReport(
            index=depth, frontier_size=len(current), preparation_ns=prepared - started,
            elapsed_ns=time.perf_counter_ns() - started,
            touched_estimate=estimate.touched if estimate else None,
            found_estimate=estimate.found_clamped if estimate else None,
            bounds=plan.bounds if plan else None, packaging=plan.mode if plan else None, dispatch=dispatch,
        ))
        logger.debug(f"BFS level {depth}: |S|={len(current)} found={len(frontier)} mode={mode.value}")
        depth = next_level

    return BfsResult(levels=levels, traversed_edges=traversed, iterations=tuple(reports))


def _push_kernels(graph: Graph, contributions: np.ndarray, accumulator: AtomicArray):
    degrees = graph.out_degrees()

    def edge_updates(package: WorkPackage) -> tuple[np.ndarray, np.ndarray]:
        span = slice(package.start, package.stop)
        targets = graph.targets[graph.offsets[package.start]:graph.offsets[package.stop]]
        return targets, np.repeat(contributions[span], degrees[span])

    def sequential_kernel(package: WorkPackage, worker_id: int) -> None:
        targets, values = edge_updates(package)
        np.add.at(accumulator.values, targets, values)

    def parallel_kernel(package: WorkPackage, worker_id: int) -> None:
        targets, values = edge_updates(package)
        accumulator.fetch_add(targets, values)

    return sequential_kernel, parallel_kernel


def _pull_kernel(graph: Graph, contributions: np.ndarray, accumulator: AtomicArray):
    in_degrees = graph.in_degrees()

    # writes only its own vertex range, so one kernel serves both modes
    def kernel(package: WorkPackage, worker_id: int) -> None:
        span = slice(package.start, package.stop)
        sources = graph.reverse_targets[graph.reverse_offsets[package.start]:graph.reverse_offsets[package.stop]]
        owners = np.repeat(np.arange(package.length), in_degrees[span])
        accumulator.values[span] = np.bincount(owners, weights=contributions[sources], minlength=package.length)

    return kernel, kernel


def pagerank(graph: Graph, variant: PageRankVariant | str = PageRankVariant.PUSH,
             mode: ExecutionMode | str = ExecutionMode.SEQUENTIAL, config: PageRankConfig | None = None,
             runtime: Runtime | None = None) -> PageRankResult:
    variant = PageRankVariant(variant)
    mode = ExecutionMode(mode)
    config = config or PageRankConfig()
    runtime = runtime or Runtime()
    n = graph.vertex_count
    if n < 1:
        raise ValueError("PageRank needs at least one vertex")
    descriptor = runtime.descriptor(f"pr-{variant.value}")
    degrees = graph.out_degrees()
    dangling = degrees == 0
    safe_degrees = np.where(dangling, 1, degrees)

    ranks = np.full(n, 1.0 / n)
    contributions = np.zeros(n)
    accumulator = AtomicArray(np.zeros(n))
    if variant is PageRankVariant.PUSH:
        sequential_kernel, parallel_kernel = _push_kernels(graph, contributions, accumulator)
    else:
        sequential_kernel, parallel_kernel = _pull_kernel(graph, contributions, accumulator)

    # the vertex set is the same every iteration, so planning happens once
    started = time.perf_counter_ns()
    plan = None
    vertices = np.arange(n, dtype=np.int64)
    if mode is ExecutionMode.SCHEDULER:
        plan, _ = _plan_iteration(graph, vertices, 0, descriptor, runtime, graph.edge_count, found=0.0)
    elif mode is ExecutionMode.SIMPLE:
        plan = simple_plan(n, runtime.max_threads, runtime.scheduler_config)
    preparation = time.perf_counter_ns() - started

    rank_sums = []
    reports = []
    iterations = 0
    for iteration in range(config.max_iterations):
        started = time.perf_counter_ns()
        np.divide(ranks, safe_degrees, out=contributions)
        contributions[dangling] = 0.0
        accumulator.values.fill(0.0)
        dispatch = _execute(mode, n, plan, sequential_kernel, parallel_kernel, runtime)
        dangling_mass = float(ranks[dangling].sum())
        updated = (1.0 - config.damping) / n + config.damping * (accumulator.values + dangling_mass / n)
        change = float(np.abs(updated - ranks).sum())
        ranks = updated
        iterations = iteration + 1
        rank_sums.append(float(ranks.sum()))
        reports.append(IterationReport(
            index=iteration, frontier_size=n, preparation_ns=preparation if iteration == 0 else 0,
            elapsed_ns=time.perf_counter_ns() - started,
            bounds=plan.bounds if plan else None, packaging=plan.mode if plan else None, dispatch=dispatch,
        ))
        logger.debug(f"PageRank-{variant.value} iteration {iteration}: L1 change {change:.3e}")
        if change < config.epsilon:
            break
    else:
        logger.warning(f"PageRank-{variant.value} stopped after {config.max_iterations} iterations "
                       f"without reaching epsilon {config.epsilon}")

    return PageRankResult(ranks=ranks, iterations=iterations, rank_sums=tuple(rank_sums),
                          processed_edges=graph.edge_count * iterations, reports=tuple(reports))
