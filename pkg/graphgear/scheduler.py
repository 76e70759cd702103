"""
Work packaging and the selective-sequential runtime.

The package generator splits a frontier into contiguous segments: cost-balanced and sorted
heavy-first when degrees are skewed and the frontier is small, equal-sized otherwise. The
dispatcher hands packages to the workers a task was granted, running them with the parallel
kernel once enough workers registered and probing sequentially otherwise.
"""

import logging
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from enum import Enum
from typing import Callable, Protocol

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from graphgear.config import SchedulerConfig
from graphgear.cost_model import IterationCosts, ThreadBounds
from graphgear.errors import SchedulingError
from graphgear.graph import Graph, GraphStats

logger = logging.getLogger(__name__)


class PackagingMode(str, Enum):
    COST_BASED = "CostBased"
    STATIC = "Static"


class DispatchMode(str, Enum):
    PARALLEL = "parallel"
    PROBE = "probe"
    TAIL = "tail"
    SEQUENTIAL = "sequential"


class WorkPackage(BaseModel):
    model_config = ConfigDict(frozen=True)

    start: int = Field(ge=0)
    length: int = Field(ge=1)
    cost: float = Field(ge=0)

    @property
    def stop(self) -> int:
        return self.start + self.length


class ExecutionPlan(BaseModel):
    model_config = ConfigDict(frozen=True)

    packages: tuple[WorkPackage, ...]
    bounds: ThreadBounds
    mode: PackagingMode
    work_share: float | None = None


class TraceRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    worker_id: int
    mode: DispatchMode
    package_index: int
    elapsed_ns: int
    registered: int


class IterationResult(BaseModel):
    model_config = ConfigDict(frozen=True)

    trace: tuple[TraceRecord, ...]
    elapsed_ns: int
    granted_workers: int
    peak_workers: int

    def count(self, mode: DispatchMode) -> int:
        return sum(1 for record in self.trace if record.mode is mode)


Kernel = Callable[[WorkPackage, int], None]


def _vertex_costs(graph: Graph, frontier: np.ndarray, costs: IterationCosts) -> np.ndarray:
    degrees = graph.offsets[frontier + 1] - graph.offsets[frontier]
    return costs.vertex_cost + degrees * costs.edge_cost


def _greedy_segments(vertex_costs: np.ndarray, share: float) -> list[WorkPackage]:
    packages = []
    start, accumulated = 0, 0.0
    for i, cost in enumerate(vertex_costs):
        cost = float(cost)
        if i > start and cost >= share:
            # a dominating vertex gets its own package
            packages.append(WorkPackage(start=start, length=i - start, cost=accumulated))
            start, accumulated = i, 0.0
        accumulated += cost
        if accumulated >= share:
            packages.append(WorkPackage(start=start, length=i + 1 - start, cost=accumulated))
            start, accumulated = i + 1, 0.0
    if start < len(vertex_costs):
        packages.append(WorkPackage(start=start, length=len(vertex_costs) - start, cost=accumulated))
    return packages


def cost_based_packages(vertex_costs: np.ndarray, target_count: int) -> tuple[list[WorkPackage], float]:
    """Greedy cost-balanced segments, at most target_count of them, heaviest first."""
    total = float(vertex_costs.sum())
    share = total / target_count
    packages = _greedy_segments(vertex_costs, share)
    while len(packages) > target_count:
        share *= 2
        packages = _greedy_segments(vertex_costs, share)
    packages.sort(key=lambda package: package.cost, reverse=True)
    return packages, share


def static_packages(size: int, count: int, min_vertices: int,
                    vertex_costs: np.ndarray | None = None) -> list[WorkPackage]:
    """Equal-sized segments; `count` packages unless that would undercut `min_vertices`."""
    length = max(math.ceil(size / max(count, 1)), min_vertices)
    starts = np.arange(0, size, length)
    if vertex_costs is not None and len(starts):
        package_costs = np.add.reduceat(vertex_costs, starts)
    else:
        package_costs = np.zeros(len(starts))
    return [WorkPackage(start=int(start), length=int(min(length, size - start)), cost=float(cost))
            for start, cost in zip(starts, package_costs)]


def generate_packages(frontier: np.ndarray, graph: Graph, stats: GraphStats, costs: IterationCosts,
                      bounds: ThreadBounds, config: SchedulerConfig | None = None) -> ExecutionPlan:
    config = config or SchedulerConfig()
    frontier = np.asarray(frontier, dtype=np.int64)
    if len(frontier) == 0:
        raise SchedulingError("cannot package an empty frontier")
    t_max = bounds.t_max if bounds.parallel_profitable else 1
    vertex_costs = _vertex_costs(graph, frontier, costs)
    skewed = stats.degree_ratio > config.variance_threshold
    small = len(frontier) < config.small_frontier_multiple * t_max
    if skewed and small and vertex_costs.sum() > 0:
        packages, share = cost_based_packages(vertex_costs, config.cost_based_multiple * t_max)
        plan = ExecutionPlan(packages=tuple(packages), bounds=bounds, mode=PackagingMode.COST_BASED,
                             work_share=share)
    else:
        packages = static_packages(len(frontier), config.static_multiple * t_max, config.min_package_vertices,
                                   vertex_costs)
        plan = ExecutionPlan(packages=tuple(packages), bounds=bounds, mode=PackagingMode.STATIC)
    logger.debug(f"{plan.mode.value} packaging: {len(plan.packages)} packages for |S|={len(frontier)}, "
                 f"bounds [{bounds.t_min}, {bounds.t_max}] profitable={bounds.parallel_profitable}")
    return plan


def simple_plan(size: int, max_threads: int, config: SchedulerConfig | None = None) -> ExecutionPlan:
    """Equal-size packages for the simple parallel mode, which always runs in parallel."""
    config = config or SchedulerConfig()
    if size == 0:
        raise SchedulingError("cannot package an empty frontier")
    packages = static_packages(size, config.static_multiple * max_threads, config.min_package_vertices)
    bounds = ThreadBounds(t_min=1, t_max=max_threads, parallel_profitable=max_threads > 1)
    return ExecutionPlan(packages=tuple(packages), bounds=bounds, mode=PackagingMode.STATIC)


class Dispatcher(Protocol):
    def register(self, worker_id: int) -> None: ...

    def serve(self, worker_id: int) -> None: ...


class WorkerPool:
    """Worker threads shared by every concurrently running query."""

    def __init__(self, max_workers: int):
        self.max_workers = max_workers
        self._executor = ThreadPoolExecutor(max_workers=max_workers, thread_name_prefix="graphgear-worker")

    def request(self, count: int, dispatcher: Dispatcher) -> int:
        """Ask for `count` workers; each registers with the dispatcher once it is assigned."""
        granted = min(count, self.max_workers)
        for worker_id in range(granted):
            self._executor.submit(dispatcher.serve, worker_id)
        return granted

    def shutdown(self) -> None:
        self._executor.shutdown(wait=True)

    def __enter__(self) -> "WorkerPool":
        return self

    def __exit__(self, *exc) -> None:
        self.shutdown()


class PackageDispatcher:
    """Hands out the packages of one plan to registered workers.

    With `selective=True`, packages run with the parallel kernel only while at least T_min
    workers are registered. Otherwise one worker runs the next package with the sequential
    kernel while the others wait; after the sequential probe limit all but one worker are
    released and that worker finishes sequentially.
    """

    def __init__(self, plan: ExecutionPlan, sequential_kernel: Kernel, parallel_kernel: Kernel,
                 config: SchedulerConfig | None = None, selective: bool = True):
        self.plan = plan
        self._sequential_kernel = sequential_kernel
        self._parallel_kernel = parallel_kernel
        self._probe_limit = (config or SchedulerConfig()).sequential_package_limit
        self._selective = selective
        self._cond = threading.Condition()
        self._done = threading.Event()
        self._next = 0
        self._outstanding = len(plan.packages)
        self._registered: set[int] = set()
        self._running = 0
        self._probing = False
        self._probes_done = 0
        self._parallel_phase = False
        self._finisher: int | None = None
        self._error: BaseException | None = None
        self.trace: list[TraceRecord] = []
        self.peak_running = 0
        if self._outstanding == 0:
            self._done.set()

    def register(self, worker_id: int) -> None:
        with self._cond:
            self._registered.add(worker_id)
            self._cond.notify_all()

    def _take(self, worker_id: int) -> tuple[int, DispatchMode, int] | None:
        """Next package and how to run it, or None when this worker should leave."""
        with self._cond:
            while True:
                if self._error is not None or self._next >= len(self.plan.packages):
                    return None
                if self._finisher is not None:
                    if self._finisher != worker_id:
                        return None
                    mode = DispatchMode.TAIL
                elif self._probing:
                    self._cond.wait()
                    continue
                elif self._parallel_phase or not self._selective \
                        or len(self._registered) >= self.plan.bounds.t_min:
                    self._parallel_phase = True
                    mode = DispatchMode.PARALLEL
                elif self._probes_done >= self._probe_limit:
                    self._finisher = worker_id
                    self._cond.notify_all()
                    mode = DispatchMode.TAIL
                else:
                    self._probing = True
                    mode = DispatchMode.PROBE
                index = self._next
                self._next += 1
                self._running += 1
                self.peak_running = max(self.peak_running, self._running)
                return index, mode, len(self._registered)

    def serve(self, worker_id: int) -> None:
        self.register(worker_id)
        try:
            while (task := self._take(worker_id)) is not None:
                index, mode, registered = task
                kernel = self._parallel_kernel if mode is DispatchMode.PARALLEL else self._sequential_kernel
                started = time.perf_counter_ns()
                try:
                    kernel(self.plan.packages[index], worker_id)
                except Exception as e:
                    logger.error(f"Worker {worker_id} failed on package {index}: {e}")
                    with self._cond:
                        self._error = e
                        self._done.set()
                        self._cond.notify_all()
                    return
                elapsed = time.perf_counter_ns() - started
                with self._cond:
                    self._running -= 1
                    self.trace.append(TraceRecord(worker_id=worker_id, mode=mode, package_index=index,
                                                  elapsed_ns=elapsed, registered=registered))
                    if mode is DispatchMode.PROBE:
                        self._probing = False
                        self._probes_done += 1
                    self._outstanding -= 1
                    if self._outstanding == 0:
                        self._done.set()
                    self._cond.notify_all()
        finally:
            with self._cond:
                self._registered.discard(worker_id)
                self._cond.notify_all()

    def wait(self) -> None:
        self._done.wait()
        if self._error is not None:
            raise SchedulingError(f"package execution failed: {self._error}") from self._error


def _run_inline(plan: ExecutionPlan, kernel: Kernel, mode: DispatchMode) -> list[TraceRecord]:
    trace = []
    for index, package in enumerate(plan.packages):
        started = time.perf_counter_ns()
        kernel(package, 0)
        trace.append(TraceRecord(worker_id=0, mode=mode, package_index=index,
                                 elapsed_ns=time.perf_counter_ns() - started, registered=1))
    return trace


def schedule_and_run(plan: ExecutionPlan, sequential_kernel: Kernel, parallel_kernel: Kernel,
                     pool: WorkerPool | None, config: SchedulerConfig | None = None) -> IterationResult:
    """Execute every package of the plan exactly once under the selective-sequential protocol."""
    started = time.perf_counter_ns()
    granted = 0
    if plan.bounds.parallel_profitable and pool is not None:
        dispatcher = PackageDispatcher(plan, sequential_kernel, parallel_kernel, config, selective=True)
        granted = pool.request(plan.bounds.t_max, dispatcher)
        if granted:
            dispatcher.wait()
            trace, peak = list(dispatcher.trace), dispatcher.peak_running
    if not granted:
        if plan.bounds.parallel_profitable:
            logger.debug("No workers granted, running the iteration inline")
        trace, peak = _run_inline(plan, sequential_kernel, DispatchMode.SEQUENTIAL), 1
    return IterationResult(trace=tuple(trace), elapsed_ns=time.perf_counter_ns() - started,
                           granted_workers=granted, peak_workers=peak)


def run_simple(plan: ExecutionPlan, parallel_kernel: Kernel, pool: WorkerPool | None) -> IterationResult:
    """Simple parallel execution: every granted worker runs packages with the parallel kernel."""
    started = time.perf_counter_ns()
    granted = 0
    if pool is not None:
        dispatcher = PackageDispatcher(plan, parallel_kernel, parallel_kernel, selective=False)
        granted = pool.request(plan.bounds.t_max, dispatcher)
        if granted:
            dispatcher.wait()
            trace, peak = list(dispatcher.trace), dispatcher.peak_running
    if not granted:
        trace, peak = _run_inline(plan, parallel_kernel, DispatchMode.PARALLEL), 1
    return IterationResult(trace=tuple(trace), elapsed_ns=time.perf_counter_ns() - started,
                           granted_workers=granted, peak_workers=peak)
