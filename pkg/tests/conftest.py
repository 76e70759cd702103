import threading

import numpy as np
import pytest

from graphgear.config import CostModelConfig
from graphgear.contention import CacheHierarchy, CacheLevel, LatencyTable
from graphgear.graph import Graph, RmatParams, generate_rmat


class FixedLatencyMachine:
    """Latency source with constant memory latency and linearly growing atomic latency."""

    def __init__(self, mem_ns: float = 2.0, atomic_ns: float = 4.0, atomic_growth: float = 0.0):
        self.mem_ns = mem_ns
        self.atomic_ns = atomic_ns
        self.atomic_growth = atomic_growth

    def mem_latency(self, size: float) -> float:
        return self.mem_ns

    def atomic_latency(self, threads: int, size: float) -> float:
        return self.atomic_ns + self.atomic_growth * (threads - 1)


class ScriptedPool:
    """Grants a fixed number of workers; all of them register before any starts serving."""

    def __init__(self, grant: int, max_workers: int | None = None):
        self.grant = grant
        self.max_workers = max_workers or max(grant, 1)
        self.requests: list[int] = []
        self._threads: list[threading.Thread] = []

    def request(self, count: int, dispatcher) -> int:
        self.requests.append(count)
        granted = min(count, self.grant)
        for worker_id in range(granted):
            dispatcher.register(worker_id)
        for worker_id in range(granted):
            thread = threading.Thread(target=dispatcher.serve, args=(worker_id,))
            thread.start()
            self._threads.append(thread)
        return granted

    def shutdown(self) -> None:
        for thread in self._threads:
            thread.join()


@pytest.fixture
def path_graph() -> Graph:
    return Graph.from_edges([0, 1], [1, 2])


@pytest.fixture
def two_cycle() -> Graph:
    return Graph.from_edges([0, 1], [1, 0])


@pytest.fixture
def star_graph() -> Graph:
    """Hub 0 with 40 leaves, leaves chained back to the hub: highly skewed degrees."""
    leaves = np.arange(1, 41)
    sources = np.concatenate([np.zeros(40, dtype=np.int64), leaves])
    targets = np.concatenate([leaves, np.zeros(40, dtype=np.int64)])
    return Graph.from_edges(sources, targets)


@pytest.fixture
def rmat_graph() -> Graph:
    return generate_rmat(RmatParams(scale=10, edge_factor=8, seed=3))


@pytest.fixture
def machine() -> FixedLatencyMachine:
    return FixedLatencyMachine()


@pytest.fixture
def cost_config() -> CostModelConfig:
    return CostModelConfig(l_op_ns=1.0, t_overhead_ns=100.0, t_min_ns=1_000.0, para_startup_ns=500.0, max_cores=8)


@pytest.fixture
def hierarchy() -> CacheHierarchy:
    return CacheHierarchy(levels=(
        CacheLevel(name="L1", capacity=32 * 1024),
        CacheLevel(name="L2", capacity=1024 * 1024),
        CacheLevel(name="L3", capacity=32 * 1024 * 1024),
        CacheLevel(name="MAIN", capacity=64 * 1024 ** 3),
    ))


@pytest.fixture
def latency_table(hierarchy) -> LatencyTable:
    sizes = hierarchy.calibration_sizes()
    threads = [1, 2, 4, 8]
    latencies = [
        [4.0, 9.0, 20.0, 45.0],
        [5.0, 7.0, 11.0, 18.0],
        [8.0, 9.0, 10.0, 12.0],
        [20.0, 21.0, 22.0, 23.0],
    ]
    return LatencyTable(hierarchy, sizes, threads, latencies, fingerprint="test-host 2024-01-01T00:00:00+00:00",
                        counter_width=4, overheads={"t_overhead_ns": 2000.0, "para_startup_ns": 9000.0})
