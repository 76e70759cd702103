import numpy as np
import pytest

from conftest import FixedLatencyMachine, ScriptedPool
from graphgear.algorithms import UNSET, ExecutionMode, Runtime, bfs, descriptor_for, pagerank
from graphgear.config import CostModelConfig, PageRankConfig, SchedulerConfig
from graphgear.cost_model import ItemKind
from graphgear.errors import ProfileError
from graphgear.graph import Graph, RmatParams, generate_rmat
from graphgear.scheduler import WorkerPool

MODES = [ExecutionMode.SEQUENTIAL, ExecutionMode.SIMPLE, ExecutionMode.SCHEDULER]


@pytest.fixture(scope="module")
def pool():
    with WorkerPool(4) as shared:
        yield shared


@pytest.fixture
def runtime(pool) -> Runtime:
    config = CostModelConfig(l_op_ns=1.0, t_overhead_ns=50.0, t_min_ns=500.0, para_startup_ns=200.0, max_cores=4)
    return Runtime(pool=pool, machine=FixedLatencyMachine(mem_ns=5.0, atomic_ns=8.0, atomic_growth=1.0),
                   cost_config=config, scheduler_config=SchedulerConfig(min_package_vertices=8))


def test_bfs_on_path(path_graph) -> None:
    assert bfs(path_graph, 0).levels.tolist() == [0, 1, 2]


def test_bfs_from_sink_reaches_only_source(path_graph) -> None:
    assert bfs(path_graph, 2).levels.tolist() == [UNSET, UNSET, 0]


def test_bfs_rejects_unknown_source(path_graph) -> None:
    with pytest.raises(IndexError):
        bfs(path_graph, 3)


@pytest.mark.parametrize("mode", MODES)
def test_bfs_modes_match_sequential_on_rmat(mode, runtime) -> None:
    graph = generate_rmat(RmatParams(scale=12, edge_factor=8, seed=1))
    source = int(np.argmax(graph.out_degrees()))
    expected = bfs(graph, source)
    result = bfs(graph, source, mode, runtime)
    np.testing.assert_array_equal(result.levels, expected.levels)
    assert result.traversed_edges == expected.traversed_edges


def test_bfs_modes_agree_and_respect_edges_on_random_graphs(runtime) -> None:
    rng = np.random.default_rng(8)
    for trial in range(50):
        graph = generate_rmat(RmatParams(scale=int(rng.integers(8, 11)), edge_factor=4, seed=trial))
        source = int(rng.integers(0, graph.vertex_count))
        levels = [bfs(graph, source, mode, runtime).levels for mode in MODES]
        np.testing.assert_array_equal(levels[0], levels[1])
        np.testing.assert_array_equal(levels[0], levels[2])
        sources, targets = graph.edges()
        reached = (levels[0][sources] != UNSET) & (levels[0][targets] != UNSET)
        assert np.all(levels[0][targets][reached] <= levels[0][sources][reached] + 1)
        # every edge out of a reached vertex reaches its target
        assert np.all(levels[0][targets][levels[0][sources] != UNSET] != UNSET)


def test_bfs_scheduler_reports_preparation(runtime, rmat_graph) -> None:
    result = bfs(rmat_graph, 0, ExecutionMode.SCHEDULER, runtime)
    assert result.iterations
    for report in result.iterations:
        assert report.bounds is not None
        assert 0 <= report.preparation_ns <= report.elapsed_ns
        assert report.found_estimate is not None


def test_bfs_with_too_few_workers_is_still_correct(rmat_graph) -> None:
    config = CostModelConfig(l_op_ns=1.0, t_overhead_ns=50.0, t_min_ns=500.0, para_startup_ns=200.0, max_cores=4)
    scripted = Runtime(pool=ScriptedPool(grant=1, max_workers=4), machine=FixedLatencyMachine(),
                       cost_config=config, scheduler_config=SchedulerConfig(min_package_vertices=1))
    result = bfs(rmat_graph, 0, ExecutionMode.SCHEDULER, scripted)
    scripted.pool.shutdown()
    np.testing.assert_array_equal(result.levels, bfs(rmat_graph, 0).levels)


def test_scheduler_mode_needs_machine_profile(path_graph) -> None:
    with pytest.raises(ProfileError):
        bfs(path_graph, 0, ExecutionMode.SCHEDULER, Runtime(cost_config=CostModelConfig(max_cores=1)))


@pytest.mark.parametrize("variant", ["push", "pull"])
def test_pagerank_two_cycle_is_uniform(two_cycle, variant: str) -> None:
    result = pagerank(two_cycle, variant)
    np.testing.assert_allclose(result.ranks, [0.5, 0.5])


def test_pagerank_single_vertex_keeps_all_mass() -> None:
    graph = Graph.from_edges([], [], vertex_count=1)
    result = pagerank(graph, "push")
    np.testing.assert_allclose(result.ranks, [1.0])


def test_pagerank_rejects_invalid_damping() -> None:
    with pytest.raises(ValueError):
        PageRankConfig(damping=1.0)
    with pytest.raises(ValueError):
        PageRankConfig(damping=0.0)


@pytest.mark.parametrize("mode", MODES)
def test_pagerank_variants_agree(mode, runtime, rmat_graph) -> None:
    reference = pagerank(rmat_graph, "pull")
    for variant in ("push", "pull"):
        result = pagerank(rmat_graph, variant, mode, runtime=runtime)
        assert np.max(np.abs(result.ranks - reference.ranks)) <= 1e-6
        assert result.processed_edges == rmat_graph.edge_count * result.iterations


def test_pagerank_rank_sum_is_preserved(star_graph, runtime) -> None:
    graph = Graph.from_edges([0, 0, 1, 3], [1, 2, 2, 0], vertex_count=5)
    for g in (graph, star_graph):
        for variant in ("push", "pull"):
            result = pagerank(g, variant, ExecutionMode.SIMPLE, runtime=runtime)
            assert all(abs(total - 1.0) <= 1e-9 for total in result.rank_sums)


def test_pagerank_stops_at_max_iterations(rmat_graph) -> None:
    result = pagerank(rmat_graph, "push", config=PageRankConfig(epsilon=1e-30, max_iterations=3))
    assert result.iterations == 3
    assert len(result.rank_sums) == 3


def test_descriptors() -> None:
    pull = descriptor_for("pr-pull")
    assert all(pull.counts(kind).atomics == 0 for kind in ItemKind)
    assert descriptor_for("pr-push").edge.atomics >= 1
    assert descriptor_for("bfs").found_vertex.mem >= 1
    with pytest.raises(ValueError):
        descriptor_for("sssp")
