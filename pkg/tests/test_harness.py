from pathlib import Path

import numpy as np
import pandas as pd
import pytest

from conftest import FixedLatencyMachine
from graphgear.algorithms import ExecutionMode, Runtime, descriptor_for
from graphgear.config import PROFILE_PATH, CostModelConfig
from graphgear.errors import ProfileError
from graphgear.graph import RmatParams, generate_rmat, write_edge_list
from graphgear.harness import (CSV_COLUMNS, Algorithm, BenchmarkSpec, bfs_sources, build_runtime, load_dataset,
                               load_matrix, raw_frame, run_matrix, run_sessions, summary_frame, trace_frame)
from graphgear.scheduler import WorkerPool


def test_repetition_policy() -> None:
    assert BenchmarkSpec(algo="pr-push", mode="sequential", dataset="g", sessions=1).runs == 24
    assert BenchmarkSpec(algo="bfs", mode="sequential", dataset="g", sessions=4).runs == 200
    with pytest.raises(ValueError):
        BenchmarkSpec(algo="bfs", mode="sequential", dataset="g", sessions=0)


def test_bfs_sources_are_reachable_and_seeded(rmat_graph) -> None:
    first = bfs_sources(rmat_graph, 100, seed=4)
    np.testing.assert_array_equal(first, bfs_sources(rmat_graph, 100, seed=4))
    assert np.all(rmat_graph.in_degrees()[first] > 0)


def test_sessions_report_recomputable_throughput(rmat_graph) -> None:
    spec = BenchmarkSpec(algo=Algorithm.BFS, mode=ExecutionMode.SEQUENTIAL, dataset="rmat:10", sessions=2,
                         runs_per_session=3)
    report = run_sessions(spec, rmat_graph, Runtime())
    assert report.runs == 6
    raw = raw_frame(report)
    assert sorted(raw.groupby("session").size().tolist()) == [3, 3]
    expected = spec.sessions * raw["edges"].sum() / (raw["elapsed_ns"].sum() / 1e9)
    assert report.throughput_eps == pytest.approx(expected)
    assert report.mean_ms == pytest.approx(raw["elapsed_ns"].mean() / 1e6)


def test_pagerank_sessions_count_processed_edges(two_cycle) -> None:
    spec = BenchmarkSpec(algo="pr-pull", mode="sequential", dataset="cycle", sessions=1, runs_per_session=2)
    report = run_sessions(spec, two_cycle, Runtime())
    assert all(record.edges % two_cycle.edge_count == 0 for record in report.records)
    row = summary_frame([report]).iloc[0]
    assert list(summary_frame([report]).columns) == CSV_COLUMNS
    assert row["variant"] == "pull"
    assert row["runs"] == 2


def test_scheduler_sessions_need_machine(rmat_graph) -> None:
    spec = BenchmarkSpec(algo="bfs", mode="scheduler", dataset="rmat:10", runs_per_session=1)
    with pytest.raises(ProfileError):
        run_sessions(spec, rmat_graph, Runtime(cost_config=CostModelConfig(max_cores=1)))


def test_build_runtime_without_profile_fails(tmp_path) -> None:
    with pytest.raises(ProfileError, match="calibrate"):
        build_runtime(ExecutionMode.SCHEDULER, tmp_path / "missing.txt", threads=2)


def test_trace_rows_cover_every_package(rmat_graph) -> None:
    config = CostModelConfig(l_op_ns=1.0, t_overhead_ns=50.0, t_min_ns=500.0, para_startup_ns=200.0, max_cores=2)
    with WorkerPool(2) as pool:
        runtime = Runtime(pool=pool, machine=FixedLatencyMachine(), cost_config=config)
        spec = BenchmarkSpec(algo="bfs", mode="scheduler", dataset="rmat:10", runs_per_session=2)
        report = run_sessions(spec, rmat_graph, runtime, keep_iterations=True)
    trace = trace_frame(report)
    assert set(trace["run"]) == {0, 1}
    assert {"worker_id", "dispatch_mode", "package_index", "package_ns", "preparation_ns"} <= set(trace.columns)
    assert (trace["preparation_ns"] <= trace["iteration_ns"]).all()


def test_load_dataset_generates_rmat() -> None:
    graph = load_dataset("rmat:6:4:9")
    assert graph.vertex_count == 64
    assert graph.edge_count == 256


def test_matrix_sweep_marks_failed_cells(tmp_path) -> None:
    graph_path = tmp_path / "g.el"
    write_edge_list(generate_rmat(RmatParams(scale=6, edge_factor=4, seed=1)), graph_path)
    matrix_path = tmp_path / "matrix.env"
    matrix_path.write_text(
        "ALGOS=bfs,pr-push\n"
        "MODES=sequential\n"
        "SESSIONS=1,2\n"
        f"DATASETS={graph_path},{tmp_path / 'missing.el'}\n"
        "RUNS_PER_SESSION=1\n"
    )
    matrix = load_matrix(matrix_path)
    assert len(matrix.cells()) == 8
    frame = run_matrix(matrix, show_progress=False)
    assert len(frame) == 8
    assert list(frame.columns) == CSV_COLUMNS
    failed = frame[frame["error"] != ""]
    assert len(failed) == 4
    assert set(failed["dataset"]) == {str(tmp_path / "missing.el")}
    assert (frame.loc[frame["error"] == "", "runs"] > 0).all()
    assert not pd.isna(frame.loc[frame["error"] == "", "throughput_eps"]).any()


@pytest.mark.bench
def test_sequential_sessions_scale_throughput() -> None:
    graph = generate_rmat(RmatParams(scale=16, edge_factor=16, seed=2))
    reports = [run_sessions(BenchmarkSpec(algo="pr-pull", mode="sequential", dataset="rmat:16", sessions=sessions,
                                          runs_per_session=2), graph, Runtime())
               for sessions in (1, 2)]
    assert reports[1].throughput_eps == pytest.approx(2 * reports[0].throughput_eps, rel=0.3)


def test_build_runtime_applies_contention_environment(tmp_path, monkeypatch, latency_table) -> None:
    profile = tmp_path / "profile.txt"
    latency_table.save(profile)
    monkeypatch.setenv("GRAPHGEAR_LATENCY_EXPONENT", "2.0")
    monkeypatch.setenv("GRAPHGEAR_VERBATIM_SIGN", "true")
    runtime = build_runtime(ExecutionMode.SCHEDULER, profile, threads=2)
    try:
        assert runtime.machine.config.exponent == 2.0
        assert runtime.machine.config.verbatim_sign
    finally:
        runtime.pool.shutdown()


def test_build_runtime_loads_cost_config_and_descriptors(tmp_path, latency_table) -> None:
    profile = tmp_path / "profile.txt"
    latency_table.save(profile)
    cost = tmp_path / "cost.env"
    cost.write_text("T_MIN_NS=123456\n")
    descriptor = tmp_path / "bfs.desc"
    descriptor.write_text("EDGE_ATOMICS=3\n")
    runtime = build_runtime(ExecutionMode.SCHEDULER, profile, threads=2, cost_config_path=cost,
                            descriptor_paths={"bfs": str(descriptor)})
    try:
        assert runtime.cost_config.t_min_ns == 123456.0
        assert runtime.cost_config.max_cores == 2
        assert runtime.descriptor("bfs").edge.atomics == 3
        assert runtime.descriptor("pr-push") == descriptor_for("pr-push")
    finally:
        runtime.pool.shutdown()


def test_runtime_rejects_unknown_descriptor() -> None:
    with pytest.raises(ValueError):
        Runtime(descriptors={"dfs": descriptor_for("bfs")})


def test_matrix_reads_cost_config_and_descriptor_keys(tmp_path) -> None:
    matrix_path = tmp_path / "matrix.env"
    matrix_path.write_text("ALGOS=pr-push\nMODES=sequential\nDATASETS=rmat:6\n"
                           "COST_CONFIG=cost.env\nDESCRIPTOR_PR_PUSH=push.desc\n")
    matrix = load_matrix(matrix_path)
    assert matrix.cost_config == "cost.env"
    assert matrix.descriptors == {"pr-push": "push.desc"}


def _profile_or_skip() -> str:
    if not Path(PROFILE_PATH).is_file():
        pytest.skip("needs a calibrated machine profile")
    return PROFILE_PATH


@pytest.mark.bench
@pytest.mark.parametrize("scale", [12, 14, 16, 18])
def test_scheduler_throughput_keeps_up_with_fixed_modes(scale: int) -> None:
    profile = _profile_or_skip()
    graph = generate_rmat(RmatParams(scale=scale, edge_factor=16, seed=scale))
    runtimes = {mode: build_runtime(mode, profile) for mode in ExecutionMode}
    try:
        for algo in Algorithm:
            for sessions in (1, 4, 8):
                throughput = {
                    mode: run_sessions(BenchmarkSpec(algo=algo, mode=mode, dataset=f"rmat:{scale}",
                                                     sessions=sessions, runs_per_session=2),
                                       graph, runtime).throughput_eps
                    for mode, runtime in runtimes.items()
                }
                best_fixed = max(throughput[ExecutionMode.SEQUENTIAL], throughput[ExecutionMode.SIMPLE])
                assert throughput[ExecutionMode.SCHEDULER] >= 0.8 * best_fixed, (algo, sessions, throughput)
    finally:
        for runtime in runtimes.values():
            if runtime.pool is not None:
                runtime.pool.shutdown()


@pytest.mark.bench
def test_bfs_preparation_stays_below_a_quarter_of_iteration_time() -> None:
    runtime = build_runtime(ExecutionMode.SCHEDULER, _profile_or_skip())
    try:
        graph = generate_rmat(RmatParams(scale=16, edge_factor=16, seed=5))
        spec = BenchmarkSpec(algo="bfs", mode="scheduler", dataset="rmat:16", runs_per_session=3)
        report = run_sessions(spec, graph, runtime, keep_iterations=True)
    finally:
        runtime.pool.shutdown()
    iterations = trace_frame(report).drop_duplicates(["session", "run", "iteration"])
    assert iterations["preparation_ns"].sum() < 0.25 * iterations["iteration_ns"].sum()
    large = iterations[iterations["frontier_size"] >= 1024]
    assert (large["preparation_ns"] < 0.25 * large["iteration_ns"]).all()
