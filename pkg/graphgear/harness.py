"""
Concurrent-session benchmark harness.

Sessions are threads sharing one immutable graph and one worker pool. Each session runs its
share of full algorithm executions; every run is timed from the setup of its supporting
structures until its result is available. Graph construction is outside the measurement.
"""

import logging
import os
import time
from enum import Enum
from pathlib import Path
from threading import Thread

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field
from tqdm import tqdm

from graphgear.algorithms import (BfsResult, ExecutionMode, IterationReport, PageRankResult, Runtime, bfs,
                                  descriptor_for, pagerank)
from graphgear.config import (PROFILE_PATH, PageRankConfig, contention_config_from_env, default_pool_size,
                              load_cost_config, read_key_values)
from graphgear.contention import MachineModel
from graphgear.cost_model import AlgorithmDescriptor, load_descriptor
from graphgear.graph import Graph, RmatParams, generate_rmat, load_edge_list
from graphgear.scheduler import WorkerPool

logger = logging.getLogger(__name__)

PR_RUNS_PER_SESSION = 24
BFS_RUNS_PER_SESSION = 50
CSV_COLUMNS = ["algo", "variant", "mode", "dataset", "sessions", "runs", "mean_ms", "throughput_eps", "error"]


class Algorithm(str, Enum):
    BFS = "bfs"
    PR_PUSH = "pr-push"
    PR_PULL = "pr-pull"

    @property
    def variant(self) -> str:
        return {"bfs": "top-down", "pr-push": "push", "pr-pull": "pull"}[self.value]


class BenchmarkSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    algo: Algorithm
    mode: ExecutionMode
    dataset: str
    sessions: int = Field(1, ge=1)
    seed: int = 0
    runs_per_session: int | None = Field(None, ge=1)
    pagerank: PageRankConfig = PageRankConfig()

    @property
    def runs(self) -> int:
        per_session = self.runs_per_session or (
            BFS_RUNS_PER_SESSION if self.algo is Algorithm.BFS else PR_RUNS_PER_SESSION)
        return per_session * self.sessions


class RunRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    session: int
    run: int
    elapsed_ns: int
    edges: int
    source: int | None = None
    iterations: tuple[IterationReport, ...] = ()


class SessionReport(BaseModel):
    model_config = ConfigDict(frozen=True)

    spec: BenchmarkSpec
    records: tuple[RunRecord, ...]

    @property
    def runs(self) -> int:
        return len(self.records)

    @property
    def mean_ms(self) -> float:
        return float(np.mean([r.elapsed_ns for r in self.records])) / 1e6

    @property
    def throughput_eps(self) -> float:
        """Edges per second summed over concurrent sessions."""
        total_ns = sum(r.elapsed_ns for r in self.records)
        if total_ns == 0:
            return 0.0
        return self.spec.sessions * sum(r.edges for r in self.records) / (total_ns / 1e9)

    def to_row(self) -> dict:
        return {
            "algo": self.spec.algo.value, "variant": self.spec.algo.variant, "mode": self.spec.mode.value,
            "dataset": self.spec.dataset, "sessions": self.spec.sessions, "runs": self.runs,
            "mean_ms": self.mean_ms, "throughput_eps": self.throughput_eps, "error": "",
        }


def load_dataset(reference: str) -> Graph:
    """An edge-list path, or `rmat:SCALE[:EDGE_FACTOR[:SEED]]` for a generated graph."""
    if reference.startswith("rmat:"):
        fields = reference.split(":")[1:]
        params = RmatParams(scale=int(fields[0]),
                            edge_factor=float(fields[1]) if len(fields) > 1 else 16.0,
                            seed=int(fields[2]) if len(fields) > 2 else 0)
        return generate_rmat(params)
    return load_edge_list(reference)


def load_descriptors(paths: dict[str, str] | None) -> dict[str, AlgorithmDescriptor]:
    """Descriptor files keyed by algorithm (`bfs`, `pr-push`, `pr-pull`), layered over the built-in counts."""
    return {algo: load_descriptor(path, descriptor_for(algo)) for algo, path in (paths or {}).items()}


def build_runtime(mode: ExecutionMode, profile_path: str | os.PathLike | None = None,
                  threads: int | None = None, cost_config_path: str | os.PathLike | None = None,
                  descriptor_paths: dict[str, str] | None = None) -> Runtime:
    """Worker pool for the parallel modes plus the machine model scheduler mode needs."""
    descriptors = load_descriptors(descriptor_paths)
    if mode is ExecutionMode.SEQUENTIAL:
        return Runtime(descriptors=descriptors)
    machine = None
    if mode is ExecutionMode.SCHEDULER:
        machine = MachineModel.from_profile(profile_path or PROFILE_PATH, contention_config_from_env())
    runtime = Runtime(pool=WorkerPool(threads or default_pool_size()), machine=machine, descriptors=descriptors)
    if cost_config_path:
        runtime.cost_config = load_cost_config(cost_config_path, runtime.cost_config)
    return runtime


def bfs_sources(graph: Graph, count: int, seed: int) -> np.ndarray:
    """Start vertices drawn uniformly from the reachable vertices."""
    candidates = np.flatnonzero(graph.in_degrees())
    if candidates.size == 0:
        candidates = np.arange(graph.vertex_count)
    return np.random.default_rng(seed).choice(candidates, size=count)


class SessionClient(Thread):
    """One concurrent session executing its runs back to back."""

    def __init__(self, session: int, spec: BenchmarkSpec, graph: Graph, runtime: Runtime, sources,
                 keep_iterations: bool = False, progress: tqdm | None = None):
        Thread.__init__(self, name=f"graphgear-session-{session}")
        self.session = session
        self.spec = spec
        self.graph = graph
        self.runtime = runtime
        self.sources = sources
        self.keep_iterations = keep_iterations
        self.progress = progress
        self.records: list[RunRecord] = []
        self.error: BaseException | None = None

    def _execute(self, source) -> tuple[int, int, tuple[IterationReport, ...]]:
        started = time.perf_counter_ns()
        if self.spec.algo is Algorithm.BFS:
            result: BfsResult = bfs(self.graph, int(source), self.spec.mode, self.runtime)
            elapsed = time.perf_counter_ns() - started
            return elapsed, result.traversed_edges, result.iterations
        result: PageRankResult = pagerank(self.graph, self.spec.algo.variant, self.spec.mode,
                                          self.spec.pagerank, self.runtime)
        elapsed = time.perf_counter_ns() - started
        return elapsed, result.processed_edges, result.reports

    def run(self) -> None:
        try:
            for run, source in enumerate(self.sources):
                elapsed, edges, iterations = self._execute(source)
                self.records.append(RunRecord(
                    session=self.session, run=run, elapsed_ns=elapsed, edges=edges,
                    source=int(source) if source is not None else None,
                    iterations=iterations if self.keep_iterations else (),
                ))
                if self.progress is not None:
                    self.progress.update(1)
        except Exception as e:
            logger.error(f"Session {self.session} failed: {e}")
            self.error = e


def run_sessions(spec: BenchmarkSpec, graph: Graph, runtime: Runtime, keep_iterations: bool = False,
                 show_progress: bool = False) -> SessionReport:
    if spec.mode is ExecutionMode.SCHEDULER:
        runtime.require_machine()
    per_session = spec.runs // spec.sessions
    if spec.algo is Algorithm.BFS:
        sources = bfs_sources(graph, spec.runs, spec.seed).reshape(spec.sessions, per_session)
    else:
        sources = [[None] * per_session for _ in range(spec.sessions)]
    logger.info(f"Running {spec.algo.value} ({spec.mode.value}) on {spec.dataset}: "
                f"{spec.sessions} sessions x {per_session} runs")
    with tqdm(total=spec.runs, desc=f"{spec.algo.value}/{spec.mode.value}", disable=not show_progress) as progress:
        clients = [SessionClient(session, spec, graph, runtime, sources[session], keep_iterations, progress)
                   for session in range(spec.sessions)]
        for client in clients:
            client.start()
        for client in clients:
            client.join()
    for client in clients:
        if client.error is not None:
            raise client.error
    records = tuple(record for client in clients for record in client.records)
    report = SessionReport(spec=spec, records=records)
    logger.info(f"Finished {spec.algo.value} ({spec.mode.value}): {report.runs} runs, "
                f"mean {report.mean_ms:.3f} ms, {report.throughput_eps:.4g} edges/s")
    return report


def raw_frame(report: SessionReport) -> pd.DataFrame:
    return pd.DataFrame([{"session": r.session, "run": r.run, "source": r.source,
                          "elapsed_ns": r.elapsed_ns, "edges": r.edges} for r in report.records])


def trace_frame(report: SessionReport) -> pd.DataFrame:
    """One row per dispatched package, with the preparation and elapsed time of its iteration."""
    rows = []
    for record in report.records:
        for iteration in record.iterations:
            base = {"session": record.session, "run": record.run, "iteration": iteration.index,
                    "frontier_size": iteration.frontier_size, "preparation_ns": iteration.preparation_ns,
                    "iteration_ns": iteration.elapsed_ns,
                    "t_min": iteration.bounds.t_min if iteration.bounds else None,
                    "t_max": iteration.bounds.t_max if iteration.bounds else None,
                    "packaging": iteration.packaging.value if iteration.packaging else None}
            dispatch = iteration.dispatch.trace if iteration.dispatch else ()
            if not dispatch:
                rows.append({**base, "worker_id": None, "dispatch_mode": "sequential",
                             "package_index": None, "package_ns": None})
            for entry in dispatch:
                rows.append({**base, "worker_id": entry.worker_id, "dispatch_mode": entry.mode.value,
                             "package_index": entry.package_index, "package_ns": entry.elapsed_ns})
    return pd.DataFrame(rows)


def write_csv(frame: pd.DataFrame, path: str | os.PathLike) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    logger.info(f"Wrote {len(frame)} rows to {path}")


def summary_frame(reports: list[SessionReport]) -> pd.DataFrame:
    return pd.DataFrame([report.to_row() for report in reports], columns=CSV_COLUMNS)


class BenchmarkMatrix(BaseModel):
    """Sweep definition read from a KEY=value file.

    Keys: ALGOS, MODES, SESSIONS and DATASETS (comma-separated), SEED, RUNS_PER_SESSION,
    THREADS, PROFILE, CSV, COST_CONFIG and DESCRIPTOR_BFS / DESCRIPTOR_PR_PUSH / DESCRIPTOR_PR_PULL.
    """

    model_config = ConfigDict(frozen=True)

    algos: tuple[Algorithm, ...]
    modes: tuple[ExecutionMode, ...]
    sessions: tuple[int, ...] = (1,)
    datasets: tuple[str, ...] = Field(min_length=1)
    seed: int = 0
    runs_per_session: int | None = None
    threads: int | None = None
    profile: str | None = None
    csv: str | None = None
    cost_config: str | None = None
    descriptors: dict[str, str] = {}

    def cells(self) -> list[BenchmarkSpec]:
        return [BenchmarkSpec(algo=algo, mode=mode, dataset=dataset, sessions=sessions, seed=self.seed,
                              runs_per_session=self.runs_per_session)
                for dataset in self.datasets for algo in self.algos
                for mode in self.modes for sessions in self.sessions]


def _split(value: str) -> tuple[str, ...]:
    return tuple(item.strip() for item in value.split(",") if item.strip())


def load_matrix(path: str | os.PathLike) -> BenchmarkMatrix:
    values = read_key_values(path)
    fields = {
        "algos": _split(values.get("ALGOS", "bfs,pr-push,pr-pull")),
        "modes": _split(values.get("MODES", "sequential,simple,scheduler")),
        "sessions": tuple(int(s) for s in _split(values.get("SESSIONS", "1"))),
        "datasets": _split(values.get("DATASETS", "")),
        "seed": int(values.get("SEED", 0)),
    }
    for key in ("RUNS_PER_SESSION", "THREADS"):
        if values.get(key):
            fields[key.lower()] = int(values[key])
    for key in ("PROFILE", "CSV", "COST_CONFIG"):
        if values.get(key):
            fields[key.lower()] = values[key]
    fields["descriptors"] = {algo.value: values[f"DESCRIPTOR_{algo.name}"] for algo in Algorithm
                             if values.get(f"DESCRIPTOR_{algo.name}")}
    return BenchmarkMatrix(**fields)


def run_matrix(matrix: BenchmarkMatrix, show_progress: bool = True) -> pd.DataFrame:
    """Run every sweep cell; a failing cell becomes a row carrying its error message."""
    rows = []
    graphs: dict[str, Graph] = {}
    runtimes: dict[ExecutionMode, Runtime] = {}
    try:
        for spec in tqdm(matrix.cells(), desc="sweep", disable=not show_progress):
            try:
                if spec.dataset not in graphs:
                    graphs[spec.dataset] = load_dataset(spec.dataset)
                if spec.mode not in runtimes:
                    runtimes[spec.mode] = build_runtime(spec.mode, matrix.profile, matrix.threads,
                                                        matrix.cost_config, matrix.descriptors)
                rows.append(run_sessions(spec, graphs[spec.dataset], runtimes[spec.mode]).to_row())
            except Exception as e:
                logger.warning(f"Sweep cell {spec.algo.value}/{spec.mode.value}/{spec.dataset}/"
                               f"{spec.sessions} failed: {e}")
                rows.append({"algo": spec.algo.value, "variant": spec.algo.variant, "mode": spec.mode.value,
                             "dataset": spec.dataset, "sessions": spec.sessions, "runs": 0,
                             "mean_ms": float("nan"), "throughput_eps": float("nan"), "error": str(e)})
    finally:
        for runtime in runtimes.values():
            if runtime.pool is not None:
                runtime.pool.shutdown()
    return pd.DataFrame(rows, columns=CSV_COLUMNS)
