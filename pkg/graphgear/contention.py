"""
Atomic-update contention model.

The degree-count benchmark counts vertex-id occurrences of an RMAT edge list with
fetch-and-add on one shared counter array. Running it over a grid of counter-array sizes M
(one per cache level) and thread counts T yields the latency table L(M,T); predictions for
other sizes interpolate between the two enclosing levels on a log scale.
"""

import logging
import math
import os
import platform
import time
from concurrent.futures import ThreadPoolExecutor, wait
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
import psutil
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator
from tqdm import tqdm

from graphgear.atomics import AtomicArray, AtomicCounter
from graphgear.config import ContentionConfig, available_threads, read_key_values
from graphgear.errors import BenchmarkSkipped, HierarchyError, ProfileError
from graphgear.graph import RmatParams, required_scale, rmat_edges

logger = logging.getLogger(__name__)

PROFILE_VERSION = 1
PARTITION_EDGES = 16 * 1024
COUNTER_DTYPES = {1: np.uint8, 2: np.uint16, 4: np.uint32, 8: np.uint64}
MAX_BENCHMARK_EDGES = 1 << 21
_SIZE_SUFFIXES = {"K": 1 << 10, "M": 1 << 20, "G": 1 << 30, "T": 1 << 40}


class CacheLevel(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: str
    capacity: int = Field(gt=0)


class CacheHierarchy(BaseModel):
    """Memory levels ordered by capacity; the last level is main memory."""

    model_config = ConfigDict(frozen=True)

    levels: tuple[CacheLevel, ...]

    @model_validator(mode="after")
    def _strictly_increasing(self):
        if len(self.levels) < 2:
            raise ValueError("a hierarchy needs at least one cache level and main memory")
        capacities = [level.capacity for level in self.levels]
        if any(b <= a for a, b in zip(capacities, capacities[1:])):
            raise ValueError(f"level capacities must be strictly increasing: {capacities}")
        return self

    @property
    def main_capacity(self) -> int:
        return self.levels[-1].capacity

    @property
    def caches(self) -> tuple[CacheLevel, ...]:
        return self.levels[:-1]

    def calibration_sizes(self) -> list[int]:
        """One size per cache level at half its capacity, plus a main-memory size past the LLC."""
        sizes = [level.capacity // 2 for level in self.caches]
        sizes.append(min(self.caches[-1].capacity * 3 // 2, self.main_capacity))
        return sizes


class CounterArraySpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    width: int = 4
    vertex_count: int = Field(gt=0)

    @field_validator("width")
    @classmethod
    def _known_width(cls, width: int) -> int:
        if width not in COUNTER_DTYPES:
            raise ValueError(f"counter width must be one of {sorted(COUNTER_DTYPES)}, got {width}")
        return width

    @property
    def m_counters(self) -> int:
        return self.width * self.vertex_count

    @property
    def dtype(self):
        return COUNTER_DTYPES[self.width]


class DegreeCountResult(BaseModel):
    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    mean_update_ns: float
    elapsed_ns: int
    updates: int
    partitions: int
    threads: int
    counters: np.ndarray


def parse_size(text: str) -> int:
    text = text.strip().upper().removesuffix("B")
    if text and text[-1] in _SIZE_SUFFIXES:
        return int(float(text[:-1]) * _SIZE_SUFFIXES[text[-1]])
    return int(text)


def load_hierarchy(path: str | os.PathLike) -> CacheHierarchy:
    """Read `NAME=capacity` lines (e.g. L1=32K, L2=1M, L3=32M, MAIN=64G).

    MAIN may be omitted; installed memory is used then.
    """
    try:
        entries = read_key_values(path)
    except FileNotFoundError as e:
        raise HierarchyError(str(e)) from e
    if not entries:
        raise HierarchyError(f"No cache levels in {path}")
    main = entries.pop("MAIN", None)
    levels = sorted((CacheLevel(name=name, capacity=parse_size(value)) for name, value in entries.items()),
                    key=lambda level: level.capacity)
    levels.append(CacheLevel(name="MAIN", capacity=parse_size(main) if main else psutil.virtual_memory().total))
    try:
        return CacheHierarchy(levels=tuple(levels))
    except ValueError as e:
        raise HierarchyError(f"Invalid hierarchy in {path}: {e}") from e


def detect_hierarchy(sysfs: str = "/sys/devices/system/cpu/cpu0/cache") -> CacheHierarchy:
    """Best-effort detection from sysfs; falls back to a common desktop layout."""
    capacities: dict[int, int] = {}
    for index in sorted(Path(sysfs).glob("index*")):
        try:
            kind = (index / "type").read_text().strip()
            level = int((index / "level").read_text())
            size = parse_size((index / "size").read_text())
        except (OSError, ValueError):
            continue
        if kind in ("Data", "Unified"):
            capacities[level] = size
    if not capacities:
        logger.warning("Could not detect cache sizes, using 32K/1M/32M defaults")
        capacities = {1: 32 << 10, 2: 1 << 20, 3: 32 << 20}
    levels = [CacheLevel(name=f"L{level}", capacity=capacities[level]) for level in sorted(capacities)]
    levels.append(CacheLevel(name="MAIN", capacity=psutil.virtual_memory().total))
    return CacheHierarchy(levels=tuple(levels))


def thread_grid(max_threads: int) -> list[int]:
    """Total thread count successively halved down to one, ascending."""
    grid = set()
    t = max(1, max_threads)
    while t >= 1:
        grid.add(t)
        t //= 2
    return sorted(grid)


def degree_count_benchmark(sources: np.ndarray, targets: np.ndarray, threads: int, spec: CounterArraySpec,
                           partition_edges: int = PARTITION_EDGES) -> DegreeCountResult:
    """Count endpoint occurrences with fetch-and-add; returns the mean time per update."""
    if threads < 1 or threads > available_threads():
        raise ValueError(f"thread count {threads} outside [1, {available_threads()}]")
    edge_count = len(sources)
    partitions = math.ceil(edge_count / partition_edges)
    if partitions == 0:
        raise ValueError("degree count needs a non-empty edge list")
    if partitions < threads:
        raise BenchmarkSkipped(f"{partitions} partitions for {threads} threads")

    counters = AtomicArray(np.zeros(spec.vertex_count, dtype=spec.dtype))
    next_partition = AtomicCounter()

    def worker() -> None:
        while (part := next_partition.fetch_add(1)) < partitions:
            start = part * partition_edges
            end = min(start + partition_edges, edge_count)
            counters.fetch_add(sources[start:end])
            counters.fetch_add(targets[start:end])

    with ThreadPoolExecutor(max_workers=threads) as executor:
        started = time.perf_counter_ns()
        futures = [executor.submit(worker) for _ in range(threads)]
        wait(futures)
        elapsed = time.perf_counter_ns() - started
        for future in futures:
            future.result()
    updates = 2 * edge_count
    return DegreeCountResult(mean_update_ns=elapsed / updates, elapsed_ns=elapsed, updates=updates,
                             partitions=partitions, threads=threads, counters=counters.values)


class LatencyTable:
    """Calibrated L(M,T): rows are calibration sizes (ascending), columns thread counts."""

    def __init__(self, hierarchy: CacheHierarchy, sizes, threads, latencies, fingerprint: str = "",
                 counter_width: int = 4, overheads: dict[str, float] | None = None):
        self.hierarchy = hierarchy
        self.sizes = np.asarray(sizes, dtype=np.int64)
        self.threads = np.asarray(threads, dtype=np.int64)
        self.latencies = np.asarray(latencies, dtype=np.float64)
        self.fingerprint = fingerprint
        self.counter_width = counter_width
        self.overheads = dict(overheads or {})
        if self.latencies.shape != (len(self.sizes), len(self.threads)):
            raise ProfileError(f"latency grid shape {self.latencies.shape} does not match "
                               f"{len(self.sizes)} sizes x {len(self.threads)} thread counts")
        if 1 not in self.threads:
            raise ProfileError("latency table has no single-thread column")
        if np.any(self.latencies <= 0):
            raise ProfileError("latency table contains non-positive measurements")
        if np.any(np.diff(self.sizes) <= 0) or np.any(np.diff(self.threads) <= 0):
            raise ProfileError("latency table sizes and thread counts must be strictly increasing")

    def thread_column(self, threads: int) -> int:
        """Column of the smallest calibrated thread count >= threads."""
        column = int(np.searchsorted(self.threads, threads, side="left"))
        return min(column, len(self.threads) - 1)

    def measured(self, size: int, threads: int) -> float:
        row = int(np.searchsorted(self.sizes, size))
        if row >= len(self.sizes) or self.sizes[row] != size:
            raise KeyError(f"{size} is not a calibrated size")
        return float(self.latencies[row, self.thread_column(threads)])

    def relative_cost(self) -> np.ndarray:
        return self.latencies / self.latencies[:, [self.thread_column(1)]]

    def __eq__(self, other) -> bool:
        if not isinstance(other, LatencyTable):
            return NotImplemented
        return (self.hierarchy == other.hierarchy and np.array_equal(self.sizes, other.sizes)
                and np.array_equal(self.threads, other.threads)
                and np.allclose(self.latencies, other.latencies, rtol=0, atol=1e-9)
                and self.fingerprint == other.fingerprint)

    def save(self, path: str | os.PathLike) -> None:
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with open(path, "w", encoding="utf-8") as f:
                f.write("# graphgear machine profile\n")
                f.write(f"version {PROFILE_VERSION}\n")
                f.write(f"fingerprint {self.fingerprint}\n")
                f.write(f"counter_width {self.counter_width}\n")
                for level in self.hierarchy.levels:
                    f.write(f"level {level.name} {level.capacity}\n")
                for name, value in self.overheads.items():
                    f.write(f"overhead {name} {float(value)!r}\n")
                for i, size in enumerate(self.sizes):
                    for j, threads in enumerate(self.threads):
                        f.write(f"latency {int(size)} {int(threads)} {float(self.latencies[i, j])!r}\n")
        except OSError as e:
            logger.error(f"Failed to write machine profile {path}: {e}")
            raise ProfileError(f"cannot write machine profile {path}: {e}", path) from e
        logger.info(f"Saved machine profile to {path}")

    @classmethod
    def load(cls, path: str | os.PathLike) -> "LatencyTable":
        path = Path(path)
        if not path.is_file():
            raise ProfileError(f"machine profile {path} not found", path)
        levels, overheads, cells = [], {}, {}
        version, fingerprint, counter_width = None, "", 4
        try:
            with open(path, "r", encoding="utf-8") as f:
                for line_number, line in enumerate(f, start=1):
                    fields = line.split()
                    if not fields or fields[0].startswith("#"):
                        continue
                    match fields[0]:
                        case "version":
                            version = int(fields[1])
                        case "fingerprint":
                            fingerprint = " ".join(fields[1:])
                        case "counter_width":
                            counter_width = int(fields[1])
                        case "level":
                            levels.append(CacheLevel(name=fields[1], capacity=int(fields[2])))
                        case "overhead":
                            overheads[fields[1]] = float(fields[2])
                        case "latency":
                            cells[(int(fields[1]), int(fields[2]))] = float(fields[3])
                        case _:
                            raise ValueError(f"unknown record {fields[0]!r} on line {line_number}")
        except OSError as e:
            raise ProfileError(f"cannot read machine profile {path}: {e}", path) from e
        except (ValueError, IndexError) as e:
            raise ProfileError(f"malformed machine profile {path}: {e}", path) from e
        if version != PROFILE_VERSION:
            raise ProfileError(f"machine profile {path} has version {version}, expected {PROFILE_VERSION}", path)
        sizes = sorted({size for size, _ in cells})
        threads = sorted({t for _, t in cells})
        try:
            latencies = [[cells[(size, t)] for t in threads] for size in sizes]
        except KeyError as e:
            raise ProfileError(f"machine profile {path} is missing grid cell {e}", path) from e
        return cls(CacheHierarchy(levels=tuple(levels)), sizes, threads, latencies,
                   fingerprint=fingerprint, counter_width=counter_width, overheads=overheads)


def _fingerprint() -> str:
    return f"{platform.node() or 'unknown-host'} {datetime.now(timezone.utc).isoformat(timespec='seconds')}"


def _benchmark_edges(m_counters: int, width: int, max_threads: int, seed: int):
    vertex_count = max(1, m_counters // width)
    scale = required_scale(vertex_count)
    edge_count = min(max(PARTITION_EDGES * max_threads * 4, 8 * vertex_count), MAX_BENCHMARK_EDGES)
    edge_count = max(edge_count, PARTITION_EDGES * max_threads)
    params = RmatParams(scale=scale, edge_factor=edge_count / 2 ** scale, seed=seed)
    sources, targets = rmat_edges(params)
    # fold ids so the counter array is exactly M bytes while keeping the skew
    return sources % vertex_count, targets % vertex_count, vertex_count


def _noop() -> None:
    return None


def measure_thread_overheads(threads: int, samples: int = 200) -> dict[str, float]:
    """Pool start-up cost and per-thread dispatch cost, in ns."""
    started = time.perf_counter_ns()
    with ThreadPoolExecutor(max_workers=threads) as executor:
        wait([executor.submit(_noop) for _ in range(threads)])
        startup = time.perf_counter_ns() - started
        dispatch = []
        for _ in range(samples):
            t0 = time.perf_counter_ns()
            executor.submit(_noop).result()
            dispatch.append(time.perf_counter_ns() - t0)
    return {"t_overhead_ns": float(np.median(dispatch)), "para_startup_ns": float(startup)}


def calibrate(hierarchy: CacheHierarchy | None, threads: list[int] | None = None,
              profile_path: str | os.PathLike | None = None, counter_width: int = 4,
              repetitions: int = 3, seed: int = 42, force: bool = False) -> LatencyTable:
    """Measure L(M,T) once and memoize it in the machine-profile file."""
    if profile_path is not None and Path(profile_path).is_file() and not force:
        logger.info(f"Using memoized machine profile {profile_path}")
        return LatencyTable.load(profile_path)
    if hierarchy is None:
        raise HierarchyError("calibration needs a cache hierarchy")
    threads = sorted(set(threads or thread_grid(available_threads())) | {1})
    sizes = hierarchy.calibration_sizes()
    logger.info(f"Calibrating {len(sizes)} sizes x {len(threads)} thread counts "
                f"(counter width {counter_width} bytes)")
    latencies = np.zeros((len(sizes), len(threads)))
    actual_sizes = []
    with tqdm(total=len(sizes) * len(threads), desc="degree count", disable=None) as progress:
        for i, size in enumerate(sizes):
            sources, targets, vertex_count = _benchmark_edges(size, counter_width, max(threads), seed + i)
            spec = CounterArraySpec(width=counter_width, vertex_count=vertex_count)
            actual_sizes.append(spec.m_counters)
            for j, t in enumerate(threads):
                runs = [degree_count_benchmark(sources, targets, t, spec).mean_update_ns
                        for _ in range(repetitions)]
                latencies[i, j] = float(np.median(runs))
                progress.update(1)
            row = ", ".join(f"T={t}: {latencies[i, j]:.1f}ns" for j, t in enumerate(threads))
            logger.info(f"M={spec.m_counters} bytes: {row}")
    table = LatencyTable(hierarchy, actual_sizes, threads, latencies, fingerprint=_fingerprint(),
                         counter_width=counter_width, overheads=measure_thread_overheads(max(threads)))
    for size, relative in zip(table.sizes, table.relative_cost()):
        logger.info(f"Relative atomic cost at M={size}: " + " ".join(f"{r:.2f}" for r in relative))
    if profile_path is not None:
        table.save(profile_path)
    return table


def predict_latency(table: LatencyTable, size: float, threads: int,
                    config: ContentionConfig | None = None) -> float:
    """Predicted update latency (ns) for touched memory `size` bytes and `threads` threads."""
    config = config or ContentionConfig()
    if size > table.hierarchy.main_capacity:
        raise HierarchyError(f"memory footprint {size} exceeds main memory ({table.hierarchy.main_capacity})")
    if threads < 1:
        raise ValueError(f"thread count must be >= 1, got {threads}")
    column = table.latencies[:, table.thread_column(threads)]
    knots = table.sizes
    lower = int(np.searchsorted(knots, size, side="right"))  # first knot strictly larger than size
    if lower >= len(knots):
        return float(column[-1])
    if lower == 0:
        return float(column[0])
    upper = lower - 1
    s = (math.log(knots[lower]) - math.log(size)) / (math.log(knots[lower]) - math.log(knots[upper]))
    delta = column[upper] - column[lower]
    shift = delta * s ** config.exponent
    return float(column[lower] - shift if config.verbatim_sign else column[lower] + shift)


def mem_latency(table: LatencyTable, size: float, config: ContentionConfig | None = None) -> float:
    return predict_latency(table, size, 1, config)


class MachineModel:
    """Latency source for the cost model backed by a calibrated table."""

    def __init__(self, table: LatencyTable, config: ContentionConfig | None = None):
        self.table = table
        self.config = config or ContentionConfig()

    @classmethod
    def from_profile(cls, path: str | os.PathLike, config: ContentionConfig | None = None) -> "MachineModel":
        return cls(LatencyTable.load(path), config)

    def mem_latency(self, size: float) -> float:
        return mem_latency(self.table, size, self.config)

    def atomic_latency(self, threads: int, size: float) -> float:
        return predict_latency(self.table, size, threads, self.config)
