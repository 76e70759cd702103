import threading

import numpy as np
import pytest

from graphgear.atomics import AtomicArray, AtomicCounter
from graphgear.config import (CostModelConfig, SchedulerConfig, contention_config_from_env, cost_config_from_env,
                              load_cost_config, read_key_values, scheduler_config_from_env)


def test_cost_config_requires_min_work_above_overhead() -> None:
    with pytest.raises(ValueError):
        CostModelConfig(t_overhead_ns=1000.0, t_min_ns=1000.0)


def test_scheduler_config_requires_positive_limit() -> None:
    with pytest.raises(ValueError):
        SchedulerConfig(sequential_package_limit=0)


def test_measured_overheads_and_environment_precedence(monkeypatch) -> None:
    monkeypatch.delenv("GRAPHGEAR_T_OVERHEAD_NS", raising=False)
    monkeypatch.delenv("GRAPHGEAR_T_MIN_NS", raising=False)
    config = cost_config_from_env({"t_overhead_ns": 3000.0, "para_startup_ns": 7000.0}, max_cores=4)
    assert config.t_min_ns == 30_000.0
    assert config.para_startup_ns == 7000.0
    monkeypatch.setenv("GRAPHGEAR_T_MIN_NS", "90000")
    assert cost_config_from_env({"t_overhead_ns": 3000.0}, max_cores=4).t_min_ns == 90_000.0


def test_scheduler_and_contention_from_environment(monkeypatch) -> None:
    monkeypatch.setenv("GRAPHGEAR_SEQ_PACKAGE_LIMIT", "2")
    monkeypatch.setenv("GRAPHGEAR_VERBATIM_SIGN", "true")
    assert scheduler_config_from_env().sequential_package_limit == 2
    assert contention_config_from_env().verbatim_sign


def test_key_value_files(tmp_path) -> None:
    path = tmp_path / "cost.env"
    path.write_text("# measured on the build box\nGRAPHGEAR_T_OVERHEAD_NS=2000\nl_op_ns=0.5\n")
    assert read_key_values(path)["L_OP_NS"] == "0.5"
    config = load_cost_config(path, CostModelConfig(max_cores=2))
    assert config.t_overhead_ns == 2000.0
    assert config.l_op_ns == 0.5
    assert config.max_cores == 2
    with pytest.raises(FileNotFoundError):
        read_key_values(tmp_path / "absent.env")


def test_atomic_counter_hands_out_distinct_values() -> None:
    counter = AtomicCounter()
    seen: list[int] = []

    def take() -> None:
        for _ in range(1000):
            seen.append(counter.fetch_add(1))

    threads = [threading.Thread(target=take) for _ in range(4)]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()
    assert sorted(seen) == list(range(4000))
    assert counter.load() == 4000


def test_atomic_array_fetch_add_accumulates_duplicates() -> None:
    array = AtomicArray.zeros(10)
    indices = np.array([1, 1, 3, 9, 9, 9])

    def add() -> None:
        array.fetch_add(indices)

    threads = [threading.Thread(target=add) for _ in range(8)]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()
    assert array.values.tolist() == [0, 16, 0, 8, 0, 0, 0, 0, 0, 24]


def test_compare_and_set_claims_each_index_once() -> None:
    flags = AtomicArray(np.zeros(100, dtype=np.uint8))
    claims: list[np.ndarray] = []

    def claim() -> None:
        claims.append(flags.compare_and_set(np.arange(100), 0, 1))

    threads = [threading.Thread(target=claim) for _ in range(4)]
    for thread in threads:
        thread.start()
    for thread in threads:
        thread.join()
    claimed = np.concatenate(claims)
    assert sorted(claimed.tolist()) == list(range(100))
    assert flags.compare_and_set(np.array([5, 5]), 0, 1).size == 0


def test_atomic_counter_starts_from_initial_value() -> None:
    counter = AtomicCounter(5)
    assert counter.fetch_add(-2) == 5
    assert counter.load() == 3
