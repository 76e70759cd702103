"""
Atomic primitives for the parallel kernels.

AtomicCounter is a hardware fetch-and-add integer from the `atomics` package. AtomicArray
applies bulk numpy updates, which have no lock-free counterpart, under locks striped by
cache line: updates to the same line serialize and updates to distinct lines proceed under
different locks, so contention follows the touched memory and the number of threads.
"""

import threading

import atomics
import numpy as np

CACHE_LINE_BYTES = 64


class AtomicCounter:
    """Atomic integer with fetch-and-add."""

    __slots__ = ("_value",)

    def __init__(self, initial: int = 0) -> None:
        self._value = atomics.atomic(width=8, atype=atomics.INT)
        self._value.store(initial)

    def load(self) -> int:
        return self._value.load()

    def fetch_add(self, delta: int = 1) -> int:
        """Add delta and return the previous value."""
        return self._value.fetch_add(delta)


class AtomicArray:
    """A numpy array whose bulk updates are atomic per cache line.

    `values` is the raw array; sequential kernels write it directly with plain stores.
    """

    def __init__(self, values: np.ndarray, stripes: int = 64) -> None:
        if values.ndim != 1:
            raise ValueError("AtomicArray wraps one-dimensional arrays only")
        self.values = values
        self._stripes = max(1, stripes)
        self._locks = [threading.Lock() for _ in range(self._stripes)]
        self._per_line = max(1, CACHE_LINE_BYTES // values.itemsize)

    @classmethod
    def zeros(cls, size: int, dtype=np.int64, stripes: int = 64) -> "AtomicArray":
        return cls(np.zeros(size, dtype=dtype), stripes=stripes)

    def __len__(self) -> int:
        return len(self.values)

    def _by_stripe(self, indices: np.ndarray):
        stripe_ids = (indices // self._per_line) % self._stripes
        order = np.argsort(stripe_ids, kind="stable")
        sorted_stripes = stripe_ids[order]
        bounds = np.searchsorted(sorted_stripes, np.arange(self._stripes + 1))
        for stripe in range(self._stripes):
            start, end = bounds[stripe], bounds[stripe + 1]
            if start != end:
                yield stripe, order[start:end]

    def fetch_add(self, indices: np.ndarray, deltas=1) -> None:
        """Atomically add deltas (scalar or per-index array) at indices; duplicates accumulate."""
        indices = np.asarray(indices, dtype=np.int64)
        if indices.size == 0:
            return
        per_index = np.ndim(deltas) > 0
        if per_index:
            deltas = np.asarray(deltas, dtype=self.values.dtype)
        for stripe, selection in self._by_stripe(indices):
            with self._locks[stripe]:
                np.add.at(self.values, indices[selection], deltas[selection] if per_index else deltas)

    def compare_and_set(self, indices: np.ndarray, expected, desired) -> np.ndarray:
        """Atomically set values[i] = desired where values[i] == expected.

        Returns the indices whose update succeeded, each at most once even when `indices`
        contains duplicates.
        """
        indices = np.asarray(indices, dtype=np.int64)
        if indices.size == 0:
            return indices
        claimed = []
        for stripe, selection in self._by_stripe(indices):
            candidates = np.unique(indices[selection])
            with self._locks[stripe]:
                won = candidates[self.values[candidates] == expected]
                self.values[won] = desired
            claimed.append(won)
        return np.concatenate(claimed)
