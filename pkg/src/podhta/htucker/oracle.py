"""Black-box tensor access: memoised entry oracle and matricisation indexing.

Matricisation convention: for a mode set ``t`` the row index enumerates the
modes of ``t`` in ascending order with the first mode running fastest; the
column index does the same for the complementary modes.
"""

from __future__ import annotations

import threading
from concurrent.futures import ThreadPoolExecutor

import numpy as np


class EntryOracle:
    """Memoising wrapper around ``func(index_tuple) -> float``.

    ``count`` is the number of distinct entries ever requested. The cache and
    counter are guarded by a lock; ``func`` itself must tolerate concurrent
    calls when ``evaluate_many`` is used with ``threads > 1``.
    """

    def __init__(self, func, grid_sizes):
        self.func = func
        self.grid_sizes = tuple(int(n) for n in grid_sizes)
        self._cache = {}
        self._lock = threading.Lock()

    @property
    def d(self):
        return len(self.grid_sizes)

    @property
    def count(self):
        return len(self._cache)

    def _check(self, index):
        if len(index) != self.d:
            raise IndexError(f"index {index} has {len(index)} components, tensor has {self.d} modes")
        for mu, (i, n) in enumerate(zip(index, self.grid_sizes)):
            if not 0 <= i < n:
                raise IndexError(f"index component {i} out of range [0, {n}) in mode {mu + 1}")

    def __call__(self, index):
        key = tuple(int(i) for i in index)
        with self._lock:
            if key in self._cache:
                return self._cache[key]
        self._check(key)
        value = float(self.func(key))
        with self._lock:
            self._cache.setdefault(key, value)
            return self._cache[key]

    def evaluate_many(self, indices, threads=1):
        """Evaluate a batch of indices; results in input order."""
        keys = [tuple(int(i) for i in idx) for idx in indices]
        with self._lock:
            missing = list(dict.fromkeys(k for k in keys if k not in self._cache))
        for key in missing:
            self._check(key)
        if threads > 1 and len(missing) > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                values = list(pool.map(self.func, missing))
        else:
            values = [self.func(k) for k in missing]
        with self._lock:
            for key, value in zip(missing, values):
                self._cache.setdefault(key, float(value))
            return np.array([self._cache[k] for k in keys])


def merge_index(t, row, comp, col):
    """Full multi-index from a row index over modes ``t`` and a column index over ``comp``."""
    full = [0] * (len(t) + len(comp))
    for mu, i in zip(t, row):
        full[mu] = int(i)
    for mu, j in zip(comp, col):
        full[mu] = int(j)
    return tuple(full)


def unravel(linear, dims):
    """Multi-index (first mode fastest) for a linear index over ``dims``."""
    if not dims:
        return ()
    return tuple(int(i) for i in np.unravel_index(int(linear), dims, order="F"))


def ravel(multi, dims):
    if not dims:
        return 0
    return int(np.ravel_multi_index(tuple(multi), dims, order="F"))


def mat_entry(oracle: EntryOracle, t, row, col):
    """Entry of the matricisation ``M^t`` at (row multi-index over t, column multi-index over the complement)."""
    t = tuple(sorted(t))
    comp = tuple(mu for mu in range(oracle.d) if mu not in t)
    if len(row) != len(t) or len(col) != len(comp):
        raise IndexError(f"row/column index lengths {len(row)}/{len(col)} do not match modes {t}/{comp}")
    return oracle(merge_index(t, row, comp, col))


def mat_entry_linear(oracle: EntryOracle, t, i, j):
    """Same as :func:`mat_entry` with lexicographic linear row/column numbers."""
    t = tuple(sorted(t))
    comp = tuple(mu for mu in range(oracle.d) if mu not in t)
    rdims = tuple(oracle.grid_sizes[mu] for mu in t)
    cdims = tuple(oracle.grid_sizes[mu] for mu in comp)
    if not 0 <= i < int(np.prod(rdims)) or not 0 <= j < int(np.prod(cdims, dtype=int)):
        raise IndexError(f"matricisation index ({i}, {j}) out of range")
    return mat_entry(oracle, t, unravel(i, rdims), unravel(j, cdims))


def matricize(full, t):
    """Dense matricisation of a full array for mode set ``t``."""
    t = tuple(sorted(t))
    comp = tuple(mu for mu in range(full.ndim) if mu not in t)
    rows = int(np.prod([full.shape[mu] for mu in t]))
    return np.transpose(full, t + comp).reshape((rows, -1), order="F")
