"""Adaptive cross approximation with partial pivoting."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from podhta.errors import ZeroMatrixError

ZERO_PIVOT = 1e-300
# fresh rows tried after a rejected pivot before stopping
EXTRA_TRIES = 2


@dataclass(frozen=True)
class CrossResult:
    row_pivots: tuple
    col_pivots: tuple
    pivot_matrix: np.ndarray  # M[P, Q]
    achieved_rank: int
    residual_estimate: float
    left: np.ndarray  # n_rows x k, M ~ left @ right
    right: np.ndarray  # k x n_cols

    def approximation(self):
        return self.left @ self.right


def aca(entry, n_rows, n_cols, tol, max_rank, rng=None, batch=None) -> CrossResult:
    """Partially pivoted ACA of the matrix ``entry(i, j)``.

    Starts from a random row and alternates: the column pivot is the largest
    residual entry of the current row, the next row pivot the largest residual
    entry of that column. Stops once a new pivot is ``<= tol`` in modulus (the
    pivot is then rejected) or ``max_rank`` crosses were taken. A rejected
    pivot is first retried from up to ``EXTRA_TRIES`` unused random rows, since
    a row may be exhausted (e.g. a duplicate of a pivot row) while the matrix
    is not. ``batch``, if given, evaluates a list of ``(i, j)`` pairs at once.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if max_rank < 1:
        raise ValueError("max_rank must be >= 1")
    rng = np.random.default_rng() if rng is None else rng

    def fetch(pairs):
        if batch is not None:
            return np.asarray(batch(pairs), dtype=float)
        return np.array([entry(i, j) for i, j in pairs], dtype=float)

    us, vs = [], []
    rows, cols = [], []
    residual = 0.0
    start_order = [int(i) for i in rng.permutation(n_rows)]
    i = start_order.pop(0)
    tried_first = set()
    extra = 0
    rejected = set()
    limit = min(max_rank, n_rows, n_cols)

    while True:
        r = fetch([(i, j) for j in range(n_cols)])
        for u, v in zip(us, vs):
            r -= u[i] * v
        search = np.abs(r)
        search[cols] = -1.0
        j = int(np.argmax(search))
        delta = r[j]
        if not rows:
            tried_first.add(i)
            if abs(delta) < ZERO_PIVOT:
                remaining = [k for k in start_order if k not in tried_first]
                if not remaining:
                    raise ZeroMatrixError(f"all {n_rows} x {n_cols} entries vanish")
                i = remaining[0]
                start_order = remaining[1:]
                continue
        elif abs(delta) <= tol:
            residual = max(residual, abs(delta)) if extra else abs(delta)
            rejected.add(i)
            spare = [k for k in start_order if k not in rows and k not in rejected]
            if extra >= EXTRA_TRIES or not spare:
                break
            extra += 1
            i = spare[0]
            start_order.remove(i)
            continue
        c = fetch([(k, j) for k in range(n_rows)])
        for u, v in zip(us, vs):
            c -= v[j] * u
        rows.append(i)
        cols.append(j)
        vs.append(r / delta)
        us.append(c)
        residual = abs(delta)
        extra = 0
        if len(rows) >= limit:
            break
        search = np.abs(c)
        search[rows] = -1.0
        search[list(rejected)] = -1.0
        i = int(np.argmax(search))

    pivots = fetch([(p, q) for p in rows for q in cols]).reshape(len(rows), len(cols))
    return CrossResult(
        tuple(rows), tuple(cols), pivots, len(rows), float(residual),
        np.column_stack(us), np.vstack(vs),
    )
