"""Black-box construction of hierarchical Tucker tensors by nested cross approximation."""

from __future__ import annotations

import time

import numpy as np

from podhta.errors import HTConstructionError, SingularMatrixError, SizeGuardError, ZeroMatrixError
from podhta.htucker.aca import aca
from podhta.htucker.oracle import EntryOracle, matricize, merge_index, unravel
from podhta.htucker.tensor import HTensor
from podhta.htucker.tree import DimensionTree, balanced_tree
from podhta.numerics import numerical_rank, solve_linear, svd

DEFAULT_TOL = 1e-6
DEFAULT_SUB_SIZE = 8
DEFAULT_MAX_RANK = 4
MAX_RETRIES = 3
DENSE_GUARD = 100_000


def _inverse(s):
    return solve_linear(s, np.eye(s.shape[0]))


def _merge_modes(t, parts):
    """Row multi-index over ``t`` from ``(modes, values)`` pairs."""
    pos = {mu: k for k, mu in enumerate(t)}
    out = [0] * len(t)
    for modes, values in parts:
        for mu, v in zip(modes, values):
            out[pos[mu]] = v
    return tuple(out)


class _NodeCross:
    """Cross of one node: row pivots over t, column pivots over its complement."""

    def __init__(self, rows, cols, s_inv):
        self.rows = rows
        self.cols = cols
        self.s_inv = s_inv

    @property
    def k(self):
        return len(self.rows)


def _random_columns(rng, comp_dims, count):
    total = int(np.prod(comp_dims, dtype=np.int64)) if comp_dims else 1
    picks = rng.choice(total, size=min(count, total), replace=False)
    return [unravel(p, comp_dims) for p in np.sort(picks)]


def _cross_on_candidates(oracle, t, comp, row_cands, col_cands, tol, max_rank, rng, threads):
    """ACA on the candidate submatrix; returns (row pivots, col pivots, S)."""

    def batch(pairs):
        return oracle.evaluate_many(
            [merge_index(t, row_cands[i], comp, col_cands[j]) for i, j in pairs], threads=threads
        )

    res = aca(None, len(row_cands), len(col_cands), tol, max_rank, rng=rng, batch=batch)
    rows = [row_cands[i] for i in res.row_pivots]
    cols = [col_cands[j] for j in res.col_pivots]
    return rows, cols, res.pivot_matrix


def build_hta(
    oracle: EntryOracle,
    tree: DimensionTree = None,
    grid_sizes=None,
    tol: float = DEFAULT_TOL,
    sub_size: int = DEFAULT_SUB_SIZE,
    max_rank: int = DEFAULT_MAX_RANK,
    seed=None,
    threads: int = 1,
) -> HTensor:
    """Leaves-to-root cross approximation of the tensor behind ``oracle``.

    Every node gets a random candidate submatrix of its matricisation of size
    ``min(sub_size * max_rank, rows) x min(sub_size * max_rank, cols)``; rows of
    interior nodes are drawn from the product of the sons' row pivots so that
    the pivot crosses are nested. ACA on the submatrix yields the pivots
    ``(P_t, Q_t)`` and ``S_t = M^t[P_t, Q_t]``.

    The node bases are stored in interpolatory form ``M^t[:, Q_t] S_t^-1``,
    which equals the identity on the rows ``P_t``. Leaf frames are therefore
    ``M^mu[:, Q_mu] S_mu^-1``, interior transfer tensors are the entries on
    the sons' pivot rows times ``S_t^-1``, and the root transfer tensor is the
    raw block ``A(P_s1, P_s2)``. This is the same tensor as the textbook form
    ``B^t_j = S_s1^-1 X_j S_s2^-T`` with plain column frames, only rescaled so
    that no product of two inverse pivot matrices is ever formed.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    if sub_size < 1 or max_rank < 1:
        raise ValueError("sub_size and max_rank must be >= 1")
    grid_sizes = tuple(oracle.grid_sizes if grid_sizes is None else grid_sizes)
    if grid_sizes != oracle.grid_sizes:
        raise ValueError("grid_sizes do not match the oracle")
    tree = balanced_tree(len(grid_sizes)) if tree is None else tree
    if tree.d != len(grid_sizes):
        raise ValueError("tree dimension does not match grid_sizes")
    rng = np.random.default_rng(seed)
    start_count = oracle.count
    t0 = time.perf_counter()
    size = sub_size * max_rank

    crosses = {}
    frames, transfer = {}, {}
    retries = {}
    for t in tree.postorder():
        comp = tree.complement(t)
        comp_dims = tuple(grid_sizes[mu] for mu in comp)
        sons = tree.sons(t)
        if t == tree.root:
            c1, c2 = crosses[sons[0]], crosses[sons[1]]
            transfer[t] = _son_block(oracle, t, sons, c1, c2, [()], threads)
            break
        last_error = None
        for attempt in range(MAX_RETRIES + 1):
            try:
                if sons is None:
                    n = grid_sizes[t[0]]
                    picks = np.sort(rng.choice(n, size=min(size, n), replace=False))
                    row_cands = [(int(i),) for i in picks]
                else:
                    c1, c2 = crosses[sons[0]], crosses[sons[1]]
                    pairs = [(a, b) for a in range(c1.k) for b in range(c2.k)]
                    chosen = np.sort(rng.choice(len(pairs), size=min(size, len(pairs)), replace=False))
                    row_cands = [
                        _merge_modes(t, [(sons[0], c1.rows[pairs[p][0]]), (sons[1], c2.rows[pairs[p][1]])])
                        for p in chosen
                    ]
                col_cands = _random_columns(rng, comp_dims, size)
                rows, cols, s = _cross_on_candidates(oracle, t, comp, row_cands, col_cands, tol, max_rank, rng, threads)
                crosses[t] = _NodeCross(rows, cols, _inverse(s))
                break
            except (SingularMatrixError, ZeroMatrixError) as exc:
                last_error = exc
                retries[t] = attempt + 1
        else:
            raise HTConstructionError(t, f"no usable cross after {MAX_RETRIES} retries: {last_error}")

        cross = crosses[t]
        if sons is None:
            mu = t[0]
            idx = [merge_index(t, (i,), comp, col) for col in cross.cols for i in range(grid_sizes[mu])]
            cols = oracle.evaluate_many(idx, threads=threads).reshape((cross.k, grid_sizes[mu])).T
            frames[t] = cols @ cross.s_inv
        else:
            c1, c2 = crosses[sons[0]], crosses[sons[1]]
            x = _son_block(oracle, t, sons, c1, c2, cross.cols, threads)
            transfer[t] = np.einsum("qab,qj->jab", x, cross.s_inv)

    info = {
        "used_entries": oracle.count - start_count,
        "seconds": time.perf_counter() - t0,
        "tol": tol,
        "sub_size": sub_size,
        "max_rank": max_rank,
        "seed": seed,
        "retries": dict(retries),
        "row_pivots": {t: c.rows for t, c in crosses.items()},
        "col_pivots": {t: c.cols for t, c in crosses.items()},
    }
    return HTensor(tree, grid_sizes, frames, transfer, info)


def _son_block(oracle, t, sons, c1, c2, cols, threads):
    """Entries ``X[j, a, b] = A(P1[a], P2[b], Q_t[j])``."""
    comp = tuple(mu for mu in range(oracle.d) if mu not in t)
    idx = []
    for col in cols:
        for a in range(c1.k):
            for b in range(c2.k):
                row = _merge_modes(t, [(sons[0], c1.rows[a]), (sons[1], c2.rows[b])])
                idx.append(merge_index(t, row, comp, col))
    return oracle.evaluate_many(idx, threads=threads).reshape((len(cols), c1.k, c2.k))


def dense_tensor(oracle: EntryOracle, threads: int = 1) -> np.ndarray:
    """Full tensor from the oracle (guarded to at most ``DENSE_GUARD`` entries)."""
    total = int(np.prod(oracle.grid_sizes, dtype=np.int64))
    if total > DENSE_GUARD:
        raise SizeGuardError(f"dense assembly of {total} entries exceeds the guard of {DENSE_GUARD}")
    idx = [unravel(k, oracle.grid_sizes) for k in range(total)]
    return oracle.evaluate_many(idx, threads=threads).reshape(oracle.grid_sizes, order="F")


def dense_rank_oracle(oracle: EntryOracle, tree: DimensionTree, grid_sizes=None, tol: float = DEFAULT_TOL) -> dict:
    """Rank of every matricisation of the dense tensor at threshold ``tol * sigma_1``."""
    if grid_sizes is not None and tuple(grid_sizes) != oracle.grid_sizes:
        raise ValueError("grid_sizes do not match the oracle")
    full = dense_tensor(oracle)
    ranks = {}
    for t in tree.postorder():
        s = svd(matricize(full, t)).singular_values
        ranks[t] = numerical_rank(s, tol)
    return ranks
