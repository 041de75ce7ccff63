"""Hierarchical Tucker tensors: storage, entry evaluation and dense expansion."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from podhta.htucker.tree import DimensionTree


@dataclass
class HTensor:
    """Frames ``U^mu`` (N_mu x k_mu) on the leaves, transfer tensors ``B^t``
    (k_t x k_s1 x k_s2) on interior nodes; the root has ``k = 1``.

    ``info`` carries construction metadata (used entries, pivots, timings) and
    is not part of the tensor value.
    """

    tree: DimensionTree
    grid_sizes: tuple
    frames: dict
    transfer: dict
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self.grid_sizes = tuple(int(n) for n in self.grid_sizes)
        self.validate()

    def validate(self):
        tree = self.tree
        if len(self.grid_sizes) != tree.d:
            raise ValueError("grid_sizes length does not match the tree")
        for leaf in tree.leaves():
            u = self.frames.get(leaf)
            if u is None or u.ndim != 2 or u.shape[0] != self.grid_sizes[leaf[0]] or u.shape[1] < 1:
                raise ValueError(f"bad frame at leaf {leaf}")
        for t in tree.interior():
            b = self.transfer.get(t)
            s1, s2 = tree.sons(t)
            if b is None or b.ndim != 3 or b.shape[1:] != (self.rank(s1), self.rank(s2)) or b.shape[0] < 1:
                raise ValueError(f"bad transfer tensor at node {t}")
        if self.transfer[tree.root].shape[0] != 1:
            raise ValueError("root rank must be 1")

    @property
    def d(self):
        return self.tree.d

    def rank(self, t):
        t = tuple(t)
        if self.tree.is_leaf(t):
            return self.frames[t].shape[1]
        return self.transfer[t].shape[0]

    @property
    def ranks(self):
        return {t: self.rank(t) for t in self.tree.postorder()}

    @property
    def max_rank(self):
        return max(self.ranks.values())

    def check_index(self, index):
        if len(index) != self.d:
            raise IndexError(f"index {tuple(index)} has {len(index)} components, tensor has {self.d} modes")
        for mu, (i, n) in enumerate(zip(index, self.grid_sizes)):
            if not 0 <= int(i) < n:
                raise IndexError(f"index component {i} out of range [0, {n}) in mode {mu + 1}")


def eval_hta(h: HTensor, index, stats=None) -> float:
    """Single entry by bottom-up contraction.

    ``stats`` (a dict) accumulates ``row_extractions``, ``interior_contractions``
    and ``root_contractions``.
    """
    h.check_index(index)
    tree = h.tree
    vecs = {}
    for t in tree.postorder():
        if tree.is_leaf(t):
            vecs[t] = h.frames[t][int(index[t[0]])]
            if stats is not None:
                stats["row_extractions"] = stats.get("row_extractions", 0) + 1
            continue
        s1, s2 = tree.sons(t)
        vecs[t] = np.einsum("jab,a,b->j", h.transfer[t], vecs.pop(s1), vecs.pop(s2))
        if stats is not None:
            key = "root_contractions" if t == tree.root else "interior_contractions"
            stats[key] = stats.get(key, 0) + 1
    return float(vecs[tree.root][0])


def eval_many(h: HTensor, indices) -> np.ndarray:
    """Vectorised :func:`eval_hta` over an ``(n, d)`` integer array."""
    idx = np.asarray(indices, dtype=int).reshape(-1, h.d)
    if idx.size and (np.any(idx < 0) or np.any(idx >= np.array(h.grid_sizes))):
        raise IndexError("index out of range in eval_many")
    tree = h.tree
    vecs = {}
    for t in tree.postorder():
        if tree.is_leaf(t):
            vecs[t] = h.frames[t][idx[:, t[0]]]
        else:
            s1, s2 = tree.sons(t)
            vecs[t] = np.einsum("jab,na,nb->nj", h.transfer[t], vecs.pop(s1), vecs.pop(s2))
    return vecs[tree.root][:, 0]


def node_basis(h: HTensor, t):
    """Dense ``U^t`` (prod N over t, k_t) expanded through Kronecker products of the sons."""
    tree = h.tree
    t = tuple(t)
    if tree.is_leaf(t):
        return h.frames[t]
    s1, s2 = tree.sons(t)
    if max(s1) > min(s2) or s1 + s2 != t:
        raise ValueError("dense expansion needs contiguous sons (left son modes first)")
    u1, u2 = node_basis(h, s1), node_basis(h, s2)
    b = h.transfer[t]
    cols = []
    for j in range(b.shape[0]):
        col = np.zeros(u1.shape[0] * u2.shape[0])
        for a in range(b.shape[1]):
            for c in range(b.shape[2]):
                if b[j, a, c] != 0.0:
                    # first (left-son) index runs fastest
                    col += b[j, a, c] * np.kron(u2[:, c], u1[:, a])
        cols.append(col)
    return np.column_stack(cols)


def to_dense(h: HTensor) -> np.ndarray:
    return node_basis(h, h.tree.root)[:, 0].reshape(h.grid_sizes, order="F")


def storage_count(h: HTensor) -> int:
    """Exact number of stored scalars (frames plus transfer tensors)."""
    return int(sum(u.size for u in h.frames.values()) + sum(b.size for b in h.transfer.values()))


def storage_from_ranks(tree: DimensionTree, grid_sizes, ranks) -> int:
    """Stored scalars for given ranks (``ranks`` maps node -> k; the root is forced to 1)."""
    total = 0
    for t in tree.postorder():
        k = 1 if t == tree.root else ranks[t]
        if tree.is_leaf(t):
            total += grid_sizes[t[0]] * k
        else:
            s1, s2 = tree.sons(t)
            total += k * ranks[s1] * ranks[s2]
    return total


def storage_bound(tree: DimensionTree, grid_sizes, k) -> int:
    """Upper bound with every rank replaced by ``k``: sum N k + (#inner) k^3 + k^2."""
    inner = len(tree.interior()) - 1
    return int(sum(grid_sizes) * k + inner * k ** 3 + k ** 2)


def random_htensor(tree: DimensionTree, grid_sizes, ranks, rng) -> HTensor:
    """HTensor with Gaussian frames/transfer tensors of the given ranks."""
    frames, transfer = {}, {}
    for t in tree.postorder():
        if tree.is_leaf(t):
            frames[t] = rng.standard_normal((grid_sizes[t[0]], ranks[t]))
        else:
            s1, s2 = tree.sons(t)
            k = 1 if t == tree.root else ranks[t]
            transfer[t] = rng.standard_normal((k, ranks[s1], ranks[s2]))
    return HTensor(tree, tuple(grid_sizes), frames, transfer)


def ht_add(h1: HTensor, h2: HTensor) -> HTensor:
    """Structural sum: concatenated frames, block-diagonal transfer tensors."""
    if h1.tree != h2.tree or h1.grid_sizes != h2.grid_sizes:
        raise ValueError("HTensors must share tree and grid sizes")
    tree = h1.tree
    frames = {t: np.hstack([h1.frames[t], h2.frames[t]]) for t in tree.leaves()}
    transfer = {}
    for t in tree.interior():
        b1, b2 = h1.transfer[t], h2.transfer[t]
        s1, s2 = tree.sons(t)
        k1a, k1b = b1.shape[1], b1.shape[2]
        if t == tree.root:
            b = np.zeros((1, k1a + b2.shape[1], k1b + b2.shape[2]))
            b[0, :k1a, :k1b] = b1[0]
            b[0, k1a:, k1b:] = b2[0]
        else:
            b = np.zeros((b1.shape[0] + b2.shape[0], k1a + b2.shape[1], k1b + b2.shape[2]))
            b[:b1.shape[0], :k1a, :k1b] = b1
            b[b1.shape[0]:, k1a:, k1b:] = b2
        transfer[t] = b
    return HTensor(tree, h1.grid_sizes, frames, transfer)
