"""Binary HT file format.

Layout (all integers ``u32`` little-endian, all scalars ``f64`` little-endian)::

    b"HTAF"                      magic
    version                      currently 1
    d
    N_1 .. N_d                   grid sizes
    L, tree                      L ASCII bytes, e.g. "((1,2),(3,4))"
    n_nodes, k_t ...             one rank per node in post-order (root last, = 1)
    frames                       U^mu column-major, leaves in post-order
    transfer tensors             B^t column-major (first index fastest),
                                 interior nodes in post-order

Nothing may follow the last transfer tensor.
"""

from __future__ import annotations

import struct

import numpy as np

from podhta.errors import HTFormatError
from podhta.htucker.tensor import HTensor
from podhta.htucker.tree import DimensionTree

MAGIC = b"HTAF"
VERSION = 1


def serialize(h: HTensor) -> bytes:
    tree = h.tree
    nodes = tree.postorder()
    text = tree.to_string().encode("ascii")
    parts = [MAGIC, struct.pack("<II", VERSION, h.d), struct.pack(f"<{h.d}I", *h.grid_sizes)]
    parts.append(struct.pack("<I", len(text)) + text)
    parts.append(struct.pack(f"<I{len(nodes)}I", len(nodes), *[h.rank(t) for t in nodes]))
    for t in tree.leaves():
        parts.append(np.asarray(h.frames[t], dtype="<f8").tobytes(order="F"))
    for t in tree.interior():
        parts.append(np.asarray(h.transfer[t], dtype="<f8").tobytes(order="F"))
    return b"".join(parts)


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise HTFormatError(f"truncated stream while reading {what}: need {n} bytes, "
                                f"{len(self.data) - self.pos} left", self.pos)
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self, count, what):
        return struct.unpack(f"<{count}I", self.take(4 * count, what))

    def array(self, shape, what):
        n = int(np.prod(shape))
        raw = self.take(8 * n, what)
        return np.frombuffer(raw, dtype="<f8").reshape(shape, order="F").astype(float)


def deserialize(data: bytes) -> HTensor:
    data = bytes(data)
    rd = _Reader(data)
    if rd.take(4, "magic") != MAGIC:
        raise HTFormatError("bad magic, not an HT file", 0)
    (version,) = rd.u32(1, "version")
    if version != VERSION:
        raise HTFormatError(f"unsupported format version {version}", 4)
    (d,) = rd.u32(1, "d")
    grid_sizes = rd.u32(d, "grid sizes")
    (length,) = rd.u32(1, "tree length")
    at = rd.pos
    try:
        tree = DimensionTree.from_string(rd.take(length, "tree").decode("ascii"))
    except (ValueError, UnicodeDecodeError) as exc:
        raise HTFormatError(f"malformed tree: {exc}", at) from exc
    if tree.d != d:
        raise HTFormatError(f"tree has {tree.d} modes but header says d = {d}", at)
    nodes = tree.postorder()
    at = rd.pos
    (n_nodes,) = rd.u32(1, "node count")
    if n_nodes != len(nodes):
        raise HTFormatError(f"node count {n_nodes} does not match the tree ({len(nodes)})", at)
    at = rd.pos
    ranks = dict(zip(nodes, rd.u32(n_nodes, "ranks")))
    if min(ranks.values()) < 1 or ranks[tree.root] != 1:
        raise HTFormatError("ranks must be >= 1 with root rank 1", at)

    frames, transfer = {}, {}
    for t in tree.leaves():
        frames[t] = rd.array((grid_sizes[t[0]], ranks[t]), f"frame {t}")
    for t in tree.interior():
        s1, s2 = tree.sons(t)
        transfer[t] = rd.array((ranks[t], ranks[s1], ranks[s2]), f"transfer tensor {t}")
    if rd.pos != len(data):
        raise HTFormatError(f"{len(data) - rd.pos} trailing bytes", rd.pos)
    return HTensor(tree, grid_sizes, frames, transfer)


def save(h: HTensor, path):
    with open(path, "wb") as fh:
        fh.write(serialize(h))


def load(path) -> HTensor:
    with open(path, "rb") as fh:
        return deserialize(fh.read())
