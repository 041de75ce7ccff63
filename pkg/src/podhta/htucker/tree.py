"""Binary dimension trees over the modes ``0 .. d-1``.

Nodes are identified by their sorted mode tuples. Printed forms use 1-based
mode numbers, e.g. ``((1,2),(3,4))`` for the balanced tree with ``d = 4``.
"""

from __future__ import annotations

import math


class DimensionTree:
    def __init__(self, d, sons):
        """``sons`` maps every interior node (mode tuple) to its two son tuples."""
        self.d = d
        self.root = tuple(range(d))
        self._sons = {tuple(t): (tuple(a), tuple(b)) for t, (a, b) in sons.items()}
        self._check()

    def _check(self):
        seen_leaves = set()
        stack = [self.root]
        while stack:
            t = stack.pop()
            if t != tuple(sorted(t)):
                raise ValueError(f"node {t} is not sorted")
            sons = self._sons.get(t)
            if sons is None:
                if len(t) != 1:
                    raise ValueError(f"leaf {t} is not a singleton")
                seen_leaves.add(t[0])
                continue
            a, b = sons
            if set(a) & set(b) or set(a) | set(b) != set(t) or not a or not b:
                raise ValueError(f"sons {a}, {b} do not partition {t}")
            stack.extend((a, b))
        if seen_leaves != set(range(self.d)):
            raise ValueError("leaves must be exactly the singletons")

    def sons(self, t):
        return self._sons.get(tuple(t))

    def is_leaf(self, t):
        return tuple(t) not in self._sons

    def postorder(self):
        """All nodes, sons before parents, left son first."""
        out = []

        def visit(t):
            sons = self._sons.get(t)
            if sons:
                visit(sons[0])
                visit(sons[1])
            out.append(t)

        visit(self.root)
        return out

    def leaves(self):
        return [t for t in self.postorder() if len(t) == 1 and self.is_leaf(t)]

    def interior(self):
        return [t for t in self.postorder() if not self.is_leaf(t)]

    def complement(self, t):
        t = set(t)
        return tuple(mu for mu in range(self.d) if mu not in t)

    def to_string(self):
        def fmt(t):
            sons = self._sons.get(t)
            if sons is None:
                return str(t[0] + 1)
            return f"({fmt(sons[0])},{fmt(sons[1])})"

        return fmt(self.root)

    @classmethod
    def from_string(cls, text):
        """Parse the nested 1-based form produced by :meth:`to_string`."""
        pos = 0
        sons = {}

        def parse():
            nonlocal pos
            if pos >= len(text):
                raise ValueError("unexpected end of tree string")
            if text[pos] == "(":
                pos += 1
                left = parse()
                if pos >= len(text) or text[pos] != ",":
                    raise ValueError(f"expected ',' at {pos} in tree string")
                pos += 1
                right = parse()
                if pos >= len(text) or text[pos] != ")":
                    raise ValueError(f"expected ')' at {pos} in tree string")
                pos += 1
                node = tuple(sorted(left + right))
                sons[node] = (left, right)
                return node
            start = pos
            while pos < len(text) and text[pos].isdigit():
                pos += 1
            if start == pos:
                raise ValueError(f"expected a mode number at {pos} in tree string")
            return (int(text[start:pos]) - 1,)

        root = parse()
        if pos != len(text):
            raise ValueError(f"trailing characters in tree string at {pos}")
        return cls(len(root), sons)

    def __eq__(self, other):
        return isinstance(other, DimensionTree) and self.d == other.d and self._sons == other._sons

    def __hash__(self):
        return hash(self.to_string())

    def __repr__(self):
        return f"DimensionTree({self.to_string()})"


def balanced_tree(d: int) -> DimensionTree:
    """Split ``{1..d}`` into ``{1..ceil(d/2)}`` and the rest, recursively."""
    if d < 2:
        raise ValueError("a dimension tree needs d >= 2")
    sons = {}

    def split(modes):
        if len(modes) == 1:
            return
        half = math.ceil(len(modes) / 2)
        left, right = modes[:half], modes[half:]
        sons[modes] = (left, right)
        split(left)
        split(right)

    split(tuple(range(d)))
    return DimensionTree(d, sons)
