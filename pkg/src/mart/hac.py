"""Hierarchical audio cropping: recursive M-ary partition of a root span.

Level ``n`` holds ``M**n`` contiguous spans; node ``(n, m)`` is tiled exactly
by its children ``(n + 1, M*m) .. (n + 1, M*m + M - 1)``. When a span does not
divide evenly the leftmost children get one extra sample each.
"""

from dataclasses import dataclass

import numpy as np

from mart.errors import ConfigError, RelationshipError, TooShortError


@dataclass(frozen=True)
class ClipNode:
    level: int
    index: int
    start: int
    end: int
    branching: int = 2

    @property
    def span(self):
        return (self.start, self.end)

    def __len__(self):
        return self.end - self.start

    @property
    def parent_index(self):
        return None if self.level == 0 else self.index // self.branching

    def child_indices(self):
        return [self.index * self.branching + j for j in range(self.branching)]


@dataclass(frozen=True)
class ClipTree:
    M: int
    N: int
    root_span: tuple
    levels: tuple  # levels[n] is a tuple of M**n ClipNode

    def node(self, level, index):
        return self.levels[level][index]

    def children(self, node):
        if node.level + 1 >= self.N:
            return []
        return [self.levels[node.level + 1][i] for i in node.child_indices()]

    def parent(self, node):
        if node.level == 0:
            return None
        return self.levels[node.level - 1][node.index // self.M]

    def spans(self, level):
        return [n.span for n in self.levels[level]]

    def nodes(self):
        """All nodes in (level, index) order."""
        return [n for lvl in self.levels for n in lvl]

    @property
    def leaves(self):
        return self.levels[-1]

    def offset(self, start):
        """The same tree shifted so the root begins at ``start``."""
        d = start - self.root_span[0]
        levels = tuple(
            tuple(ClipNode(n.level, n.index, n.start + d, n.end + d, self.M) for n in lvl)
            for lvl in self.levels
        )
        return ClipTree(self.M, self.N, (self.root_span[0] + d, self.root_span[1] + d), levels)


def split_span(start, end, m):
    """Split ``[start, end)`` into ``m`` contiguous pieces, remainder to the left."""
    q, r = divmod(end - start, m)
    bounds = [start]
    for j in range(m):
        bounds.append(bounds[-1] + q + (1 if j < r else 0))
    return list(zip(bounds[:-1], bounds[1:]))


def build_tree(root_len, M=2, N=4, min_leaf_len=1, start=0):
    if M < 2:
        raise ConfigError(f"branching factor M must be >= 2, got {M}")
    if N < 1:
        raise ConfigError(f"level count N must be >= 1, got {N}")
    required = M ** (N - 1) * max(min_leaf_len, 1)
    if root_len < required:
        raise TooShortError(
            f"root of {root_len} samples is too short for M={M}, N={N} (minimum {required})"
        )
    levels = [(ClipNode(0, 0, start, start + root_len, M),)]
    for n in range(1, N):
        row = []
        for parent in levels[-1]:
            for j, (a, b) in enumerate(split_span(parent.start, parent.end, M)):
                row.append(ClipNode(n, parent.index * M + j, a, b, M))
        levels.append(tuple(row))
    return ClipTree(M, N, (start, start + root_len), tuple(levels))


def enumerate_pairs(tree):
    """Every internal node with its M children, in (level, index) order."""
    return [(whole, tree.children(whole)) for lvl in tree.levels[:-1] for whole in lvl]


def clip_len_ratio(part, whole):
    """Duration of ``part`` relative to its parent ``whole``."""
    if part.level != whole.level + 1 or part.index // part.branching != whole.index \
            or part.start < whole.start or part.end > whole.end:
        raise RelationshipError(f"node {part.level}/{part.index} is not a child of {whole.level}/{whole.index}")
    return len(part) / len(whole)


def level_ratios(tree):
    """Per level n >= 1: array of ``len(child) / len(parent)`` for each node."""
    out = []
    for n in range(1, tree.N):
        out.append(np.array([clip_len_ratio(c, tree.parent(c)) for c in tree.levels[n]]))
    return out


def format_tree(tree):
    """Line-delimited ``level<TAB>index<TAB>start<TAB>end`` dump."""
    return "\n".join(f"{n.level}\t{n.index}\t{n.start}\t{n.end}" for n in tree.nodes())
