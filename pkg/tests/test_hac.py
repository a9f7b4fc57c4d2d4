import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mart.errors import ConfigError, RelationshipError, TooShortError
from mart.hac import (
    build_tree,
    clip_len_ratio,
    enumerate_pairs,
    format_tree,
    level_ratios,
    split_span,
)


def check_tree(tree, root_len):
    """Partition, containment and reconstruction, all exact on integers."""
    for n, level in enumerate(tree.levels):
        assert len(level) == tree.M ** n
        spans = [node.span for node in level]
        assert spans[0][0] == 0 and spans[-1][1] == root_len
        for (a0, b0), (a1, _) in zip(spans, spans[1:]):
            assert b0 == a1  # contiguous, hence disjoint and covering
        assert all(b > a for a, b in spans)
    for node in tree.nodes():
        for child in tree.children(node):
            assert node.start <= child.start < child.end <= node.end
            assert tree.parent(child) == node
    wave = np.arange(root_len)
    rebuilt = np.concatenate([wave[a:b] for a, b in tree.spans(tree.N - 1)])
    assert np.array_equal(rebuilt, wave)


class TestBuildTree:
    def test_equal_partition(self):
        assert build_tree(8, 2, 3).spans(2) == [(0, 2), (2, 4), (4, 6), (6, 8)]

    def test_level_sizes(self):
        tree = build_tree(4096, 2, 4)
        assert [len(lvl) for lvl in tree.levels] == [1, 2, 4, 8]
        assert len(tree.leaves) == 2 ** 3

    def test_remainder_goes_left(self):
        assert build_tree(7, 2, 2).spans(1) == [(0, 4), (4, 7)]
        assert split_span(0, 11, 3) == [(0, 4), (4, 8), (8, 11)]

    def test_deterministic(self):
        assert build_tree(1001, 3, 3) == build_tree(1001, 3, 3)

    def test_too_short(self):
        with pytest.raises(TooShortError):
            build_tree(7, 2, 4)
        with pytest.raises(TooShortError):
            build_tree(100, 2, 2, min_leaf_len=60)

    def test_bad_config(self):
        with pytest.raises(ConfigError):
            build_tree(8, 1, 2)
        with pytest.raises(ConfigError):
            build_tree(8, 2, 0)

    def test_offset(self):
        tree = build_tree(9, 3, 2).offset(100)
        assert tree.spans(1) == [(100, 103), (103, 106), (106, 109)]

    def test_format(self):
        lines = format_tree(build_tree(8, 2, 3)).splitlines()
        assert len(lines) == 7
        assert lines[-1] == "2\t3\t6\t8"


class TestPairsAndRatios:
    def test_pair_counts(self):
        assert len(enumerate_pairs(build_tree(64, 2, 4))) == 7
        assert len(enumerate_pairs(build_tree(64, 2, 2))) == 1

    def test_every_non_root_node_is_a_part_once(self):
        tree = build_tree(500, 3, 4)
        parts = [c for _, kids in enumerate_pairs(tree) for c in kids]
        assert sorted(parts, key=lambda n: (n.level, n.index)) == [n for n in tree.nodes() if n.level]

    def test_ratios(self):
        t = build_tree(8, 2, 2)
        assert clip_len_ratio(t.node(1, 0), t.node(0, 0)) == 0.5
        t4 = build_tree(8, 4, 2)
        assert clip_len_ratio(t4.node(1, 3), t4.node(0, 0)) == 0.25
        t7 = build_tree(7, 2, 2)
        assert clip_len_ratio(t7.node(1, 0), t7.node(0, 0)) == pytest.approx(4 / 7, abs=1e-12)
        assert clip_len_ratio(t7.node(1, 1), t7.node(0, 0)) == pytest.approx(3 / 7, abs=1e-12)

    def test_ratio_rejects_non_children(self):
        t = build_tree(16, 2, 3)
        with pytest.raises(RelationshipError):
            clip_len_ratio(t.node(2, 0), t.node(0, 0))
        with pytest.raises(RelationshipError):
            clip_len_ratio(t.node(2, 2), t.node(1, 0))

    def test_level_ratios_shape(self):
        r = level_ratios(build_tree(100, 3, 3))
        assert [x.shape for x in r] == [(3,), (9,)]
        # sibling ratios sum to one
        assert np.allclose(r[1].reshape(3, 3).sum(axis=1), 1.0)


@settings(max_examples=200, deadline=None)
@given(m=st.integers(2, 4), n=st.integers(1, 4), extra=st.integers(0, 5000))
def test_partition_properties(m, n, extra):
    root = m ** (n - 1) + extra
    check_tree(build_tree(root, m, n), root)
