"""Tests for class-index partitions and distribution decomposition."""

import numpy as np
import pytest

from gdkd.numeric import softmax, subset_softmax
from gdkd.partition import (
    Partition,
    decompose,
    make_partition,
    partition_gdkd3,
    partition_target,
    partition_topk,
)


def groups_as_sets(partition):
    return [set(g.tolist()) for g in partition.groups]


class TestTopK:
    def test_plain_ordering(self):
        assert groups_as_sets(partition_topk([3, 1, 4, 2], 2)) == [{0, 2}, {1, 3}]

    def test_ties_break_toward_low_index(self):
        assert groups_as_sets(partition_topk([5, 5, 5, 1], 2)) == [{0, 1}, {2, 3}]

    def test_many_way_tie(self):
        z = np.zeros(100)
        z[0] = 9
        assert set(partition_topk(z, 5).groups[0].tolist()) == {0, 1, 2, 3, 4}

    def test_k_bounds(self):
        with pytest.raises(ValueError):
            partition_topk([1, 2, 3], 0)
        with pytest.raises(ValueError):
            partition_topk([1, 2, 3], 3)

    def test_deterministic_across_calls(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            z = rng.integers(0, 3, 12).astype(float)  # plenty of ties
            k = int(rng.integers(1, 12))
            a = partition_topk(z, k)
            b = partition_topk(z, k)
            assert all(np.array_equal(x, y) for x, y in zip(a.groups, b.groups))


class TestTarget:
    def test_examples(self):
        assert groups_as_sets(partition_target(2, 4)) == [{2}, {0, 1, 3}]
        assert groups_as_sets(partition_target(0, 2)) == [{0}, {1}]
        p = partition_target(99, 100)
        assert groups_as_sets(p)[0] == {99}
        assert groups_as_sets(p)[1] == set(range(99))

    def test_out_of_range(self):
        with pytest.raises(ValueError):
            partition_target(4, 4)
        with pytest.raises(ValueError):
            partition_target(-1, 4)


class TestGdkd3:
    def test_plain_ordering(self):
        assert groups_as_sets(partition_gdkd3([3, 1, 4, 2], 2)) == [{2}, {0}, {1, 3}]

    def test_five_class_ranking(self):
        assert groups_as_sets(partition_gdkd3([1, 2, 3, 4, 5], 3)) == [{4}, {2, 3}, {0, 1}]

    def test_tie_break(self):
        assert groups_as_sets(partition_gdkd3([7, 7, 0], 2)) == [{0}, {1}, {2}]

    def test_k_bounds(self):
        with pytest.raises(ValueError):
            partition_gdkd3([1, 2, 3], 1)
        with pytest.raises(ValueError):
            partition_gdkd3([1, 2, 3], 3)


class TestMakePartition:
    def test_rejects_empty_group(self):
        with pytest.raises(ValueError, match="empty"):
            make_partition([[0, 1], []], 2)

    def test_rejects_single_group(self):
        with pytest.raises(ValueError, match="2 groups"):
            make_partition([[0, 1, 2]], 3)

    def test_rejects_overlap_and_gaps(self):
        with pytest.raises(ValueError, match="cover"):
            make_partition([[0, 1], [1, 2]], 3)
        with pytest.raises(ValueError, match="cover"):
            make_partition([[0], [2]], 3)

    def test_json_round_trip(self):
        p = make_partition([[2, 0], [1, 3, 4]], 5)
        q = Partition.from_json(p.to_json(), 5)
        assert groups_as_sets(p) == groups_as_sets(q)


class TestDecompose:
    def test_uniform_example(self):
        d = decompose([0.25] * 4, make_partition([[0, 1], [2, 3]], 4))
        np.testing.assert_allclose(d.group_masses, [0.5, 0.5])
        np.testing.assert_allclose(d.leaves[0], [0.5, 0.5])
        np.testing.assert_allclose(d.leaves[1], [0.5, 0.5])

    def test_singleton_head_example(self):
        d = decompose([0.7, 0.1, 0.1, 0.1], make_partition([[0], [1, 2, 3]], 4))
        np.testing.assert_allclose(d.group_masses, [0.7, 0.3])
        np.testing.assert_allclose(d.leaves[0], [1.0])
        np.testing.assert_allclose(d.leaves[1], [1 / 3, 1 / 3, 1 / 3])

    def test_three_class_example(self):
        d = decompose([0.6, 0.3, 0.1], make_partition([[0, 1], [2]], 3))
        np.testing.assert_allclose(d.group_masses, [0.9, 0.1])
        np.testing.assert_allclose(d.leaves[0], [2 / 3, 1 / 3])
        np.testing.assert_allclose(d.leaves[1], [1.0])

    def test_reconstruction_property(self):
        rng = np.random.default_rng(41)
        for _ in range(1000):
            c = int(rng.integers(2, 40))
            p = rng.dirichlet(np.ones(c))
            cut = int(rng.integers(1, c))
            perm = rng.permutation(c)
            part = make_partition([perm[:cut], perm[cut:]], c)
            d = decompose(p, part)
            assert abs(d.group_masses.sum() - 1.0) < 1e-9
            for leaf in d.leaves:
                assert abs(leaf.sum() - 1.0) < 1e-9
            np.testing.assert_allclose(d.reconstruct(), p, atol=1e-9)

    def test_leaves_match_subset_softmax(self):
        # Two routes to the same leaf distribution must agree: softmax
        # then renormalize, versus renormalized softmax over the group.
        rng = np.random.default_rng(43)
        for _ in range(1000):
            c = int(rng.integers(3, 30))
            z = rng.normal(0, 4, c)
            t = float(rng.choice([1.0, 2.0, 4.0]))
            k = int(rng.integers(1, c))
            part = partition_topk(z, k)
            d = decompose(softmax(z, t), part)
            for g, leaf in zip(part.groups, d.leaves):
                np.testing.assert_allclose(leaf, subset_softmax(z, g, t), atol=1e-9)

    def test_nontop_renormalization_strictly_enhances(self):
        rng = np.random.default_rng(47)
        for _ in range(1000):
            c = int(rng.integers(2, 50))
            z = rng.normal(0, 3, c)
            p = softmax(z, 1.0)
            part = partition_topk(z, 1)
            d = decompose(p, part)
            assert (d.leaves[1] > p[part.groups[1]]).all()

    def test_degenerate_mass_gets_uniform_leaf_and_flag(self):
        part = make_partition([[0, 1], [2, 3]], 4)
        d = decompose([0.5, 0.5, 0.0, 0.0], part)
        assert d.degenerate == (False, True)
        np.testing.assert_allclose(d.leaves[1], [0.5, 0.5])
        assert d.any_degenerate()

    def test_size_mismatch_rejected(self):
        with pytest.raises(ValueError, match="classes"):
            decompose([0.5, 0.5], make_partition([[0], [1, 2]], 3))
