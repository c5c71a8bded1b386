"""Graph validation, edge orientation, and the block matrix L."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from so3sync import so3, topology
from so3sync.errors import DuplicateEdge, HasCycle, NotConnected

ROUNDOFF = 1e-12


# ---------------------------------------------------------------------------
# Graph / tree validation


def test_from_pairs_normalizes_and_sorts():
    g = topology.Graph.from_pairs(4, [(3, 1), (4, 2), (2, 1)])
    assert g.edges == ((1, 2), (1, 3), (2, 4))


def test_from_pairs_rejects_self_loop():
    with pytest.raises(ValueError, match="self-loop"):
        topology.Graph.from_pairs(3, [(1, 1), (2, 3)])


def test_from_pairs_rejects_out_of_range():
    with pytest.raises(ValueError, match="outside"):
        topology.Graph.from_pairs(3, [(1, 4)])


def test_from_pairs_rejects_duplicates():
    with pytest.raises(DuplicateEdge):
        topology.Graph.from_pairs(3, [(1, 2), (2, 1), (2, 3)])


def test_validate_tree_rejects_cycle():
    g = topology.Graph.from_pairs(3, [(1, 2), (2, 3), (1, 3)])
    with pytest.raises(HasCycle):
        topology.validate_tree(g)


def test_validate_tree_rejects_too_few_edges():
    g = topology.Graph.from_pairs(3, [(1, 2)])
    with pytest.raises(NotConnected):
        topology.validate_tree(g)


def test_validate_tree_rejects_disconnected_with_right_count():
    # Correct edge count, but a cycle plus an isolated agent.
    g = topology.Graph.from_pairs(4, [(1, 2), (2, 3), (1, 3)])
    with pytest.raises(NotConnected):
        topology.validate_tree(g)


def test_orientation_head_is_larger_id():
    tree = topology.tree_from_pairs(4, [(2, 1), (4, 2), (3, 2)])
    for e in tree.edges:
        assert e.head > e.tail
    assert [(e.tail, e.head) for e in tree.edges] == [(1, 2), (2, 3), (2, 4)]
    assert [e.index for e in tree.edges] == [1, 2, 3]


def test_neighbors_and_edge_index():
    tree = topology.tree_from_pairs(4, [(1, 2), (2, 3), (2, 4)])
    assert tree.neighbors[2] == (1, 3, 4)
    assert tree.neighbors[3] == (2,)
    assert tree.edge_index[frozenset((3, 2))] == 2


# ---------------------------------------------------------------------------
# Edge attitudes and L


def chain_tree(n):
    return topology.tree_from_pairs(n, [(i, i + 1) for i in range(1, n)])


def test_edge_attitudes_definition(rng):
    tree = chain_tree(3)
    attitudes = np.stack([so3.random_rotation(rng) for _ in range(3)])
    r0 = so3.random_rotation(rng)
    ea = topology.build_edge_attitudes(tree, attitudes, r0)
    np.testing.assert_allclose(ea.rbar_leader, r0.T @ attitudes[0], atol=ROUNDOFF)
    # Edge k joins k and k+1 with head k+1.
    for k in range(2):
        np.testing.assert_allclose(
            ea.rbar[k], attitudes[k + 1].T @ attitudes[k], atol=ROUNDOFF
        )


def test_l_block_layout(rng):
    tree = topology.tree_from_pairs(3, [(1, 2), (1, 3)])
    attitudes = np.stack([so3.random_rotation(rng) for _ in range(3)])
    ea = topology.build_edge_attitudes(tree, attitudes, np.eye(3))
    lmat = topology.build_l(tree, ea)
    assert lmat.blocks.shape == (9, 6)
    # Edge 1 = (tail 1, head 2); edge 2 = (tail 1, head 3).
    np.testing.assert_array_equal(lmat.blocks[0:3, 0:3], np.eye(3))
    np.testing.assert_allclose(lmat.blocks[3:6, 0:3], -ea.rbar[0], atol=ROUNDOFF)
    np.testing.assert_array_equal(lmat.blocks[0:3, 3:6], np.eye(3))
    np.testing.assert_allclose(lmat.blocks[6:9, 3:6], -ea.rbar[1], atol=ROUNDOFF)
    np.testing.assert_array_equal(lmat.blocks[3:6, 3:6], np.zeros((3, 3)))


def test_l1_l2_split_respects_leader_index(rng):
    tree = chain_tree(3)
    attitudes = np.stack([so3.random_rotation(rng) for _ in range(3)])
    ea = topology.build_edge_attitudes(tree, attitudes, np.eye(3), leader_index=1)
    lmat = topology.build_l(tree, ea, leader_index=1)
    np.testing.assert_array_equal(lmat.l1, lmat.blocks[3:6])
    np.testing.assert_array_equal(
        lmat.l2, np.vstack([lmat.blocks[0:3], lmat.blocks[6:9]])
    )


def test_min_singular_l2_chain_identity_attitudes():
    # With identity attitudes along a 3-chain, l2 is [[-I, I], [0, -I]]
    # whose smallest singular value is sqrt((3 - sqrt(5)) / 2).
    tree = chain_tree(3)
    attitudes = np.stack([np.eye(3)] * 3)
    ea = topology.build_edge_attitudes(tree, attitudes, np.eye(3))
    lmat = topology.build_l(tree, ea)
    expected = np.sqrt((3.0 - np.sqrt(5.0)) / 2.0)
    assert abs(topology.min_singular_l2(lmat) - expected) < 1e-12


def test_edge_velocities_match_definition(rng):
    tree = topology.tree_from_pairs(4, [(1, 2), (2, 3), (2, 4)])
    attitudes = np.stack([so3.random_rotation(rng) for _ in range(4)])
    omega = rng.standard_normal((4, 3))
    ea = topology.build_edge_attitudes(tree, attitudes, np.eye(3))
    lmat = topology.build_l(tree, ea)
    stacked = topology.edge_velocities(lmat, omega)
    for e in tree.edges:
        expected = omega[e.tail - 1] - ea.rbar[e.index - 1].T @ omega[e.head - 1]
        np.testing.assert_allclose(stacked[e.index - 1], expected, atol=ROUNDOFF)
    flat = topology.edge_velocities(lmat, omega.reshape(-1))
    np.testing.assert_array_equal(flat, stacked.reshape(-1))


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 12), st.integers(0, 10_000))
def test_l2_nonsingular_for_random_trees_and_attitudes(n, seed):
    rng = np.random.default_rng(seed)
    tree = topology.validate_tree(topology.random_tree(n, rng))
    attitudes = np.stack([so3.random_rotation(rng) for _ in range(n)])
    ea = topology.build_edge_attitudes(tree, attitudes, np.eye(3))
    lmat = topology.build_l(tree, ea)
    assert topology.min_singular_l2(lmat) > 1e-8


# ---------------------------------------------------------------------------
# random_tree


def test_random_tree_is_tree(rng):
    for n in (2, 3, 5, 9, 12):
        g = topology.random_tree(n, rng)
        tree = topology.validate_tree(g)  # raises if not a spanning tree
        assert tree.n_edges == n - 1


def test_random_tree_is_seed_deterministic():
    a = topology.random_tree(8, np.random.default_rng(7))
    b = topology.random_tree(8, np.random.default_rng(7))
    assert a.edges == b.edges


def test_random_tree_covers_shapes():
    # Over many draws on 4 agents both stars and chains must appear;
    # a uniform sampler hits every one of the 16 labeled trees.
    seen_star = seen_chain = False
    rng = np.random.default_rng(0)
    for _ in range(200):
        g = topology.random_tree(4, rng)
        degrees = {}
        for i, j in g.edges:
            degrees[i] = degrees.get(i, 0) + 1
            degrees[j] = degrees.get(j, 0) + 1
        top = max(degrees.values())
        seen_star |= top == 3
        seen_chain |= top == 2
    assert seen_star and seen_chain


def test_random_tree_rejects_tiny():
    with pytest.raises(ValueError):
        topology.random_tree(1, np.random.default_rng(0))
