"""Gain validation and the local/stacked equivalence of the torque law."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from so3sync import so3, topology
from so3sync.controller import GainAssignment, local_torque, stacked_psi, stacked_torque
from so3sync.errors import MissingLeaderAttitude, UnknownNeighbor, ValidationError

EQUIV_TOL = 1e-12

A_LEADER = np.diag([5.0, 8.0, 10.0])
A_EDGE = np.diag([6.0, 8.0, 10.0])


def simple_gains(n_edges):
    return GainAssignment(
        k_r0=2.5,
        k_r=2.0,
        k_w=1.5,
        a_leader=A_LEADER,
        a_edges=np.stack([A_EDGE + 0.1 * k for k in range(n_edges)]),
    )


def random_weight(rng):
    lam = np.sort(rng.uniform(1.0, 10.0, size=3)) + np.array([0.0, 1.0, 2.0])
    q = so3.random_rotation(rng)
    return q @ np.diag(lam) @ q.T


# ---------------------------------------------------------------------------
# GainAssignment validation


def test_gains_accept_valid_input():
    g = simple_gains(2)
    assert g.n_edges == 2
    assert not g.a_leader.flags.writeable
    assert not g.a_edges.flags.writeable


@pytest.mark.parametrize("field", ["k_r0", "k_r", "k_w"])
def test_gains_reject_non_positive_scalars(field):
    kwargs = dict(
        k_r0=1.0, k_r=1.0, k_w=1.0, a_leader=A_LEADER, a_edges=A_EDGE[None]
    )
    kwargs[field] = 0.0
    with pytest.raises(ValidationError, match="NonPositiveGain"):
        GainAssignment(**kwargs)


def test_gains_reject_repeated_eigenvalues():
    with pytest.raises(ValidationError, match="RepeatedEigenvalue"):
        GainAssignment(
            k_r0=1.0,
            k_r=1.0,
            k_w=1.0,
            a_leader=np.diag([5.0, 5.0, 8.0]),
            a_edges=A_EDGE[None],
        )


def test_gains_reject_indefinite_weight():
    with pytest.raises(ValidationError, match="NonPositiveDefiniteGain"):
        GainAssignment(
            k_r0=1.0,
            k_r=1.0,
            k_w=1.0,
            a_leader=np.diag([-1.0, 2.0, 3.0]),
            a_edges=A_EDGE[None],
        )


def test_gains_reject_asymmetric_weight():
    a = A_LEADER.copy()
    a[0, 1] = 0.5
    with pytest.raises(ValidationError, match="NonSymmetricWeight"):
        GainAssignment(k_r0=1.0, k_r=1.0, k_w=1.0, a_leader=a, a_edges=A_EDGE[None])


def test_gains_reject_bad_edge_stack_shape():
    with pytest.raises(ValidationError, match="BadWeightShape"):
        GainAssignment(
            k_r0=1.0, k_r=1.0, k_w=1.0, a_leader=A_LEADER, a_edges=np.eye(3)
        )


# ---------------------------------------------------------------------------
# local_torque argument handling


def test_local_torque_requires_exact_neighbor_set(rng):
    tree = topology.tree_from_pairs(3, [(1, 2), (2, 3)])
    gains = simple_gains(2)
    r = [so3.random_rotation(rng) for _ in range(3)]
    with pytest.raises(UnknownNeighbor):
        local_torque(tree, gains, 2, r[1], np.zeros(3), {1: r[0]})
    with pytest.raises(UnknownNeighbor):
        local_torque(
            tree, gains, 2, r[1], np.zeros(3), {1: r[0], 2: r[1], 3: r[2]}
        )


def test_local_torque_requires_reference_for_informed_agent(rng):
    tree = topology.tree_from_pairs(2, [(1, 2)])
    gains = simple_gains(1)
    r = [so3.random_rotation(rng) for _ in range(2)]
    with pytest.raises(MissingLeaderAttitude):
        local_torque(tree, gains, 1, r[0], np.zeros(3), {2: r[1]}, r0=None)


def test_local_torque_pure_damping_when_aligned(rng):
    tree = topology.tree_from_pairs(2, [(1, 2)])
    gains = simple_gains(1)
    r = so3.random_rotation(rng)
    w = rng.standard_normal(3)
    tau = local_torque(tree, gains, 1, r, w, {2: r}, r0=r)
    np.testing.assert_allclose(tau, -gains.k_w * w, atol=EQUIV_TOL)


# ---------------------------------------------------------------------------
# stacked form


def test_stacked_psi_places_leader_block(rng):
    tree = topology.tree_from_pairs(3, [(1, 2), (2, 3)])
    gains = simple_gains(2)
    attitudes = np.stack([so3.random_rotation(rng) for _ in range(3)])
    r0 = so3.random_rotation(rng)
    ea = topology.build_edge_attitudes(tree, attitudes, r0)
    psi0, psibar = stacked_psi(tree, gains, ea)
    assert psi0.shape == (9,) and psibar.shape == (6,)
    np.testing.assert_allclose(
        psi0[0:3], so3.psi(gains.a_leader @ ea.rbar_leader), atol=EQUIV_TOL
    )
    np.testing.assert_array_equal(psi0[3:], np.zeros(6))
    for k in range(2):
        np.testing.assert_allclose(
            psibar[3 * k : 3 * k + 3],
            so3.psi(gains.a_edges[k] @ ea.rbar[k]),
            atol=EQUIV_TOL,
        )


def test_stacked_equals_local_on_fixed_tree(rng):
    tree = topology.tree_from_pairs(4, [(1, 2), (2, 3), (2, 4)])
    gains = GainAssignment(
        k_r0=2.5,
        k_r=2.0,
        k_w=1.5,
        a_leader=random_weight(rng),
        a_edges=np.stack([random_weight(rng) for _ in range(3)]),
    )
    attitudes = np.stack([so3.random_rotation(rng) for _ in range(4)])
    omegas = rng.uniform(-3.0, 3.0, (4, 3))
    r0 = so3.random_rotation(rng)
    stacked = stacked_torque(tree, gains, attitudes, omegas, r0)
    for agent in range(1, 5):
        local = local_torque(
            tree,
            gains,
            agent,
            attitudes[agent - 1],
            omegas[agent - 1],
            {j: attitudes[j - 1] for j in tree.neighbors[agent]},
            r0=r0 if agent == 1 else None,
        )
        np.testing.assert_allclose(local, stacked[agent - 1], atol=EQUIV_TOL)


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 8), st.integers(0, 10_000))
def test_stacked_equals_local_on_random_trees(n, seed):
    rng = np.random.default_rng(seed)
    tree = topology.validate_tree(topology.random_tree(n, rng))
    gains = GainAssignment(
        k_r0=rng.uniform(0.5, 5.0),
        k_r=rng.uniform(0.5, 5.0),
        k_w=rng.uniform(0.5, 5.0),
        a_leader=random_weight(rng),
        a_edges=np.stack([random_weight(rng) for _ in range(n - 1)]),
    )
    attitudes = np.stack([so3.random_rotation(rng) for _ in range(n)])
    omegas = rng.uniform(-3.0, 3.0, (n, 3))
    r0 = so3.random_rotation(rng)
    stacked = stacked_torque(tree, gains, attitudes, omegas, r0)
    for agent in range(1, n + 1):
        local = local_torque(
            tree,
            gains,
            agent,
            attitudes[agent - 1],
            omegas[agent - 1],
            {j: attitudes[j - 1] for j in tree.neighbors[agent]},
            r0=r0 if agent == 1 else None,
        )
        np.testing.assert_allclose(local, stacked[agent - 1], atol=EQUIV_TOL)


def test_stacked_torque_zero_on_synchronized_rest_state(rng):
    tree = topology.tree_from_pairs(3, [(1, 2), (2, 3)])
    gains = simple_gains(2)
    r0 = so3.random_rotation(rng)
    attitudes = np.stack([r0] * 3)
    tau = stacked_torque(tree, gains, attitudes, np.zeros((3, 3)), r0)
    np.testing.assert_allclose(tau, np.zeros((3, 3)), atol=EQUIV_TOL)


def test_weight_count_mismatch_is_rejected(rng):
    tree = topology.tree_from_pairs(3, [(1, 2), (2, 3)])
    gains = simple_gains(1)
    r = so3.random_rotation(rng)
    with pytest.raises(ValidationError, match="WeightCountMismatch"):
        local_torque(tree, gains, 3, r, np.zeros(3), {2: r})
