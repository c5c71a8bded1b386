"""The synchronization torque law and its gain containers.

Each agent i applies

    tau_i = - k_r0 psi(A_0 R_0^T R_i)          (informed agent only)
            - k_r sum_j psi(A_ij R_j^T R_i)     (j over neighbors)
            - k_w w_i

with symmetric positive definite weight matrices A. The stacked form of
the same law is tau = -k_r0 Psi0 - k_r L Psibar - k_w w, where Psibar
collects psi(A_k rbar_k) over the oriented edges and Psi0 places
psi(A_0 rbar_leader) at the informed agent. local_torque and
stacked_torque agree to round-off; the equivalence rests on
psi(A R) = -psi(R^T A) = R^T psi(R A) for rotations R.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from . import topology
from .errors import MissingLeaderAttitude, UnknownNeighbor, ValidationError
from .so3 import psi

# Two eigenvalues of a weight matrix closer than this gap count as
# repeated, which would make the rotated-equilibrium axes ambiguous.
EIG_GAP = 1e-9

# Symmetry budget on A - A^T (Frobenius) for weight matrices.
SYM_TOL = 1e-12


def _check_weight(a, name):
    a = np.asarray(a, dtype=float)
    if a.shape != (3, 3):
        raise ValidationError("BadWeightShape", f"{name} must be (3, 3), got {a.shape}")
    if np.linalg.norm(a - a.T) > SYM_TOL:
        raise ValidationError("NonSymmetricWeight", f"{name} is not symmetric")
    eig = np.linalg.eigvalsh(a)
    if eig[0] <= 0.0:
        raise ValidationError(
            "NonPositiveDefiniteGain", f"{name} has eigenvalue {eig[0]:.3e} <= 0"
        )
    if eig[1] - eig[0] <= EIG_GAP or eig[2] - eig[1] <= EIG_GAP:
        raise ValidationError(
            "RepeatedEigenvalue", f"{name} eigenvalues {eig} are not distinct"
        )
    return a


@dataclasses.dataclass(frozen=True)
class GainAssignment:
    """Scalar gains plus one weight matrix per tree slot.

    Attributes:
        k_r0: reference-tracking gain of the informed agent.
        k_r: neighbor-coupling gain shared by all edges.
        k_w: velocity damping gain shared by all agents.
        a_leader: (3, 3) weight on the reference error.
        a_edges: (n_edges, 3, 3) weights, edge k at slice k-1.

    Every weight must be symmetric positive definite with distinct
    eigenvalues; every scalar gain must be positive.
    """

    k_r0: float
    k_r: float
    k_w: float
    a_leader: np.ndarray
    a_edges: np.ndarray

    def __post_init__(self):
        for name in ("k_r0", "k_r", "k_w"):
            v = float(getattr(self, name))
            if v <= 0.0:
                raise ValidationError("NonPositiveGain", f"{name} = {v} must be > 0")
            object.__setattr__(self, name, v)
        a0 = _check_weight(self.a_leader, "a_leader")
        a0.flags.writeable = False
        object.__setattr__(self, "a_leader", a0)
        aes = np.asarray(self.a_edges, dtype=float)
        if aes.ndim != 3 or aes.shape[1:] != (3, 3):
            raise ValidationError(
                "BadWeightShape", f"a_edges must be (n_edges, 3, 3), got {aes.shape}"
            )
        aes = np.stack([_check_weight(a, f"a_edges[{k}]") for k, a in enumerate(aes)])
        aes.flags.writeable = False
        object.__setattr__(self, "a_edges", aes)

    @property
    def n_edges(self):
        return self.a_edges.shape[0]


def local_torque(
    tree, gains, agent, r_i, omega_i, neighbor_attitudes, r0=None, leader=1
):
    """Torque of one agent from its own measurements.

    Args:
        tree: OrientedTree.
        gains: GainAssignment with one a_edges slice per tree edge.
        agent: agent id, 1-based.
        r_i: (3, 3) attitude of the agent.
        omega_i: (3,) body angular velocity of the agent.
        neighbor_attitudes: dict neighbor id -> (3, 3) attitude. Keys
            must equal the agent's neighbor set in the tree exactly.
        r0: (3, 3) reference attitude; required iff agent == leader.
        leader: id of the informed agent.

    Raises:
        UnknownNeighbor: neighbor_attitudes keys differ from the tree.
        MissingLeaderAttitude: agent is the informed one and r0 is None.
    """
    if gains.n_edges != tree.n_edges:
        raise ValidationError(
            "WeightCountMismatch",
            f"{gains.n_edges} edge weights for {tree.n_edges} edges",
        )
    expected = set(tree.neighbors[agent])
    got = set(neighbor_attitudes)
    if got != expected:
        raise UnknownNeighbor(
            f"agent {agent} has neighbors {sorted(expected)}, got {sorted(got)}"
        )
    r_i = np.asarray(r_i, dtype=float)
    tau = -gains.k_w * np.asarray(omega_i, dtype=float)
    if agent == leader:
        if r0 is None:
            raise MissingLeaderAttitude(f"agent {agent} is informed but r0 is missing")
        r0 = np.asarray(r0, dtype=float)
        tau = tau - gains.k_r0 * psi(gains.a_leader @ r0.T @ r_i)
    for j, r_j in neighbor_attitudes.items():
        k = tree.edge_index[frozenset((agent, j))]
        a = gains.a_edges[k - 1]
        tau = tau - gains.k_r * psi(a @ np.asarray(r_j, dtype=float).T @ r_i)
    return tau


def stacked_psi(tree, gains, edge_attitudes, leader=1):
    """Psi0 (3N,) and Psibar (3(N-1),) of the stacked control law.

    Psi0 carries psi(A_0 rbar_leader) in the informed agent's block and
    zeros elsewhere; Psibar stacks psi(A_k rbar_k) over the edges.
    """
    psi0 = np.zeros(3 * tree.n_agents)
    i = 3 * (leader - 1)
    psi0[i : i + 3] = psi(gains.a_leader @ edge_attitudes.rbar_leader)
    rbar = edge_attitudes.rbar
    psibar = np.concatenate(
        [psi(gains.a_edges[k] @ rbar[k]) for k in range(tree.n_edges)]
    )
    return psi0, psibar


def stacked_torque(tree, gains, attitudes, omegas, r0, leader=1):
    """All agent torques at once, through the compact form of the law.

    Args:
        tree: OrientedTree.
        gains: GainAssignment.
        attitudes: (n_agents, 3, 3) stacked attitudes.
        omegas: (n_agents, 3) stacked body angular velocities.
        r0: (3, 3) reference attitude.
        leader: id of the informed agent.

    Returns:
        (n_agents, 3) torques, agent i at row i - 1.
    """
    n = tree.n_agents
    attitudes = np.asarray(attitudes, dtype=float)
    omegas = np.asarray(omegas, dtype=float)
    ea = topology.build_edge_attitudes(tree, attitudes, r0, leader_index=leader - 1)
    lmat = topology.build_l(tree, ea, leader_index=leader - 1)
    psi0, psibar = stacked_psi(tree, gains, ea, leader=leader)
    flat = -gains.k_r0 * psi0 - gains.k_r * (lmat.blocks @ psibar)
    return flat.reshape(n, 3) - gains.k_w * omegas
