"""Interconnection graphs, oriented spanning trees, and the edge matrix L.

Agents are numbered 1..N. An undirected graph on the agents is accepted
only if it is a tree; the tree is then oriented edge by edge with the
larger agent id as head and the smaller as tail, and edges are numbered
1..N-1 in lexicographic (tail, head) order. For edge k = (head j,
tail i) the relative attitude is rbar_k = R_j^T R_i and the relative
velocity is wbar_k = w_i - rbar_k^T w_j, so that the stacked relative
velocity is L^T w with the block matrix L defined by

    L[i, k] = -rbar_k  if i is the head of edge k,
    L[i, k] = I        if i is the tail of edge k,
    L[i, k] = 0        otherwise.
"""

from __future__ import annotations

import dataclasses
import heapq
from functools import cached_property

import numpy as np

from .errors import DuplicateEdge, HasCycle, NotConnected


@dataclasses.dataclass(frozen=True)
class Graph:
    """Undirected simple graph on agents 1..n_agents."""

    n_agents: int
    edges: tuple  # tuple of (i, j) pairs with i < j, sorted

    @classmethod
    def from_pairs(cls, n_agents, pairs):
        """Builds a graph from unordered agent pairs.

        Raises:
            ValueError: bad agent count, id out of range, or self-loop.
            DuplicateEdge: the same pair occurs twice.
        """
        n = int(n_agents)
        if n < 2:
            raise ValueError(f"need at least 2 agents, got {n}")
        seen = set()
        edges = []
        for pair in pairs:
            i, j = (int(x) for x in pair)
            if not (1 <= i <= n and 1 <= j <= n):
                raise ValueError(f"edge ({i}, {j}) references an agent outside 1..{n}")
            if i == j:
                raise ValueError(f"self-loop at agent {i}")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise DuplicateEdge(f"edge {key} appears more than once")
            seen.add(key)
            edges.append(key)
        edges.sort()
        return cls(n, tuple(edges))


@dataclasses.dataclass(frozen=True)
class OrientedEdge:
    """Edge k with head the larger agent id and tail the smaller."""

    index: int  # 1-based edge number
    head: int
    tail: int


@dataclasses.dataclass(frozen=True)
class OrientedTree:
    """A validated spanning tree with numbered, oriented edges."""

    n_agents: int
    edges: tuple  # tuple of OrientedEdge, index k at position k-1

    @property
    def n_edges(self):
        return self.n_agents - 1

    @cached_property
    def neighbors(self):
        """Map agent id -> sorted tuple of neighbor ids."""
        nbrs = {i: [] for i in range(1, self.n_agents + 1)}
        for e in self.edges:
            nbrs[e.head].append(e.tail)
            nbrs[e.tail].append(e.head)
        return {i: tuple(sorted(v)) for i, v in nbrs.items()}

    @cached_property
    def edge_index(self):
        """Map frozenset({i, j}) -> 1-based edge number."""
        return {frozenset((e.head, e.tail)): e.index for e in self.edges}

    @cached_property
    def heads0(self):
        """(n_edges,) int64 array of 0-based head agent indices."""
        return np.array([e.head - 1 for e in self.edges], dtype=np.int64)

    @cached_property
    def tails0(self):
        """(n_edges,) int64 array of 0-based tail agent indices."""
        return np.array([e.tail - 1 for e in self.edges], dtype=np.int64)


def validate_tree(graph):
    """Checks that a graph is a spanning tree and orients it.

    Raises:
        HasCycle: edge count exceeds n_agents - 1.
        NotConnected: too few edges, or the edges do not span all agents.
    """
    n = graph.n_agents
    m = len(graph.edges)
    if m > n - 1:
        raise HasCycle(f"{m} edges on {n} agents implies a cycle")
    if m < n - 1:
        raise NotConnected(f"{m} edges cannot connect {n} agents")
    # Union-find over exactly n - 1 distinct edges: connected iff acyclic.
    parent = list(range(n + 1))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in graph.edges:
        ri, rj = find(i), find(j)
        if ri == rj:
            raise NotConnected("edges do not span all agents")
        parent[ri] = rj
    oriented = tuple(
        OrientedEdge(index=k + 1, head=j, tail=i)
        for k, (i, j) in enumerate(graph.edges)
    )
    return OrientedTree(n_agents=n, edges=oriented)


def tree_from_pairs(n_agents, pairs):
    """Convenience: Graph.from_pairs followed by validate_tree."""
    return validate_tree(Graph.from_pairs(n_agents, pairs))


@dataclasses.dataclass(frozen=True)
class EdgeAttitudes:
    """Relative attitudes along the oriented edges, plus the leader's.

    Attributes:
        rbar_leader: (3, 3) reference error R_0^T R_l of the informed
            agent l against the exogenous reference.
        rbar: (n_edges, 3, 3) with rbar[k-1] = R_head^T R_tail of edge k.
    """

    rbar_leader: np.ndarray
    rbar: np.ndarray


def build_edge_attitudes(tree, attitudes, r0, leader_index=0):
    """Computes EdgeAttitudes from absolute attitudes.

    Args:
        tree: OrientedTree.
        attitudes: (n_agents, 3, 3) stacked rotation matrices, agent i
            at slice i-1.
        r0: (3, 3) reference attitude.
        leader_index: 0-based index of the informed agent.
    """
    attitudes = np.asarray(attitudes, dtype=float)
    heads = attitudes[tree.heads0]
    tails = attitudes[tree.tails0]
    rbar = np.matmul(heads.transpose(0, 2, 1), tails)
    rbar_leader = np.asarray(r0, dtype=float).T @ attitudes[leader_index]
    return EdgeAttitudes(rbar_leader=rbar_leader, rbar=rbar)


@dataclasses.dataclass(frozen=True)
class LMatrix:
    """The (3N, 3(N-1)) edge matrix L and its leader split.

    l1 is the leader's 3-row block, l2 the remaining 3(N-1) rows. For a
    tree, l2 is square and nonsingular whatever the edge attitudes are,
    because eliminating leaves one by one always meets an invertible
    diagonal block (I or -rbar_k).
    """

    n_agents: int
    leader_index: int
    blocks: np.ndarray

    @cached_property
    def l1(self):
        i = 3 * self.leader_index
        return self.blocks[i : i + 3]

    @cached_property
    def l2(self):
        i = 3 * self.leader_index
        return np.delete(self.blocks, slice(i, i + 3), axis=0)


def build_l(tree, edge_attitudes, leader_index=0):
    """Assembles the block matrix L for the given edge attitudes."""
    n = tree.n_agents
    m = tree.n_edges
    rbar = np.asarray(edge_attitudes.rbar, dtype=float)
    blocks = np.zeros((3 * n, 3 * m))
    for e in tree.edges:
        k = e.index - 1
        blocks[3 * (e.tail - 1) : 3 * e.tail, 3 * k : 3 * k + 3] = np.eye(3)
        blocks[3 * (e.head - 1) : 3 * e.head, 3 * k : 3 * k + 3] = -rbar[k]
    return LMatrix(n_agents=n, leader_index=leader_index, blocks=blocks)


def min_singular_l2(lmat):
    """Smallest singular value of the follower block l2."""
    return float(np.linalg.svd(lmat.l2, compute_uv=False)[-1])


def edge_velocities(lmat, omega):
    """Stacked relative velocities L^T w from stacked absolute ones.

    Accepts omega as (n_agents, 3) or flat (3 n_agents,); returns the
    matching shape with one 3-slice per edge.
    """
    w = np.asarray(omega, dtype=float)
    flat = w.reshape(-1)
    out = lmat.blocks.T @ flat
    if w.ndim == 2:
        return out.reshape(-1, 3)
    return out


def random_tree(n_agents, rng):
    """Uniformly random labeled tree on n_agents, via a Pruefer sequence."""
    n = int(n_agents)
    if n < 2:
        raise ValueError(f"need at least 2 agents, got {n}")
    if n == 2:
        return Graph.from_pairs(2, [(1, 2)])
    seq = rng.integers(1, n + 1, size=n - 2)
    degree = np.ones(n + 1, dtype=np.int64)
    for s in seq:
        degree[s] += 1
    pairs = []
    # Smallest-leaf decoding: repeatedly join the smallest degree-1 node
    # not in the remaining sequence to the next sequence entry.
    leaves = [i for i in range(1, n + 1) if degree[i] == 1]
    heapq.heapify(leaves)
    for s in seq:
        leaf = heapq.heappop(leaves)
        pairs.append((leaf, int(s)))
        degree[s] -= 1
        if degree[s] == 1:
            heapq.heappush(leaves, int(s))
    u = heapq.heappop(leaves)
    v = heapq.heappop(leaves)
    pairs.append((u, v))
    return Graph.from_pairs(n, pairs)
