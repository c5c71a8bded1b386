"""Rigid-body attitude dynamics in closed loop with the control law.

The state of N bodies is (attitudes, velocities) with attitudes stacked
(N, 3, 3) and body angular velocities (N, 3). Trajectories are produced
by classical RK4 in the ambient matrix space with a polar projection
back onto the rotation group after every step; the step size is capped
at H_MAX and a velocity norm beyond OMEGA_MAX aborts the run.
"""

from __future__ import annotations

import dataclasses
from functools import cached_property

import numpy as np

from . import _kernels
from ._kernels import KernelArrays, _pure
from .errors import IntegrationDiverged, ValidationError
from .so3 import check_rotation

# Hard cap on the RK4 step size.
H_MAX = 0.01

# A single body velocity norm beyond this aborts integration.
OMEGA_MAX = 1e3

# Symmetry budget on J - J^T (Frobenius).
SYM_TOL = 1e-12


@dataclasses.dataclass(frozen=True)
class InertiaSet:
    """Inertia matrices of all agents, agent i at slice i - 1.

    Every matrix must be symmetric positive definite.
    """

    matrices: np.ndarray

    def __post_init__(self):
        m = np.array(self.matrices, dtype=float, order="C")
        if m.ndim != 3 or m.shape[1:] != (3, 3):
            raise ValidationError(
                "BadInertiaShape", f"expected (n_agents, 3, 3), got {m.shape}"
            )
        for i, j in enumerate(m):
            if np.linalg.norm(j - j.T) > SYM_TOL:
                raise ValidationError(
                    "NonSymmetricInertia", f"inertia of agent {i + 1} is not symmetric"
                )
            eig = np.linalg.eigvalsh(j)
            if eig[0] <= 0.0:
                raise ValidationError(
                    "NonPositiveDefiniteInertia",
                    f"inertia of agent {i + 1} has eigenvalue {eig[0]:.3e} <= 0",
                )
        m.flags.writeable = False
        object.__setattr__(self, "matrices", m)

    @classmethod
    def from_diagonals(cls, diagonals):
        """Builds the set from (n_agents, 3) principal moments."""
        d = np.asarray(diagonals, dtype=float)
        return cls(np.stack([np.diag(row) for row in d]))

    @property
    def n_agents(self):
        return self.matrices.shape[0]


@dataclasses.dataclass(frozen=True)
class SystemState:
    """Stacked attitudes (N, 3, 3) and body velocities (N, 3)."""

    attitudes: np.ndarray
    omegas: np.ndarray

    def __post_init__(self):
        r = np.array(self.attitudes, dtype=float, order="C")
        w = np.array(self.omegas, dtype=float, order="C")
        if r.ndim != 3 or r.shape[1:] != (3, 3):
            raise ValueError(f"attitudes must be (n_agents, 3, 3), got {r.shape}")
        if w.shape != (r.shape[0], 3):
            raise ValueError(
                f"omegas must be ({r.shape[0]}, 3) to match attitudes, got {w.shape}"
            )
        for i, ri in enumerate(r):
            check_rotation(ri, name=f"attitude of agent {i + 1}")
        if not np.all(np.isfinite(w)):
            raise ValueError("omegas contain non-finite entries")
        r.flags.writeable = False
        w.flags.writeable = False
        object.__setattr__(self, "attitudes", r)
        object.__setattr__(self, "omegas", w)

    @property
    def n_agents(self):
        return self.attitudes.shape[0]


@dataclasses.dataclass(frozen=True)
class ClosedLoopSystem:
    """Everything fixed along a trajectory: tree, gains, reference, inertia.

    Attributes:
        tree: OrientedTree.
        gains: GainAssignment with one edge weight per tree edge.
        r0: (3, 3) constant reference attitude.
        inertia: InertiaSet covering all agents.
        leader: id of the informed agent, 1-based.
    """

    tree: object
    gains: object
    r0: np.ndarray
    inertia: InertiaSet
    leader: int = 1

    def __post_init__(self):
        r0 = check_rotation(np.array(self.r0, dtype=float, order="C"), name="r0")
        r0.flags.writeable = False
        object.__setattr__(self, "r0", r0)
        n = self.tree.n_agents
        if self.gains.n_edges != self.tree.n_edges:
            raise ValidationError(
                "WeightCountMismatch",
                f"{self.gains.n_edges} edge weights for {self.tree.n_edges} edges",
            )
        if self.inertia.n_agents != n:
            raise ValidationError(
                "InertiaCountMismatch",
                f"{self.inertia.n_agents} inertia matrices for {n} agents",
            )
        if not 1 <= int(self.leader) <= n:
            raise ValidationError(
                "BadLeader", f"leader {self.leader} is not an agent id in 1..{n}"
            )
        object.__setattr__(self, "leader", int(self.leader))

    @property
    def n_agents(self):
        return self.tree.n_agents

    @property
    def n_edges(self):
        return self.tree.n_edges

    @cached_property
    def params(self):
        """KernelArrays snapshot consumed by the integrator kernels."""
        jmat = np.array(self.inertia.matrices, dtype=float, order="C")
        return KernelArrays(
            leader=self.leader - 1,
            heads=np.array(self.tree.heads0, dtype=np.int64),
            tails=np.array(self.tree.tails0, dtype=np.int64),
            a_edges=np.array(self.gains.a_edges, dtype=float, order="C"),
            a_leader=np.array(self.gains.a_leader, dtype=float, order="C"),
            r0=np.array(self.r0, dtype=float, order="C"),
            k_r0=self.gains.k_r0,
            k_r=self.gains.k_r,
            k_w=self.gains.k_w,
            jmat=jmat,
            jinv=np.ascontiguousarray(np.linalg.inv(jmat)),
        )


@dataclasses.dataclass(frozen=True)
class Trajectory:
    """Sampled closed-loop run.

    All arrays share the leading sample axis. leader_errors[s, i] is
    |R_0^T R_i|_I of agent i + 1; edge_errors[s, k] is |rbar_k|_I and
    edge_velocity_errors[s, k] is |wbar_k| of edge k + 1.
    """

    times: np.ndarray
    attitudes: np.ndarray
    omegas: np.ndarray
    lyapunov: np.ndarray
    leader_errors: np.ndarray
    edge_errors: np.ndarray
    edge_velocity_errors: np.ndarray
    backend: str

    @property
    def n_samples(self):
        return self.times.shape[0]

    @property
    def n_agents(self):
        return self.attitudes.shape[1]

    def final_state(self):
        return SystemState(self.attitudes[-1], self.omegas[-1])


def derivative(system, state):
    """Closed-loop time derivative (rdot, wdot) at a state."""
    return _pure.closed_loop_derivative(
        np.asarray(state.attitudes, dtype=float),
        np.asarray(state.omegas, dtype=float),
        system.params,
    )


def lyapunov_value(system, state):
    """Synchronization energy V of a state (see analysis for its role)."""
    return _pure.lyapunov(
        np.asarray(state.attitudes, dtype=float),
        np.asarray(state.omegas, dtype=float),
        system.params,
    )


def _check_step_size(h):
    h = float(h)
    if not 0.0 < h <= H_MAX:
        raise ValueError(f"step size must be in (0, {H_MAX}], got {h}")
    return h


def _raise_for_status(status, t_lo, t_hi):
    if status == _kernels.STATUS_DIVERGED:
        raise IntegrationDiverged(
            f"velocity norm exceeded {OMEGA_MAX:g} between t={t_lo:.6g} and t={t_hi:.6g}"
        )
    if status == _kernels.STATUS_PROJECTION:
        raise IntegrationDiverged(
            f"attitude left the projection trust region between "
            f"t={t_lo:.6g} and t={t_hi:.6g}"
        )


def step(system, state, h, backend=None):
    """One RK4 step of length h; returns the next SystemState."""
    h = _check_step_size(h)
    r = np.array(state.attitudes, dtype=float, order="C")
    w = np.array(state.omegas, dtype=float, order="C")
    status = _kernels.rk4_run(r, w, system.params, h, 1, OMEGA_MAX, backend=backend)
    _raise_for_status(status, 0.0, h)
    return SystemState(r, w)


def _sample_metrics(r, w, p):
    v = _pure.lyapunov(r, w, p)
    leader_errors = 0.5 * np.sqrt(
        np.clip(3.0 - np.einsum("ab,nab->n", p.r0, r), 0.0, None)
    )
    if p.heads.size:
        rbar = np.matmul(r[p.heads].transpose(0, 2, 1), r[p.tails])
        edge_errors = 0.5 * np.sqrt(
            np.clip(3.0 - np.einsum("kaa->k", rbar), 0.0, None)
        )
        wbar = w[p.tails] - np.einsum("kba,kb->ka", rbar, w[p.heads])
        edge_velocity_errors = np.sqrt(np.einsum("ka,ka->k", wbar, wbar))
    else:
        edge_errors = np.zeros(0)
        edge_velocity_errors = np.zeros(0)
    return v, leader_errors, edge_errors, edge_velocity_errors


def simulate(
    system,
    initial,
    tf,
    h=1e-3,
    sample_every=10,
    backend=None,
    stop_when_lyapunov_below=None,
):
    """Integrates the closed loop from t=0 to t=tf.

    Args:
        system: ClosedLoopSystem.
        initial: SystemState at t=0.
        tf: final time; must be a nonnegative integer multiple of h.
            tf=0 returns the single t=0 sample without integrating.
        h: RK4 step size, in (0, H_MAX].
        sample_every: record every this many steps (plus t=0).
        backend: kernel choice, see _kernels.resolve_backend.
        stop_when_lyapunov_below: if set, stop at the first recorded
            sample with V at or below this value.

    Returns:
        Trajectory. The t=0 sample is always included; the last sample
        is tf unless stopped early.

    Raises:
        IntegrationDiverged: velocity guard or projection failure.
        ValueError: bad step size or tf not a multiple of h.
    """
    h = _check_step_size(h)
    tf = float(tf)
    if tf < 0.0:
        raise ValueError(f"tf must be nonnegative, got {tf}")
    n_steps = int(round(tf / h))
    if abs(n_steps * h - tf) > 1e-9 * max(1.0, tf):
        raise ValueError(f"tf={tf} is not an integer multiple of h={h}")
    sample_every = int(sample_every)
    if sample_every < 1:
        raise ValueError(f"sample_every must be >= 1, got {sample_every}")
    backend_name = _kernels.resolve_backend(backend)
    p = system.params
    if initial.n_agents != system.n_agents:
        raise ValidationError(
            "StateCountMismatch",
            f"initial state has {initial.n_agents} agents, system {system.n_agents}",
        )
    r = np.array(initial.attitudes, dtype=float, order="C")
    w = np.array(initial.omegas, dtype=float, order="C")

    times = [0.0]
    atts = [r.copy()]
    omegas = [w.copy()]
    metrics = [_sample_metrics(r, w, p)]

    done = 0
    while done < n_steps:
        chunk = min(sample_every, n_steps - done)
        status = _kernels.rk4_run(
            r, w, p, h, chunk, OMEGA_MAX, backend=backend_name
        )
        _raise_for_status(status, done * h, (done + chunk) * h)
        done += chunk
        times.append(done * h)
        atts.append(r.copy())
        omegas.append(w.copy())
        m = _sample_metrics(r, w, p)
        metrics.append(m)
        if stop_when_lyapunov_below is not None and m[0] <= stop_when_lyapunov_below:
            break

    v, le, ee, ev = (np.array([m[i] for m in metrics]) for i in range(4))
    return Trajectory(
        times=np.array(times),
        attitudes=np.stack(atts),
        omegas=np.stack(omegas),
        lyapunov=v,
        leader_errors=le,
        edge_errors=ee,
        edge_velocity_errors=ev,
        backend=backend_name,
    )
