"""Numpy implementation of the closed-loop RK4 integrator.

This is the reference kernel: the compiled extension in _core.pyx mirrors
it loop for loop. Both advance (attitudes, velocities) in place and
report a status code instead of raising, so the two can be swapped
behind the same dispatch.

Status codes: 0 completed, 1 velocity divergence (or non-finite state),
2 attitude left the projection trust region.
"""

from __future__ import annotations

import dataclasses

import numpy as np

STATUS_OK = 0
STATUS_DIVERGED = 1
STATUS_PROJECTION = 2

# Orthogonality defect |X^T X - I|_F at which Newton iteration stops.
PROJECT_TOL = 1e-14

# Frobenius distance the per-step projection is allowed to bridge.
PROJECT_MAX_DIST = 0.5

_EYE3 = np.eye(3)


@dataclasses.dataclass(frozen=True)
class KernelArrays:
    """Flat, validated arrays describing one closed-loop system.

    Attributes:
        leader: 0-based index of the informed agent.
        heads, tails: (n_edges,) int64, 0-based agent indices per edge.
        a_edges: (n_edges, 3, 3) edge weight matrices.
        a_leader: (3, 3) reference weight matrix.
        r0: (3, 3) reference attitude.
        k_r0, k_r, k_w: scalar gains.
        jmat, jinv: (n_agents, 3, 3) inertia matrices and inverses.
    """

    leader: int
    heads: np.ndarray
    tails: np.ndarray
    a_edges: np.ndarray
    a_leader: np.ndarray
    r0: np.ndarray
    k_r0: float
    k_r: float
    k_w: float
    jmat: np.ndarray
    jinv: np.ndarray

    @property
    def n_agents(self):
        return self.jmat.shape[0]

    @property
    def n_edges(self):
        return self.heads.shape[0]


def hat_batch(w):
    """(N, 3) -> (N, 3, 3) stack of skew matrices."""
    n = w.shape[0]
    out = np.zeros((n, 3, 3))
    out[:, 0, 1] = -w[:, 2]
    out[:, 0, 2] = w[:, 1]
    out[:, 1, 0] = w[:, 2]
    out[:, 1, 2] = -w[:, 0]
    out[:, 2, 0] = -w[:, 1]
    out[:, 2, 1] = w[:, 0]
    return out


def _psi_batch(b):
    """(K, 3, 3) -> (K, 3) skew projections."""
    return 0.5 * np.stack(
        [
            b[:, 2, 1] - b[:, 1, 2],
            b[:, 0, 2] - b[:, 2, 0],
            b[:, 1, 0] - b[:, 0, 1],
        ],
        axis=-1,
    )


def closed_loop_derivative(r, w, p):
    """Time derivative of (attitudes, velocities) under the control law.

    Args:
        r: (N, 3, 3) attitudes; need not be exactly orthogonal, the RK4
            stages evaluate this off the group.
        w: (N, 3) body angular velocities.
        p: KernelArrays.

    Returns:
        (rdot, wdot) with shapes matching r and w.
    """
    tau = -p.k_w * w
    rl = r[p.leader]
    b0 = p.a_leader @ (p.r0.T @ rl)
    tau[p.leader] -= p.k_r0 * 0.5 * np.array(
        [b0[2, 1] - b0[1, 2], b0[0, 2] - b0[2, 0], b0[1, 0] - b0[0, 1]]
    )
    if p.heads.size:
        rbar = np.matmul(r[p.heads].transpose(0, 2, 1), r[p.tails])
        psik = _psi_batch(np.matmul(p.a_edges, rbar))
        # Agents can sit on several edges, so accumulate with .at.
        np.subtract.at(tau, p.tails, p.k_r * psik)
        np.add.at(tau, p.heads, p.k_r * np.einsum("kij,kj->ki", rbar, psik))
    jw = np.einsum("nij,nj->ni", p.jmat, w)
    wdot = np.einsum("nij,nj->ni", p.jinv, tau - np.cross(w, jw))
    rdot = np.matmul(r, hat_batch(w))
    return rdot, wdot


def lyapunov(r, w, p):
    """Total synchronization energy of a state.

    V = 1/2 (k_r0 tr(A_0 (I - rbar_leader)) + sum_i w_i^T J_i w_i
             + k_r sum_k tr(A_k (I - rbar_k))).
    """
    rb0 = p.r0.T @ r[p.leader]
    v = p.k_r0 * (np.trace(p.a_leader) - np.sum(p.a_leader * rb0.T))
    if p.heads.size:
        rbar = np.matmul(r[p.heads].transpose(0, 2, 1), r[p.tails])
        tr_a = np.trace(p.a_edges, axis1=1, axis2=2)
        tr_ar = np.einsum("kij,kji->k", p.a_edges, rbar)
        v += p.k_r * float(np.sum(tr_a - tr_ar))
    v += float(np.einsum("ni,nij,nj->", w, p.jmat, w))
    return 0.5 * v


def project_batch(m, tol=PROJECT_TOL, max_dist=PROJECT_MAX_DIST, max_iter=20):
    """Projects a stack of near-rotations onto the group, in place.

    Newton iteration for the orthogonal polar factor,
    X <- (X + X^-T) / 2, which converges quadratically from any matrix
    with positive determinant.

    Returns:
        STATUS_OK or STATUS_PROJECTION.
    """
    if not np.all(np.isfinite(m)):
        return STATUS_PROJECTION
    if np.any(np.linalg.det(m) <= 0.0):
        return STATUS_PROJECTION
    x = m.copy()
    for _ in range(max_iter):
        defect = np.matmul(x.transpose(0, 2, 1), x) - _EYE3
        if np.sqrt(np.einsum("nij,nij->n", defect, defect)).max() <= tol:
            break
        try:
            x = 0.5 * (x + np.linalg.inv(x).transpose(0, 2, 1))
        except np.linalg.LinAlgError:
            return STATUS_PROJECTION
    else:
        return STATUS_PROJECTION
    diff = x - m
    if np.sqrt(np.einsum("nij,nij->n", diff, diff)).max() > max_dist:
        return STATUS_PROJECTION
    m[:] = x
    return STATUS_OK


def rk4_step(r, w, p, h):
    """One ambient-space RK4 step followed by projection.

    Returns:
        (r_next, w_next, status). On nonzero status the state arrays
        returned are unspecified.
    """
    k1r, k1w = closed_loop_derivative(r, w, p)
    k2r, k2w = closed_loop_derivative(r + (0.5 * h) * k1r, w + (0.5 * h) * k1w, p)
    k3r, k3w = closed_loop_derivative(r + (0.5 * h) * k2r, w + (0.5 * h) * k2w, p)
    k4r, k4w = closed_loop_derivative(r + h * k3r, w + h * k3w, p)
    rn = r + (h / 6.0) * (k1r + 2.0 * k2r + 2.0 * k3r + k4r)
    wn = w + (h / 6.0) * (k1w + 2.0 * k2w + 2.0 * k3w + k4w)
    status = project_batch(rn)
    return rn, wn, status


def rk4_run(r, w, p, h, n_steps, omega_max):
    """Advances the state n_steps in place; returns a status code."""
    for _ in range(int(n_steps)):
        rn, wn, status = rk4_step(r, w, p, h)
        if status != STATUS_OK:
            return status
        r[:] = rn
        w[:] = wn
        ns = float(np.max(np.einsum("ni,ni->n", w, w)))
        if not ns <= omega_max * omega_max:
            return STATUS_DIVERGED
    return STATUS_OK
