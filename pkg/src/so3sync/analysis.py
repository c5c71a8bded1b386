"""Energy functions, equilibrium enumeration, and linearized stability.

The closed loop has two kinds of equilibria, described per "slot": slot
0 is the informed agent's reference error rbar_leader, slot k >= 1 is
edge k's relative attitude rbar_k. At any equilibrium each slot is
either the identity or a rotation by pi about one of the three
eigen-axes of that slot's weight matrix. The desired equilibrium is
all-identity; every other combination is undesired, giving
4^n_slots - 1 undesired points (up to axis sign).

Around an equilibrium, the state is charted as
x = (r_leader, r_edges, omega) with rbar_q = rbar_q* exp(hat(r_q)); the
closed loop linearizes to xdot = M x with

    M = [ 0        0        M13     ]      M13 = leader selector,
        [ 0        0        Lbar^T  ]      M31 = -k_r0 Gamma0,
        [ Jinv M31 Jinv M32 -k_w Jinv]     M32 = -k_r Lbar Gamma,

where Gamma0 places E(A_0 rbar_leader*) at the informed agent's block
row and Gamma = blockdiag(E(A_k rbar_k*)).
"""

from __future__ import annotations

import dataclasses
import math
from functools import cached_property

import numpy as np

from . import controller, dynamics, topology
from .errors import EigensolverFailure, EmptyPiSet, LeaderSlotNotPi
from .so3 import attitude_norm, e_matrix, hat, rot_axis_angle

# Spectral classification tolerance: an eigenvalue real part within
# this of zero counts as "on the imaginary axis".
SPECTRUM_TOL = 1e-7

_EYE3 = np.eye(3)


# ---------------------------------------------------------------------------
# Energy functions


def lyapunov_value(system, state):
    """Synchronization energy V >= 0, zero exactly on the desired set.

    V = 1/2 (k_r0 tr(A_0 (I - rbar_leader)) + w^T J w
             + k_r sum_k tr(A_k (I - rbar_k))),
    and along closed-loop trajectories dV/dt = -k_w |w|^2.
    """
    return dynamics.lyapunov_value(system, state)


def chetaev_constant(system, eq):
    """The equilibrium's energy offset sum_q k_q (tr(A_q) - lambda_q).

    The sum runs over the rotated slots of eq; lambda_q is the weight
    eigenvalue of the chosen axis. Equals V at the equilibrium itself.
    """
    c = 0.0
    for q in eq.pi_set:
        c += _slot_gain(system, q) * (
            float(np.trace(_slot_weight(system, q))) - eq.lambdas[q]
        )
    return c


def chetaev_value(system, eq, state):
    """Escape certificate Vbar = chetaev_constant - V.

    Vbar is zero at the equilibrium, grows along every trajectory at
    rate k_w |w|^2, and takes positive values arbitrarily close to the
    equilibrium because the Hessian of Vbar there is indefinite.
    """
    if not eq.pi_set:
        raise EmptyPiSet("the desired equilibrium has no escape certificate")
    return chetaev_constant(system, eq) - lyapunov_value(system, state)


# ---------------------------------------------------------------------------
# Equilibria


def _slot_weight(system, q):
    return system.gains.a_leader if q == 0 else system.gains.a_edges[q - 1]


def _slot_gain(system, q):
    return system.gains.k_r0 if q == 0 else system.gains.k_r


def _fix_column_signs(vecs):
    out = vecs.copy()
    for c in range(out.shape[1]):
        col = out[:, c]
        for x in col:
            if abs(x) > 1e-9:
                if x < 0.0:
                    out[:, c] = -col
                break
    return out


def eigen_axes(weight):
    """Eigenvalues (ascending) and sign-fixed unit eigenvectors of a weight.

    Returns:
        (values (3,), axes (3, 3)) with axes[:, m] the unit eigenvector
        of values[m], its first component of magnitude > 1e-9 positive.

    Raises:
        EigensolverFailure: non-finite input or eigensolver breakdown.
    """
    w = np.asarray(weight, dtype=float)
    if not np.all(np.isfinite(w)):
        raise EigensolverFailure("weight matrix has non-finite entries")
    try:
        values, vecs = np.linalg.eigh(w)
    except np.linalg.LinAlgError as exc:
        raise EigensolverFailure(str(exc)) from exc
    return values, _fix_column_signs(vecs)


@dataclasses.dataclass(frozen=True)
class Equilibrium:
    """One equilibrium, described by a per-slot axis choice.

    Attributes:
        choices: tuple of length n_slots; entry q is 0 for the identity
            or m in {1, 2, 3} for a rotation by pi about the slot
            weight's m-th eigen-axis (ascending eigenvalue order).
        axes: (n_slots, 3) chosen unit axes; zero rows at identity slots.
        lambdas: (n_slots,) weight eigenvalue of the chosen axis; nan at
            identity slots.
        rbar_leader: (3, 3) slot-0 relative attitude.
        rbar: (n_slots - 1, 3, 3) edge relative attitudes.
    """

    choices: tuple
    axes: np.ndarray
    lambdas: np.ndarray
    rbar_leader: np.ndarray
    rbar: np.ndarray

    @property
    def n_slots(self):
        return len(self.choices)

    @cached_property
    def pi_set(self):
        """Rotated slot indices, ascending."""
        return tuple(q for q, c in enumerate(self.choices) if c != 0)

    @property
    def is_desired(self):
        return not self.pi_set


def equilibrium_from_choices(system, choices):
    """Materializes an Equilibrium from per-slot axis choices."""
    n_slots = system.n_edges + 1
    choices = tuple(int(c) for c in choices)
    if len(choices) != n_slots:
        raise ValueError(f"need {n_slots} slot choices, got {len(choices)}")
    if any(not 0 <= c <= 3 for c in choices):
        raise ValueError(f"slot choices must be in 0..3, got {choices}")
    axes = np.zeros((n_slots, 3))
    lambdas = np.full(n_slots, np.nan)
    mats = np.empty((n_slots, 3, 3))
    for q, c in enumerate(choices):
        if c == 0:
            mats[q] = _EYE3
            continue
        values, vecs = eigen_axes(_slot_weight(system, q))
        axes[q] = vecs[:, c - 1]
        lambdas[q] = values[c - 1]
        mats[q] = rot_axis_angle(math.pi, axes[q])
    return Equilibrium(
        choices=choices,
        axes=axes,
        lambdas=lambdas,
        rbar_leader=mats[0],
        rbar=mats[1:],
    )


def desired_equilibrium(system):
    """The all-identity equilibrium."""
    return equilibrium_from_choices(system, (0,) * (system.n_edges + 1))


def count_undesired(n_slots):
    """Number of undesired equilibria: 4^n_slots - 1."""
    return 4**n_slots - 1


def _decode_choices(code, n_slots):
    # Base-4 digits, slot 0 least significant.
    digits = []
    for _ in range(n_slots):
        digits.append(code % 4)
        code //= 4
    return tuple(digits)


def enumerate_undesired(system, sample=None, rng=None):
    """Returns an iterator over undesired equilibria.

    Args:
        system: ClosedLoopSystem.
        sample: if given and smaller than the total count, draw this
            many distinct equilibria at random (rng required); otherwise
            iterate all of them in code order.
        rng: numpy Generator, consumed at call time when sampling.
    """
    n_slots = system.n_edges + 1
    total = count_undesired(n_slots)
    if sample is None or sample >= total:
        codes = range(1, total + 1)
    else:
        if rng is None:
            raise ValueError("sampling undesired equilibria requires an rng")
        seen = set()
        while len(seen) < sample:
            seen.add(int(rng.integers(1, total + 1)))
        codes = sorted(seen)
    return (
        equilibrium_from_choices(system, _decode_choices(code, n_slots))
        for code in codes
    )


def equilibrium_state(system, eq, angle_offsets=None):
    """Absolute-attitude state realizing an equilibrium's slot values.

    The informed agent takes R = r0 @ rbar_leader; the rest follow by
    walking the tree. angle_offsets (slot -> delta radians) nudges
    rotated slots to angle pi + delta about the same axis, which is how
    escape experiments seed a point near, but off, the equilibrium.

    Returns:
        SystemState with zero velocities.
    """
    rb0 = eq.rbar_leader
    rbar = np.array(eq.rbar)
    if angle_offsets:
        for slot, delta in angle_offsets.items():
            if eq.choices[slot] == 0:
                raise ValueError(f"slot {slot} is an identity slot, it has no axis")
            m = rot_axis_angle(math.pi + float(delta), eq.axes[slot])
            if slot == 0:
                rb0 = m
            else:
                rbar[slot - 1] = m
    n = system.n_agents
    attitudes = [None] * n
    attitudes[system.leader - 1] = system.params.r0 @ rb0
    remaining = list(system.tree.edges)
    while remaining:
        progressed = False
        for e in list(remaining):
            rh, rt = attitudes[e.head - 1], attitudes[e.tail - 1]
            k = e.index - 1
            if rh is not None and rt is None:
                attitudes[e.tail - 1] = rh @ rbar[k]
            elif rt is not None and rh is None:
                attitudes[e.head - 1] = rt @ rbar[k].T
            elif rh is None and rt is None:
                continue
            remaining.remove(e)
            progressed = True
        if not progressed:
            raise AssertionError("tree walk stalled; validate_tree should prevent this")
    return dynamics.SystemState(np.stack(attitudes), np.zeros((n, 3)))


def equilibrium_distance(system, eq, state):
    """Sum of slot attitude distances plus |w|, the escape ball metric."""
    ea = topology.build_edge_attitudes(
        system.tree, state.attitudes, system.params.r0, system.leader - 1
    )
    d = attitude_norm(ea.rbar_leader.T @ eq.rbar_leader)
    for k in range(system.n_edges):
        d += attitude_norm(ea.rbar[k].T @ eq.rbar[k])
    return d + float(np.linalg.norm(state.omegas))


# ---------------------------------------------------------------------------
# Linearization


def _blockdiag3(stack):
    k = stack.shape[0]
    out = np.zeros((3 * k, 3 * k))
    for i in range(k):
        out[3 * i : 3 * i + 3, 3 * i : 3 * i + 3] = stack[i]
    return out


def build_jacobian(system, eq=None):
    """Closed-loop Jacobian at an equilibrium, in (r_leader, r_edges, w).

    Valid at the desired equilibrium (eq=None or all-identity) and at
    every undesired one; the first-order terms of the attitude
    kinematics and of the torque are exact because the slot residuals
    psi(A_q rbar_q*) vanish at any equilibrium.

    Returns:
        (6N, 6N) array.
    """
    if eq is None:
        eq = desired_equilibrium(system)
    n = system.n_agents
    ne = system.n_edges
    lead = system.leader - 1
    gains = system.gains
    ea = topology.EdgeAttitudes(rbar_leader=eq.rbar_leader, rbar=np.array(eq.rbar))
    lbar = topology.build_l(system.tree, ea, leader_index=lead).blocks
    gamma0 = e_matrix(gains.a_leader @ eq.rbar_leader)
    gamma = _blockdiag3(
        np.stack([e_matrix(gains.a_edges[k] @ eq.rbar[k]) for k in range(ne)])
    ) if ne else np.zeros((0, 0))
    jinv = _blockdiag3(system.params.jinv)

    m = np.zeros((6 * n, 6 * n))
    off_r = 3
    off_w = 3 * n
    # Slot kinematics: rdot_leader = w_leader, rdot_edges = Lbar^T w.
    m[0:3, off_w + 3 * lead : off_w + 3 * lead + 3] = _EYE3
    m[off_r:off_w, off_w:] = lbar.T
    # Velocity dynamics, premultiplied by Jinv.
    m31 = np.zeros((3 * n, 3))
    m31[3 * lead : 3 * lead + 3] = -gains.k_r0 * gamma0
    m32 = -gains.k_r * (lbar @ gamma)
    m[off_w:, 0:3] = jinv @ m31
    m[off_w:, off_r:off_w] = jinv @ m32
    m[off_w:, off_w:] = -gains.k_w * jinv
    return m


@dataclasses.dataclass(frozen=True)
class SpectrumReport:
    """Eigenvalues of a Jacobian, classified against a tolerance."""

    eigenvalues: np.ndarray
    tol: float

    @property
    def max_real(self):
        return float(self.eigenvalues.real.max())

    @property
    def min_abs_real(self):
        """Distance of the spectrum to the imaginary axis."""
        return float(np.abs(self.eigenvalues.real).min())

    @property
    def n_unstable(self):
        return int(np.sum(self.eigenvalues.real > self.tol))

    @property
    def hyperbolic(self):
        """True when no eigenvalue sits on the imaginary axis (within tol)."""
        return self.min_abs_real > self.tol

    @property
    def stable(self):
        return bool(self.eigenvalues.real.max() < -self.tol)

    @property
    def unstable(self):
        return self.n_unstable > 0


def classify_spectrum(matrix, tol=SPECTRUM_TOL):
    """Eigenvalues of a matrix sorted by descending real part.

    Raises:
        EigensolverFailure: non-finite input or eigensolver breakdown.
    """
    m = np.asarray(matrix, dtype=float)
    if not np.all(np.isfinite(m)):
        raise EigensolverFailure("matrix has non-finite entries")
    try:
        eig = np.linalg.eigvals(m)
    except np.linalg.LinAlgError as exc:
        raise EigensolverFailure(str(exc)) from exc
    order = np.lexsort((eig.imag, -eig.real))
    return SpectrumReport(eigenvalues=eig[order], tol=float(tol))


def _exp_rotvec(v):
    th = float(np.linalg.norm(v))
    k = hat(v)
    if th < 1e-8:
        a = 1.0 - th * th / 6.0
        b = 0.5 - th * th / 24.0
    else:
        a = math.sin(th) / th
        b = (1.0 - math.cos(th)) / (th * th)
    return _EYE3 + a * k + b * (k @ k)


def _jr_inv(v):
    # Inverse right Jacobian of the exponential: with X = X* exp(hat(r))
    # and body velocity w, rdot = _jr_inv(r) @ w.
    th = float(np.linalg.norm(v))
    k = hat(v)
    if th < 1e-4:
        c = 1.0 / 12.0 + th * th / 720.0
    else:
        c = 1.0 / (th * th) - (1.0 + math.cos(th)) / (2.0 * th * math.sin(th))
    return _EYE3 + 0.5 * k + c * (k @ k)


def _relative_field(system, eq, x):
    """Closed-loop field in the (r_leader, r_edges, w) chart around eq."""
    n = system.n_agents
    ne = system.n_edges
    p = system.params
    gains = system.gains
    r0v = x[0:3]
    rvs = x[3 : 3 * n].reshape(ne, 3)
    w = x[3 * n :].reshape(n, 3)
    rb0 = eq.rbar_leader @ _exp_rotvec(r0v)
    rbar = np.stack([eq.rbar[k] @ _exp_rotvec(rvs[k]) for k in range(ne)]) if ne else (
        np.zeros((0, 3, 3))
    )
    ea = topology.EdgeAttitudes(rbar_leader=rb0, rbar=rbar)
    lmat = topology.build_l(system.tree, ea, leader_index=system.leader - 1)
    psi0, psibar = controller.stacked_psi(system.tree, gains, ea, leader=system.leader)
    tau = (
        -gains.k_r0 * psi0 - gains.k_r * (lmat.blocks @ psibar)
    ).reshape(n, 3) - gains.k_w * w
    jw = np.einsum("nij,nj->ni", p.jmat, w)
    wdot = np.einsum("nij,nj->ni", p.jinv, tau - np.cross(w, jw))
    wbar = (lmat.blocks.T @ w.reshape(-1)).reshape(ne, 3)
    r0dot = _jr_inv(r0v) @ w[system.leader - 1]
    rdots = [_jr_inv(rvs[k]) @ wbar[k] for k in range(ne)]
    return np.concatenate([r0dot, *rdots, wdot.reshape(-1)]) if ne else (
        np.concatenate([r0dot, wdot.reshape(-1)])
    )


def finite_diff_jacobian(system, eq=None, step=1e-6):
    """Central-difference Jacobian of the chart field, for cross-checks."""
    if eq is None:
        eq = desired_equilibrium(system)
    d = 6 * system.n_agents
    out = np.empty((d, d))
    for c in range(d):
        e = np.zeros(d)
        e[c] = step
        out[:, c] = (_relative_field(system, eq, e) - _relative_field(system, eq, -e)) / (
            2.0 * step
        )
    return out


# ---------------------------------------------------------------------------
# Hessian of the escape certificate


@dataclasses.dataclass(frozen=True)
class HessianBlocks:
    """Closed-form diagonal blocks of Hess(Vbar) at an undesired point.

    The chart behind these blocks treats every rotated slot's angle and
    (unconstrained) axis as independent coordinates:

        h11 (scalar)   angle curvature of slot 0,
        h22 (3, 3)     axis block of slot 0, -4 k_r0 E(A_0),
        h33 (p, p)     angle curvatures of the rotated edge slots,
        h44 (3p, 3p)   axis blocks of the rotated edge slots,
        j_block        the -J/2 coefficient of the velocity part.

    h11 and h33 are positive, h22, h44 and the velocity part negative,
    so the whole matrix is indefinite and the equilibrium is a saddle
    of Vbar. Note j_block is the quadratic-form coefficient of
    -1/2 w^T J w as conventionally quoted; the second derivative proper
    is twice that, -J.
    """

    h11: float
    h22: np.ndarray
    h33: np.ndarray
    h44: np.ndarray
    j_block: np.ndarray
    pi_edge_slots: tuple


def hessian_blocks(system, eq):
    """Closed-form Hess(Vbar) blocks at an undesired equilibrium.

    Raises:
        EmptyPiSet: eq is the desired equilibrium.
        LeaderSlotNotPi: slot 0 is not rotated; h11/h22 then do not
            exist and the closed-form block list does not apply.
    """
    if not eq.pi_set:
        raise EmptyPiSet("the desired equilibrium has no Chetaev Hessian")
    if 0 not in eq.pi_set:
        raise LeaderSlotNotPi(
            "closed-form blocks are stated for equilibria with slot 0 rotated"
        )
    gains = system.gains
    h11 = 0.5 * gains.k_r0 * (float(np.trace(gains.a_leader)) - eq.lambdas[0])
    h22 = -4.0 * gains.k_r0 * e_matrix(gains.a_leader)
    pi_edges = tuple(q for q in eq.pi_set if q > 0)
    h33 = np.diag(
        [
            0.5 * gains.k_r * (float(np.trace(gains.a_edges[q - 1])) - eq.lambdas[q])
            for q in pi_edges
        ]
    )
    h44 = _blockdiag3(
        np.stack([-4.0 * gains.k_r * e_matrix(gains.a_edges[q - 1]) for q in pi_edges])
    ) if pi_edges else np.zeros((0, 0))
    j_block = -0.5 * _blockdiag3(system.params.jmat)
    return HessianBlocks(
        h11=float(h11),
        h22=h22,
        h33=h33,
        h44=h44,
        j_block=j_block,
        pi_edge_slots=pi_edges,
    )


@dataclasses.dataclass(frozen=True)
class TangentHessian:
    """Finite-difference Hessian of Vbar in sphere-tangent coordinates.

    Coordinates: one angle offset per slot (indices 0..n_slots-1), two
    axis-tangent components per slot (indices n_slots + 2q), then the
    3N velocities. Axis coordinates move the axis on the unit sphere,
    so axis blocks carry a Rayleigh correction relative to the
    unconstrained h22/h44 blocks; angle and velocity blocks compare
    directly (the velocity block is -J, twice the quoted -J/2
    coefficient).
    """

    matrix: np.ndarray
    eigenvalues: np.ndarray
    n_slots: int

    def theta_index(self, q):
        return q

    def axis_index(self, q):
        return self.n_slots + 2 * q

    @property
    def omega_offset(self):
        return 3 * self.n_slots

    @property
    def indefinite(self):
        return bool(self.eigenvalues[0] < 0.0 < self.eigenvalues[-1])


def _axis_complement(u):
    # Two unit vectors orthogonal to u, deterministic in u.
    a = np.array([1.0, 0.0, 0.0]) if abs(u[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    b1 = np.cross(u, a)
    b1 /= np.linalg.norm(b1)
    return np.stack([b1, np.cross(u, b1)], axis=1)


def finite_diff_hessian(system, eq, step=1e-4):
    """Second differences of Vbar around an undesired equilibrium.

    Vbar depends on the state only through the slot angle-axis pairs
    and the velocities, so it is evaluated directly in those
    coordinates; axes move on the sphere via a projective chart
    mu(v) = normalize(u + B v).

    Returns:
        TangentHessian.

    Raises:
        EmptyPiSet: eq is the desired equilibrium.
    """
    if not eq.pi_set:
        raise EmptyPiSet("the desired equilibrium has no Chetaev Hessian")
    n = system.n_agents
    n_slots = system.n_edges + 1
    d = 6 * n
    gains = system.gains

    theta0 = np.array([math.pi if c else 0.0 for c in eq.choices])
    base = np.empty((n_slots, 3))
    bmats = np.empty((n_slots, 3, 2))
    emats = np.empty((n_slots, 3, 3))
    kq = np.array([_slot_gain(system, q) for q in range(n_slots)])
    for q in range(n_slots):
        if eq.choices[q]:
            base[q] = eq.axes[q]
        else:
            # Identity slots have no distinguished axis; any smooth chart
            # works since the angle offset is the coordinate that matters.
            base[q] = eigen_axes(_slot_weight(system, q))[1][:, 0]
        bmats[q] = _axis_complement(base[q])
        emats[q] = e_matrix(_slot_weight(system, q))
    jmats = system.params.jmat
    c0 = chetaev_constant(system, eq)

    def vbar(points):
        # points (K, d) -> (K,) values of Vbar.
        kpts = points.shape[0]
        th = theta0[None, :] + points[:, :n_slots]
        v = points[:, n_slots : 3 * n_slots].reshape(kpts, n_slots, 2)
        mu = base[None, :, :] + np.einsum("qab,kqb->kqa", bmats, v)
        mu = mu / np.linalg.norm(mu, axis=2, keepdims=True)
        quad = np.einsum("kqa,qab,kqb->kq", mu, emats, mu)
        slot_terms = kq[None, :] * (1.0 - np.cos(th)) * quad
        w = points[:, 3 * n_slots :].reshape(kpts, n, 3)
        kin = 0.5 * np.einsum("kna,nab,knb->k", w, jmats, w)
        return c0 - (slot_terms.sum(axis=1) + kin)

    # All evaluation points in one batch: center, axis points, pair points.
    pts = [np.zeros(d)]
    for i in range(d):
        e = np.zeros(d)
        e[i] = step
        pts.extend([e, -e])
    pairs = [(i, j) for i in range(d) for j in range(i + 1, d)]
    for i, j in pairs:
        for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
            e = np.zeros(d)
            e[i] = si * step
            e[j] = sj * step
            pts.append(e)
    vals = vbar(np.stack(pts))

    f0 = vals[0]
    h = np.empty((d, d))
    for i in range(d):
        fp, fm = vals[1 + 2 * i], vals[2 + 2 * i]
        h[i, i] = (fp - 2.0 * f0 + fm) / (step * step)
    off = 1 + 2 * d
    for idx, (i, j) in enumerate(pairs):
        fpp, fpm, fmp, fmm = vals[off + 4 * idx : off + 4 * idx + 4]
        hij = (fpp - fpm - fmp + fmm) / (4.0 * step * step)
        h[i, j] = hij
        h[j, i] = hij
    eigenvalues = np.linalg.eigvalsh(0.5 * (h + h.T))
    return TangentHessian(matrix=h, eigenvalues=eigenvalues, n_slots=n_slots)
