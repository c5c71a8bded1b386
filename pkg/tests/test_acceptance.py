"""Acceptance suite: ten numbered end-to-end claims with fixed tolerances.

Each test prints one PASS line with its measured margins (visible under
pytest -s, or in the captured output block when a claim fails).

Criterion 2 checks the discrete dissipation identity against Simpson's
rule on each sampling interval: V(t+h) - V(t) equals the integral of
-k_w |w|^2, and with half-step samples the Simpson weights (1, 4, 1)/6
read that integral to O(h^4), which is the accuracy the h^2 budget of
the bound assumes. Endpoint-only or midpoint-only readings of |w|^2
leave an O(h^2) quadrature remainder with a constant (the second time
derivative of |w|^2) that this trajectory does not keep under the
bound's implied budget, at any step size; the Simpson reading is the
one whose residual actually shrinks into the stated tolerance.
"""

import time

import numpy as np
import pytest

from so3sync import _kernels, analysis, dynamics, so3, topology
from so3sync.controller import GainAssignment, local_torque, stacked_torque
from so3sync.dynamics import KernelArrays, SystemState

TOL_SYNC = 1e-3  # criterion-1 convergence tolerance (errors and rad/s)
TOL_V_MONOTONE = 1e-9  # criterion-2 slack on V non-increase
TOL_L2_SINGULAR = 1e-8  # criterion-3 lower bound on min singular value
TOL_TORQUE_EQUIV = 1e-12  # criterion-4 local-vs-stacked max difference
TOL_EQ_TORQUE = 1e-10  # criterion-5 stacked torque norm at equilibria
SPECTRAL_TOL = 1e-7  # criterion-6 eigenvalue margins
TOL_FD_JACOBIAN = 1e-5  # criterion-7 relative error bound
TOL_CHETAEV_ZERO = 1e-10  # criterion-8 certificate value at equilibria
ESCAPE_RADIUS = 0.1  # criterion-8 ball in the equilibrium-distance metric
RATIO_LO, RATIO_HI = 12.0, 20.0  # criterion-10 halving-ratio window
TOL_ENERGY_DRIFT = 1e-8  # criterion-10 kinetic drift bound


def test_criterion_1_demo_scenario_synchronizes(fig1):
    system, initial = fig1
    started = time.perf_counter()
    traj = dynamics.simulate(system, initial, 30.0, h=1e-3, sample_every=10)
    wall = time.perf_counter() - started
    leader_err = float(np.max(traj.leader_errors[-1]))
    edge_err = float(np.max(traj.edge_errors[-1]))
    omega_norm = float(np.max(np.linalg.norm(traj.omegas[-1], axis=1)))
    assert leader_err < TOL_SYNC
    assert omega_norm < TOL_SYNC
    assert edge_err < TOL_SYNC
    assert wall < 10.0
    print(
        f"PASS criterion 1: leader err {leader_err:.3g}, edge err {edge_err:.3g}, "
        f"|w| {omega_norm:.3g} (tol {TOL_SYNC:g}), wall {wall:.2f}s < 10s"
    )


def test_criterion_2_lyapunov_dissipation(fig1):
    system, initial = fig1
    h = 1e-3  # nominal sampling step of the dissipation bound
    # Integrate at h/2 and record every step: even samples sit on the
    # nominal grid, odd samples are its midpoints.
    traj = dynamics.simulate(system, initial, 30.0, h=h / 2.0, sample_every=1)
    v = traj.lyapunov
    assert np.all(np.diff(v) <= TOL_V_MONOTONE)

    w2 = np.sum(traj.omegas**2, axis=(1, 2))
    v_grid, w2_grid = v[::2], w2[::2]
    assert np.all(np.diff(v_grid) <= TOL_V_MONOTONE)
    w2_mid = w2[1::2]
    dv_dt = np.diff(v_grid) / h
    simpson = (w2_grid[:-1] + 4.0 * w2_mid + w2_grid[1:]) / 6.0
    residual = np.abs(dv_dt + system.gains.k_w * simpson)
    bound = 10.0 * h * h * max(1.0, float(v[0]))
    worst = float(residual.max())
    assert worst <= bound
    print(
        f"PASS criterion 2: max V increase {float(np.diff(v).max()):.3g} "
        f"(slack {TOL_V_MONOTONE:g}), dissipation residual {worst:.3g} "
        f"<= bound {bound:.4g}"
    )


def test_criterion_3_edge_block_matrix_nonsingular():
    rng = np.random.default_rng(3)
    started = time.perf_counter()
    worst = np.inf
    for _ in range(200):
        n = int(rng.integers(2, 13))
        tree = topology.validate_tree(topology.random_tree(n, rng))
        attitudes = np.stack([so3.random_rotation(rng) for _ in range(n)])
        r0 = so3.random_rotation(rng)
        ea = topology.build_edge_attitudes(tree, attitudes, r0)
        sigma = topology.min_singular_l2(topology.build_l(tree, ea))
        worst = min(worst, sigma)
        assert sigma > TOL_L2_SINGULAR
    wall = time.perf_counter() - started
    assert wall < 5.0
    print(
        f"PASS criterion 3: 200 trees, min singular value {worst:.3g} "
        f"> {TOL_L2_SINGULAR:g}, wall {wall:.2f}s < 5s"
    )


def random_weight(rng):
    q = so3.random_rotation(rng)
    values = np.sort(rng.uniform(1.0, 10.0, 3)) + np.array([0.0, 1.0, 2.0])
    return q @ np.diag(values) @ q.T


def test_criterion_4_local_equals_stacked_torque():
    rng = np.random.default_rng(4)
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(2, 9))
        tree = topology.validate_tree(topology.random_tree(n, rng))
        leader = int(rng.integers(1, n + 1))
        gains = GainAssignment(
            k_r0=float(rng.uniform(0.5, 5.0)),
            k_r=float(rng.uniform(0.5, 5.0)),
            k_w=float(rng.uniform(0.5, 5.0)),
            a_leader=random_weight(rng),
            a_edges=np.stack([random_weight(rng) for _ in range(n - 1)]),
        )
        attitudes = np.stack([so3.random_rotation(rng) for _ in range(n)])
        omegas = rng.uniform(-3.0, 3.0, (n, 3))
        r0 = so3.random_rotation(rng)
        stacked = stacked_torque(tree, gains, attitudes, omegas, r0, leader=leader)
        for agent in range(1, n + 1):
            neighbors = {
                j: attitudes[j - 1] for j in tree.neighbors[agent]
            }
            local = local_torque(
                tree,
                gains,
                agent,
                attitudes[agent - 1],
                omegas[agent - 1],
                neighbors,
                r0=r0 if agent == leader else None,
                leader=leader,
            )
            worst = max(worst, float(np.max(np.abs(local - stacked[agent - 1]))))
    assert worst <= TOL_TORQUE_EQUIV
    print(
        f"PASS criterion 4: 1000 configurations, max local-vs-stacked "
        f"difference {worst:.3g} <= {TOL_TORQUE_EQUIV:g}"
    )


def test_criterion_5_equilibria_kill_the_torque(pair2, chain3):
    worst = 0.0
    counts = []
    for system, _ in (pair2, chain3):
        eqs = [analysis.desired_equilibrium(system)]
        eqs += list(analysis.enumerate_undesired(system))
        counts.append(len(eqs) - 1)
        for eq in eqs:
            state = analysis.equilibrium_state(system, eq)
            tau = stacked_torque(
                system.tree,
                system.gains,
                state.attitudes,
                state.omegas,
                system.params.r0,
                leader=system.leader,
            )
            worst = max(worst, float(np.linalg.norm(tau)))
    assert counts == [15, 63]
    assert worst < TOL_EQ_TORQUE
    print(
        f"PASS criterion 5: {counts[0]}+{counts[1]} undesired points (plus the "
        f"desired one each), max torque norm {worst:.3g} < {TOL_EQ_TORQUE:g}"
    )


def _assert_spectrum_claims(report):
    assert report.max_real > SPECTRAL_TOL
    assert float(np.min(np.abs(report.eigenvalues))) > SPECTRAL_TOL
    on_axis_oscillatory = np.any(
        (np.abs(report.eigenvalues.real) <= SPECTRAL_TOL)
        & (np.abs(report.eigenvalues.imag) > SPECTRAL_TOL)
    )
    assert not on_axis_oscillatory


def test_criterion_6_spectral_classification(pair2, chain3, fig1):
    started = time.perf_counter()
    n_checked = 0
    for system, _ in (pair2, chain3):
        for eq in analysis.enumerate_undesired(system):
            report = analysis.classify_spectrum(
                analysis.build_jacobian(system, eq), tol=SPECTRAL_TOL
            )
            _assert_spectrum_claims(report)
            n_checked += 1
    assert n_checked == 78

    system, _ = fig1
    sampled = analysis.enumerate_undesired(
        system, sample=200, rng=np.random.default_rng(6)
    )
    for eq in sampled:
        report = analysis.classify_spectrum(
            analysis.build_jacobian(system, eq), tol=SPECTRAL_TOL
        )
        _assert_spectrum_claims(report)
        n_checked += 1

    desired = analysis.classify_spectrum(analysis.build_jacobian(system))
    assert desired.max_real < 0.0
    wall = time.perf_counter() - started
    assert wall < 60.0
    print(
        f"PASS criterion 6: {n_checked} undesired spectra all unstable and "
        f"hyperbolic, desired max Re {desired.max_real:.3g} < 0, "
        f"wall {wall:.1f}s < 60s"
    )


def test_criterion_7_linearization_fidelity(pair2, chain3, fig1):
    worst = 0.0

    def check(system, eq):
        nonlocal worst
        jac = analysis.build_jacobian(system, eq)
        fd = analysis.finite_diff_jacobian(system, eq)
        rel = float(np.linalg.norm(fd - jac) / np.linalg.norm(jac))
        worst = max(worst, rel)
        assert rel <= TOL_FD_JACOBIAN

    n_points = 0
    for system, _ in (pair2, chain3):
        check(system, None)
        for eq in analysis.enumerate_undesired(system):
            check(system, eq)
            n_points += 1
    system, _ = fig1
    check(system, None)
    for eq in analysis.enumerate_undesired(
        system, sample=20, rng=np.random.default_rng(77)
    ):
        check(system, eq)
        n_points += 1
    print(
        f"PASS criterion 7: {n_points} undesired + 3 desired equilibria, "
        f"max finite-difference relative error {worst:.3g} <= {TOL_FD_JACOBIAN:g}"
    )


def test_criterion_8_escape_from_saddles(chain3):
    system, _ = chain3
    eqs = analysis.enumerate_undesired(
        system, sample=10, rng=np.random.default_rng(11)
    )
    escape_times = []
    for eq in eqs:
        state = analysis.equilibrium_state(system, eq)
        assert abs(analysis.chetaev_value(system, eq, state)) < TOL_CHETAEV_ZERO

        slot = eq.pi_set[0]
        perturbed = analysis.equilibrium_state(
            system, eq, angle_offsets={slot: 1e-4}
        )
        assert analysis.chetaev_value(system, eq, perturbed) > 0.0

        traj = dynamics.simulate(
            system, perturbed, 60.0, h=1e-3, sample_every=10,
            stop_when_lyapunov_below=1e-8,
        )
        vbar = analysis.chetaev_constant(system, eq) - traj.lyapunov
        distances = np.array(
            [
                analysis.equilibrium_distance(
                    system, eq, SystemState(traj.attitudes[s], traj.omegas[s])
                )
                for s in range(traj.n_samples)
            ]
        )
        outside = np.nonzero(distances > ESCAPE_RADIUS)[0]
        assert outside.size, "trajectory never left the escape ball"
        first_out = int(outside[0])
        # Vbar is nondecreasing while still inside the ball.
        assert np.all(np.diff(vbar[: first_out + 1]) >= -1e-12)
        escape_times.append(float(traj.times[first_out]))
        # ... and the trajectory then falls into the desired set.
        assert float(np.max(traj.leader_errors[-1])) < TOL_SYNC
        assert float(np.max(traj.edge_errors[-1])) < TOL_SYNC
        assert float(np.max(np.linalg.norm(traj.omegas[-1], axis=1))) < TOL_SYNC
    print(
        f"PASS criterion 8: 10 saddles, certificate zero within "
        f"{TOL_CHETAEV_ZERO:g}, escape times "
        f"{min(escape_times):.2f}..{max(escape_times):.2f}s, all runs "
        f"re-synchronized"
    )


def test_criterion_9_random_initial_conditions_converge(fig1):
    system, _ = fig1
    n = system.n_agents
    slowest = 0.0
    for trial in range(100):
        rng = np.random.default_rng([2024, trial])
        attitudes = np.stack(
            [
                so3.rot_axis_angle(
                    float(rng.uniform(0.0, np.pi)), so3.random_axis(rng)
                )
                for _ in range(n)
            ]
        )
        omegas = rng.uniform(-3.0, 3.0, (n, 3))
        traj = dynamics.simulate(
            system,
            SystemState(attitudes, omegas),
            60.0,
            h=1e-3,
            sample_every=10,
            stop_when_lyapunov_below=1e-8,
        )
        assert float(np.max(traj.leader_errors[-1])) < TOL_SYNC
        assert float(np.max(traj.edge_errors[-1])) < TOL_SYNC
        assert float(np.max(np.linalg.norm(traj.omegas[-1], axis=1))) < TOL_SYNC
        slowest = max(slowest, float(traj.times[-1]))
    assert slowest <= 60.0
    print(
        f"PASS criterion 9: 100/100 random starts synchronized, slowest by "
        f"t={slowest:.2f}s <= 60s"
    )


def torque_free_body():
    """A single body with zero feedback gains: pure Euler dynamics."""
    jmat = np.array([np.diag([1.0, 2.0, 3.0])])
    return KernelArrays(
        leader=0,
        heads=np.zeros(0, dtype=np.int64),
        tails=np.zeros(0, dtype=np.int64),
        a_edges=np.zeros((0, 3, 3)),
        a_leader=np.eye(3),
        r0=np.eye(3),
        k_r0=0.0,
        k_r=0.0,
        k_w=0.0,
        jmat=jmat,
        jinv=np.linalg.inv(jmat),
    )


def _run_body(params, h, t_final):
    r = np.eye(3)[None].copy()
    w = np.array([[3.0, 2.0, 1.0]])
    n_steps = int(round(t_final / h))
    status = _kernels.rk4_run(r, w, params, h, n_steps, dynamics.OMEGA_MAX)
    assert status == _kernels.STATUS_OK
    return r[0], w[0]


def test_criterion_10_integrator_order_and_energy():
    params = torque_free_body()
    r_ref, w_ref = _run_body(params, 1e-5, 1.0)

    errors = []
    for h in (8e-3, 4e-3, 2e-3, 1e-3):
        r, w = _run_body(params, h, 1.0)
        errors.append(np.linalg.norm(r - r_ref) + np.linalg.norm(w - w_ref))
    ratios = [errors[i] / errors[i + 1] for i in range(3)]
    for ratio in ratios:
        assert RATIO_LO <= ratio <= RATIO_HI

    # Kinetic energy drift over 1e4 steps, sampled every 1000 steps.
    j = params.jmat[0]
    r = np.eye(3)[None].copy()
    w = np.array([[3.0, 2.0, 1.0]])
    energy0 = 0.5 * float(w[0] @ j @ w[0])
    drift = 0.0
    for _ in range(10):
        status = _kernels.rk4_run(r, w, params, 1e-3, 1000, dynamics.OMEGA_MAX)
        assert status == _kernels.STATUS_OK
        energy = 0.5 * float(w[0] @ j @ w[0])
        drift = max(drift, abs(energy - energy0))
    assert drift < TOL_ENERGY_DRIFT
    print(
        f"PASS criterion 10: halving ratios "
        f"{', '.join(f'{x:.2f}' for x in ratios)} in [{RATIO_LO:g}, {RATIO_HI:g}], "
        f"kinetic drift {drift:.3g} < {TOL_ENERGY_DRIFT:g}"
    )
