"""Command-line entry points: simulate | equilibria | fuzz | linearize.

Exit codes are uniform across subcommands: 0 on success, 1 when a run
diverges or a stability/instability claim check fails, 2 on unusable
input (missing files, malformed scenarios, bad flags). All output files
are written atomically (temp file + rename) with floats at 17
significant digits, so identical inputs and seeds give byte-identical
outputs.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import multiprocessing
import os
import sys
import time

import numpy as np

from . import analysis, dynamics, so3, topology
from . import scenario as scenario_mod
from ._kernels import available_backends
from .controller import GainAssignment, local_torque, stacked_torque
from .errors import IntegrationDiverged, ParseError, ValidationError

EXIT_OK = 0
EXIT_CLAIM = 1
EXIT_USAGE = 2

_FUZZ_DEFAULT_TRIALS = {"lemma1": 200, "identities": 1000, "lyapunov": 20}


def _fmt(x):
    return f"{float(x):.17g}"


def _write_atomic(path, text):
    tmp = f"{path}.tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        f.write(text)
    os.replace(tmp, path)


def _resolve_seed(value):
    """--seed flag, else SO3SYNC_SEED, else 0."""
    if value is not None:
        return int(value)
    env = os.environ.get("SO3SYNC_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise ValidationError(
            "BadSeed", f"SO3SYNC_SEED must be an integer, got {env!r}"
        ) from None


def _load(args):
    path = scenario_mod.resolve_scenario_path(args.scenario)
    scn = scenario_mod.load_scenario(path)
    system, initial = scn.build()
    return path, scn, system, initial


def _map_tasks(worker, tasks, jobs, initializer=None, initargs=()):
    """Order-preserving map, in-process or over a worker pool."""
    if jobs <= 1 or len(tasks) <= 1:
        if initializer is not None:
            initializer(*initargs)
        return [worker(t) for t in tasks]
    with multiprocessing.Pool(
        processes=min(jobs, len(tasks)), initializer=initializer, initargs=initargs
    ) as pool:
        return pool.map(worker, tasks)


# ---------------------------------------------------------------------------
# simulate


_PLOT_SCRIPT = '''\
"""Renders trajectory.csv (+ edge_velocities.csv) into a four-panel figure."""

import argparse
import csv
import math
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def read_csv(path):
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    header = rows[0]
    data = {name: [float(r[i]) for r in rows[1:]] for i, name in enumerate(header)}
    return header, data


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--dir", default=os.path.dirname(os.path.abspath(__file__)))
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    header, data = read_csv(os.path.join(args.dir, "trajectory.csv"))
    t = data["t"]
    leader_cols = [h for h in header if h.startswith("|R0'")]
    edge_cols = [h for h in header if h.endswith("_err")]
    agents = sorted(
        {h[1:-1] for h in header if h[0] == "w" and h[-1] in "xyz"}, key=int
    )

    fig, axes = plt.subplots(2, 2, figsize=(11, 7), sharex=True)

    ax = axes[0, 0]
    for k, col in enumerate(edge_cols, start=1):
        ax.plot(t, data[col], label=f"edge {k}")
    ax.set_ylabel("|R̄_k|_I")
    ax.set_title("edge attitude errors")

    ax = axes[0, 1]
    vel_path = os.path.join(args.dir, "edge_velocities.csv")
    if os.path.exists(vel_path):
        vh, vdata = read_csv(vel_path)
        for col in vh[1:]:
            ax.plot(vdata["t"], vdata[col], label=col)
    ax.set_ylabel("‖ω̄_k‖")
    ax.set_title("edge velocity errors")

    ax = axes[1, 0]
    for i, col in enumerate(leader_cols, start=1):
        ax.plot(t, data[col], label=f"agent {i}")
    ax.set_ylabel("|R₀ᵀR_i|_I")
    ax.set_xlabel("t [s]")
    ax.set_title("attitude errors to the reference")

    ax = axes[1, 1]
    for i in agents:
        norm = [
            math.sqrt(x * x + y * y + z * z)
            for x, y, z in zip(data[f"w{i}x"], data[f"w{i}y"], data[f"w{i}z"])
        ]
        ax.plot(t, norm, label=f"agent {i}")
    ax.set_ylabel("‖ω_i‖ [rad/s]")
    ax.set_xlabel("t [s]")
    ax.set_title("angular velocity norms")

    for ax in axes.flat:
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=7, ncol=2)
    fig.tight_layout()
    out = args.out or os.path.join(args.dir, "trajectory.png")
    fig.savefig(out, dpi=150)
    print(out)


if __name__ == "__main__":
    main()
'''


def _trajectory_csv(traj):
    n = traj.n_agents
    n_edges = traj.edge_errors.shape[1]
    header = (
        ["t", "V"]
        + [f"|R0'R{i}|_I" for i in range(1, n + 1)]
        + [f"edge{k}_err" for k in range(1, n_edges + 1)]
        + [f"w{i}{c}" for i in range(1, n + 1) for c in "xyz"]
    )
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for s in range(traj.n_samples):
        row = (
            [traj.times[s], traj.lyapunov[s]]
            + list(traj.leader_errors[s])
            + list(traj.edge_errors[s])
            + list(traj.omegas[s].reshape(-1))
        )
        writer.writerow([_fmt(x) for x in row])
    return buf.getvalue()


def _edge_velocities_csv(traj):
    n_edges = traj.edge_velocity_errors.shape[1]
    header = ["t"] + [f"edge{k}_wbar" for k in range(1, n_edges + 1)]
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for s in range(traj.n_samples):
        writer.writerow(
            [_fmt(traj.times[s])] + [_fmt(x) for x in traj.edge_velocity_errors[s]]
        )
    return buf.getvalue()


def cmd_simulate(args):
    path, scn, system, initial = _load(args)
    h = scn.integration.h if args.dt is None else float(args.dt)
    tf = scn.integration.tf if args.tf is None else float(args.tf)
    sample_every = (
        scn.integration.sample_every
        if args.sample_every is None
        else int(args.sample_every)
    )
    os.makedirs(args.out, exist_ok=True)
    started = time.perf_counter()
    report = {
        "scenario": os.path.abspath(path),
        "name": scn.name,
        "h": h,
        "tf": tf,
        "sample_every": sample_every,
    }
    try:
        traj = dynamics.simulate(
            system, initial, tf, h=h, sample_every=sample_every, backend=args.backend
        )
    except IntegrationDiverged as exc:
        report.update(
            {
                "exit_status": EXIT_CLAIM,
                "error": str(exc),
                "wall_time_s": time.perf_counter() - started,
                "outputs": {},
            }
        )
        _write_atomic(
            os.path.join(args.out, "summary.json"), json.dumps(report, indent=2) + "\n"
        )
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CLAIM

    outputs = {
        "trajectory": os.path.join(args.out, "trajectory.csv"),
        "edge_velocities": os.path.join(args.out, "edge_velocities.csv"),
        "plot_script": os.path.join(args.out, "plot_trajectory.py"),
        "summary": os.path.join(args.out, "summary.json"),
    }
    _write_atomic(outputs["trajectory"], _trajectory_csv(traj))
    _write_atomic(outputs["edge_velocities"], _edge_velocities_csv(traj))
    _write_atomic(outputs["plot_script"], _PLOT_SCRIPT)
    report.update(
        {
            "backend": traj.backend,
            "n_samples": traj.n_samples,
            "final_time": float(traj.times[-1]),
            "lyapunov_initial": float(traj.lyapunov[0]),
            "lyapunov_final": float(traj.lyapunov[-1]),
            "final_leader_errors": [float(x) for x in traj.leader_errors[-1]],
            "final_edge_errors": [float(x) for x in traj.edge_errors[-1]],
            "final_velocity_norms": [
                float(np.linalg.norm(w)) for w in traj.omegas[-1]
            ],
            "wall_time_s": time.perf_counter() - started,
            "exit_status": EXIT_OK,
            "outputs": outputs,
        }
    )
    _write_atomic(outputs["summary"], json.dumps(report, indent=2) + "\n")
    print(
        f"{scn.name}: {traj.n_samples} samples to t={traj.times[-1]:g} "
        f"({traj.backend} backend), V {traj.lyapunov[0]:.6g} -> "
        f"{traj.lyapunov[-1]:.6g}, wrote {args.out}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# equilibria


_WORKER = {}


def _init_system_worker(path):
    scn = scenario_mod.load_scenario(path)
    system, _ = scn.build()
    _WORKER["system"] = system


def _encode_choices(choices):
    return sum(c * 4**q for q, c in enumerate(choices))


def _equilibria_task(choices):
    system = _WORKER["system"]
    eq = analysis.equilibrium_from_choices(system, choices)
    jac = analysis.build_jacobian(system, eq)
    spectrum = analysis.classify_spectrum(jac)
    row = {
        "code": _encode_choices(choices),
        "choices": "".join(str(c) for c in choices),
        "pi_set": ";".join(str(q) for q in eq.pi_set),
        "kind": "desired" if eq.is_desired else "undesired",
        "max_re": spectrum.max_real,
        "min_abs": float(np.min(np.abs(spectrum.eigenvalues))),
        "min_abs_re": spectrum.min_abs_real,
        "n_unstable": spectrum.n_unstable,
        "stable": spectrum.stable,
        "unstable": spectrum.unstable,
        "hyperbolic": spectrum.hyperbolic,
    }
    if eq.is_desired:
        row["hessian_indefinite"] = ""
    else:
        row["hessian_indefinite"] = analysis.finite_diff_hessian(system, eq).indefinite
    return row


_EQ_COLUMNS = (
    "code",
    "choices",
    "pi_set",
    "kind",
    "max_re",
    "min_abs",
    "min_abs_re",
    "n_unstable",
    "stable",
    "unstable",
    "hyperbolic",
    "hessian_indefinite",
)


def cmd_equilibria(args):
    path, scn, system, _ = _load(args)
    n_slots = system.n_edges + 1
    total = analysis.count_undesired(n_slots)
    seed = _resolve_seed(args.seed)
    sample = None if args.exhaustive else (200 if args.sample is None else args.sample)
    if sample is not None and sample < 1:
        raise ValidationError("BadSample", f"--sample must be >= 1, got {sample}")

    tasks = []
    if args.include_desired:
        tasks.append((0,) * n_slots)
    rng = np.random.default_rng(seed)
    tasks.extend(
        eq.choices for eq in analysis.enumerate_undesired(system, sample=sample, rng=rng)
    )

    rows = _map_tasks(
        _equilibria_task, tasks, args.jobs, _init_system_worker, (path,)
    )

    violations = []
    for row in rows:
        if row["kind"] == "desired":
            if not row["stable"]:
                violations.append(f"code {row['code']}: desired point not stable")
        elif not (row["unstable"] and row["hyperbolic"] and row["hessian_indefinite"]):
            violations.append(
                f"code {row['code']}: unstable={row['unstable']} "
                f"hyperbolic={row['hyperbolic']} "
                f"hessian_indefinite={row['hessian_indefinite']}"
            )

    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_EQ_COLUMNS)
    for row in rows:
        writer.writerow(
            [
                _fmt(row[c])
                if c in ("max_re", "min_abs", "min_abs_re")
                else str(row[c])
                for c in _EQ_COLUMNS
            ]
        )
    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "equilibria.csv")
    _write_atomic(out_path, buf.getvalue())

    n_undesired = sum(1 for r in rows if r["kind"] == "undesired")
    mode = "exhaustive" if sample is None or sample >= total else f"sample={sample}"
    print(
        f"{scn.name}: {n_undesired}/{total} undesired equilibria ({mode}, seed={seed}),"
        f" {len(violations)} claim violations, wrote {out_path}"
    )
    for v in violations:
        print(f"violation: {v}", file=sys.stderr)
    return EXIT_CLAIM if violations else EXIT_OK


# ---------------------------------------------------------------------------
# fuzz


def _random_state(system, rng):
    """Random initial condition: uniform axes, angle U(0, pi), w U(-3, 3)."""
    n = system.n_agents
    attitudes = np.stack(
        [
            so3.rot_axis_angle(rng.uniform(0.0, math.pi), so3.random_axis(rng))
            for _ in range(n)
        ]
    )
    omegas = rng.uniform(-3.0, 3.0, size=(n, 3))
    return dynamics.SystemState(attitudes, omegas)


def _random_weight(rng):
    """Symmetric positive definite with well-separated eigenvalues."""
    lam = np.sort(rng.uniform(1.0, 10.0, size=3)) + np.array([0.0, 1.0, 2.0])
    q = so3.random_rotation(rng)
    return q @ np.diag(lam) @ q.T


def _lemma1_trial(task):
    seed, trial = task
    rng = np.random.default_rng([seed, trial])
    n = int(rng.integers(2, 13))
    tree = topology.validate_tree(topology.random_tree(n, rng))
    attitudes = np.stack([so3.random_rotation(rng) for _ in range(n)])
    ea = topology.build_edge_attitudes(tree, attitudes, np.eye(3))
    return topology.min_singular_l2(topology.build_l(tree, ea))


def _identities_trial(task):
    seed, trial = task
    rng = np.random.default_rng([seed, trial])
    n = int(rng.integers(2, 9))
    tree = topology.validate_tree(topology.random_tree(n, rng))
    gains = GainAssignment(
        k_r0=rng.uniform(0.5, 5.0),
        k_r=rng.uniform(0.5, 5.0),
        k_w=rng.uniform(0.5, 5.0),
        a_leader=_random_weight(rng),
        a_edges=np.stack([_random_weight(rng) for _ in range(tree.n_edges)]),
    )
    r0 = so3.random_rotation(rng)
    attitudes = np.stack([so3.random_rotation(rng) for _ in range(n)])
    omegas = rng.uniform(-3.0, 3.0, size=(n, 3))

    stacked = stacked_torque(tree, gains, attitudes, omegas, r0)
    worst = 0.0
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
        worst = max(worst, float(np.max(np.abs(local - stacked[agent - 1]))))

    ea = topology.build_edge_attitudes(tree, attitudes, r0)
    lmat = topology.build_l(tree, ea)
    direct = np.stack(
        [
            omegas[e.tail - 1] - ea.rbar[e.index - 1].T @ omegas[e.head - 1]
            for e in tree.edges
        ]
    )
    stacked_vel = topology.edge_velocities(lmat, omegas)
    worst = max(worst, float(np.max(np.abs(direct - stacked_vel))))
    return worst


def _lyapunov_trial(task):
    seed, trial, path = task
    scn = scenario_mod.load_scenario(path)
    system, _ = scn.build()
    rng = np.random.default_rng([seed, trial])
    state = _random_state(system, rng)
    try:
        traj = dynamics.simulate(system, state, 5.0, h=1e-3, sample_every=10)
    except IntegrationDiverged:
        return math.inf
    if traj.n_samples < 2:
        return math.inf
    return float(np.max(np.diff(traj.lyapunov)))


def cmd_fuzz(args):
    seed = _resolve_seed(args.seed)
    trials = _FUZZ_DEFAULT_TRIALS[args.suite] if args.trials is None else args.trials
    if trials < 1:
        raise ValidationError("BadTrials", f"--trials must be >= 1, got {trials}")

    if args.suite == "lemma1":
        results = _map_tasks(
            _lemma1_trial, [(seed, t) for t in range(trials)], args.jobs
        )
        failures = [v for v in results if not v > 1e-8]
        worst = min(results)
        detail = f"min singular value {worst:.6g} (threshold 1e-08)"
    elif args.suite == "identities":
        results = _map_tasks(
            _identities_trial, [(seed, t) for t in range(trials)], args.jobs
        )
        failures = [v for v in results if not v <= 1e-12]
        worst = max(results)
        detail = f"max torque/velocity residual {worst:.6g} (threshold 1e-12)"
    else:
        path = scenario_mod.resolve_scenario_path(args.scenario)
        results = _map_tasks(
            _lyapunov_trial, [(seed, t, path) for t in range(trials)], args.jobs
        )
        failures = [v for v in results if not v <= 1e-9]
        worst = max(results)
        detail = f"max Lyapunov increase {worst:.6g} (slack 1e-09)"

    passed = trials - len(failures)
    print(
        f"suite={args.suite} seed={seed} trials={trials} "
        f"passed={passed} failed={len(failures)}; {detail}"
    )
    return EXIT_OK if not failures else EXIT_CLAIM


# ---------------------------------------------------------------------------
# linearize


def cmd_linearize(args):
    path, scn, system, _ = _load(args)
    n_slots = system.n_edges + 1
    if args.slots is None:
        choices = (0,) * n_slots
    else:
        try:
            choices = tuple(int(x) for x in args.slots.split(","))
        except ValueError:
            raise ValidationError(
                "BadSlots", f"--slots must be comma-separated integers, got {args.slots!r}"
            ) from None
    try:
        eq = analysis.equilibrium_from_choices(system, choices)
    except ValueError as exc:
        raise ValidationError("BadSlots", str(exc)) from None

    jac = analysis.build_jacobian(system, eq)
    spectrum = analysis.classify_spectrum(jac)
    fd = analysis.finite_diff_jacobian(system, eq)
    rel_err = float(
        np.linalg.norm(jac - fd) / np.linalg.norm(jac)
    )

    report = {
        "scenario": os.path.abspath(path),
        "name": scn.name,
        "choices": list(choices),
        "pi_set": list(eq.pi_set),
        "kind": "desired" if eq.is_desired else "undesired",
        "jacobian": {
            "max_re": spectrum.max_real,
            "min_abs": float(np.min(np.abs(spectrum.eigenvalues))),
            "min_abs_re": spectrum.min_abs_real,
            "n_unstable": spectrum.n_unstable,
            "stable": spectrum.stable,
            "unstable": spectrum.unstable,
            "hyperbolic": spectrum.hyperbolic,
            "eigenvalues": [
                {"re": float(v.real), "im": float(v.imag)}
                for v in spectrum.eigenvalues
            ],
        },
        "fd_relative_error": rel_err,
    }
    if eq.is_desired:
        report["hessian"] = None
        report["chetaev_at_equilibrium"] = None
    else:
        hess = analysis.finite_diff_hessian(system, eq)
        report["hessian"] = {
            "min_eigenvalue": float(hess.eigenvalues[0]),
            "max_eigenvalue": float(hess.eigenvalues[-1]),
            "indefinite": hess.indefinite,
        }
        report["chetaev_at_equilibrium"] = analysis.chetaev_value(
            system, eq, analysis.equilibrium_state(system, eq)
        )

    os.makedirs(args.out, exist_ok=True)
    out_path = os.path.join(args.out, "linearization.json")
    _write_atomic(out_path, json.dumps(report, indent=2) + "\n")
    print(
        f"{scn.name} slots={''.join(str(c) for c in choices)}: "
        f"max Re = {spectrum.max_real:.6g}, fd rel err = {rel_err:.3g}, "
        f"wrote {out_path}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="so3sync",
        description=(
            "Leader-follower attitude synchronization on SO(3): simulation, "
            "equilibrium classification, and property fuzzing."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    ps = sub.add_parser(
        "simulate", help="integrate a scenario and write trajectory outputs"
    )
    ps.add_argument(
        "--scenario",
        required=True,
        help="scenario path or bundled name (fig1, chain3, pair2)",
    )
    ps.add_argument("--tf", type=float, default=None, help="final time [s]")
    ps.add_argument("--dt", type=float, default=None, help="integration step [s]")
    ps.add_argument(
        "--sample-every", type=int, default=None, help="steps between samples"
    )
    ps.add_argument(
        "--backend",
        choices=sorted(set(available_backends()) | {"auto"}),
        default=None,
        help="integration kernel (default: auto)",
    )
    ps.add_argument("--out", default=".", help="output directory")
    ps.set_defaults(func=cmd_simulate)

    pe = sub.add_parser(
        "equilibria", help="classify undesired equilibria by their linearization"
    )
    pe.add_argument("--scenario", required=True)
    mode = pe.add_mutually_exclusive_group()
    mode.add_argument(
        "--exhaustive", action="store_true", help="all 4^n_slots - 1 points"
    )
    mode.add_argument(
        "--sample", type=int, default=None, help="sample size (default 200)"
    )
    pe.add_argument("--seed", type=int, default=None)
    pe.add_argument(
        "--include-desired", action="store_true", help="prepend the desired point"
    )
    pe.add_argument("--jobs", type=int, default=1)
    pe.add_argument("--out", default=".")
    pe.set_defaults(func=cmd_equilibria)

    pf = sub.add_parser("fuzz", help="run a randomized property suite")
    pf.add_argument(
        "--suite", required=True, choices=("lemma1", "identities", "lyapunov")
    )
    pf.add_argument("--trials", type=int, default=None)
    pf.add_argument("--seed", type=int, default=None)
    pf.add_argument("--jobs", type=int, default=1)
    pf.add_argument(
        "--scenario", default="fig1", help="scenario for the lyapunov suite"
    )
    pf.set_defaults(func=cmd_fuzz)

    pl = sub.add_parser(
        "linearize", help="Jacobian spectrum and Hessian report at one equilibrium"
    )
    pl.add_argument("--scenario", required=True)
    pl.add_argument(
        "--slots",
        default=None,
        help="comma-separated slot choices, 0=identity, 1..3=eigen-axis "
        "(default: all 0, the desired point)",
    )
    pl.add_argument("--out", default=".")
    pl.set_defaults(func=cmd_linearize)

    return parser


def main(argv=None):
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ParseError, ValidationError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except IntegrationDiverged as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CLAIM
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
