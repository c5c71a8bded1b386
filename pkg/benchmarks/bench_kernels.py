"""Benchmark the compiled RK4 kernel against the pure-python fallback.

Usage:
    python benchmarks/bench_kernels.py [--tf 10.0] [--dt 1e-3] [--repeat 3]

Integrates the bundled seven-agent scenario with each available backend
and reports wall time, steps per second, and the speedup of the
compiled kernel when it is present.
"""

import argparse
import time

from so3sync import dynamics
from so3sync._kernels import available_backends
from so3sync.scenario import load_scenario, resolve_scenario_path


def run_once(system, initial, tf, dt, backend):
    started = time.perf_counter()
    traj = dynamics.simulate(
        system, initial, tf, h=dt, sample_every=10**9, backend=backend
    )
    wall = time.perf_counter() - started
    return wall, traj


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenario", default="fig1", help="scenario path or name")
    ap.add_argument("--tf", type=float, default=10.0, help="horizon [s]")
    ap.add_argument("--dt", type=float, default=1e-3, help="step size [s]")
    ap.add_argument("--repeat", type=int, default=3, help="best-of repetitions")
    args = ap.parse_args()

    scn = load_scenario(resolve_scenario_path(args.scenario))
    system, initial = scn.build()
    n_steps = int(round(args.tf / args.dt))
    backends = available_backends()
    print(
        f"scenario={scn.name} agents={system.n_agents} steps={n_steps} "
        f"dt={args.dt:g} backends={','.join(backends)}"
    )

    timings = {}
    for backend in backends:
        best = min(
            run_once(system, initial, args.tf, args.dt, backend)[0]
            for _ in range(args.repeat)
        )
        timings[backend] = best
        print(
            f"{backend:>8}: {best * 1e3:9.2f} ms   "
            f"{n_steps / best:12.0f} steps/s"
        )

    if "compiled" in timings and "python" in timings:
        print(f"speedup: {timings['python'] / timings['compiled']:.1f}x")
    else:
        print("speedup: n/a (compiled kernel not built)")


if __name__ == "__main__":
    main()
