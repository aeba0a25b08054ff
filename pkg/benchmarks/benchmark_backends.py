#!/usr/bin/env python3
"""Benchmark the compiled trajectory kernel against the numpy fallback.

Two workloads dominated by the integrator hot loop:
  loading    full loading simulation (sampling + trajectories + statistics)
  bound      fixed-time evolution of an already-captured thermal ensemble

Usage: python benchmarks/benchmark_backends.py [--atoms 4000] [--repeats 3]
"""

import argparse
import time

import numpy as np
from scipy.constants import k as K_B

from fibertrap.backend import available_backends, get_backend
from fibertrap.loading import (
    MotCloud,
    StepPolicy,
    TerminationRules,
    _integrate_arrays,
    _kernel_args,
    run_loading_simulation,
    thermal_captured_ensemble,
)
from fibertrap.trap import BeamGeometry, TrapConfig

RB87_MASS = 1.443160648e-25


def make_trap():
    geometry = BeamGeometry(
        waist_m=2.75e-6,
        numerical_aperture=0.1,
        tip_z_m=0.0,
        fiber_length_m=0.14,
        core_radius_m=2.75e-6,
    )
    return TrapConfig(geometry=geometry, trap_depth_j=K_B * 5e-3)


def bench_loading(backend, trap, n, repeats):
    cloud = MotCloud(
        center_m=(0.0, 0.0, 1.5e-4),
        half_widths_1e_m=(5e-5, 5e-5, 1.5e-4),
        temperature_k=120e-6,
    )
    best = np.inf
    result = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        result = run_loading_simulation(
            cloud, trap, n, 7, RB87_MASS, backend=backend
        )
        best = min(best, time.perf_counter() - t0)
    return best, result


def bench_bound(backend, trap, n, repeats):
    ens = thermal_captured_ensemble(trap, RB87_MASS, 450e-6, n, 13)
    term = TerminationRules(
        capture_depth_m=1.0, max_time_s=2e-3, escape_radius_m=1.0, escape_top_m=1.0
    )
    args = _kernel_args(trap, RB87_MASS, StepPolicy(), term, 1.0)
    kernel = get_backend(backend)
    best = np.inf
    for _ in range(repeats):
        pos = ens.positions.copy()
        vel = ens.velocities.copy()
        t0 = time.perf_counter()
        _integrate_arrays(pos, vel, kernel, args)
        best = min(best, time.perf_counter() - t0)
    # 2 ms at 62.5 ns steps
    steps = n * int(2e-3 / 6.25e-8)
    return best, steps


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--atoms", type=int, default=4000)
    parser.add_argument("--repeats", type=int, default=3)
    args = parser.parse_args()

    trap = make_trap()
    backends = available_backends()
    print(f"backends available: {', '.join(backends)}")
    print(f"workload size: {args.atoms} atoms, best of {args.repeats}\n")

    rows = []
    for name in backends:
        t_load, result = bench_loading(name, trap, args.atoms, args.repeats)
        t_bound, steps = bench_bound(name, trap, args.atoms, args.repeats)
        rate = steps / t_bound / 1e6
        rows.append((name, t_load, t_bound, rate))
        print(
            f"{name:>9s}:  loading {t_load:7.2f} s   "
            f"bound-evolution {t_bound:6.2f} s  ({rate:7.1f} M steps/s)   "
            f"efficiency check {100 * result.efficiency:.2f}%"
        )

    if len(rows) == 2:
        by_name = {r[0]: r for r in rows}
        if "compiled" in by_name and "python" in by_name:
            speed_load = by_name["python"][1] / by_name["compiled"][1]
            speed_bound = by_name["python"][2] / by_name["compiled"][2]
            print(
                f"\ncompiled speedup: {speed_load:.1f}x on loading, "
                f"{speed_bound:.1f}x on bound evolution"
            )


if __name__ == "__main__":
    main()
