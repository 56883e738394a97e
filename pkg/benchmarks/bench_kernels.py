#!/usr/bin/env python3
"""Benchmark: compiled edge kernels vs the numpy fallback.

Times the three hot paths (fused cost+gradient, tangent projection, polar
retraction) and one end-to-end simulation under each implementation.

Usage: python benchmarks/bench_kernels.py [--poses-per-robot N] [--iters K]
"""

import argparse
import time

import numpy as np

from asyncpgo.evaluation import spanning_tree_init
from asyncpgo.kernels import _edge_py
from asyncpgo.objective import Objective
from asyncpgo.sim import DelayModel, run_simulation
from asyncpgo.synthetic import GridWorldSpec, generate_grid_world
from asyncpgo.worker import StepsizePolicy, WorkerConfig

try:
    from asyncpgo.kernels import _edge_cy
except ImportError:
    _edge_cy = None


def timeit(fn, repeats=200):
    fn()  # warm up
    t0 = time.perf_counter()
    for _ in range(repeats):
        fn()
    return (time.perf_counter() - t0) / repeats


def bench_kernels(problem, objective, Y, p):
    arr = objective.arrays
    rows = []
    impls = [("numpy", _edge_py)] + ([("compiled", _edge_cy)] if _edge_cy else [])
    for name, impl in impls:
        GY, Gp = np.zeros_like(Y), np.zeros_like(p)

        def cost_grad():
            GY[:] = 0.0
            Gp[:] = 0.0
            impl.edge_cost_grad(arr.out_idx, arr.in_idx, arr.rot, arr.tran, arr.w_rot, arr.w_tran, Y, p, GY, Gp)

        V = np.ascontiguousarray(np.random.default_rng(0).standard_normal(Y.shape))
        rows.append((name, "edge cost+grad", timeit(cost_grad)))
        rows.append((name, "tangent projection", timeit(lambda: impl.project_tangent_batch(Y, V))))
        A = np.ascontiguousarray(Y + 0.01 * V)
        rows.append((name, "polar retraction", timeit(lambda: impl.polar_retract_batch(A))))
    return rows


def bench_end_to_end(problem, objective, Y0, p0, iters):
    import os
    import subprocess
    import sys

    gamma = 0.9 / objective.estimate_lipschitz().l_hat
    pol = StepsizePolicy(mode="fixed", gamma=gamma)
    cfgs = [WorkerConfig(robot=i, clock_rate_hz=1000.0, stepsize=pol) for i in range(problem.n)]

    t0 = time.perf_counter()
    run_simulation(problem, Y0, p0, cfgs, DelayModel(kind="none"), max_iters=iters, seed=0, objective=objective)
    here = time.perf_counter() - t0

    # the other implementation must be measured in a fresh interpreter
    # because the dispatch happens at import time
    from asyncpgo import kernels

    flip_env = dict(os.environ)
    if kernels.IMPL_NAME == "compiled":
        flip_env["ASYNCPGO_PURE_PYTHON"] = "1"
        other_name = "numpy"
    else:
        flip_env.pop("ASYNCPGO_PURE_PYTHON", None)
        other_name = "compiled"
    code = (
        "import time, numpy as np\n"
        "from asyncpgo.synthetic import GridWorldSpec, generate_grid_world\n"
        "from asyncpgo.objective import Objective\n"
        "from asyncpgo.evaluation import spanning_tree_init\n"
        "from asyncpgo.sim import DelayModel, run_simulation\n"
        "from asyncpgo.worker import StepsizePolicy, WorkerConfig\n"
        f"prob = generate_grid_world(GridWorldSpec(robots={problem.n}, poses_per_robot={problem.num_poses[0]}, seed=0), r={problem.r})\n"
        "obj = Objective(prob)\n"
        "Y0, p0 = spanning_tree_init(prob)\n"
        "gamma = 0.9 / obj.estimate_lipschitz().l_hat\n"
        "pol = StepsizePolicy(mode='fixed', gamma=gamma)\n"
        "cfgs = [WorkerConfig(robot=i, clock_rate_hz=1000.0, stepsize=pol) for i in range(prob.n)]\n"
        "t0 = time.perf_counter()\n"
        f"run_simulation(prob, Y0, p0, cfgs, DelayModel(kind='none'), max_iters={iters}, seed=0, objective=obj)\n"
        "print(time.perf_counter() - t0)\n"
    )
    out = subprocess.run([sys.executable, "-c", code], env=flip_env, capture_output=True, text=True, check=True)
    other = float(out.stdout.strip().splitlines()[-1])
    return kernels.IMPL_NAME, here, other_name, other


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--poses-per-robot", type=int, default=20)
    parser.add_argument("--iters", type=int, default=5000)
    args = parser.parse_args()

    problem = generate_grid_world(GridWorldSpec(robots=5, poses_per_robot=args.poses_per_robot, seed=0), r=5)
    objective = Objective(problem)
    Y0, p0 = spanning_tree_init(problem)
    print(f"problem: {problem.total_poses} poses, {len(problem.edges)} edges, r=5")

    if _edge_cy is None:
        print("compiled kernels not built; run `pip install -e . --no-build-isolation`")
    print(f"\n{'impl':<10} {'kernel':<20} {'us/call':>10}")
    for name, kernel, sec in bench_kernels(problem, objective, Y0, p0):
        print(f"{name:<10} {kernel:<20} {sec * 1e6:>10.1f}")

    name_a, t_a, name_b, t_b = bench_end_to_end(problem, objective, Y0, p0, args.iters)
    print(f"\nend-to-end, {args.iters} iterations (full trace):")
    print(f"{name_a:<10} {t_a:.2f}s  ({t_a / args.iters * 1e6:.0f} us/iter)")
    print(f"{name_b:<10} {t_b:.2f}s  ({t_b / args.iters * 1e6:.0f} us/iter)")
    print(f"speedup: {max(t_a, t_b) / min(t_a, t_b):.1f}x")


if __name__ == "__main__":
    main()
