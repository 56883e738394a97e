"""Command-line front end: dataset loading, runs, delay sweeps, bound checks.

Configuration comes from an optional JSON file plus flag overrides (flags
win). Outputs per seed: trace_<seed>.csv and metrics_<seed>.json; sweeps add
a combined sweep.csv. Exit codes: 0 success, 1 check failed or run error,
2 usage or I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .evaluation import MetricsReport, centralized_oracle, round_to_sed, rmse, spanning_tree_init
from .g2o import parse_g2o_file
from .graph import partition
from .objective import Objective
from .sim import DelayModel, run_simulation
from .synthetic import GridWorldSpec, generate_grid_world
from .worker import StepsizePolicy, WorkerConfig, stepsize_upper_bound

USAGE_ERROR, CHECK_ERROR = 2, 1

DEFAULT_CONFIG = {
    "problem": {"kind": "synthetic", "robots": 5, "poses": 20, "loop_prob": 0.3, "radius": 1.0,
                "rot_noise_deg": 2.0, "trans_noise_m": 0.05, "problem_seed": 0, "weights": "unit"},
    "r": 5,
    "gamma_mode": "fixed",
    "gamma": 5e-4,
    "assumed_b": 0,
    "alpha": 1.0,
    "safety": 2.0,
    "preconditioned": False,
    "lambda_hz": 1000.0,
    "delay": {"kind": "none", "delay": 0.0, "lo": 0.0, "hi": 0.0, "send_period": None},
    "horizon_s": None,
    "max_iters": None,
    "seeds": [0],
    "trace_every": 1,
    "with_oracle": True,
    "out_dir": "out",
}


class UsageError(Exception):
    pass


def _parse_horizon(text: str) -> tuple[float | None, int | None]:
    if text.endswith("it"):
        return None, int(text[:-2])
    if text.endswith("s"):
        return float(text[:-1]), None
    return float(text), None


def _parse_delay(text: str) -> dict:
    parts = text.split(":")
    if parts[0] == "none":
        return {"kind": "none", "delay": 0.0, "lo": 0.0, "hi": 0.0, "send_period": None}
    if parts[0] == "fixed" and len(parts) == 2:
        return {"kind": "fixed", "delay": float(parts[1]), "lo": 0.0, "hi": 0.0, "send_period": None}
    if parts[0] == "uniform" and len(parts) == 3:
        return {"kind": "uniform", "delay": 0.0, "lo": float(parts[1]), "hi": float(parts[2]), "send_period": None}
    raise UsageError(f"bad delay spec {text!r}; use none, fixed:S or uniform:LO:HI")


def _parse_synthetic(text: str) -> dict:
    out = {"kind": "synthetic"}
    keys = {"robots": int, "poses": int, "loop_prob": float, "radius": float,
            "rot_noise_deg": float, "trans_noise_m": float, "problem_seed": int, "weights": str}
    for item in text.split(","):
        if not item:
            continue
        key, _, val = item.partition("=")
        if key not in keys:
            raise UsageError(f"unknown synthetic key {key!r}")
        out[key] = keys[key](val)
    return out


def load_config(args: argparse.Namespace) -> dict:
    cfg = json.loads(json.dumps(DEFAULT_CONFIG))  # deep copy
    if args.config:
        try:
            with open(args.config) as fh:
                file_cfg = json.load(fh)
        except OSError as exc:
            raise UsageError(f"cannot read config file: {exc}") from exc
        for key, val in file_cfg.items():
            if key == "problem" or key == "delay":
                cfg[key].update(val)
            else:
                cfg[key] = val
    if args.synthetic is not None:
        cfg["problem"] = {**cfg["problem"], **_parse_synthetic(",".join(args.synthetic))}
        cfg["problem"]["kind"] = "synthetic"
    if args.g2o is not None:
        cfg["problem"] = {"kind": "g2o", "path": args.g2o,
                          "dim": args.dim or 2, "robots": args.robots or 5}
    if args.robots is not None and cfg["problem"]["kind"] == "g2o":
        cfg["problem"]["robots"] = args.robots
    if args.r is not None:
        cfg["r"] = args.r
    if args.gamma is not None:
        cfg["gamma"] = args.gamma
        cfg["gamma_mode"] = "fixed"
    if args.gamma_mode is not None:
        cfg["gamma_mode"] = args.gamma_mode
    if args.assumed_b is not None:
        cfg["assumed_b"] = args.assumed_b
    if args.alpha is not None:
        cfg["alpha"] = args.alpha
    if args.safety is not None:
        cfg["safety"] = args.safety
    if args.preconditioned:
        cfg["preconditioned"] = True
    if args.lambda_hz is not None:
        cfg["lambda_hz"] = args.lambda_hz
    if args.delay is not None:
        cfg["delay"] = _parse_delay(args.delay)
    if args.send_period is not None:
        cfg["delay"]["send_period"] = args.send_period
    if args.horizon is not None:
        cfg["horizon_s"], cfg["max_iters"] = _parse_horizon(args.horizon)
    if args.seed:
        cfg["seeds"] = list(args.seed)
    if args.trace_every is not None:
        cfg["trace_every"] = args.trace_every
    if args.no_oracle:
        cfg["with_oracle"] = False
    if args.out is not None:
        cfg["out_dir"] = args.out
    return cfg


def build_problem(cfg: dict):
    spec = cfg["problem"]
    if spec["kind"] == "synthetic":
        gw = GridWorldSpec(
            robots=spec["robots"],
            poses_per_robot=spec["poses"],
            loop_closure_prob=spec["loop_prob"],
            loop_radius_m=spec["radius"],
            rot_noise_deg=spec["rot_noise_deg"],
            trans_noise_m=spec["trans_noise_m"],
            seed=spec["problem_seed"],
            weight_mode=spec.get("weights", "mle"),
        )
        return generate_grid_world(gw, r=cfg["r"])
    if spec["kind"] == "g2o":
        path = Path(spec["path"])
        if not path.exists():
            raise UsageError(f"missing input file: {path}")
        graph = parse_g2o_file(path, spec["dim"])
        return partition(graph, spec["robots"], r=cfg["r"])
    raise UsageError(f"unknown problem kind {spec['kind']!r}")


def _policy(cfg: dict) -> StepsizePolicy:
    return StepsizePolicy(
        mode=cfg["gamma_mode"],
        gamma=cfg["gamma"],
        assumed_max_delay=cfg["assumed_b"],
        alpha=cfg["alpha"],
        safety=cfg["safety"],
    )


def _delay_model(cfg: dict) -> DelayModel:
    d = cfg["delay"]
    return DelayModel(kind=d["kind"], delay=d.get("delay", 0.0), lo=d.get("lo", 0.0),
                      hi=d.get("hi", 0.0), send_period=d.get("send_period"))


def _run_one_seed(problem, objective, Y0, p0, cfg, seed, reference=None):
    configs = [
        WorkerConfig(robot=i, clock_rate_hz=cfg["lambda_hz"], stepsize=_policy(cfg),
                     preconditioned=cfg["preconditioned"])
        for i in range(problem.n)
    ]
    result = run_simulation(
        problem, Y0, p0, configs, _delay_model(cfg),
        horizon_s=cfg["horizon_s"], max_iters=cfg["max_iters"],
        seed=seed, trace_every=cfg["trace_every"], objective=objective,
    )
    final_f, RY, Rp = objective.cost_and_riemannian_gradient(result.Y, result.p)
    final_gradnorm, _ = objective.gradient_norms(RY, Rp, 0)
    rounded = round_to_sed(result.Y, result.p, problem.d)
    report = MetricsReport(
        final_cost=final_f,
        final_gradnorm=final_gradnorm,
        optimality_gap=None if reference is None else final_f - reference["f_star"],
        rot_rmse_chordal=None,
        trans_rmse_m=None,
    )
    if reference is not None:
        rot_err, trans_err = rmse(rounded[0], rounded[1], reference["rot"], reference["tran"])
        report.rot_rmse_chordal = rot_err
        report.trans_rmse_m = trans_err
    return result, report


def cmd_run(cfg: dict) -> int:
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    problem = build_problem(cfg)
    objective = Objective(problem)
    Y0, p0 = spanning_tree_init(problem)

    reference = None
    if cfg["with_oracle"]:
        oracle = centralized_oracle(problem, Y0, p0, objective=objective)
        ref_rot, ref_tran = round_to_sed(oracle.Y, oracle.p, problem.d)
        reference = {"f_star": oracle.f_star, "rot": ref_rot, "tran": ref_tran}

    for seed in cfg["seeds"]:
        result, report = _run_one_seed(problem, objective, Y0, p0, cfg, seed, reference)
        meta = result.trace.meta
        if cfg["gamma_mode"] == "theorem" and meta["measured_max_delay"] > cfg["assumed_b"]:
            print(
                f"warning: measured staleness {meta['measured_max_delay']} exceeds "
                f"assumed bound {cfg['assumed_b']} (seed {seed})",
                file=sys.stderr,
            )
        if cfg["gamma_mode"] == "theorem" and cfg["preconditioned"]:
            print("note: preconditioning with the theorem stepsize is heuristic", file=sys.stderr)
        result.trace.to_csv(out_dir / f"trace_{seed}.csv")
        result.trace.write_sidecar(
            out_dir / f"metrics_{seed}.json",
            extra={"config": cfg, "metrics": report.as_dict()},
        )
    return 0


def cmd_sweep_delay(cfg: dict, delays: list[float]) -> int:
    if len(delays) < 2:
        raise UsageError("sweep needs at least two delay values")
    out_dir = Path(cfg["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)
    problem = build_problem(cfg)
    objective = Objective(problem)
    Y0, p0 = spanning_tree_init(problem)
    rows = []
    for delay in delays:
        sub = json.loads(json.dumps(cfg))
        sub["delay"] = {"kind": "fixed", "delay": delay, "lo": 0.0, "hi": 0.0,
                        "send_period": cfg["delay"].get("send_period")}
        sub["out_dir"] = str(out_dir / f"delay_{delay:g}")
        Path(sub["out_dir"]).mkdir(parents=True, exist_ok=True)
        for seed in cfg["seeds"]:
            result, _ = _run_one_seed(problem, objective, Y0, p0, sub, seed)
            final_f, RY, Rp = objective.cost_and_riemannian_gradient(result.Y, result.p)
            gradnorm, _ = objective.gradient_norms(RY, Rp, 0)
            result.trace.to_csv(Path(sub["out_dir"]) / f"trace_{seed}.csv")
            rows.append((delay, seed, gradnorm, result.trace.meta["measured_max_delay"]))
    with open(out_dir / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["delay_s", "seed", "final_gradnorm", "measured_B"])
        for delay, seed, gradnorm, measured in rows:
            w.writerow([repr(float(delay)), seed, repr(float(gradnorm)), measured])
    return 0


def cmd_verify(cfg: dict) -> int:
    if cfg["gamma_mode"] != "theorem":
        raise UsageError("verify requires --gamma-mode theorem")
    if cfg["max_iters"] is None:
        raise UsageError("verify requires an iteration horizon, e.g. --horizon 10000it")
    seeds = cfg["seeds"]
    if len(seeds) < 20:
        base = seeds[0] if seeds else 0
        seeds = list(range(base, base + 20))
    problem = build_problem(cfg)
    objective = Objective(problem)
    Y0, p0 = spanning_tree_init(problem)
    f0 = objective.cost(Y0, p0)
    big_k = cfg["max_iters"]

    l_hat = objective.estimate_lipschitz(safety=cfg["safety"]).l_hat
    gamma = stepsize_upper_bound(cfg["assumed_b"], problem.coupling_ratio(), cfg["alpha"], l_hat)

    mins = []
    for seed in seeds:
        result, _ = _run_one_seed(problem, objective, Y0, p0, cfg, seed)
        measured = result.trace.meta["measured_max_delay"]
        if measured > cfg["assumed_b"]:
            print(
                f"assumption violated: measured staleness {measured} > assumed {cfg['assumed_b']} "
                f"(seed {seed}); bound not asserted",
                file=sys.stderr,
            )
            return CHECK_ERROR
        mins.append(float(np.min(result.trace.gradnorm**2)))
    lhs = float(np.mean(mins))
    rhs = 2.0 * problem.n * f0 / (gamma * big_k)
    print(f"mean min ||rgrad f||^2 = {lhs:.6e}")
    print(f"bound 2 n f(x0) / (gamma K) = {rhs:.6e}")
    if lhs <= rhs:
        print(f"bound holds with margin {rhs / max(lhs, 1e-300):.1f}x")
        return 0
    print("bound violated", file=sys.stderr)
    return CHECK_ERROR


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="asyncpgo", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("run", "sweep-delay", "verify"):
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config file; flags override it")
        sp.add_argument("--synthetic", nargs="+", metavar="KEY=VAL",
                        help="synthetic spec, e.g. robots=5 poses=20 weights=unit")
        sp.add_argument("--g2o", help="path to a g2o dataset")
        sp.add_argument("--dim", type=int, choices=(2, 3), help="g2o dataset dimension")
        sp.add_argument("--robots", type=int, help="robot count for g2o partitioning")
        sp.add_argument("--r", type=int, help="relaxation rank")
        sp.add_argument("--gamma", type=float, help="fixed stepsize")
        sp.add_argument("--gamma-mode", choices=("fixed", "theorem"), dest="gamma_mode")
        sp.add_argument("--assumed-B", type=int, dest="assumed_b", help="assumed max staleness")
        sp.add_argument("--alpha", type=float, help="retraction displacement constant")
        sp.add_argument("--safety", type=float, help="Lipschitz safety multiplier")
        sp.add_argument("--preconditioned", action="store_true")
        sp.add_argument("--lambda", type=float, dest="lambda_hz", help="clock rate (Hz)")
        sp.add_argument("--delay", help="none | fixed:S | uniform:LO:HI")
        sp.add_argument("--send-period", type=float, dest="send_period")
        sp.add_argument("--horizon", help="simulated horizon: e.g. 60s or 10000it")
        sp.add_argument("--seed", type=int, action="append", help="repeatable")
        sp.add_argument("--trace-every", type=int, dest="trace_every")
        sp.add_argument("--no-oracle", action="store_true", dest="no_oracle")
        sp.add_argument("--out", help="output directory")
        if name == "sweep-delay":
            sp.add_argument("--delays", help="comma-separated delay list (seconds)", required=True)
    return parser


def main(argv=None) -> int:
    parser = make_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args)
        if args.command == "run":
            return cmd_run(cfg)
        if args.command == "sweep-delay":
            delays = [float(x) for x in args.delays.split(",") if x]
            return cmd_sweep_delay(cfg, delays)
        return cmd_verify(cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return USAGE_ERROR
    except Exception as exc:  # module errors: nonzero exit with a message
        print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return CHECK_ERROR


if __name__ == "__main__":
    sys.exit(main())
