"""Deterministic discrete-event simulation of the asynchronous optimization loop.

Each robot carries an independent Poisson clock; a tick triggers one
Read/Compute/Update step against the robot's cache of (possibly stale)
neighbor poses. A separate periodic send timer emits the robot's public poses
to its neighbors with a configurable delivery delay. Events are processed in
a total order (time, robot, kind, insertion sequence), so a run is a pure
function of its seed.

The global iteration counter k counts applied updates. A trace row recorded
at iteration k describes the state *before* that update. Staleness of a cache
entry at iteration k is the smallest b such that the entry equals the owner's
value at iteration k - b, matching the serialized view of the iteration.
"""

from __future__ import annotations

import csv
import heapq
import json
import warnings
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .graph import MultiRobotProblem, PoseId, neighbor_poses
from .manifold import stiefel_project_tangent, stiefel_retract
from .objective import Objective
from .worker import WorkerConfig, worker_step

CLOCK_TICK, DELIVER, SEND_TIMER = 0, 1, 2


class StalenessError(RuntimeError):
    """A worker read a cache entry that was never populated."""


class SimulationDiverged(RuntimeError):
    """Cost exceeded the divergence guard threshold."""


@dataclass(frozen=True)
class DelayModel:
    """Message delivery model: none (write-through), fixed, or uniform delay."""

    kind: str = "none"
    delay: float = 0.0  # fixed-mode delay, seconds
    lo: float = 0.0  # uniform-mode bounds, seconds
    hi: float = 0.0
    send_period: float | None = None  # None: delay/5, at least 1 ms

    def __post_init__(self):
        if self.kind not in ("none", "fixed", "uniform"):
            raise ValueError(f"unknown delay model {self.kind!r}")
        if self.kind == "fixed" and self.delay < 0:
            raise ValueError("fixed delay must be non-negative")
        if self.kind == "uniform" and not (0 <= self.lo <= self.hi):
            raise ValueError("uniform delay needs 0 <= lo <= hi")
        if self.send_period is not None and self.send_period <= 0:
            raise ValueError("send period must be positive")

    def resolved_send_period(self) -> float:
        if self.send_period is not None:
            return self.send_period
        ref = self.delay if self.kind == "fixed" else self.hi
        return max(ref / 5.0, 1e-3)

    def sample(self, rng: np.random.Generator) -> float:
        if self.kind == "fixed":
            return self.delay
        return float(rng.uniform(self.lo, self.hi))

    def describe(self) -> dict:
        return {"kind": self.kind, "delay": self.delay, "lo": self.lo, "hi": self.hi,
                "send_period": self.resolved_send_period() if self.kind != "none" else None}


@dataclass(frozen=True)
class MessageRecord:
    sender: int
    receiver: int
    pose_ids: tuple[PoseId, ...]
    emit_time: float
    deliver_time: float


@dataclass
class SimulationTrace:
    """Per-iteration record plus run metadata.

    Arrays are aligned: row t describes global iteration k[t] (state before
    that update). `eta_norm` is the applied step direction norm and
    `block_gradnorm` the acting robot's block of the *up-to-date* Riemannian
    gradient.
    """

    k: np.ndarray
    time_s: np.ndarray
    robot: np.ndarray
    f: np.ndarray
    gradnorm: np.ndarray
    block_gradnorm: np.ndarray
    eta_norm: np.ndarray
    max_staleness: np.ndarray
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.k)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "time_s", "robot", "f", "gradnorm", "max_staleness"])
            for t in range(len(self.k)):
                w.writerow(
                    [
                        int(self.k[t]),
                        repr(float(self.time_s[t])),
                        int(self.robot[t]),
                        repr(float(self.f[t])),
                        repr(float(self.gradnorm[t])),
                        int(self.max_staleness[t]),
                    ]
                )

    def write_sidecar(self, path, extra: dict | None = None) -> None:
        payload = dict(self.meta)
        if extra:
            payload.update(extra)
        with open(path, "w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")


def measured_max_delay(trace: SimulationTrace) -> int:
    """Worst cache staleness observed over the whole run, in update counts."""
    if trace.meta.get("iterations", 0) == 0:
        raise ValueError("empty trace has no measured delay")
    return int(trace.meta["measured_max_delay"])


def effective_staleness(commits: list[int], version: int, k: int) -> int:
    """Minimal b such that the owner's value at iteration k - b equals the
    cached value committed at `version`.

    `commits` holds the owner's commit counts in increasing order. A cache
    entry stays current until the owner's next commit after `version`; with
    no such commit at or before iteration k the entry is fresh (b = 0).
    """
    idx = bisect_right(commits, version)
    if idx == len(commits):
        return 0
    return max(0, k - commits[idx] + 1)


class RobotClocks:
    """Independent per-robot exponential tick streams from one seed.

    Both the event simulator and the synchronous oracle consume this object,
    so they see the identical acting-robot sequence for the same seed.
    """

    def __init__(self, n: int, rate_hz: float, seed: int):
        ss = np.random.SeedSequence(seed)
        children = ss.spawn(n + 1)
        self.rngs = [np.random.default_rng(children[i]) for i in range(n)]
        self.aux_rng = np.random.default_rng(children[n])
        self.scale = 1.0 / rate_hz
        self.rate_hz = rate_hz
        self.n = n

    def first_tick(self, robot: int) -> float:
        return float(self.rngs[robot].exponential(self.scale))

    def next_tick(self, robot: int, now: float) -> float:
        return now + float(self.rngs[robot].exponential(self.scale))


class _Cache:
    """Receiver-side cache of neighbor poses with per-sender versions."""

    def __init__(self, problem: MultiRobotProblem, objective: Objective, robot: int):
        lp = objective.locals[robot]
        self.nbr_gidx = lp.neighbor_gidx
        m = len(self.nbr_gidx)
        r, d = problem.r, problem.d
        self.Y = np.zeros((m, r, d))
        self.p = np.zeros((m, r))
        self.populated = np.zeros(m, dtype=bool)
        self.version_from: dict[int, int] = {}
        # cache slot positions for each sender's poses
        self.slots_from: dict[int, np.ndarray] = {}
        for j in problem.robot_graph[robot]:
            need = sorted(problem.global_index(pid) for pid in neighbor_poses(problem, robot, j))
            self.slots_from[j] = np.searchsorted(self.nbr_gidx, np.array(need, dtype=np.int64))
            self.version_from[j] = 0
        self.robot = robot

    def check_populated(self) -> None:
        if not np.all(self.populated):
            raise StalenessError(f"robot {self.robot} cache has unpopulated entries")


def _public_indices(problem: MultiRobotProblem, robot: int) -> np.ndarray:
    return np.array(sorted(problem.global_index(pid) for pid in problem.public_poses[robot]), dtype=np.int64)


@dataclass
class SimulationResult:
    Y: np.ndarray
    p: np.ndarray
    trace: SimulationTrace
    messages: list[MessageRecord]


def validate_retraction_alpha(
    Y0: np.ndarray, alpha: float, samples: int = 200, seed: int = 0
) -> float:
    """Measured max displacement ratio of the retraction at the given blocks.

    Cross-checks the configured displacement constant before a theorem-mode
    run; the caller decides whether to flag a violation.
    """
    rng = np.random.default_rng(seed)
    n = Y0.shape[0]
    idx = rng.integers(0, n, size=samples)
    base = np.ascontiguousarray(Y0[idx])
    xi = stiefel_project_tangent(base, rng.standard_normal(base.shape))
    scale = rng.uniform(0.01, 2.0, size=samples)
    norms = np.sqrt(np.einsum("nij,nij->n", xi, xi))
    xi *= (scale / np.maximum(norms, 1e-300))[:, None, None]
    moved = stiefel_retract(base, xi)
    disp = np.sqrt(np.einsum("nij,nij->n", moved - base, moved - base))
    return float(np.max(disp / scale))


def _resolve_gammas(
    configs: Sequence[WorkerConfig], objective: Objective, problem: MultiRobotProblem
) -> tuple[list[float], float | None]:
    l_hat = None
    if any(c.stepsize.mode == "theorem" for c in configs):
        safety = max(c.stepsize.safety for c in configs if c.stepsize.mode == "theorem")
        l_hat = objective.estimate_lipschitz(safety=safety).l_hat
    rho = problem.coupling_ratio()
    return [c.stepsize.resolve(l_hat, rho) for c in configs], l_hat


def _prepare(problem, configs, objective):
    if objective is None:
        objective = Objective(problem)
    configs = sorted(configs, key=lambda c: c.robot)
    if [c.robot for c in configs] != list(range(problem.n)):
        raise ValueError("need exactly one worker config per robot")
    rates = {c.clock_rate_hz for c in configs}
    if len(rates) != 1:
        raise ValueError("clock rates must be equal across robots")
    return objective, configs, rates.pop()


def run_simulation(
    problem: MultiRobotProblem,
    Y0: np.ndarray,
    p0: np.ndarray,
    configs: Sequence[WorkerConfig],
    delay_model: DelayModel,
    *,
    horizon_s: float | None = None,
    max_iters: int | None = None,
    seed: int = 0,
    trace_every: int = 1,
    objective: Objective | None = None,
    log_messages: bool = True,
) -> SimulationResult:
    """Event-driven asynchronous run; deterministic in `seed`.

    Stops at the simulated-time horizon or after `max_iters` updates,
    whichever comes first (at least one must be given). `log_messages=False`
    drops the per-message audit log (long runs).
    """
    if horizon_s is None and max_iters is None:
        raise ValueError("need horizon_s and/or max_iters")
    objective, configs, rate_hz = _prepare(problem, configs, objective)
    gammas, l_hat = _resolve_gammas(configs, objective, problem)
    n = problem.n
    clocks = RobotClocks(n, rate_hz, seed)

    Y = np.ascontiguousarray(Y0, dtype=np.float64).copy()
    p = np.ascontiguousarray(p0, dtype=np.float64).copy()
    theorem_mode = [c for c in configs if c.stepsize.mode == "theorem"]
    if theorem_mode:
        alpha = min(c.stepsize.alpha for c in theorem_mode)
        measured_alpha = validate_retraction_alpha(Y, alpha)
        if measured_alpha > alpha:
            warnings.warn(
                f"measured retraction displacement ratio {measured_alpha:.3f} exceeds "
                f"configured alpha {alpha}; the derived stepsize may be optimistic",
                stacklevel=2,
            )
        if any(c.preconditioned for c in theorem_mode):
            warnings.warn("preconditioning with the theorem stepsize is a heuristic combination", stacklevel=2)
    caches = [_Cache(problem, objective, i) for i in range(n)]
    public_gidx = [_public_indices(problem, i) for i in range(n)]
    sender_ids = [tuple(problem.pose_id(int(g)) for g in public_gidx[i]) for i in range(n)]
    # payload slot -> cache slot maps per (sender, receiver), plus the direct
    # global indices of the receiver-needed poses for write-through mode
    recv_map: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}
    need_gidx: dict[tuple[int, int], np.ndarray] = {}
    for i in range(n):
        for j in problem.robot_graph[i]:  # j sends to i
            need = caches[i].nbr_gidx[caches[i].slots_from[j]]
            pay_pos = np.searchsorted(public_gidx[j], need)
            recv_map[(j, i)] = (pay_pos, caches[i].slots_from[j])
            need_gidx[(j, i)] = need

    # initial estimates are shared knowledge: populate caches at version 0
    for i in range(n):
        c = caches[i]
        c.Y[:] = Y[c.nbr_gidx]
        c.p[:] = p[c.nbr_gidx]
        c.populated[:] = True

    commit_counts: list[list[int]] = [[] for _ in range(n)]
    messages: list[MessageRecord] = []
    rows = {key: [] for key in ("k", "time_s", "robot", "f", "gradnorm", "block_gradnorm", "eta_norm", "max_staleness")}
    buffers = [objective.locals[i].make_buffer() for i in range(n)]

    heap: list[tuple] = []
    seq = 0

    def push(time, robot, kind, payload=None):
        nonlocal seq
        heapq.heappush(heap, (time, robot, kind, seq, payload))
        seq += 1

    for i in range(n):
        push(clocks.first_tick(i), i, CLOCK_TICK)
    with_sends = delay_model.kind != "none"
    if with_sends:
        period = delay_model.resolved_send_period()
        for i in range(n):
            if len(public_gidx[i]) and problem.robot_graph[i]:
                push(period, i, SEND_TIMER)

    k = 0
    f0 = None
    guard = None
    measured_b = 0
    now = 0.0

    def emit(sender: int, t_emit: float) -> None:
        gidx = public_gidx[sender]
        payload_Y = Y[gidx].copy()
        payload_p = p[gidx].copy()
        version = commit_counts[sender][-1] if commit_counts[sender] else 0
        for receiver in problem.robot_graph[sender]:
            t_del = t_emit + delay_model.sample(clocks.aux_rng)
            push(t_del, receiver, DELIVER, (sender, payload_Y, payload_p, version, t_emit))

    def flush_writethrough(sender: int) -> None:
        if not len(public_gidx[sender]):
            return
        version = commit_counts[sender][-1] if commit_counts[sender] else 0
        for receiver in problem.robot_graph[sender]:
            cache_pos = recv_map[(sender, receiver)][1]
            c = caches[receiver]
            src = need_gidx[(sender, receiver)]
            c.Y[cache_pos] = Y[src]
            c.p[cache_pos] = p[src]
            c.version_from[sender] = version
            if log_messages:
                messages.append(MessageRecord(sender, receiver, sender_ids[sender], now, now))

    while heap:
        time, robot, kind, _, payload = heapq.heappop(heap)
        if horizon_s is not None and time > horizon_s:
            break
        now = time
        if kind == SEND_TIMER:
            emit(robot, time)
            push(time + period, robot, SEND_TIMER)
            continue
        if kind == DELIVER:
            sender, payload_Y, payload_p, version, t_emit = payload
            pay_pos, cache_pos = recv_map[(sender, robot)]
            c = caches[robot]
            c.Y[cache_pos] = payload_Y[pay_pos]
            c.p[cache_pos] = payload_p[pay_pos]
            c.version_from[sender] = version
            if log_messages:
                messages.append(MessageRecord(sender, robot, sender_ids[sender], t_emit, time))
            continue

        # clock tick: one Read/Compute/Update
        if max_iters is not None and k >= max_iters:
            break
        i = robot
        lp = objective.locals[i]
        cache = caches[i]
        cache.check_populated()
        stale = 0
        for j in problem.robot_graph[i]:
            stale = max(stale, effective_staleness(commit_counts[j], cache.version_from[j], k))
        measured_b = max(measured_b, stale)

        record = (k % trace_every) == 0
        if record:
            f_k, RY, Rp = objective.cost_and_riemannian_gradient(Y, p)
            gnorm, bnorm = objective.gradient_norms(RY, Rp, i)
            if f0 is None:
                f0 = f_k
                guard = 1e3 * (f0 + 1.0)
            elif f_k > guard:
                raise SimulationDiverged(
                    f"cost {f_k:.3e} exceeded guard {guard:.3e} at iteration {k}; reduce the stepsize"
                )

        Ybuf, pbuf = buffers[i]
        lp.fill_buffer_from_global(Y, p, Ybuf, pbuf)
        Ybuf[lp.n_own :] = cache.Y
        pbuf[lp.n_own :] = cache.p
        step = worker_step(lp, Ybuf, pbuf, gammas[i], configs[i].preconditioned, want_cost_after=False)
        own = slice(lp.offset, lp.offset + lp.n_own)
        Y[own] = step.Y_new
        p[own] = step.p_new
        commit_counts[i].append(k + 1)
        if not with_sends:
            flush_writethrough(i)

        if record:
            rows["k"].append(k)
            rows["time_s"].append(time)
            rows["robot"].append(i)
            rows["f"].append(f_k)
            rows["gradnorm"].append(gnorm)
            rows["block_gradnorm"].append(bnorm)
            rows["eta_norm"].append(step.eta_norm)
            rows["max_staleness"].append(stale)
        k += 1
        push(clocks.next_tick(i, time), i, CLOCK_TICK)

    trace = SimulationTrace(
        k=np.array(rows["k"], dtype=np.int64),
        time_s=np.array(rows["time_s"]),
        robot=np.array(rows["robot"], dtype=np.int64),
        f=np.array(rows["f"]),
        gradnorm=np.array(rows["gradnorm"]),
        block_gradnorm=np.array(rows["block_gradnorm"]),
        eta_norm=np.array(rows["eta_norm"]),
        max_staleness=np.array(rows["max_staleness"], dtype=np.int64),
        meta={
            "iterations": k,
            "measured_max_delay": measured_b,
            "seed": seed,
            "rng": "pcg64",
            "n": n,
            "lambda_hz": rate_hz,
            "gammas": gammas,
            "l_hat": l_hat,
            "delay_model": delay_model.describe(),
            "trace_every": trace_every,
            "preconditioned": [c.preconditioned for c in configs],
            "stepsize_modes": [c.stepsize.mode for c in configs],
            "heuristic_preconditioned_theorem": any(
                c.preconditioned and c.stepsize.mode == "theorem" for c in configs
            ),
        },
    )
    return SimulationResult(Y=Y, p=p, trace=trace, messages=messages)


def synchronous_rcd_oracle(
    problem: MultiRobotProblem,
    Y0: np.ndarray,
    p0: np.ndarray,
    configs: Sequence[WorkerConfig],
    iterations: int,
    *,
    seed: int = 0,
    objective: Objective | None = None,
) -> SimulationResult:
    """Straight-line randomized coordinate descent with always-current reads.

    Independent of the event machinery: no cache, no queue, no messages. Uses
    the same clock streams as run_simulation, so acting-robot sequences match
    for equal seeds.
    """
    objective, configs, rate_hz = _prepare(problem, configs, objective)
    gammas, l_hat = _resolve_gammas(configs, objective, problem)
    n = problem.n
    clocks = RobotClocks(n, rate_hz, seed)
    times = [clocks.first_tick(i) for i in range(n)]

    Y = np.ascontiguousarray(Y0, dtype=np.float64).copy()
    p = np.ascontiguousarray(p0, dtype=np.float64).copy()
    buffers = [objective.locals[i].make_buffer() for i in range(n)]
    rows = {key: [] for key in ("k", "time_s", "robot", "f", "gradnorm", "block_gradnorm", "eta_norm", "max_staleness")}
    f0 = None
    guard = None

    for k in range(iterations):
        i = min(range(n), key=lambda q: (times[q], q))
        time = times[i]
        lp = objective.locals[i]

        f_k, RY, Rp = objective.cost_and_riemannian_gradient(Y, p)
        gnorm, bnorm = objective.gradient_norms(RY, Rp, i)
        if f0 is None:
            f0 = f_k
            guard = 1e3 * (f0 + 1.0)
        elif f_k > guard:
            raise SimulationDiverged(f"cost {f_k:.3e} exceeded guard {guard:.3e} at iteration {k}")

        Ybuf, pbuf = buffers[i]
        lp.fill_buffer_from_global(Y, p, Ybuf, pbuf)
        step = worker_step(lp, Ybuf, pbuf, gammas[i], configs[i].preconditioned, want_cost_after=False)
        own = slice(lp.offset, lp.offset + lp.n_own)
        Y[own] = step.Y_new
        p[own] = step.p_new

        rows["k"].append(k)
        rows["time_s"].append(time)
        rows["robot"].append(i)
        rows["f"].append(f_k)
        rows["gradnorm"].append(gnorm)
        rows["block_gradnorm"].append(bnorm)
        rows["eta_norm"].append(step.eta_norm)
        rows["max_staleness"].append(0)
        times[i] = clocks.next_tick(i, time)

    trace = SimulationTrace(
        k=np.array(rows["k"], dtype=np.int64),
        time_s=np.array(rows["time_s"]),
        robot=np.array(rows["robot"], dtype=np.int64),
        f=np.array(rows["f"]),
        gradnorm=np.array(rows["gradnorm"]),
        block_gradnorm=np.array(rows["block_gradnorm"]),
        eta_norm=np.array(rows["eta_norm"]),
        max_staleness=np.array(rows["max_staleness"], dtype=np.int64),
        meta={
            "iterations": iterations,
            "measured_max_delay": 0,
            "seed": seed,
            "rng": "pcg64",
            "n": n,
            "lambda_hz": rate_hz,
            "gammas": gammas,
            "l_hat": l_hat,
            "delay_model": {"kind": "oracle"},
            "trace_every": 1,
            "preconditioned": [c.preconditioned for c in configs],
        },
    )
    return SimulationResult(Y=Y, p=p, trace=trace, messages=[])


# --- trace audits -----------------------------------------------------------


def audit_zero_delay_descent(trace: SimulationTrace, gamma: float, l_hat: float, tol: float = 1e-9) -> float:
    """Worst violation of the per-iteration decrease bound with no delay term.

    Bound: f(x^{k+1}) - f(x^k) <= -(g/2)||rgrad_i f||^2 - ((g - L g^2)/2)||eta||^2.
    Requires a dense trace (trace_every == 1). Returns max LHS - RHS - it
    should not exceed `tol`.
    """
    df = np.diff(trace.f)
    rhs = -(gamma / 2.0) * trace.block_gradnorm[:-1] ** 2 - ((gamma - l_hat * gamma**2) / 2.0) * trace.eta_norm[:-1] ** 2
    return float(np.max(df - rhs)) if len(df) else 0.0


def audit_delayed_descent(
    trace: SimulationTrace,
    problem: MultiRobotProblem,
    gamma: float,
    l_hat: float,
    alpha: float,
    max_delay: int,
) -> float:
    """Fraction of iterations whose decrease respects the delay-aware bound.

    Adds the staleness error term (Delta B L^2 a^2 g^3 / 2) * sum over
    neighbors of the squared step norms in the trailing B-iteration window.
    """
    t = len(trace.f)
    if t < 2:
        return 1.0
    n = problem.n
    delta = problem.max_degree()
    eta_sq = trace.eta_norm**2
    # per-robot prefix sums of squared step norms
    prefix = np.zeros((n, t + 1))
    for j in range(n):
        prefix[j, 1:] = np.cumsum(np.where(trace.robot == j, eta_sq, 0.0))
    coef = delta * max_delay * l_hat**2 * alpha**2 * gamma**3 / 2.0
    ok = 0
    for idx in range(t - 1):
        i = int(trace.robot[idx])
        lo = max(0, idx - max_delay)
        tail = sum(prefix[j, idx] - prefix[j, lo] for j in problem.robot_graph[i])
        rhs = (
            -(gamma / 2.0) * trace.block_gradnorm[idx] ** 2
            - ((gamma - l_hat * gamma**2) / 2.0) * eta_sq[idx]
            + coef * tail
        )
        if trace.f[idx + 1] - trace.f[idx] <= rhs + 1e-12:
            ok += 1
    return ok / (t - 1)


def audit_privacy(problem: MultiRobotProblem, messages: list[MessageRecord]) -> int:
    """Number of private-pose transmissions in a message log (0 if clean)."""
    leaks = 0
    for m in messages:
        for pid in m.pose_ids:
            if problem.is_private(pid):
                leaks += 1
    return leaks
