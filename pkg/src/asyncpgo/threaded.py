"""Truly concurrent execution: one optimization thread per robot.

This mode exists to exercise the concurrency contract (atomic read/write of
individual poses, robots never block on each other); it is wall-clock based
and non-deterministic, so it is used for smoke testing rather than analysis.
The event-driven simulator in asyncpgo.sim is the reproducible counterpart.
"""

from __future__ import annotations

import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .graph import MultiRobotProblem
from .objective import Objective
from .sim import MessageRecord, _public_indices
from .worker import WorkerConfig, worker_step


@dataclass
class ConcurrentResult:
    Y: np.ndarray
    p: np.ndarray
    sample_times: np.ndarray
    sample_costs: np.ndarray
    updates: int
    messages: list[MessageRecord]
    torn_reads: int = 0


@dataclass
class _Mailbox:
    lock: threading.Lock = field(default_factory=threading.Lock)
    slots: dict = field(default_factory=dict)  # sender -> (Y_pub, p_pub)


def run_concurrent(
    problem: MultiRobotProblem,
    Y0: np.ndarray,
    p0: np.ndarray,
    configs: list[WorkerConfig],
    wall_horizon_s: float,
    *,
    delay_s: float = 0.05,
    send_period_s: float = 0.02,
    sample_period_s: float = 0.05,
    seed: int = 0,
    objective: Objective | None = None,
) -> ConcurrentResult:
    """Run all robots in parallel threads for a wall-clock horizon.

    Shared pose arrays are guarded by one lock per pose; a sampler thread
    records the global cost and checks that sampled blocks satisfy the
    orthonormality invariant (a torn read would violate it).
    """
    obj = objective if objective is not None else Objective(problem)
    configs = sorted(configs, key=lambda c: c.robot)
    gammas = [c.stepsize.resolve(None, None) if c.stepsize.mode == "fixed" else None for c in configs]
    if any(g is None for g in gammas):
        l_hat = obj.estimate_lipschitz().l_hat
        rho = problem.coupling_ratio()
        gammas = [c.stepsize.resolve(l_hat, rho) for c in configs]

    n = problem.n
    Y = np.array(Y0, dtype=float)
    p = np.array(p0, dtype=float)
    pose_locks = [threading.Lock() for _ in range(problem.total_poses)]
    mailboxes = [_Mailbox() for _ in range(n)]
    public_gidx = [_public_indices(problem, i) for i in range(n)]
    msg_lock = threading.Lock()
    messages: list[MessageRecord] = []
    stop = threading.Event()
    update_counts = [0] * n
    torn = [0]
    ss = np.random.SeedSequence(seed).spawn(2 * n)

    def read_poses(gidx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        ys = np.empty((len(gidx), problem.r, problem.d))
        ps = np.empty((len(gidx), problem.r))
        for out, g in enumerate(gidx):
            with pose_locks[g]:
                ys[out] = Y[g]
                ps[out] = p[g]
        return ys, ps

    def optimize_loop(i: int) -> None:
        rng = np.random.default_rng(ss[i])
        lp = obj.locals[i]
        Ybuf, pbuf = lp.make_buffer()
        own = list(problem.owned_range(i))
        while not stop.is_set():
            time.sleep(min(rng.exponential(1.0 / configs[i].clock_rate_hz), 0.05))
            if stop.is_set():
                break
            Ybuf[: lp.n_own] = Y[own]  # own poses: this thread is the only writer
            pbuf[: lp.n_own] = p[own]
            with mailboxes[i].lock:
                cached = dict(mailboxes[i].slots)
            for k_slot, g in enumerate(lp.neighbor_gidx):
                found = False
                for sender, (ys, ps, gidx) in cached.items():
                    pos = np.searchsorted(gidx, g)
                    if pos < len(gidx) and gidx[pos] == g:
                        Ybuf[lp.n_own + k_slot] = ys[pos]
                        pbuf[lp.n_own + k_slot] = ps[pos]
                        found = True
                        break
                if not found:  # nothing received yet: keep initial estimate
                    pass
            step = worker_step(lp, Ybuf, pbuf, gammas[i], configs[i].preconditioned, want_cost_after=False)
            for q, g in enumerate(own):
                with pose_locks[g]:
                    Y[g] = step.Y_new[q]
                    p[g] = step.p_new[q]
            update_counts[i] += 1

    def send_loop(i: int) -> None:
        rng = np.random.default_rng(ss[n + i])
        gidx = public_gidx[i]
        ids = tuple(problem.pose_id(int(g)) for g in gidx)
        if len(gidx) == 0 or not problem.robot_graph[i]:
            return
        while not stop.is_set():
            t_emit = time.monotonic()
            ys, ps = read_poses(gidx)
            if delay_s > 0:
                time.sleep(delay_s * float(rng.uniform(0.5, 1.5)))
            for j in problem.robot_graph[i]:
                with mailboxes[j].lock:
                    mailboxes[j].slots[i] = (ys.copy(), ps.copy(), gidx)
                with msg_lock:
                    messages.append(MessageRecord(i, j, ids, t_emit, time.monotonic()))
            time.sleep(send_period_s)

    sample_times: list[float] = []
    sample_costs: list[float] = []

    def sample_loop() -> None:
        t0 = time.monotonic()
        while not stop.is_set():
            ys, ps = read_poses(np.arange(problem.total_poses))
            defect = np.linalg.norm(np.swapaxes(ys, -1, -2) @ ys - np.eye(problem.d), axis=(1, 2))
            if np.any(defect > 1e-8):
                torn[0] += 1
            sample_times.append(time.monotonic() - t0)
            sample_costs.append(obj.cost(ys, ps))
            time.sleep(sample_period_s)

    threads = [threading.Thread(target=optimize_loop, args=(i,), daemon=True) for i in range(n)]
    threads += [threading.Thread(target=send_loop, args=(i,), daemon=True) for i in range(n)]
    threads.append(threading.Thread(target=sample_loop, daemon=True))
    for t in threads:
        t.start()
    time.sleep(wall_horizon_s)
    stop.set()
    for t in threads:
        t.join(timeout=5.0)

    return ConcurrentResult(
        Y=Y,
        p=p,
        sample_times=np.array(sample_times),
        sample_costs=np.array(sample_costs),
        updates=sum(update_counts),
        messages=messages,
        torn_reads=torn[0],
    )
