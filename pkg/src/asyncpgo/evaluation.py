"""Initialization, centralized reference solver, rounding, and error metrics."""

from __future__ import annotations

from collections import deque
from dataclasses import asdict, dataclass

import numpy as np

from .graph import GraphError, MultiRobotProblem
from .manifold import polar_factor
from .objective import Objective, lift_to_rank


@dataclass
class MetricsReport:
    final_cost: float
    final_gradnorm: float
    optimality_gap: float | None
    rot_rmse_chordal: float | None
    trans_rmse_m: float | None

    def as_dict(self) -> dict:
        return asdict(self)


def spanning_tree_poses(problem: MultiRobotProblem) -> tuple[np.ndarray, np.ndarray]:
    """SE(d) trajectories from measurement propagation along a BFS tree.

    The tree is rooted at the anchor pose (robot 0, step 0), which is fixed at
    the identity; traversal order is deterministic.
    """
    n = problem.total_poses
    d = problem.d
    adj: list[list[tuple[int, int, bool]]] = [[] for _ in range(n)]
    for e_idx, e in enumerate(problem.edges):
        a, b = problem.global_index(e.from_id), problem.global_index(e.to_id)
        adj[a].append((b, e_idx, True))
        adj[b].append((a, e_idx, False))
    for lst in adj:
        lst.sort()

    rot = np.tile(np.eye(d), (n, 1, 1))
    tran = np.zeros((n, d))
    seen = np.zeros(n, dtype=bool)
    root = problem.global_index(problem.anchor)
    seen[root] = True
    queue = deque([root])
    while queue:
        u = queue.popleft()
        for v, e_idx, forward in adj[u]:
            if seen[v]:
                continue
            e = problem.edges[e_idx]
            if forward:
                rot[v] = rot[u] @ e.rotation
                tran[v] = tran[u] + rot[u] @ e.translation
            else:
                rot[v] = rot[u] @ e.rotation.T
                tran[v] = tran[u] - rot[v] @ e.translation
            seen[v] = True
            queue.append(v)
    if not np.all(seen):
        missing = int(np.sum(~seen))
        raise GraphError(f"pose graph is disconnected: {missing} poses unreachable from the anchor")
    return rot, tran


def spanning_tree_init(problem: MultiRobotProblem) -> tuple[np.ndarray, np.ndarray]:
    """Lifted initial state from spanning-tree propagation (zero-row padding)."""
    rot, tran = spanning_tree_poses(problem)
    return lift_to_rank(rot, tran, problem.r)


@dataclass
class OracleResult:
    Y: np.ndarray
    p: np.ndarray
    f_star: float
    gradnorm: float
    converged: bool
    iterations: int


def centralized_oracle(
    problem: MultiRobotProblem,
    Y0: np.ndarray,
    p0: np.ndarray,
    tol_gradnorm: float = 1e-8,
    max_iters: int = 20_000,
    objective: Objective | None = None,
) -> OracleResult:
    """Full Riemannian gradient descent with Armijo backtracking line search.

    Serves as the desk-scale reference solver; returns the best iterate seen,
    with `converged` false when the tolerance was not reached.
    """
    obj = objective if objective is not None else Objective(problem)
    from .manifold import stiefel_retract

    Y = np.array(Y0, dtype=float)
    p = np.array(p0, dtype=float)
    l_hat = obj.estimate_lipschitz().l_hat
    t = 1.0 / l_hat
    c1 = 1e-4
    best = None

    f, gY, gp = obj.cost_and_riemannian_gradient(Y, p)
    for it in range(max_iters):
        gsq = float(np.sum(gY * gY) + np.sum(gp * gp))
        gnorm = float(np.sqrt(gsq))
        if best is None or f < best[0]:
            best = (f, Y.copy(), p.copy(), gnorm)
        if gnorm <= tol_gradnorm:
            return OracleResult(Y, p, f, gnorm, True, it)
        t = min(t * 4.0, 1e6 / l_hat)
        while True:
            Y_trial = stiefel_retract(Y, -t * gY)
            p_trial = p - t * gp
            f_trial = obj.cost(Y_trial, p_trial)
            if f_trial <= f - c1 * t * gsq:
                break
            t *= 0.5
            if t < 1e-20:
                # flat to machine precision: accept current point as converged
                return OracleResult(Y, p, f, gnorm, gnorm <= tol_gradnorm, it)
        Y, p, f = Y_trial, p_trial, f_trial
        gY, gp = obj.riemannian_gradient(Y, p)
    f_best, Y_best, p_best, gnorm_best = best
    if f < f_best:
        return OracleResult(Y, p, f, float(np.sqrt(np.sum(gY**2) + np.sum(gp**2))), False, max_iters)
    return OracleResult(Y_best, p_best, f_best, gnorm_best, False, max_iters)


def round_to_sed(Y: np.ndarray, p: np.ndarray, d: int) -> tuple[np.ndarray, np.ndarray]:
    """Round a lifted solution to SE(d) trajectories.

    For r > d: stack all blocks into an r x (d+1)N matrix, map onto the
    dominant d-dimensional left singular subspace (basis canonicalized so the
    map is the identity on exactly-padded input), then fix determinants -
    globally if most blocks are improper, individually otherwise.
    """
    n, r, _ = Y.shape
    if r == d:
        mapped_rot = np.array(Y, dtype=float, copy=True)
        mapped_t = np.array(p, dtype=float, copy=True)
    else:
        stacked = np.concatenate([Y, p[:, :, None]], axis=2)  # (N, r, d+1)
        x = np.concatenate(list(stacked), axis=1)  # (r, (d+1)N)
        u, s, _ = np.linalg.svd(x, full_matrices=False)
        if s[d - 1] <= 1e-9 * s[0]:
            raise ValueError("degenerate lift: stacked solution is rank deficient")
        basis = u[:, :d]
        top = basis[:d, :]
        ut, st, vt = np.linalg.svd(top)
        if st[-1] > 1e-12:
            basis = basis @ (vt.T @ ut.T)  # rotate basis toward the leading axes
        mapped = basis.T @ x  # (d, (d+1)N)
        blocks = mapped.reshape(d, n, d + 1).transpose(1, 0, 2)
        mapped_rot = blocks[:, :, :d]
        mapped_t = blocks[:, :, d]

    rot = polar_factor(mapped_rot)
    dets = np.linalg.det(rot)
    if np.sum(dets < 0) > n / 2:
        # most blocks improper: flip the last coordinate globally, re-project
        flip = np.diag([1.0] * (d - 1) + [-1.0])
        mapped_rot = np.einsum("ab,nbc->nac", flip, mapped_rot)
        mapped_t = mapped_t @ flip
        rot = polar_factor(mapped_rot)
        dets = np.linalg.det(rot)
    if np.any(dets < 0):
        fix = dets < 0
        u, _, vt = np.linalg.svd(mapped_rot[fix])
        corr = np.tile(np.eye(d), (int(np.sum(fix)), 1, 1))
        corr[:, -1, -1] = np.sign(np.linalg.det(u @ vt))
        rot[fix] = u @ corr @ vt
    return rot, mapped_t


def rmse(
    rot_est: np.ndarray,
    t_est: np.ndarray,
    rot_ref: np.ndarray,
    t_ref: np.ndarray,
) -> tuple[float, float]:
    """Rotation (chordal) and translation RMSE after global gauge alignment.

    The estimate is aligned to the reference by one rigid transform: rotation
    from orthogonal Procrustes over all stacked rotations, translation from
    the centroid difference.
    """
    if rot_est.shape != rot_ref.shape or t_est.shape != t_ref.shape:
        raise ValueError("trajectory shapes do not match")
    d = rot_est.shape[-1]
    a = np.einsum("nij,nkj->ik", rot_ref, rot_est)  # sum of R_ref R_est^T
    u, _, vt = np.linalg.svd(a)
    corr = np.eye(d)
    corr[-1, -1] = np.sign(np.linalg.det(u @ vt))
    omega = u @ corr @ vt
    t_aligned = t_est @ omega.T
    shift = t_ref.mean(axis=0) - t_aligned.mean(axis=0)
    t_aligned = t_aligned + shift
    rot_aligned = np.einsum("ij,njk->nik", omega, rot_est)
    rot_rmse = float(np.sqrt(np.mean(np.sum((rot_aligned - rot_ref) ** 2, axis=(1, 2)))))
    trans_rmse = float(np.sqrt(np.mean(np.sum((t_aligned - t_ref) ** 2, axis=1))))
    return rot_rmse, trans_rmse
