"""Cost and gradient evaluation for the lifted pose-graph objective.

The decision variables are one orthonormal block Y (r x d) and one lifted
translation p (r,) per pose, stored problem-wide as arrays Y: (N, r, d) and
p: (N, r). The cost is the weighted sum over measurement edges (a -> b) of

    w_rot * ||Y_b - Y_a R||_F^2  +  w_tran * ||p_b - p_a - Y_a t||^2

which is a convex quadratic in the ambient variables; non-convexity enters
only through the orthonormality constraints. Per-edge kernels are dispatched
through asyncpgo.kernels (compiled when available).
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .graph import MultiRobotProblem, PoseId, RelativeMeasurement, neighbor_poses


class DegenerateProblemError(ValueError):
    """Objective has no coupling (no edges) or an otherwise unusable structure."""


@dataclass(frozen=True)
class LiftedPose:
    """One pose variable: orthonormal block Y (r x d) and lifted translation p (r,)."""

    Y: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        r, d = self.Y.shape
        if self.p.shape != (r,):
            raise ValueError("translation length must match lift rank")
        if np.linalg.norm(self.Y.T @ self.Y - np.eye(d)) > 1e-10:
            raise ValueError("orthonormality defect exceeds tolerance")


@dataclass(frozen=True)
class LipschitzEstimate:
    """Euclidean gradient Lipschitz estimate and the padded pullback constant."""

    c_hat: float
    l_hat: float
    method: str
    safety: float

    def __post_init__(self):
        if not (self.l_hat >= self.c_hat > 0):
            raise ValueError("need l_hat >= c_hat > 0")


@dataclass
class EdgeArrays:
    """Struct-of-arrays edge storage matching the kernel contract."""

    out_idx: np.ndarray  # (E,) int64
    in_idx: np.ndarray  # (E,) int64
    rot: np.ndarray  # (E, d, d)
    tran: np.ndarray  # (E, d)
    w_rot: np.ndarray  # (E,)
    w_tran: np.ndarray  # (E,)

    @classmethod
    def build(cls, edges: list[RelativeMeasurement], index, d: int) -> "EdgeArrays":
        e = len(edges)
        out = cls(
            out_idx=np.zeros(e, dtype=np.int64),
            in_idx=np.zeros(e, dtype=np.int64),
            rot=np.zeros((e, d, d)),
            tran=np.zeros((e, d)),
            w_rot=np.zeros(e),
            w_tran=np.zeros(e),
        )
        for k, m in enumerate(edges):
            out.out_idx[k] = index(m.from_id)
            out.in_idx[k] = index(m.to_id)
            out.rot[k] = m.rotation
            out.tran[k] = m.translation
            out.w_rot[k] = m.w_rot
            out.w_tran[k] = m.w_tran
        return out

    def __len__(self) -> int:
        return len(self.out_idx)

    def cost(self, Y: np.ndarray, p: np.ndarray) -> float:
        return kernels.edge_cost(self.out_idx, self.in_idx, self.rot, self.tran, self.w_rot, self.w_tran, Y, p)

    def add_gradient(self, Y, p, GY, Gp) -> None:
        kernels.edge_grad(self.out_idx, self.in_idx, self.rot, self.tran, self.w_rot, self.w_tran, Y, p, GY, Gp)

    def cost_and_add_gradient(self, Y, p, GY, Gp) -> float:
        return kernels.edge_cost_grad(
            self.out_idx, self.in_idx, self.rot, self.tran, self.w_rot, self.w_tran, Y, p, GY, Gp
        )


def lift_to_rank(rotations: np.ndarray, translations: np.ndarray, r: int) -> tuple[np.ndarray, np.ndarray]:
    """Zero-pad SE(d) trajectories into the rank-r search space."""
    n, d = translations.shape
    if r < d:
        raise ValueError("lift rank must be at least d")
    Y = np.zeros((n, r, d))
    Y[:, :d, :] = rotations
    p = np.zeros((n, r))
    p[:, :d] = translations
    return Y, p


class LocalProblem:
    """Robot-local view: own poses plus cached neighbor poses in one buffer.

    Buffer layout: slots [0, n_own) hold the robot's poses, slots
    [n_own, n_own + n_nbr) the neighbor poses in sorted global-index order.
    """

    def __init__(self, problem: MultiRobotProblem, robot: int):
        self.robot = robot
        self.n_own = problem.num_poses[robot]
        self.offset = problem.offsets[robot]
        nbr_ids = sorted(
            {problem.global_index(pid) for j in problem.robot_graph[robot] for pid in neighbor_poses(problem, robot, j)}
        )
        self.neighbor_gidx = np.array(nbr_ids, dtype=np.int64)
        self.buffer_size = self.n_own + len(nbr_ids)
        slot = {g: self.n_own + k for k, g in enumerate(nbr_ids)}

        def local_index(pid: PoseId) -> int:
            g = problem.global_index(pid)
            return g - self.offset if pid.robot == robot else slot[g]

        local_edges = [e for e in problem.edges if robot in (e.from_id.robot, e.to_id.robot)]
        self.arrays = EdgeArrays.build(local_edges, local_index, problem.d)
        self.d = problem.d
        self.r = problem.r
        self._hessian_inv = self._build_preconditioner(local_edges, local_index)

    def _build_preconditioner(self, edges, local_index) -> np.ndarray:
        """Inverses of per-pose (d+1)x(d+1) Hessian diagonal blocks of the local cost."""
        d = self.d
        h = np.zeros((self.n_own, d + 1, d + 1))
        eye_head = np.zeros((d + 1, d + 1))
        eye_head[:d, :d] = np.eye(d)
        for e in edges:
            if e.from_id.robot == self.robot:
                q = local_index(e.from_id)
                s = np.concatenate([e.translation, [1.0]])
                h[q] += 2.0 * e.w_rot * eye_head + 2.0 * e.w_tran * np.outer(s, s)
            if e.to_id.robot == self.robot:
                q = local_index(e.to_id)
                h[q] += 2.0 * np.diag([e.w_rot] * d + [e.w_tran])
        inv = np.zeros_like(h)
        for q in range(self.n_own):
            tr = float(np.trace(h[q]))
            if tr <= 0.0:
                warnings.warn(f"singular preconditioner block at pose {q}; using identity", stacklevel=2)
                inv[q] = np.eye(d + 1)
                continue
            # regularization scales with the block so the map commutes with
            # uniform weight rescaling
            eps = 1e-3 * tr / (d + 1)
            inv[q] = np.linalg.inv(h[q] + eps * np.eye(d + 1))
        return inv

    def split_state(self, Y: np.ndarray, p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Views of the robot's own blocks inside global state arrays."""
        sl = slice(self.offset, self.offset + self.n_own)
        return Y[sl], p[sl]

    def make_buffer(self) -> tuple[np.ndarray, np.ndarray]:
        return np.zeros((self.buffer_size, self.r, self.d)), np.zeros((self.buffer_size, self.r))

    def fill_buffer_from_global(self, Y, p, Ybuf, pbuf) -> None:
        own = slice(self.offset, self.offset + self.n_own)
        Ybuf[: self.n_own] = Y[own]
        pbuf[: self.n_own] = p[own]
        Ybuf[self.n_own :] = Y[self.neighbor_gidx]
        pbuf[self.n_own :] = p[self.neighbor_gidx]

    def cost(self, Ybuf: np.ndarray, pbuf: np.ndarray) -> float:
        """Local cost: private edges plus shared edges at the cached neighbors."""
        return self.arrays.cost(Ybuf, pbuf)

    def cost_and_own_gradient(self, Ybuf, pbuf) -> tuple[float, np.ndarray, np.ndarray]:
        """Cost plus the Euclidean gradient restricted to the robot's own poses."""
        GY = np.zeros_like(Ybuf)
        Gp = np.zeros_like(pbuf)
        c = self.arrays.cost_and_add_gradient(Ybuf, pbuf, GY, Gp)
        return c, GY[: self.n_own], Gp[: self.n_own]

    def riemannian_gradient(self, Ybuf, pbuf) -> tuple[float, np.ndarray, np.ndarray]:
        """Local cost and tangent-projected gradient at the robot's own poses."""
        c, GY, Gp = self.cost_and_own_gradient(Ybuf, pbuf)
        return c, kernels.project_tangent(Ybuf[: self.n_own], GY), Gp

    def precondition(self, Y_own: np.ndarray, etaY: np.ndarray, etap: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Apply the inverse block-Jacobi Hessian, then re-project to the tangent space."""
        xi = np.concatenate([etaY, etap[:, :, None]], axis=2)  # (n_own, r, d+1)
        out = xi @ self._hessian_inv
        outY = kernels.project_tangent(Y_own, np.ascontiguousarray(out[:, :, : self.d]))
        return outY, out[:, :, self.d]


class Objective:
    """Evaluator bound to one problem: global/local costs, gradients, constants."""

    def __init__(self, problem: MultiRobotProblem):
        self.problem = problem
        self.d, self.r = problem.d, problem.r
        self.n_poses = problem.total_poses
        self.arrays = EdgeArrays.build(problem.edges, problem.global_index, problem.d)
        self.locals = [LocalProblem(problem, i) for i in range(problem.n)]

    # --- global scope ---------------------------------------------------

    def cost(self, Y: np.ndarray, p: np.ndarray) -> float:
        return self.arrays.cost(Y, p)

    def euclidean_gradient(self, Y, p) -> tuple[np.ndarray, np.ndarray]:
        GY = np.zeros_like(Y)
        Gp = np.zeros_like(p)
        self.arrays.add_gradient(Y, p, GY, Gp)
        return GY, Gp

    def riemannian_gradient(self, Y, p) -> tuple[np.ndarray, np.ndarray]:
        GY, Gp = self.euclidean_gradient(Y, p)
        return kernels.project_tangent(Y, GY), Gp

    def cost_and_riemannian_gradient(self, Y, p) -> tuple[float, np.ndarray, np.ndarray]:
        GY = np.zeros_like(Y)
        Gp = np.zeros_like(p)
        c = self.arrays.cost_and_add_gradient(Y, p, GY, Gp)
        return c, kernels.project_tangent(Y, GY), Gp

    def gradient_norms(self, RY: np.ndarray, Rp: np.ndarray, robot: int) -> tuple[float, float]:
        """(full norm, robot-block norm) of a gradient in state layout."""
        vy, vp = RY.reshape(-1), Rp.reshape(-1)
        total = float(vy @ vy + vp @ vp)
        lp = self.locals[robot]
        sl = slice(lp.offset, lp.offset + lp.n_own)
        by, bp = RY[sl].reshape(-1), Rp[sl].reshape(-1)
        block = float(by @ by + bp @ bp)
        return float(np.sqrt(total)), float(np.sqrt(block))

    # --- robot scope ------------------------------------------------------

    def local_cost(self, robot: int, Ybuf, pbuf) -> float:
        return self.locals[robot].cost(Ybuf, pbuf)

    # --- constants --------------------------------------------------------

    def estimate_lipschitz(
        self,
        safety: float = 2.0,
        tol: float = 1e-6,
        max_iters: int = 10_000,
        seed: int = 0,
    ) -> LipschitzEstimate:
        """Largest eigenvalue of the ambient Hessian by power iteration.

        The cost is a pure quadratic, so the Hessian-vector product is the
        Euclidean gradient evaluated at the (ambient) direction itself.
        """
        if len(self.arrays) == 0:
            raise DegenerateProblemError("degenerate problem: no edges couple the poses")
        if safety < 1.0:
            raise ValueError("safety multiplier must be >= 1")
        rng = np.random.default_rng(seed)
        v_y = rng.standard_normal((self.n_poses, self.r, self.d))
        v_p = rng.standard_normal((self.n_poses, self.r))

        def matvec(vy, vp):
            gy = np.zeros_like(vy)
            gp = np.zeros_like(vp)
            self.arrays.add_gradient(vy, vp, gy, gp)
            return gy, gp

        lam = 0.0
        for _ in range(max_iters):
            nrm = np.sqrt(np.sum(v_y * v_y) + np.sum(v_p * v_p))
            v_y /= nrm
            v_p /= nrm
            a_y, a_p = matvec(v_y, v_p)
            lam = float(np.sum(v_y * a_y) + np.sum(v_p * a_p))
            res = np.sqrt(np.sum((a_y - lam * v_y) ** 2) + np.sum((a_p - lam * v_p) ** 2))
            if lam <= 0.0:
                raise DegenerateProblemError("degenerate problem: zero curvature")
            if res <= tol * lam:
                return LipschitzEstimate(c_hat=lam, l_hat=safety * lam, method="power-iteration", safety=safety)
            v_y, v_p = a_y, a_p
        raise RuntimeError(f"power iteration did not reach tolerance {tol} in {max_iters} iterations")
