"""Synthetic multi-robot datasets: lawn-mower grid trajectories with noisy edges.

Robots sweep parallel planes of a 3D unit grid. Odometry connects consecutive
poses; loop closures are sampled among pose pairs within a radius. Rotation
measurements are perturbed by an isotropic tangent-space Gaussian (the
small-concentration surrogate of the isotropic Langevin distribution) and
translations by an isotropic Gaussian; edge weights are the matching
concentration parameters.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .g2o import rot2d
from .graph import GraphError, MultiRobotProblem, PoseId, RelativeMeasurement


@dataclass(frozen=True)
class GridWorldSpec:
    robots: int = 5
    poses_per_robot: int = 100
    loop_closure_prob: float = 0.3
    loop_radius_m: float = 1.0
    rot_noise_deg: float = 2.0
    trans_noise_m: float = 0.05
    seed: int = 0
    # "mle": edge weights are the noise concentrations; "unit": w == 1 while
    # the noise itself is still drawn at the stated magnitudes (rescales the
    # cost only, which benchmark stepsizes of order 1e-4..1 presume)
    weight_mode: str = "mle"

    def __post_init__(self):
        if not (0.0 <= self.loop_closure_prob <= 1.0):
            raise ValueError("loop_closure_prob must lie in [0, 1]")
        if self.rot_noise_deg < 0 or self.trans_noise_m < 0 or self.loop_radius_m < 0:
            raise ValueError("noise parameters must be non-negative")
        if self.robots < 1 or self.poses_per_robot < 2:
            raise ValueError("need at least one robot with two poses")
        if self.weight_mode not in ("mle", "unit"):
            raise ValueError("weight_mode must be 'mle' or 'unit'")


def so3_exp(omega: np.ndarray) -> np.ndarray:
    """Matrix exponential of the skew form of a 3-vector (Rodrigues)."""
    theta = float(np.linalg.norm(omega))
    k = np.array(
        [
            [0.0, -omega[2], omega[1]],
            [omega[2], 0.0, -omega[0]],
            [-omega[1], omega[0], 0.0],
        ]
    )
    if theta < 1e-12:
        return np.eye(3) + k
    return np.eye(3) + np.sin(theta) / theta * k + (1 - np.cos(theta)) / theta**2 * (k @ k)


def sample_rotation_noise(rng: np.random.Generator, d: int, sigma_rad: float) -> np.ndarray:
    """Tangent-Gaussian rotation perturbation about the identity."""
    if sigma_rad == 0.0:
        return np.eye(d)
    if d == 2:
        return rot2d(rng.normal(0.0, sigma_rad))
    return so3_exp(rng.normal(0.0, sigma_rad, size=3))


def noise_weights(rot_noise_deg: float, trans_noise_m: float) -> tuple[float, float]:
    """Concentration weights matching the noise model; unit weights at zero noise."""
    sigma_r = np.deg2rad(rot_noise_deg)
    w_rot = 1.0 / (2.0 * sigma_r**2) if sigma_r > 0 else 1.0
    w_tran = 1.0 / trans_noise_m**2 if trans_noise_m > 0 else 1.0
    return w_rot, w_tran


def _lawnmower_positions(poses: int, z: float) -> np.ndarray:
    row_len = int(np.ceil(np.sqrt(poses)))
    pts = np.zeros((poses, 3))
    for tau in range(poses):
        row, col = divmod(tau, row_len)
        x = col if row % 2 == 0 else row_len - 1 - col
        pts[tau] = (x, row, z)
    return pts


def _headings(pts: np.ndarray) -> np.ndarray:
    """Yaw rotation matrices facing the next waypoint."""
    n = len(pts)
    rots = np.tile(np.eye(3), (n, 1, 1))
    theta_prev = 0.0
    for tau in range(n):
        if tau < n - 1:
            dx, dy = pts[tau + 1, 0] - pts[tau, 0], pts[tau + 1, 1] - pts[tau, 1]
            theta = float(np.arctan2(dy, dx)) if (dx, dy) != (0.0, 0.0) else theta_prev
        else:
            theta = theta_prev
        rots[tau, :2, :2] = rot2d(theta)
        theta_prev = theta
    return rots


def relative_transform(
    rot_a: np.ndarray, t_a: np.ndarray, rot_b: np.ndarray, t_b: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Relative pose taking frame a to frame b."""
    return rot_a.T @ rot_b, rot_a.T @ (t_b - t_a)


def generate_grid_world(
    spec: GridWorldSpec, r: int | None = None, max_retries: int = 20
) -> MultiRobotProblem:
    """Build a connected multi-robot problem from the grid-world spec.

    Deterministic in spec.seed. Raises GraphError if no connected loop-closure
    draw is found within max_retries.
    """
    d = 3
    n, per = spec.robots, spec.poses_per_robot
    total = n * per
    pts = np.concatenate([_lawnmower_positions(per, z=float(i)) for i in range(n)])
    rots = np.concatenate([_headings(pts[i * per : (i + 1) * per]) for i in range(n)])

    # candidate loop closures: pose pairs within radius, excluding odometry pairs
    diff = pts[:, None, :] - pts[None, :, :]
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    cand_a, cand_b = np.nonzero(np.triu(dist <= spec.loop_radius_m, k=1))
    same_robot = cand_a // per == cand_b // per
    consecutive = same_robot & (cand_b - cand_a == 1)
    keep = ~consecutive
    cand_a, cand_b = cand_a[keep], cand_b[keep]

    rng = np.random.default_rng(spec.seed)
    if spec.weight_mode == "mle":
        w_rot, w_tran = noise_weights(spec.rot_noise_deg, spec.trans_noise_m)
    else:
        w_rot, w_tran = 1.0, 1.0
    sigma_r = np.deg2rad(spec.rot_noise_deg)

    def pid(g: int) -> PoseId:
        return PoseId(int(g) // per, int(g) % per)

    def measure(a: int, b: int) -> RelativeMeasurement:
        rel_rot, rel_t = relative_transform(rots[a], pts[a], rots[b], pts[b])
        rel_rot = rel_rot @ sample_rotation_noise(rng, d, sigma_r)
        if spec.trans_noise_m > 0:
            rel_t = rel_t + rng.normal(0.0, spec.trans_noise_m, size=d)
        return RelativeMeasurement(pid(a), pid(b), rel_rot, rel_t, w_rot, w_tran)

    for attempt in range(max_retries):
        edges = []
        for i in range(n):
            base = i * per
            edges.extend(measure(base + tau, base + tau + 1) for tau in range(per - 1))
        accept = rng.random(len(cand_a)) < spec.loop_closure_prob
        edges.extend(measure(a, b) for a, b in zip(cand_a[accept], cand_b[accept]))
        try:
            return MultiRobotProblem(
                n=n,
                d=d,
                r=d if r is None else r,
                num_poses=(per,) * n,
                edges=edges,
                true_rotations=rots.copy(),
                true_translations=pts.copy(),
            )
        except GraphError:
            continue
    raise GraphError(
        f"no connected loop-closure draw in {max_retries} attempts; "
        "increase loop_closure_prob or loop_radius_m"
    )
