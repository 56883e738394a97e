import numpy as np
import pytest

from asyncpgo.graph import MultiRobotProblem, PoseId, RelativeMeasurement
from asyncpgo.manifold import random_rotation, random_stiefel


def random_problem(
    rng: np.random.Generator,
    n_robots: int = 3,
    poses_per_robot: int = 5,
    d: int = 3,
    r: int = 5,
    extra_edges: int = 4,
    w_span: tuple[float, float] = (0.5, 2.0),
) -> MultiRobotProblem:
    """Random connected multi-robot problem: per-robot chains, a chain of
    inter-robot links, plus extra random edges."""
    counts = [poses_per_robot] * n_robots

    def meas(a: PoseId, b: PoseId) -> RelativeMeasurement:
        return RelativeMeasurement(
            a,
            b,
            random_rotation(rng, d),
            rng.normal(0.0, 1.0, d),
            float(rng.uniform(*w_span)),
            float(rng.uniform(*w_span)),
        )

    edges = []
    for i in range(n_robots):
        edges.extend(meas(PoseId(i, t), PoseId(i, t + 1)) for t in range(poses_per_robot - 1))
    for i in range(n_robots - 1):
        edges.append(meas(PoseId(i, poses_per_robot - 1), PoseId(i + 1, 0)))
    total = n_robots * poses_per_robot
    for _ in range(extra_edges):
        a = int(rng.integers(0, total))
        b = int(rng.integers(0, total - 1))
        if b >= a:
            b += 1
        edges.append(meas(PoseId(a // poses_per_robot, a % poses_per_robot), PoseId(b // poses_per_robot, b % poses_per_robot)))
    return MultiRobotProblem(n=n_robots, d=d, r=r, num_poses=tuple(counts), edges=edges)


def random_state(rng: np.random.Generator, n_poses: int, r: int, d: int):
    Y = np.ascontiguousarray(random_stiefel(rng, r, d, n_poses))
    p = rng.standard_normal((n_poses, r))
    return Y, p


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
