"""Pose-graph data model: measurements, multi-robot partitioning, robot-level graph.

Poses are addressed two ways: a PoseId (robot, step) for the distributed view,
and a flat global index for array storage. Robots own contiguous global index
ranges, so the two views convert cheaply.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

ROTATION_TOL = 1e-8


class GraphError(ValueError):
    """Malformed pose graph or invalid query."""


class PoseId(NamedTuple):
    robot: int
    step: int


@dataclass(frozen=True)
class RelativeMeasurement:
    """Weighted relative-pose edge between two pose vertices."""

    from_id: PoseId
    to_id: PoseId
    rotation: np.ndarray  # (d, d)
    translation: np.ndarray  # (d,)
    w_rot: float
    w_tran: float

    def __post_init__(self):
        d = self.rotation.shape[0]
        if self.rotation.shape != (d, d) or self.translation.shape != (d,):
            raise GraphError("measurement shape mismatch")
        defect = np.linalg.norm(self.rotation.T @ self.rotation - np.eye(d))
        if defect > ROTATION_TOL or np.linalg.det(self.rotation) <= 0:
            raise GraphError("measurement rotation is not in SO(d)")
        if not (self.w_rot > 0 and self.w_tran > 0):
            raise GraphError("measurement weights must be positive")

    @property
    def dim(self) -> int:
        return self.rotation.shape[0]


@dataclass
class PoseGraph:
    """Single-trajectory pose graph, e.g. as ingested from a g2o file."""

    d: int
    num_poses: int
    edges: list[RelativeMeasurement]
    initial_rotations: np.ndarray | None = None  # (N, d, d) from VERTEX records
    initial_translations: np.ndarray | None = None  # (N, d)


@dataclass
class MultiRobotProblem:
    """Pose graph partitioned into robots, with the derived robot-level graph.

    `num_poses[i]` is robot i's trajectory length; global pose indices are
    contiguous per robot in robot order. `r` is the relaxation rank used when
    the problem is lifted (r == d recovers the unrelaxed search space).
    """

    n: int
    d: int
    r: int
    num_poses: tuple[int, ...]
    edges: list[RelativeMeasurement]
    true_rotations: np.ndarray | None = None  # (N, d, d) ground truth, if synthetic
    true_translations: np.ndarray | None = None  # (N, d)

    offsets: tuple[int, ...] = field(init=False)
    robot_graph: dict[int, tuple[int, ...]] = field(init=False)
    public_poses: tuple[frozenset[PoseId], ...] = field(init=False)

    def __post_init__(self):
        if self.n < 1 or len(self.num_poses) != self.n:
            raise GraphError("robot count inconsistent with pose counts")
        if any(c < 1 for c in self.num_poses):
            raise GraphError("every robot needs at least one pose")
        if not (2 <= self.d <= 3) or not (self.d <= self.r <= 10):
            raise GraphError(f"unsupported dimensions d={self.d}, r={self.r}")
        offs = np.concatenate([[0], np.cumsum(self.num_poses)])
        self.offsets = tuple(int(o) for o in offs[:-1])
        self._total = int(offs[-1])

        nbrs: dict[int, set[int]] = {i: set() for i in range(self.n)}
        public: list[set[PoseId]] = [set() for _ in range(self.n)]
        for e in self.edges:
            self._check_pose(e.from_id)
            self._check_pose(e.to_id)
            if e.dim != self.d:
                raise GraphError("edge dimension does not match problem")
            i, j = e.from_id.robot, e.to_id.robot
            if i != j:
                nbrs[i].add(j)
                nbrs[j].add(i)
                public[i].add(e.from_id)
                public[j].add(e.to_id)
        self.robot_graph = {i: tuple(sorted(s)) for i, s in nbrs.items()}
        self.public_poses = tuple(frozenset(s) for s in public)
        if not self._weakly_connected():
            raise GraphError("global pose graph is not weakly connected")

    def _check_pose(self, pid: PoseId) -> None:
        if not (0 <= pid.robot < self.n and 0 <= pid.step < self.num_poses[pid.robot]):
            raise GraphError(f"pose {pid} out of range")

    def _weakly_connected(self) -> bool:
        if self._total == 1:
            return True
        parent = list(range(self._total))

        def find(a: int) -> int:
            while parent[a] != a:
                parent[a] = parent[parent[a]]
                a = parent[a]
            return a

        for e in self.edges:
            ra, rb = find(self.global_index(e.from_id)), find(self.global_index(e.to_id))
            if ra != rb:
                parent[ra] = rb
        root = find(0)
        return all(find(v) == root for v in range(self._total))

    # --- indexing -------------------------------------------------------

    @property
    def total_poses(self) -> int:
        return self._total

    def global_index(self, pid: PoseId) -> int:
        return self.offsets[pid.robot] + pid.step

    def pose_id(self, gidx: int) -> PoseId:
        robot = int(np.searchsorted(self.offsets, gidx, side="right")) - 1
        return PoseId(robot, gidx - self.offsets[robot])

    def owned_range(self, robot: int) -> range:
        return range(self.offsets[robot], self.offsets[robot] + self.num_poses[robot])

    # --- structure queries ------------------------------------------------

    @property
    def anchor(self) -> PoseId:
        return PoseId(0, 0)

    def intra_edges(self, robot: int) -> list[RelativeMeasurement]:
        return [e for e in self.edges if e.from_id.robot == robot and e.to_id.robot == robot]

    def inter_edges(self) -> list[RelativeMeasurement]:
        return [e for e in self.edges if e.from_id.robot != e.to_id.robot]

    def is_private(self, pid: PoseId) -> bool:
        return pid not in self.public_poses[pid.robot]

    def max_degree(self) -> int:
        return max((len(v) for v in self.robot_graph.values()), default=0)

    def coupling_ratio(self) -> float:
        """Maximum robot-graph degree over robot count (1/n for n == 1)."""
        return max(self.max_degree(), 1) / self.n


def neighbor_poses(problem: MultiRobotProblem, i: int, j: int) -> frozenset[PoseId]:
    """Poses of robot j that appear in measurements shared with robot i."""
    if j not in problem.robot_graph.get(i, ()):
        return frozenset()
    out = set()
    for e in problem.edges:
        ri, rj = e.from_id.robot, e.to_id.robot
        if (ri, rj) == (i, j):
            out.add(e.to_id)
        elif (ri, rj) == (j, i):
            out.add(e.from_id)
    return frozenset(out)


def partition(graph: PoseGraph, n: int, r: int | None = None) -> MultiRobotProblem:
    """Split a single trajectory into n contiguous, nearly equal robot blocks."""
    if n < 1:
        raise GraphError("robot count must be positive")
    if n > graph.num_poses:
        raise GraphError(f"cannot split {graph.num_poses} poses among {n} robots")
    sizes = [len(chunk) for chunk in np.array_split(np.arange(graph.num_poses), n)]
    bounds = np.concatenate([[0], np.cumsum(sizes)])

    def locate(old_step: int) -> PoseId:
        robot = int(np.searchsorted(bounds, old_step, side="right")) - 1
        return PoseId(robot, old_step - int(bounds[robot]))

    edges = [
        RelativeMeasurement(
            locate(e.from_id.step), locate(e.to_id.step), e.rotation, e.translation, e.w_rot, e.w_tran
        )
        for e in graph.edges
    ]
    return MultiRobotProblem(
        n=n,
        d=graph.d,
        r=graph.d if r is None else r,
        num_poses=tuple(sizes),
        edges=edges,
        true_rotations=None,
        true_translations=None,
    )
