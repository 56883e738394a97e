import numpy as np
import pytest

from asyncpgo.graph import (
    GraphError,
    MultiRobotProblem,
    PoseGraph,
    PoseId,
    RelativeMeasurement,
    neighbor_poses,
    partition,
)
from conftest import random_problem


def chain_graph(n_poses: int, d: int = 2) -> PoseGraph:
    edges = [
        RelativeMeasurement(PoseId(0, i), PoseId(0, i + 1), np.eye(d), np.zeros(d), 1.0, 1.0)
        for i in range(n_poses - 1)
    ]
    return PoseGraph(d=d, num_poses=n_poses, edges=edges)


def test_measurement_validation():
    with pytest.raises(GraphError):
        RelativeMeasurement(PoseId(0, 0), PoseId(0, 1), 2 * np.eye(2), np.zeros(2), 1.0, 1.0)
    with pytest.raises(GraphError):
        RelativeMeasurement(PoseId(0, 0), PoseId(0, 1), np.eye(2), np.zeros(2), 0.0, 1.0)
    refl = np.diag([1.0, -1.0])
    with pytest.raises(GraphError):
        RelativeMeasurement(PoseId(0, 0), PoseId(0, 1), refl, np.zeros(2), 1.0, 1.0)


def test_partition_contiguous_blocks():
    prob = partition(chain_graph(10), 2)
    assert prob.num_poses == (5, 5)
    assert list(prob.owned_range(0)) == [0, 1, 2, 3, 4]
    assert list(prob.owned_range(1)) == [5, 6, 7, 8, 9]


def test_partition_chain_single_cross_edge():
    # hand enumeration: chain 0-1-...-9 split in two leaves one inter edge (4,5)
    prob = partition(chain_graph(10), 2)
    inter = prob.inter_edges()
    assert len(inter) == 1
    assert prob.global_index(inter[0].from_id) == 4
    assert prob.global_index(inter[0].to_id) == 5
    assert prob.robot_graph == {0: (1,), 1: (0,)}


def test_partition_single_robot():
    prob = partition(chain_graph(7), 1)
    assert prob.robot_graph == {0: ()}
    assert all(prob.is_private(PoseId(0, t)) for t in range(7))


def test_partition_preserves_edges(rng):
    g = chain_graph(23)
    for n in (1, 2, 3, 5):
        prob = partition(g, n)
        intra = sum(len(prob.intra_edges(i)) for i in range(n))
        assert intra + len(prob.inter_edges()) == len(g.edges)


def test_partition_errors():
    with pytest.raises(GraphError):
        partition(chain_graph(3), 4)
    with pytest.raises(GraphError):
        partition(chain_graph(3), 0)


def test_neighbor_poses_chain():
    prob = partition(chain_graph(10), 2)
    assert neighbor_poses(prob, 0, 1) == frozenset({PoseId(1, 0)})  # global pose 5
    assert neighbor_poses(prob, 1, 0) == frozenset({PoseId(0, 4)})
    assert neighbor_poses(prob, 0, 0) == frozenset()


def test_neighbor_poses_never_private(rng):
    prob = random_problem(rng, n_robots=4, poses_per_robot=4, extra_edges=6)
    for i in range(4):
        for j in prob.robot_graph[i]:
            for pid in neighbor_poses(prob, i, j):
                assert not prob.is_private(pid)
                assert pid.robot == j


def test_disconnected_rejected():
    edges = [RelativeMeasurement(PoseId(0, 0), PoseId(0, 1), np.eye(2), np.zeros(2), 1.0, 1.0)]
    with pytest.raises(GraphError):
        MultiRobotProblem(n=1, d=2, r=2, num_poses=(3,), edges=edges)


def test_degree_and_coupling(rng):
    prob = random_problem(rng, n_robots=4, poses_per_robot=3)
    delta = prob.max_degree()
    assert delta <= 3
    assert 0 < prob.coupling_ratio() <= 1


def test_pose_id_round_trip(rng):
    prob = random_problem(rng, n_robots=3, poses_per_robot=4)
    for g in range(prob.total_poses):
        assert prob.global_index(prob.pose_id(g)) == g
