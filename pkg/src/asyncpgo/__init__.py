"""Asynchronous, delay-tolerant distributed pose-graph optimization.

Library layout:
    manifold    matrix-manifold primitives (projection, retraction, inner)
    graph       pose-graph data model, partitioning, robot-level graph
    g2o         dataset ingestion and serialization
    synthetic   grid-world generator with the standard noise model
    objective   costs, gradients, preconditioner, Lipschitz estimation
    worker      per-robot step and stepsize policy
    sim         deterministic event-driven simulator and trace audits
    threaded    truly concurrent execution mode (smoke testing)
    evaluation  initialization, reference solver, rounding, RMSE metrics
    cli         command-line front end
"""

from .graph import MultiRobotProblem, PoseGraph, PoseId, RelativeMeasurement, neighbor_poses, partition
from .objective import LiftedPose, LipschitzEstimate, Objective, lift_to_rank
from .sim import (
    DelayModel,
    SimulationResult,
    SimulationTrace,
    measured_max_delay,
    run_simulation,
    synchronous_rcd_oracle,
)
from .synthetic import GridWorldSpec, generate_grid_world
from .worker import StepsizePolicy, WorkerConfig, stepsize_upper_bound, worker_step

__version__ = "0.1.0"

__all__ = [
    "DelayModel",
    "GridWorldSpec",
    "LiftedPose",
    "LipschitzEstimate",
    "MultiRobotProblem",
    "Objective",
    "PoseGraph",
    "PoseId",
    "RelativeMeasurement",
    "SimulationResult",
    "SimulationTrace",
    "StepsizePolicy",
    "WorkerConfig",
    "generate_grid_world",
    "lift_to_rank",
    "measured_max_delay",
    "neighbor_poses",
    "partition",
    "run_simulation",
    "stepsize_upper_bound",
    "synchronous_rcd_oracle",
    "worker_step",
]
