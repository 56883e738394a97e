"""Per-robot optimization step and the delay-aware stepsize policy.

A step reads one consistent snapshot (own poses, cached neighbor poses),
computes the tangent gradient of the robot-local cost, optionally
preconditions it, and retracts. The "theorem" stepsize mode derives the
largest stepsize guaranteed to keep the asynchronous iteration convergent for
an assumed worst-case staleness, measured in global update counts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .objective import LocalProblem


class NumericalError(RuntimeError):
    """NaN or infinity encountered while stepping; aborts the run."""


def stepsize_upper_bound(max_delay: int, coupling: float, alpha: float, lipschitz: float) -> float:
    """Largest safe stepsize for the given staleness bound.

    max_delay B: worst-case cache staleness in global update counts.
    coupling rho: max robot-graph degree over robot count, in (0, 1].
    alpha: retraction displacement constant. lipschitz L: pullback constant.
    Returns 1/L when B == 0; otherwise the positive root of
    2 rho alpha^2 B^2 L^2 g^2 + L g - 1 = 0.
    """
    if lipschitz <= 0:
        raise ValueError("lipschitz constant must be positive")
    if max_delay < 0 or not (0 < coupling <= 1) or alpha <= 0:
        raise ValueError("need max_delay >= 0, coupling in (0,1], alpha > 0")
    if max_delay == 0:
        return 1.0 / lipschitz
    a = coupling * alpha**2 * float(max_delay) ** 2
    # conjugate form of (sqrt(1+8a)-1)/(4aL): stable for small a
    return 2.0 / (lipschitz * (1.0 + np.sqrt(1.0 + 8.0 * a)))


@dataclass(frozen=True)
class StepsizePolicy:
    """Stepsize selection: an explicit value, or the delay-aware bound."""

    mode: str = "fixed"  # "fixed" | "theorem"
    gamma: float = 1e-3  # used in fixed mode
    assumed_max_delay: int = 0  # B, theorem mode
    alpha: float = 1.0  # retraction displacement constant
    safety: float = 2.0  # Lipschitz safety multiplier

    def __post_init__(self):
        if self.mode not in ("fixed", "theorem"):
            raise ValueError(f"unknown stepsize mode {self.mode!r}")
        if self.mode == "fixed" and not self.gamma > 0:
            raise ValueError("fixed stepsize must be positive")

    def resolve(self, lipschitz: float | None, coupling: float | None) -> float:
        if self.mode == "fixed":
            return self.gamma
        if lipschitz is None or coupling is None:
            raise ValueError("theorem mode needs a Lipschitz estimate and coupling ratio")
        return stepsize_upper_bound(self.assumed_max_delay, coupling, self.alpha, lipschitz)


@dataclass(frozen=True)
class WorkerConfig:
    robot: int
    clock_rate_hz: float = 1000.0
    stepsize: StepsizePolicy = field(default_factory=StepsizePolicy)
    preconditioned: bool = False

    def __post_init__(self):
        if not self.clock_rate_hz > 0:
            raise ValueError("clock rate must be positive")


@dataclass
class StepResult:
    Y_new: np.ndarray  # (n_own, r, d)
    p_new: np.ndarray  # (n_own, r)
    eta_norm: float  # norm of the applied tangent direction
    local_cost_before: float
    local_cost_after: float


def worker_step(
    local: LocalProblem,
    Ybuf: np.ndarray,
    pbuf: np.ndarray,
    gamma: float,
    preconditioned: bool = False,
    want_cost_after: bool = True,
) -> StepResult:
    """One Read/Compute/Update pass over a snapshot buffer.

    `Ybuf`/`pbuf` hold the robot's own poses followed by the cached neighbor
    poses (LocalProblem layout). The own slots of the buffer are updated in
    place; `want_cost_after=False` skips the post-step cost evaluation
    (local_cost_after is then NaN).
    """
    n = local.n_own
    cost_before, etaY, etap = local.riemannian_gradient(Ybuf, pbuf)
    if preconditioned:
        etaY, etap = local.precondition(Ybuf[:n], etaY, etap)
    eta_sq = float(np.sum(etaY * etaY) + np.sum(etap * etap))
    if not np.isfinite(eta_sq):
        raise NumericalError(f"non-finite gradient for robot {local.robot}")
    eta_norm = float(np.sqrt(eta_sq))
    if eta_norm == 0.0:
        return StepResult(Ybuf[:n].copy(), pbuf[:n].copy(), 0.0, cost_before, cost_before)
    Y_new = kernels.polar_retract(Ybuf[:n] - gamma * etaY)
    p_new = pbuf[:n] - gamma * etap
    Ybuf[:n] = Y_new
    pbuf[:n] = p_new
    cost_after = local.cost(Ybuf, pbuf) if want_cost_after else float("nan")
    return StepResult(Y_new, p_new, eta_norm, cost_before, cost_after)
