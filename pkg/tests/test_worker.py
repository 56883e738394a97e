import numpy as np
import pytest

from asyncpgo.objective import Objective
from asyncpgo.worker import NumericalError, StepsizePolicy, WorkerConfig, stepsize_upper_bound, worker_step
from conftest import random_problem, random_state


def stepsize_inequality_residual(gamma, max_delay, rho, alpha, lipschitz):
    """LHS of the stepsize feasibility condition; must be <= 0."""
    return 2 * rho * alpha**2 * max_delay**2 * lipschitz**2 * gamma**2 + lipschitz * gamma - 1


def test_zero_delay_branch_is_inverse_lipschitz():
    assert stepsize_upper_bound(0, 0.5, 1.0, 4.0) == 0.25
    assert stepsize_upper_bound(0, 1.0, 2.0, 10.0) == pytest.approx(0.1)


def test_hand_value_b1():
    # B=1, rho=1, alpha=1, L=1: (sqrt(9) - 1) / 4 = 0.5, exact root
    g = stepsize_upper_bound(1, 1.0, 1.0, 1.0)
    assert g == pytest.approx(0.5, abs=1e-15)
    assert stepsize_inequality_residual(g, 1, 1.0, 1.0, 1.0) == pytest.approx(0.0, abs=1e-14)


def test_closed_form_matches_quadratic_root(rng):
    for _ in range(200):
        b = int(rng.integers(1, 2000))
        rho = float(rng.uniform(0.01, 1.0))
        alpha = float(rng.uniform(0.1, 4.0))
        lip = float(10.0 ** rng.uniform(-2, 4))
        g = stepsize_upper_bound(b, rho, alpha, lip)
        assert g > 0
        assert abs(stepsize_inequality_residual(g, b, rho, alpha, lip)) <= 1e-12


def test_monotone_decreasing_in_delay():
    vals = [stepsize_upper_bound(b, 0.5, 1.0, 3.0) for b in (0, 1, 2, 4, 8, 16, 64, 256, 1024)]
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_domain_errors():
    with pytest.raises(ValueError):
        stepsize_upper_bound(0, 0.5, 1.0, 0.0)
    with pytest.raises(ValueError):
        stepsize_upper_bound(-1, 0.5, 1.0, 1.0)
    with pytest.raises(ValueError):
        stepsize_upper_bound(1, 1.5, 1.0, 1.0)
    with pytest.raises(ValueError):
        stepsize_upper_bound(1, 0.5, -1.0, 1.0)


def test_policy_resolution():
    fixed = StepsizePolicy(mode="fixed", gamma=1e-3)
    assert fixed.resolve(None, None) == 1e-3
    theorem = StepsizePolicy(mode="theorem", assumed_max_delay=0)
    assert theorem.resolve(4.0, 0.5) == 0.25
    with pytest.raises(ValueError):
        theorem.resolve(None, None)
    with pytest.raises(ValueError):
        StepsizePolicy(mode="bogus")
    with pytest.raises(ValueError):
        StepsizePolicy(mode="fixed", gamma=0.0)
    with pytest.raises(ValueError):
        WorkerConfig(robot=0, clock_rate_hz=0.0)


def test_zero_gradient_leaves_state_unchanged(rng):
    from asyncpgo.objective import lift_to_rank
    from asyncpgo.synthetic import GridWorldSpec, generate_grid_world

    prob = generate_grid_world(
        GridWorldSpec(robots=2, poses_per_robot=5, rot_noise_deg=0, trans_noise_m=0, seed=1), r=5
    )
    obj = Objective(prob)
    Y, p = lift_to_rank(prob.true_rotations, prob.true_translations, 5)
    lp = obj.locals[0]
    Ybuf, pbuf = lp.make_buffer()
    lp.fill_buffer_from_global(Y, p, Ybuf, pbuf)
    step = worker_step(lp, Ybuf, pbuf, gamma=0.1)
    assert step.eta_norm <= 1e-12 or np.array_equal(step.Y_new, Ybuf[: lp.n_own])


def test_isolated_robot_descends_to_critical_point(rng):
    prob = random_problem(rng, n_robots=1, poses_per_robot=6, extra_edges=3)
    obj = Objective(prob)
    lp = obj.locals[0]
    gamma = 0.9 / obj.estimate_lipschitz().l_hat
    Y, p = random_state(rng, prob.total_poses, prob.r, prob.d)
    Ybuf, pbuf = lp.make_buffer()
    lp.fill_buffer_from_global(Y, p, Ybuf, pbuf)
    costs = []
    for _ in range(50_000):
        step = worker_step(lp, Ybuf, pbuf, gamma, want_cost_after=False)
        costs.append(step.local_cost_before)
        if step.eta_norm <= 1e-9:
            break
    assert step.eta_norm <= 1e-9
    diffs = np.diff(costs)
    assert np.all(diffs <= 1e-12)


def test_worker_sees_only_snapshot(rng):
    # identical snapshots produce identical steps regardless of other robots'
    # global state: the worker has no hidden access to non-cached poses
    prob = random_problem(rng, n_robots=2, poses_per_robot=4, extra_edges=2)
    obj = Objective(prob)
    lp = obj.locals[0]
    Y, p = random_state(rng, prob.total_poses, prob.r, prob.d)
    Ybuf1, pbuf1 = lp.make_buffer()
    lp.fill_buffer_from_global(Y, p, Ybuf1, pbuf1)
    Ybuf2, pbuf2 = Ybuf1.copy(), pbuf1.copy()
    step1 = worker_step(lp, Ybuf1, pbuf1, 1e-2)

    Ymut, pmut = Y.copy(), p.copy()
    other = slice(lp.n_own, None)  # perturb poses the snapshot does not carry
    mask = np.ones(prob.total_poses, bool)
    mask[list(prob.owned_range(0))] = False
    mask[lp.neighbor_gidx] = False
    Ymut[mask] = random_state(rng, int(mask.sum()), prob.r, prob.d)[0]
    step2 = worker_step(lp, Ybuf2, pbuf2, 1e-2)
    assert np.array_equal(step1.Y_new, step2.Y_new)
    assert np.array_equal(step1.p_new, step2.p_new)


def test_step_displacement_bounded_by_alpha_gamma_eta(rng):
    # ||x_new - x_old|| <= alpha * gamma * ||eta|| with alpha = 1
    prob = random_problem(rng, n_robots=2, poses_per_robot=4, extra_edges=2)
    obj = Objective(prob)
    lp = obj.locals[0]
    gamma = 1.0 / obj.estimate_lipschitz().l_hat
    Y, p = random_state(rng, prob.total_poses, prob.r, prob.d)
    Ybuf, pbuf = lp.make_buffer()
    lp.fill_buffer_from_global(Y, p, Ybuf, pbuf)
    before_Y = Ybuf[: lp.n_own].copy()
    before_p = pbuf[: lp.n_own].copy()
    step = worker_step(lp, Ybuf, pbuf, gamma)
    disp = np.sqrt(np.sum((step.Y_new - before_Y) ** 2) + np.sum((step.p_new - before_p) ** 2))
    assert disp <= 1.0 * gamma * step.eta_norm + 1e-12


def test_nan_gradient_raises(rng):
    prob = random_problem(rng, n_robots=2, poses_per_robot=3)
    obj = Objective(prob)
    lp = obj.locals[0]
    Ybuf, pbuf = lp.make_buffer()
    Y, p = random_state(rng, prob.total_poses, prob.r, prob.d)
    lp.fill_buffer_from_global(Y, p, Ybuf, pbuf)
    pbuf[0, 0] = np.nan
    with pytest.raises(NumericalError):
        worker_step(lp, Ybuf, pbuf, 1e-3)


def test_preconditioned_step_reduces_local_cost(rng):
    prob = random_problem(rng, n_robots=2, poses_per_robot=5, extra_edges=3)
    obj = Objective(prob)
    lp = obj.locals[1]
    Y, p = random_state(rng, prob.total_poses, prob.r, prob.d)
    Ybuf, pbuf = lp.make_buffer()
    lp.fill_buffer_from_global(Y, p, Ybuf, pbuf)
    step = worker_step(lp, Ybuf, pbuf, gamma=0.5, preconditioned=True)
    assert step.local_cost_after < step.local_cost_before
