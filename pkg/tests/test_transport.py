import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adapted_ot.errors import InfeasibleError, InstanceTooLargeError
from adapted_ot.process import MetricSpec, from_paths, random_process
from adapted_ot.transport import (TransportProblem, ot_bruteforce, solve_ot, wasserstein)

from cases import ABS1, eps_pair

seeds = st.integers(0, 2**32 - 1)


def random_problem(rng, m=None, n=None):
    m = m or int(rng.integers(1, 5))
    n = n or int(rng.integers(1, 16 // m + 1))
    a = rng.dirichlet(np.ones(m))
    b = rng.dirichlet(np.ones(n))
    # integer costs produce plenty of ties and degenerate pivots
    cost = rng.integers(0, 4, size=(m, n)).astype(float)
    return TransportProblem(a, b, cost)


def check_plan(prob, plan):
    assert np.all(plan.entries >= 0)
    assert np.abs(plan.entries.sum(axis=1) - prob.mu).max() <= 1e-9
    assert np.abs(plan.entries.sum(axis=0) - prob.nu).max() <= 1e-9
    assert abs(float(np.sum(plan.entries * prob.cost)) - plan.value) <= 1e-9


def test_identical_point_masses():
    plan = solve_ot(TransportProblem([1.0], [1.0], [[0.0]]))
    assert plan.value == 0.0


def test_one_column_problem_is_forced():
    prob = TransportProblem([0.5, 0.5], [1.0], [[2.0], [3.0]])
    plan = solve_ot(prob)
    assert plan.value == 2.5
    assert plan.entries.tolist() == [[0.5], [0.5]]


def test_sign_matched_identity_plan():
    x = np.array([0.1, -0.1])
    prob = TransportProblem([0.5, 0.5], [0.5, 0.5], np.abs(x[:, None] - x[None, :]))
    plan = solve_ot(prob)
    assert plan.value == 0.0
    assert plan.entries.tolist() == [[0.5, 0.0], [0.0, 0.5]]
    # every coupling of the 2x2 problem is [[t, 1/2 - t], [1/2 - t, t]]
    grid = np.linspace(0, 0.5, 501)
    assert min(0.2 * (0.5 - t) * 2 for t in grid) == plan.value


def test_unbalanced_marginals_raise():
    with pytest.raises(InfeasibleError):
        solve_ot(TransportProblem([0.5, 0.5], [0.7, 0.2], np.ones((2, 2))))


def test_problem_validation():
    with pytest.raises(ValueError):
        TransportProblem([1.0], [1.0], [[-1.0]])
    with pytest.raises(ValueError):
        TransportProblem([], [1.0], np.zeros((0, 1)))


def test_bruteforce_cap():
    prob = TransportProblem(np.ones(5) / 5, np.ones(4) / 4, np.zeros((5, 4)))
    with pytest.raises(InstanceTooLargeError):
        ot_bruteforce(prob)


def test_bruteforce_one_row():
    prob = TransportProblem([1.0], [0.2, 0.3, 0.5], [[1.0, 2.0, 3.0]])
    assert ot_bruteforce(prob).value == pytest.approx(0.2 + 0.6 + 1.5)


def test_symmetric_two_by_two():
    prob = TransportProblem([0.3, 0.7], [0.6, 0.4], [[0.0, 1.0], [1.0, 0.0]])
    assert solve_ot(prob).value == pytest.approx(ot_bruteforce(prob).value, abs=1e-12)
    assert solve_ot(prob).value == pytest.approx(0.3, abs=1e-12)


def test_deterministic_output():
    prob = random_problem(np.random.default_rng(5), 4, 4)
    a, b = solve_ot(prob), solve_ot(prob)
    assert np.array_equal(a.entries, b.entries) and a.value == b.value


@settings(max_examples=200, deadline=None)
@given(seeds)
def test_matches_bruteforce(seed):
    prob = random_problem(np.random.default_rng(seed))
    plan = solve_ot(prob)
    check_plan(prob, plan)
    assert abs(plan.value - ot_bruteforce(prob).value) <= 1e-9


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_large_instances_have_valid_plans(seed):
    rng = np.random.default_rng(seed)
    prob = TransportProblem(rng.dirichlet(np.ones(20)), rng.dirichlet(np.ones(15)),
                            rng.random((20, 15)))
    check_plan(prob, solve_ot(prob))


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_permutation_invariance(seed):
    rng = np.random.default_rng(seed)
    prob = random_problem(rng)
    m, n = prob.cost.shape
    pr, pc = rng.permutation(m), rng.permutation(n)
    perm = TransportProblem(prob.mu[pr], prob.nu[pc], prob.cost[np.ix_(pr, pc)])
    assert abs(solve_ot(perm).value - solve_ot(prob).value) <= 1e-9


@settings(max_examples=50, deadline=None)
@given(seeds, st.floats(0.01, 100))
def test_cost_scaling(seed, lam):
    prob = random_problem(np.random.default_rng(seed))
    base = solve_ot(prob)
    scaled_prob = TransportProblem(prob.mu, prob.nu, lam * prob.cost)
    scaled = solve_ot(scaled_prob)
    assert abs(scaled.value - lam * base.value) <= 1e-9 * max(1.0, lam)
    # the original argmin stays optimal for the scaled cost
    assert abs(float(np.sum(base.entries * scaled_prob.cost)) - scaled.value) <= 1e-9 * lam


def test_wasserstein_examples():
    mu, nu = eps_pair(0.1)
    assert wasserstein(mu, nu, ABS1) == pytest.approx(0.1, abs=1e-12)
    assert wasserstein(mu, mu, ABS1) == 0.0
    x = from_paths([((0.0, 3.0), 1.0)])
    y = from_paths([((1.0, 1.0), 1.0)])
    assert wasserstein(x, y, MetricSpec("absolute", 2.0)) == pytest.approx(np.sqrt(5.0))


@settings(max_examples=50, deadline=None)
@given(seeds)
def test_wasserstein_metric_axioms(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 4))
    a, b, c = (random_process(rng, n) for _ in range(3))
    m = MetricSpec("absolute", float(rng.choice([1.0, 2.0])))
    ab, ba = wasserstein(a, b, m), wasserstein(b, a, m)
    assert ab == pytest.approx(ba, abs=1e-12)
    assert ab <= wasserstein(a, c, m) + wasserstein(c, b, m) + 1e-9
