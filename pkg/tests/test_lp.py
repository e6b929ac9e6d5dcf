import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adapted_ot.errors import InfeasibleError, SolverError
from adapted_ot.lp import solve_lp
from adapted_ot.transport import TransportProblem, solve_ot


def test_small_lp():
    # min -x - y  s.t.  x + y + s = 4, x + 3y + r = 6
    c = [-1, -1, 0, 0]
    A = [[1, 1, 1, 0], [1, 3, 0, 1]]
    res = solve_lp(c, A, [4, 6])
    assert res.value == pytest.approx(-4)


def test_exact_mode_gives_rational_vertex():
    c = [1, 2, 0]
    A = [[1, 1, 1], [1, -1, 0]]
    res = solve_lp(c, A, [1, 0.25], exact=True)
    assert res.exact
    assert res.x.tolist() == [0.25, 0.0, 0.75]


def test_redundant_rows_are_dropped():
    c = [1.0, 1.0]
    A = [[1.0, 1.0], [2.0, 2.0]]
    res = solve_lp(c, A, [1.0, 2.0])
    assert res.value == pytest.approx(1.0)
    assert len(res.dropped_rows) == 1


def test_infeasible():
    with pytest.raises(InfeasibleError):
        solve_lp([1, 1], [[1, 1], [1, 1]], [1, 2])


def test_unbounded():
    with pytest.raises(SolverError):
        solve_lp([-1, 0], [[1, -1]], [0], exact=False)


def test_negative_rhs_rows():
    res = solve_lp([1, 1], [[-1, 0], [0, 1]], [-2, 3])
    assert res.x.tolist() == [2.0, 3.0]


def transport_lp(prob):
    m, n = prob.cost.shape
    rows = []
    for i in range(m):
        r = np.zeros((m, n))
        r[i] = 1
        rows.append(r.ravel())
    for j in range(n):
        r = np.zeros((m, n))
        r[:, j] = 1
        rows.append(r.ravel())
    return prob.cost.ravel(), np.array(rows), np.concatenate([prob.mu, prob.nu])


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**32 - 1), st.booleans())
def test_agrees_with_network_simplex(seed, exact):
    rng = np.random.default_rng(seed)
    m, n = (int(k) for k in rng.integers(1, 5, size=2))
    prob = TransportProblem(rng.dirichlet(np.ones(m)), rng.dirichlet(np.ones(n)),
                            rng.integers(0, 3, size=(m, n)).astype(float))
    res = solve_lp(*transport_lp(prob), exact=exact)
    assert abs(res.value - solve_ot(prob).value) <= 1e-9
