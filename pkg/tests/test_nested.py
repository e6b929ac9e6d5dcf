import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adapted_ot.causal import bicausal_distance_lp
from adapted_ot.errors import HorizonMismatchError
from adapted_ot.nested import (NestedDistribution, iterated_wasserstein, nested_distance,
                               nested_embedding, _child_cost)
from adapted_ot.process import MetricSpec, from_paths, random_process
from adapted_ot.transport import ot_value, wasserstein

from cases import ABS1, eps_pair, random_pair, random_triple

seeds = st.integers(0, 2**32 - 1)


def test_epsilon_example_by_hand():
    mu, nu = eps_pair(0.1)
    nd, table = nested_distance(mu, nu, ABS1)
    # from (eps) the continuation is 1, from (0) it is +-1 with equal odds
    assert table.value(1, mu.node_id([0.1]), nu.node_id([0.0])) == pytest.approx(1.0)
    assert table.value(1, mu.node_id([-0.1]), nu.node_id([0.0])) == pytest.approx(1.0)
    assert nd == pytest.approx(1.1, abs=1e-12)
    assert table.root_value == pytest.approx(1.1, abs=1e-12)
    assert np.all(table.V[2] == 0)


def test_self_distance_has_zero_diagonal():
    mu = random_process(np.random.default_rng(4), 3)
    nd, table = nested_distance(mu, mu, ABS1)
    assert nd == 0.0
    for V in table.V:
        assert np.all(np.diag(V) == 0)


def test_single_period_equals_wasserstein():
    rng = np.random.default_rng(8)
    a, b = random_process(rng, 1, 4), random_process(rng, 1, 4)
    assert nested_distance(a, b, ABS1)[0] == pytest.approx(wasserstein(a, b, ABS1), abs=1e-12)


def test_horizon_mismatch():
    with pytest.raises(HorizonMismatchError):
        nested_distance(from_paths([((0, 1), 1.0)]), from_paths([((0,), 1.0)]), ABS1)


def test_value_table_csv():
    mu, nu = eps_pair(0.1)
    text = nested_distance(mu, nu, ABS1)[1].to_csv()
    lines = text.splitlines()
    assert lines[0] == "t,x_node,y_node,V"
    assert lines[-1] == "0,0,0,1.1"
    assert len(lines) == 1 + 2 * 2 + 2 * 1 + 1


def test_embedding_of_hiding_process():
    _, nu = eps_pair(0.1)
    emb = nested_embedding(nu)
    assert emb.depth == 2
    assert emb.weights == (1.0,)
    state, inner = emb.atoms[0]
    assert state == (0.0,)
    assert inner.depth == 1
    assert dict(zip((s for s, _ in inner.atoms), inner.weights)) == {(1.0,): 0.5, (-1.0,): 0.5}


def test_point_mass_embedding_is_a_chain():
    emb = nested_embedding(from_paths([((1, 2, 3), 1.0)]))
    for expected in (1.0, 2.0, 3.0):
        assert emb.weights == (1.0,)
        state, emb = emb.atoms[0]
        assert state == (expected,)
    assert emb is None


def test_embedding_is_structural():
    rng = np.random.default_rng(2)
    a = random_process(rng, 3)
    b = from_paths(a.paths)
    assert nested_embedding(a) == nested_embedding(b)
    assert hash(nested_embedding(a)) == hash(nested_embedding(b))
    assert nested_embedding(a).to_dict()["depth"] == 3


def test_iterated_wasserstein_examples():
    mu, nu = eps_pair(0.1)
    assert iterated_wasserstein(nested_embedding(mu), nested_embedding(nu), ABS1) == \
        pytest.approx(1.1, abs=1e-12)
    assert iterated_wasserstein(nested_embedding(mu), nested_embedding(mu), ABS1) == 0.0
    a = NestedDistribution(1, (((0.0,), None), ((1.0,), None)), (0.5, 0.5))
    b = NestedDistribution(1, (((3.0,), None),), (1.0,))
    assert iterated_wasserstein(a, b, ABS1) == pytest.approx(2.5)
    deep = nested_embedding(mu)
    with pytest.raises(HorizonMismatchError):
        iterated_wasserstein(a, deep, ABS1)


@settings(max_examples=40, deadline=None)
@given(seeds, st.sampled_from([1.0, 2.0]))
def test_dp_lp_and_embedding_agree(seed, p):
    a, b = random_pair(seed)
    m = MetricSpec("absolute", p)
    nd = nested_distance(a, b, m)[0]
    assert abs(bicausal_distance_lp(a, b, m)[0] - nd) <= 1e-7
    assert abs(iterated_wasserstein(nested_embedding(a), nested_embedding(b), m) - nd) <= 1e-7


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_raising_a_continuation_value_never_lowers_the_root(seed):
    rng = np.random.default_rng(seed)
    a, b = random_process(rng, 2), random_process(rng, 2)
    _, table = nested_distance(a, b, ABS1)
    assert all(np.all(V >= 0) for V in table.V)
    bumped = table.V[1].copy()
    i = int(rng.integers(bumped.shape[0]))
    j = int(rng.integers(bumped.shape[1]))
    bumped[i, j] += float(rng.uniform(0, 2))
    xpos = {c: k for k, c in enumerate(a.levels[1])}
    ypos = {c: k for k, c in enumerate(b.levels[1])}
    cost = _child_cost(a, b, 0, 0, ABS1, bumped, xpos, ypos)
    root = ot_value(a.kernel(0)[1], b.kernel(0)[1], cost)
    assert root >= table.root_value - 1e-12


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_triangle_inequality(seed):
    a, b, c = random_triple(seed)
    ab = nested_distance(a, b, ABS1)[0]
    assert ab <= nested_distance(a, c, ABS1)[0] + nested_distance(c, b, ABS1)[0] + 1e-8
