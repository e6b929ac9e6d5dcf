import json
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adapted_ot.causal import symmetrized_causal
from adapted_ot.nested import nested_distance
from adapted_ot.process import MetricSpec, from_paths, random_process
from adapted_ot.topologies import (aldous_distance, hellwig_distance, hellwig_map,
                                   martingale_check, prediction_process)

from cases import ABS1, eps_pair, random_pair

seeds = st.integers(0, 2**32 - 1)


def test_hellwig_map_examples():
    mu, nu = eps_pair(0.1)
    img = hellwig_map(nu, 1)
    assert img.weights == (1.0,)
    prefix, law = img.atoms[0]
    assert prefix == ((0.0,),)
    assert law.as_dict() == {((1.0,),): 0.5, ((-1.0,),): 0.5}

    img = hellwig_map(mu, 1)
    assert img.weights == (0.5, 0.5)
    assert [(p, law.as_dict()) for p, law in img.atoms] == [
        (((-0.1,),), {((-1.0,),): 1.0}), (((0.1,),), {((1.0,),): 1.0})]
    with pytest.raises(ValueError):
        hellwig_map(mu, 2)
    assert json.loads(img.to_json())["t"] == 1


def test_markov_chain_conditionals_depend_on_last_state():
    # two-state chain: stay with probability 0.7
    paths = []
    for x1 in (0, 1):
        for x2 in (0, 1):
            for x3 in (0, 1):
                w = 0.5 * (0.7 if x2 == x1 else 0.3) * (0.7 if x3 == x2 else 0.3)
                paths.append(((x1, x2, x3), w))
    proc = from_paths(paths)
    img = hellwig_map(proc, 2)
    by_last = {}
    for prefix, law in img.atoms:
        by_last.setdefault(prefix[-1], []).append(law.as_dict())
    for laws in by_last.values():
        for law in laws[1:]:
            assert law.keys() == laws[0].keys()
            assert all(abs(law[k] - laws[0][k]) < 1e-12 for k in law)


def test_hellwig_distance_examples():
    mu, nu = eps_pair(0.1)
    assert hellwig_distance(mu, nu, ABS1) == pytest.approx(1.1, abs=1e-12)
    assert hellwig_distance(mu, mu, ABS1) == 0.0
    a = from_paths([((0,), 1.0)])
    b = from_paths([((5,), 1.0)])
    assert hellwig_distance(a, b, ABS1) == 0.0


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_two_period_hellwig_equals_adapted(seed):
    rng = np.random.default_rng(seed)
    a, b = random_process(rng, 2), random_process(rng, 2)
    assert abs(hellwig_distance(a, b, ABS1) - nested_distance(a, b, ABS1)[0]) <= 1e-9


def test_prediction_process_examples():
    mu, nu = eps_pair(0.1)
    pp = prediction_process(nu)
    assert pp.law(nu.node_id([0])).as_dict() == dict(nu.paths)
    assert pp.law(0).as_dict() == dict(nu.paths)
    pm = prediction_process(mu)
    assert pm.law(mu.node_id([0.1])).as_dict() == {((0.1,), (1.0,)): 1.0}
    for leaf, (path, _) in zip(mu.leaves, mu.paths):
        assert pm.law(leaf).as_dict() == {path: 1.0}
    det = from_paths([((1, 2, 3), 1.0)])
    pd = prediction_process(det)
    assert all(pd.law(v).as_dict() == {det.paths[0][0]: 1.0} for v in range(4))
    assert pm.trajectory(0) == tuple(int(v) for v in mu.ancestors[0])
    assert len(json.loads(pm.to_json())["nodes"]) == len(mu.nodes)


def test_martingale_check_flags_corrupted_node():
    proc = random_process(np.random.default_rng(11), 3, 3)
    pp = prediction_process(proc)
    assert martingale_check(pp) == []
    z = pp.z.copy()
    node = proc.levels[1][0]
    z[node] = np.roll(z[node], 1)
    bad = martingale_check(replace(pp, z=z))
    assert node in {v.node for v in bad}


@settings(max_examples=100, deadline=None)
@given(seeds, st.integers(1, 4))
def test_martingale_property(seed, n):
    proc = random_process(np.random.default_rng(seed), n)
    assert martingale_check(prediction_process(proc)) == []


@pytest.mark.parametrize("eps", [1.0, 0.1, 0.01])
def test_aldous_epsilon_example(eps):
    mu, nu = eps_pair(eps)
    assert aldous_distance(mu, nu, ABS1) == pytest.approx(1 + 4 * eps, abs=1e-12)


def test_aldous_point_masses():
    x = from_paths([((0.0,), 1.0)])
    y = from_paths([((2.5,), 1.0)])
    assert aldous_distance(x, y, ABS1) == pytest.approx(3 * 2.5)
    assert aldous_distance(x, x, ABS1) == 0.0


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_adapted_distances_vanish_together(seed):
    a, b = random_pair(seed)
    vals = [hellwig_distance(a, b, ABS1), aldous_distance(a, b, ABS1),
            symmetrized_causal(a, b, ABS1), nested_distance(a, b, ABS1)[0]]
    same = a.same_law(b)
    # the information maps carry no structure for N = 1
    if a.n == 1:
        vals = vals[1:]
    assert all((v < 1e-12) == same for v in vals)
    for v in (hellwig_distance(a, a, ABS1), aldous_distance(a, a, ABS1)):
        assert v == 0.0


def test_euclidean_p2_aldous_is_symmetric():
    a, b = random_pair(3)
    m = MetricSpec("euclidean", 2.0)
    assert aldous_distance(a, b, m) == pytest.approx(aldous_distance(b, a, m), abs=1e-9)
