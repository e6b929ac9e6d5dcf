import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adapted_ot.errors import DimensionMismatchError, HorizonMismatchError, SupportError
from adapted_ot.process import (Distribution, MetricSpec, disintegrate, from_nodes, from_paths,
                                marginal, path_cost, pth_moment, random_process, validate)

from cases import ABS1, eps_pair

seeds = st.integers(0, 2**32 - 1)


def test_shared_prefix_gives_two_leaf_tree():
    proc = from_paths([((0, 1), 0.5), ((0, -1), 0.5)])
    assert len(proc.leaves) == 2
    assert proc.root.mass == 1.0
    assert proc.nodes[proc.node_id([0])].mass == 1.0


def test_duplicate_paths_are_merged():
    proc = from_paths([((0.1, 1), 0.25), ((0.1, 1), 0.25), ((-0.1, -1), 0.5)])
    assert len(proc.paths) == 2
    assert [w for _, w in proc.paths] == [0.5, 0.5]


def test_weights_are_normalized():
    proc = from_paths([((1,), 1.0), ((2,), 3.0)])
    assert proc.path_weights.tolist() == [0.25, 0.75]
    assert proc.scale == 4.0


@pytest.mark.parametrize("paths", [
    [],
    [((0, 1), 0.5), ((0,), 0.5)],
    [((0, 1), 0.0)],
    [((0, 1), -1.0)],
    [(((0, 1), (1,)), 1.0)],
    [((0, float("nan")), 1.0)],
])
def test_from_paths_rejects_bad_input(paths):
    with pytest.raises(ValueError):
        from_paths(paths)


def test_quantization_merges_nearby_atoms():
    proc = from_paths([((0.1000000001,), 1.0), ((0.1,), 1.0)], quantize=1e-6)
    assert len(proc.leaves) == 1
    assert len(from_paths([((0.1000000001,), 1.0), ((0.1,), 1.0)]).leaves) == 2


def test_disintegrate_examples():
    mu, nu = eps_pair(0.1)
    assert disintegrate(nu, [0]).as_dict() == {((1.0,),): 0.5, ((-1.0,),): 0.5}
    assert disintegrate(mu, [0.1]).as_dict() == {((1.0,),): 1.0}
    full = disintegrate(mu, [])
    assert full.as_dict() == dict(mu.paths)


def test_disintegrate_errors():
    mu, _ = eps_pair(0.1)
    with pytest.raises(SupportError):
        disintegrate(mu, [0.0])
    with pytest.raises(SupportError):
        disintegrate(mu, [0.1, 1.0])


def test_marginal_examples():
    mu, nu = eps_pair(0.1)
    assert marginal(mu, 1, 1).as_dict() == {((-0.1,),): 0.5, ((0.1,),): 0.5}
    assert marginal(nu, 1, 1).as_dict() == {((0.0,),): 1.0}
    assert marginal(mu, 1, 2).as_dict() == dict(mu.paths)
    with pytest.raises(ValueError):
        marginal(mu, 0, 1)
    with pytest.raises(ValueError):
        marginal(mu, 2, 3)


def test_path_cost_examples():
    assert path_cost((0.1, 1), (0, 1), ABS1) == pytest.approx(0.1, abs=1e-15)
    assert path_cost((0.1, 1), (0.1, 1), ABS1) == 0.0
    assert path_cost((0.1, 1), (0, -1), MetricSpec("absolute", 2.0)) == pytest.approx(0.01 + 4)
    with pytest.raises(HorizonMismatchError):
        path_cost((0, 1), (0,), ABS1)
    with pytest.raises(DimensionMismatchError):
        path_cost(((0, 1),), ((0,),), ABS1)


def test_euclidean_ground_metric():
    m = MetricSpec("euclidean", 2.0)
    assert path_cost(((0, 0),), ((3, 4),), m) == pytest.approx(25.0)
    assert path_cost(((0, 0),), ((3, 4),), MetricSpec("absolute", 1.0)) == 7.0


def test_pth_moment_examples():
    mu, nu = eps_pair(0.1)
    assert pth_moment(nu, ABS1, (0, 1)) == 1.0
    point = from_paths([((0.3, 2), 1.0)])
    assert pth_moment(point, ABS1, (0.3, 2)) == 0.0
    # 1/2 (0.1 + 1) + 1/2 (0.1 + 1)
    assert pth_moment(mu, ABS1, (0, 0)) == pytest.approx(1.1, abs=1e-12)


def test_validate_clean_tree():
    assert validate(from_paths([((0, 1), 1.0), ((0, -1), 1.0)])) == []


def test_validate_reports_mass_defect():
    proc = from_nodes(2, 1, [((), 1.0), ((0,), 1.0), ((0, 1), 0.5), ((0, -1), 0.499)])
    report = validate(proc, 1e-9)
    assert len(report) == 1
    assert report[0].kind == "mass-consistency"
    assert report[0].node == proc.node_id([0])


def test_validate_reports_short_leaf():
    proc = from_nodes(2, 1, [((), 1.0), ((0,), 0.5), ((1,), 0.5), ((0, 1), 0.5)])
    kinds = [d.kind for d in validate(proc)]
    assert kinds == ["depth"]


def test_distribution_checks():
    with pytest.raises(ValueError):
        Distribution(((1,), (1,)), (0.5, 0.5))
    with pytest.raises(ValueError):
        Distribution(((1,), (2,)), (0.5, 0.6))
    with pytest.raises(ValueError):
        Distribution(((1,), (2,)), (1.0, 0.0))


def test_metric_table_checks():
    pts = (0.0, 1.0, 2.0)
    good = ((0, 1, 2), (1, 0, 1), (2, 1, 0))
    m = MetricSpec("table", 1.0, points=pts, table=good)
    assert path_cost((0.0, 2.0), (1.0, 0.0), m) == 3.0
    with pytest.raises(ValueError, match="symmetric"):
        MetricSpec("table", points=pts, table=((0, 1, 2), (1, 0, 1), (3, 1, 0)))
    with pytest.raises(ValueError, match="triangle"):
        MetricSpec("table", points=pts, table=((0, 1, 5), (1, 0, 1), (5, 1, 0)))
    with pytest.raises(ValueError, match="diagonal"):
        MetricSpec("table", points=pts, table=((0, 0, 2), (0, 0, 1), (2, 1, 0)))
    with pytest.raises(SupportError):
        path_cost((5.0,), (0.0,), m)
    with pytest.raises(ValueError):
        MetricSpec("absolute", p=0.5)


@settings(max_examples=60, deadline=None)
@given(seeds, st.integers(1, 4))
def test_tree_invariants(seed, n):
    proc = random_process(np.random.default_rng(seed), n)
    assert validate(proc, 1e-12) == []
    for node in proc.nodes:
        if node.children:
            kids = math.fsum(proc.nodes[c].mass for c in node.children)
            assert abs(kids - node.mass) <= 1e-12
        if node.depth < n:
            law = disintegrate(proc, node.prefix)
            assert abs(math.fsum(law.weights) - 1.0) <= 1e-12


@settings(max_examples=60, deadline=None)
@given(seeds, st.integers(1, 4))
def test_from_paths_is_idempotent(seed, n):
    proc = random_process(np.random.default_rng(seed), n)
    again = from_paths(proc.paths)
    assert again.nodes == proc.nodes


@settings(max_examples=60, deadline=None)
@given(seeds, st.booleans())
def test_path_cost_symmetry_and_bound(seed, bounded):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 5))
    x = tuple(rng.normal(size=n) * 3)
    y = tuple(rng.normal(size=n) * 3)
    m = MetricSpec("euclidean", float(rng.uniform(1, 3)), bounded)
    assert path_cost(x, y, m) == path_cost(y, x, m) > 0
    assert path_cost(x, x, m) == 0
    if bounded:
        assert path_cost(x, y, m) <= n
