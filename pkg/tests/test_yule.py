import math

import numpy as np
import pytest
from scipy import stats

from hypbbm.errors import OutOfHorizon, PopulationCapExceeded, UnknownAddress
from hypbbm.rng import RandomStream
from hypbbm.yule import (
    YuleTree,
    confluent,
    cross_section,
    martingale_track,
    population_pmf,
    population_sizes,
    sample_tree,
    subtree,
)


def test_zero_horizon():
    tree = sample_tree(1.0, 0.0, RandomStream(1))
    assert len(tree) == 1
    cs = cross_section(tree, 0.0)
    assert cs.size == 1 and cs.elements == [("", 0.0)]


def test_same_seed_same_tree():
    a = sample_tree(1.0, 4.0, RandomStream(5))
    b = sample_tree(1.0, 4.0, RandomStream(5))
    assert a.edge_length == b.edge_length
    assert a.to_jsonl() == b.to_jsonl()


def test_pmf_examples():
    assert population_pmf(1.0, math.log(2), 3) == pytest.approx(1 / 8, abs=1e-15)
    assert population_pmf(2.0, 0.0, 1) == 1.0
    assert population_pmf(2.0, 0.0, 2) == 0.0
    mean = math.fsum(n * population_pmf(0.5, 2.0, n) for n in range(1, 2000))
    assert mean == pytest.approx(math.exp(1.0), abs=1e-9)
    with pytest.raises(ValueError):
        population_pmf(1.0, 1.0, 0)


def test_monotone_coupling():
    s = RandomStream(8)
    small, big = sample_tree(1.0, 2.0, s), sample_tree(1.0, 3.5, s)
    for v, ell in small.edge_length.items():
        assert big.edge_length[v] == ell
    assert small.population(2.0) == big.population(2.0)


def test_ends_distinct_and_births_consistent():
    tree = sample_tree(1.0, 5.0, RandomStream(3))
    ends = [tree.end(v) for v in tree.vertices()]
    assert len(set(ends)) == len(ends)
    for v in tree.vertices():
        if v:
            assert tree.birth[v] == tree.end(v[:-1])


def test_subtree_and_confluent():
    tree = sample_tree(1.0, 4.0, RandomStream(21))
    assert subtree(tree, "").edge_length == tree.edge_length
    assert confluent("L", "R") == ""
    assert confluent("LRL", "LRRL") == "LR"
    assert confluent("LR", "LR") == "LR"
    with pytest.raises(UnknownAddress):
        subtree(tree, "LLLLLLLLLLLLLLLLLLLLLLL")
    if "L" in tree:
        sub = subtree(tree, "L")
        assert sub.root_key == RandomStream(21).at("L").key


def test_subtree_population_is_geometric():
    lam, s = 1.0, 1.0
    counts = []
    for r in range(3000):
        tree = sample_tree(lam, 3.0, RandomStream(77).for_replica(r))
        if "L" in tree and tree.horizon - tree.birth["L"] >= s:
            counts.append(subtree(tree, "L").population(s))
    counts = np.array(counts)
    assert counts.size > 1000
    top = 6
    obs = np.array([np.sum(counts == n) for n in range(1, top)] + [np.sum(counts >= top)])
    p = [population_pmf(lam, s, n) for n in range(1, top)]
    p.append(1 - sum(p))
    assert stats.chisquare(obs, counts.size * np.array(p)).pvalue > 1e-3


@pytest.mark.parametrize("lam,t", [(1.0, 1.0), (0.5, 2.0), (0.1, 8.0)])
def test_mean_population(lam, t):
    n = population_sizes(lam, [t], seed=31, replicas=np.arange(20000))[:, 0]
    p = math.exp(-lam * t)
    se = math.sqrt((1 - p) / p**2 / n.size)
    assert abs(n.mean() - math.exp(lam * t)) < 4 * se


def test_population_sizes_match_trees():
    times = [0.0, 0.7, 1.5, 2.5]
    sizes = population_sizes(1.0, times, seed=4, replicas=np.arange(50))
    for r in range(50):
        tree = sample_tree(1.0, 2.5, RandomStream(4).for_replica(r))
        assert [tree.population(t) for t in times] == sizes[r].tolist()


def test_martingale_starts_at_one():
    tree = sample_tree(0.7, 3.0, RandomStream(2))
    track = martingale_track(tree, [0.0, 1.0, 3.0])
    assert track.values()[0] == 1.0
    assert track.values()[2] == pytest.approx(tree.population(3.0) * math.exp(-2.1))


def test_cross_section_errors():
    tree = sample_tree(1.0, 1.0, RandomStream(2))
    with pytest.raises(OutOfHorizon):
        cross_section(tree, 2.0)
    with pytest.raises(ValueError):
        cross_section(tree, -1.0)


def test_serialization_round_trip():
    tree = sample_tree(1.0, 3.0, RandomStream(6))
    text = tree.to_jsonl()
    back = YuleTree.from_jsonl(text, 1.0, 3.0)
    assert back.edge_length == tree.edge_length
    assert back.to_jsonl() == text


def test_cap():
    with pytest.raises(PopulationCapExceeded):
        sample_tree(1.0, 12.0, RandomStream(1), cap=100)
