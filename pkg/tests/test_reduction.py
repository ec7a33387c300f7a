from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings

from byzlink.graph import DiGraph, fig1_graph
from byzlink.reduction import (ReducedGraph, connectivity_matrix, count_r, count_reduced,
                               enumerate_reduced_graphs, fault_sets, removal_options)

import oracles
from conftest import digraphs

# frozen from oracles.brute_r (full materialisation)
FROZEN_R = {
    "fig1_f1": 12544,
    "fig1_f0": 1,
    "two_cycle_f1": 8,
    "chain3_f1": 8,
    "k4_f1": 2560,
}

K4 = DiGraph(4, [(a, b) for a in range(4) for b in range(4) if a != b])


def test_frozen_counts():
    assert count_r(fig1_graph(), 1) == FROZEN_R["fig1_f1"]
    assert count_r(fig1_graph(), 0) == FROZEN_R["fig1_f0"]
    assert count_r(DiGraph(2, [(0, 1), (1, 0)]), 1) == FROZEN_R["two_cycle_f1"]
    assert count_r(DiGraph(3, [(0, 1), (1, 2)]), 1) == FROZEN_R["chain3_f1"]
    assert count_r(K4, 1) == FROZEN_R["k4_f1"]


def test_two_cycle_by_fault_set():
    g = DiGraph(2, [(0, 1), (1, 0)])
    assert [count_reduced(g, F, 1) for F in fault_sets(g, 1)] == [4, 2, 2]


def test_single_edge_empty_fault_set():
    g = DiGraph(2, [(0, 1)])
    assert count_reduced(g, [], 1) == 2
    assert count_reduced(g, [], 0) == 1


def test_fault_set_order():
    g = DiGraph(3, [(0, 1), (1, 2), (2, 0)])
    got = list(fault_sets(g, 2))
    assert got[0] == frozenset()
    assert [len(F) for F in got] == [0, 1, 1, 1, 2, 2, 2]
    assert got[1:4] == [frozenset({e}) for e in [(0, 1), (1, 2), (2, 0)]]


def test_oversized_or_foreign_fault_set_rejected():
    g = fig1_graph()
    with pytest.raises(ValueError):
        list(enumerate_reduced_graphs(g, [(0, 1), (1, 0)], 1))
    with pytest.raises(ValueError):
        count_reduced(g, [(4, 0)], 1)


@given(digraphs(max_n=5))
@settings(max_examples=60, deadline=None)
def test_count_matches_materialised_oracle(g):
    for f in (0, 1):
        assert count_r(g, f) == oracles.brute_r(g.n, g.edges, f)


@given(digraphs(max_n=4))
@settings(max_examples=40, deadline=None)
def test_enumeration_matches_oracle_and_is_lazy(g):
    f = 1
    ours = []
    for F in fault_sets(g, f):
        it = enumerate_reduced_graphs(g, F, f)
        assert iter(it) is it
        for rg in it:
            rg.validate(f)
            ours.append((rg.fault_set, rg.edges))
    theirs = [(F, es) for F, _, es in oracles.brute_reduced(g.n, g.edges, f)]
    assert Counter(ours) == Counter(theirs)
    # identity is the removal choice, so there are no duplicate choices
    assert len(ours) == count_r(g, f)


def test_removal_options_are_sorted_subsets():
    opts = removal_options(fig1_graph(), frozenset({(1, 4)}), 1)
    assert opts[4] == [frozenset(), frozenset({2}), frozenset({3})]
    assert len(opts[0]) == 4


def test_connectivity_matrix_chain():
    g = DiGraph(2, [(0, 1)])
    rg = ReducedGraph(g, frozenset(), (frozenset(), frozenset()))
    assert connectivity_matrix(rg).tolist() == [[1, 0], [1, 1]]


def test_validate_catches_bad_removal():
    g = DiGraph(3, [(0, 1), (1, 2)])
    with pytest.raises(ValueError):
        ReducedGraph(g, frozenset(), (frozenset(), frozenset({2}), frozenset())).validate(1)
    with pytest.raises(ValueError):
        ReducedGraph(g, frozenset({(0, 1)}), (frozenset(), frozenset({0}), frozenset())).validate(1)


def test_count_is_exact_integer_for_large_graphs():
    g = DiGraph(12, [(a, b) for a in range(12) for b in range(12) if a != b])
    r = count_reduced(g, [], 3)
    per_node = 1 + 11 + 55 + 165
    assert r == per_node ** 12
    assert isinstance(r, int)


def test_connectivity_matrix_has_identity():
    for rg in enumerate_reduced_graphs(fig1_graph(), [], 1):
        H = connectivity_matrix(rg)
        assert np.all(np.diag(H) == 1)
        break
