import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from byzlink.adversary import AdversaryConfig
from byzlink.graph import DiGraph, fig1_graph
from byzlink.matrix import (TraceCorruptionError, _split_weights, backward_product,
                            build_transition_matrix, delta, dominates_connectivity, ergodicity,
                            has_positive_column, is_row_stochastic, lam, q_blocks,
                            reconstruction_residual, reduced_graph_for, required_entries,
                            row_bound_violations, spread_bound_check, verify_row_bound)
from byzlink.protocol import SimulationConfig, graph_beta, run
from byzlink.reduction import connectivity_matrix, enumerate_reduced_graphs, fault_sets

BETA = float(graph_beta(fig1_graph()))


def stochastic(rng, n):
    A = rng.random((n, n)) ** 3
    return A / A.sum(axis=1, keepdims=True)


def fig1_trace(adv=AdversaryConfig(), inputs=(0, 1, 2, 3, 4), T=30, trim_own=False):
    cfg = SimulationConfig(fig1_graph(), 1, inputs, min(inputs), max(inputs), stop_mode="fixed",
                           T=T, adversary=adv, trim_own=trim_own)
    return run(cfg)


ADVERSARIES = [AdversaryConfig()] + [
    a for seed in range(4) for a in (
        AdversaryConfig("drop", 1, seed=seed),
        AdversaryConfig("constant", 1, {"value": -7.0}, seed),
        AdversaryConfig("offset", 1, {"delta": 3.0}, seed),
        AdversaryConfig("random", 1, {"low": -10, "high": 10}, seed),
        AdversaryConfig("constant", 1, {"value": 2.0, "selection": "cycle"}, seed),
    )]


# -- ergodicity coefficients ---------------------------------------------

def test_hand_cases():
    assert delta(np.eye(2)) == 1 and lam(np.eye(2)) == 1
    same = np.array([[0.3, 0.7], [0.3, 0.7]])
    assert delta(same) == 0 and lam(same) == pytest.approx(0, abs=1e-15)
    A = np.array([[0.5, 0.5], [0.25, 0.75]])
    assert delta(A) == 0.25 and lam(A) == pytest.approx(0.25)


@given(st.integers(2, 6), st.integers(0, 2 ** 32 - 1))
@settings(max_examples=200, deadline=None)
def test_ranges_and_identical_rows(n, seed):
    rng = np.random.default_rng(seed)
    A = stochastic(rng, n)
    rep = ergodicity(A)
    assert 0 <= rep.delta <= 1 and -1e-15 <= rep.lam <= 1
    B = np.tile(A[0], (n, 1))
    assert delta(B) == 0 and lam(B) < 1e-12
    if not np.allclose(A, B, atol=0):
        assert delta(A) > 0 and lam(A) > 0


def test_hajnal_pairs():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        n = int(rng.integers(2, 7))
        A, B = stochastic(rng, n), stochastic(rng, n)
        assert delta(B @ A) <= lam(B) * lam(A) + 1e-12


def test_non_stochastic_rejected():
    with pytest.raises(ValueError):
        ergodicity(np.array([[0.5, 0.6], [0.5, 0.5]]))
    assert not is_row_stochastic(np.array([[1.0, 0.0]]))


def test_backward_product_order():
    A = np.array([[1.0, 0.0], [1.0, 0.0]])
    B = np.array([[0.0, 1.0], [0.0, 1.0]])
    assert np.array_equal(backward_product([A, B]), B @ A)
    with pytest.raises(ValueError):
        backward_product([])


def test_q_blocks_rn_one_and_length_check():
    rng = np.random.default_rng(1)
    ms = [stochastic(rng, 3) for _ in range(4)]
    blocks = q_blocks(ms, 1, 0.1)
    assert all(np.array_equal(b.Q, m) for b, m in zip(blocks, ms))
    with pytest.raises(ValueError):
        q_blocks(ms, 3, 0.1)


def test_positive_column_power():
    chain = np.array([[1, 0, 0], [1, 1, 0], [0, 1, 1]])
    assert has_positive_column(chain, 2)
    assert not has_positive_column(chain, 1)
    assert not has_positive_column(np.eye(3, dtype=int), 3)


# -- split weights -----------------------------------------------------

def test_split_weights():
    assert _split_weights(2.0, 0.0, 4.0) == (0.5, 0.5)
    assert _split_weights(1.0, 1.0, 1.0) == (1.0, 0.0)
    s, l = _split_weights(3.0, 0.0, 4.0)
    assert s * 0 + l * 4 == pytest.approx(3.0) and s + l == 1
    with pytest.raises(TraceCorruptionError):
        _split_weights(5.0, 0.0, 4.0)


# -- reconstruction ------------------------------------------------------

@pytest.mark.parametrize("adv", ADVERSARIES, ids=lambda a: f"{a.kind}-{a.seed}")
def test_reconstruction_on_fig1(adv):
    g = fig1_graph()
    for inputs in ((0, 1, 2, 3, 4), (0, 0, 0, 0, 10), (1.5, -2, 0.3, 7, 7)):
        tr = fig1_trace(adv, inputs)
        for t in range(1, tr.iterations + 1):
            tm = build_transition_matrix(tr, t)
            assert is_row_stochastic(tm.M)
            assert reconstruction_residual(tr, tm) < 1e-9
            assert verify_row_bound(tm, g, 1), row_bound_violations(tm, g, 1)
            H = connectivity_matrix(reduced_graph_for(tm, g, tr))
            reduced_graph_for(tm, g, tr).validate(1)
            assert dominates_connectivity(tm, H, BETA)
            for info in tm.rows:
                if info.case == "I":
                    assert all(max(s, l) >= 0.5 for _, s, l in info.splits)


def test_case_coverage():
    seen = set()
    for adv in ADVERSARIES:
        tr = fig1_trace(adv)
        for t in range(1, tr.iterations + 1):
            seen.update(r.case for r in build_transition_matrix(tr, t).rows)
    assert seen == {"I", "II", "III"}


def test_literal_trim_rule_forces_zero_self_weight():
    # with the own value inside the sort, node 4 holds the strict maximum
    # after one iteration, trims it away and lands on the global minimum:
    # every stochastic row reproducing that must put zero weight on itself
    tr = fig1_trace(trim_own=True, T=2)
    prev, cur = tr.states(1), tr.states(2)
    assert prev[4] > max(prev[:4]) and cur[4] == prev.min()
    tm = build_transition_matrix(tr, 2)
    assert reconstruction_residual(tr, tm) < 1e-12
    assert tm.M[4, 4] == 0.0 and 4 in required_entries(fig1_graph(), tm, 4)
    assert (4, 4, 0.0) in row_bound_violations(tm, fig1_graph(), 1)
    # the default rule keeps its own value and meets the bound
    tm = build_transition_matrix(fig1_trace(T=2), 2)
    assert verify_row_bound(tm, fig1_graph(), 1)


def test_reconstruction_on_violating_fixture(twin_k4):
    cfg = SimulationConfig(twin_k4, 1, [0.5, 0, 0, 0, 0.5, 1, 1, 1], 0, 1, stop_mode="fixed", T=20,
                           adversary=AdversaryConfig("random", 1, {"low": -3, "high": 3}, seed=9))
    tr = run(cfg)
    for t in range(1, tr.iterations + 1):
        tm = build_transition_matrix(tr, t)
        assert reconstruction_residual(tr, tm) < 1e-9


def test_corrupted_trace_detected():
    tr = fig1_trace(T=2)
    r = tr.rounds[1]
    tr.rounds[1] = r.__class__(1, (r.states[0] + 0.5,) + r.states[1:], r.faults, r.tampered,
                               r.dropped, r.kept)
    assert reconstruction_residual(tr, build_transition_matrix(tr, 1)) == pytest.approx(0.5)
    with pytest.raises(IndexError):
        build_transition_matrix(tr, 5)


def test_spread_bound_on_fig1():
    for adv in ADVERSARIES[:6]:
        tr = fig1_trace(adv, T=50)
        rep = spread_bound_check(tr, 50, 4.0, 0.0)
        assert rep.ok and rep.checked == 50
        assert rep.max_product_error < 1e-9


def test_spread_bound_equal_inputs():
    tr = fig1_trace(inputs=(1, 1, 1, 1, 1), T=5)
    assert spread_bound_check(tr, 5, 1.0, 1.0).ok


def test_two_node_q_blocks():
    # f = 0 on the 2-cycle: one reduced graph, so rn = 2 is small enough to use
    g = DiGraph(2, [(0, 1), (1, 0)])
    tr = run(SimulationConfig(g, 0, [0.0, 1.0], 0.0, 1.0, stop_mode="fixed", T=10))
    beta = float(graph_beta(g))
    ms = [build_transition_matrix(tr, t).M for t in range(1, 11)]
    blocks = q_blocks(ms, 2, beta)
    assert len(blocks) == 5 and all(b.ok for b in blocks)
    prod = 1.0
    for b in blocks:
        prod *= b.lam
    assert delta(backward_product(ms)) <= prod + 1e-12


def test_fig1_every_reduced_graph_has_positive_column():
    g = fig1_graph()
    for F in fault_sets(g, 1):
        for rg in enumerate_reduced_graphs(g, F, 1):
            assert has_positive_column(connectivity_matrix(rg), g.n)


def test_chain_reduced_graph_without_positive_column(chain3):
    hits = [rg for rg in enumerate_reduced_graphs(chain3, [], 1)
            if not has_positive_column(connectivity_matrix(rg), 3)]
    assert hits
