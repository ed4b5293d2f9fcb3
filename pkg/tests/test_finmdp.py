import itertools
from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from emdp import make_emdp, min_safe
from emdp.finmdp import (
    SINK,
    BadBounds,
    condensation,
    cut_unfold,
    make_finite_mdp,
    solve_mean_payoff,
    solve_mean_payoff_lp,
    unfold,
)
from emdp.markov import gains, induced_chain
from emdp.model import Configuration
from emdp.sim import oracle_value, unfold_value
from helpers import emdps, single_loop


def enumerate_values(m):
    """Best gain per state over all memoryless deterministic strategies."""
    ctrl = [s for s in m.states if m.is_controllable(s)]
    best = {}
    for combo in itertools.product(*[m.out(s) for s in ctrl]):
        choice = {s: {t.index: Fraction(1)} for s, t in zip(ctrl, combo)}
        g = gains(induced_chain(m, choice))
        for s, v in g.items():
            if s not in best or v > best[s]:
                best[s] = v
    return best


def test_single_state():
    m = make_finite_mdp([("s", "controllable")], [("s", "s", 3)])
    assert solve_mean_payoff(m).values == {"s": 3}


def test_two_loops_best_is_four():
    m = make_finite_mdp([("a", "controllable"), ("b", "controllable")],
                        [("a", "a", 1), ("a", "b", 0), ("b", "b", 4), ("b", "a", 0)])
    r = solve_mean_payoff(m)
    assert r.values == {"a": 4, "b": 4}
    assert r.strategy.rule.pick("b") == 2


def test_stochastic_cycle_beats_idle_loop():
    m = make_finite_mdp([("s", "controllable"), ("t", "stochastic")],
                        [("s", "s", 0), ("s", "t", 0), ("t", "s", 10, "1/2"), ("t", "s", 10, "1/2")])
    assert solve_mean_payoff(m).values == {"s": 5, "t": 5}
    assert enumerate_values(m) == {"s": 5, "t": 5}


def test_transient_states_and_traps():
    m = make_finite_mdp(
        [("x", "stochastic"), ("g", "controllable"), ("b", "controllable")],
        [("x", "g", 0, "1/3"), ("x", "b", 0, "2/3"), ("g", "g", 3), ("b", "b", -3)],
    )
    assert solve_mean_payoff(m).values == {"x": -1, "g": 3, "b": -3}


def test_fig3_unfold(fig3):
    u = unfold(fig3, 0, 2, -1)
    assert len(u.mdp.states) == 3 * 2 + 1
    vals = solve_mean_payoff(u.mdp).values
    assert vals[SINK] == -1
    assert all(vals[u.state_of[("s", k)]] == 0 for k in range(3))
    # t(0) and t(2) hit the sink with probability 1/2
    assert vals[u.state_of[("t", 1)]] == 0
    assert vals[u.state_of[("t", 0)]] == Fraction(-1, 2)


def test_fig3_safe_unfold_is_zero_everywhere(fig3):
    u = unfold(fig3, 0, 2, -1, safe_levels=min_safe(fig3))
    vals = solve_mean_payoff(u.mdp).values
    assert all(v == 0 for s, v in vals.items() if s != SINK and u.config_of[s][0] == "s")


def test_flat_counter_collapses():
    e = make_emdp([("a", "controllable"), ("b", "controllable")],
                  [("a", "a", 0, 1), ("a", "b", 0, 0), ("b", "b", 0, 4), ("b", "a", 0, 0)])
    u = unfold(e, 0, 0, -1)
    vals = solve_mean_payoff(u.mdp).values
    assert vals[u.state_of[("a", 0)]] == vals[u.state_of[("b", 0)]] == 4


def test_fig2L_truncation_costs_payoff(fig2L):
    u = unfold(fig2L, 0, 4, -1)
    assert len(u.mdp.states) == 4 * 5 + 1
    vals = solve_mean_payoff(u.mdp).values
    assert all(v < 5 for v in vals.values())
    v = unfold_value(fig2L, Configuration("s", 4), 4)
    assert v == oracle_value(fig2L, Configuration("s", 4), 4)
    assert v <= 5


def test_bad_bounds(fig3):
    with pytest.raises(BadBounds):
        unfold(fig3, 2, 1, -1)
    with pytest.raises(BadBounds):
        unfold(fig3, 0, 1, 0)


def test_cut_unfold_routes_to_cut_states(fig3):
    ms = min_safe(fig3)
    u = cut_unfold(fig3, 3, ms, {"s": Fraction(7), "t": Fraction(7)})
    vals = solve_mean_payoff(u.mdp).values
    # fair walk on levels 0..4: absorbed at s(0) (loop pays 0) or at the cut
    for k in range(4):
        assert vals[u.state_of[("s", k)]] == Fraction(7 * k, 4)
    assert vals[u.cut_of["s"]] == 7


def test_fig2R_condensation(fig2R):
    c = condensation(fig2R, [0, 5, 0])
    vals = solve_mean_payoff(c.mdp).values
    assert vals[c.hat["a"]] == 5
    assert vals[c.hat["e"]] == 0
    assert c.hat["b"] == "b"


def test_condensation_single_component():
    c = condensation(single_loop(), {frozenset({"s"}): Fraction(3)})
    assert len(c.mdp.states) == 1
    assert solve_mean_payoff(c.mdp).values == {"<M0>": 3}


def test_condensation_isolated_components():
    e = make_emdp([("a", "controllable"), ("b", "controllable")], [("a", "a", 0, 0), ("b", "b", 0, 0)])
    c = condensation(e, [1, 7])
    vals = solve_mean_payoff(c.mdp).values
    assert vals[c.hat["a"]] == 1 and vals[c.hat["b"]] == 7


@st.composite
def finite_mdps(draw):
    e = draw(emdps(max_states=3, max_update=1))
    return unfold(e, 0, draw(st.integers(0, 2)), min(t.reward for t in e.transitions) - 1).mdp


@given(finite_mdps())
def test_policy_iteration_matches_lp_and_enumeration(m):
    r = solve_mean_payoff(m)
    assert r.values == solve_mean_payoff_lp(m).values
    ctrl = [s for s in m.states if m.is_controllable(s)]
    n = 1
    for s in ctrl:
        n *= len(m.out(s))
    if n <= 4096:
        assert r.values == enumerate_values(m)


@given(finite_mdps())
def test_returned_strategy_attains_the_values(m):
    r = solve_mean_payoff(m)
    g = gains(induced_chain(m, r.strategy.rule.table))
    assert g == r.values


@given(emdps(), st.data())
def test_unfold_value_equals_oracle(e, data):
    cap = data.draw(st.integers(0, 3))
    cfg = Configuration(data.draw(st.sampled_from(e.states)), data.draw(st.integers(0, cap)))
    try:
        want = oracle_value(e, cfg, cap)
    except Exception as err:  # enumeration too large
        assert type(err).__name__ == "TooLarge"
        return
    assert unfold_value(e, cfg, cap) == want
