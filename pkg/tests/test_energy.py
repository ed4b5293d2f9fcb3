import math

import pytest
from hypothesis import given

from emdp import make_emdp, min_pump, min_safe, pumping_strategy, safe_strategy
from emdp.energy import NoPumpableState, NoSafeState, pump_bound, safe_choices, safety_gadget
from helpers import emdps, safety_oracle, single_loop, two_pumps

INF = math.inf


def test_fig1_never_safe(fig1):
    assert min_safe(fig1) == {"s": INF, "t": INF}
    with pytest.raises(NoSafeState):
        safe_strategy(fig1)


def test_fig2L_safe_levels(fig2L):
    assert min_safe(fig2L) == {"s": 0, "t": 0, "u": 1, "v": 0}


def test_single_loop_levels():
    assert min_safe(single_loop()) == {"s": 0}
    assert min_pump(single_loop()) == {"s": 0}
    assert safe_strategy(single_loop()).rule.pick("s") == 0
    assert pumping_strategy(single_loop()).rule.pick("s") == 0


def test_decrementing_loop_is_unsafe():
    assert min_safe(single_loop(update=-1)) == {"s": INF}
    assert min_pump(single_loop(update=0)) == {"s": INF}


def test_safe_choices_fig2L(fig2L):
    # at t(0) only the 0-update self-loop keeps the level map
    assert [t.index for t in safe_choices(fig2L, min_safe(fig2L), "t")] == [3]
    assert safe_strategy(fig2L).rule.pick("t") == 3


def test_safe_choice_fig3(fig3):
    assert fig3.transitions[safe_strategy(fig3).rule.pick("s")].dst == "s"


def test_pump_levels(fig2L, fig2R, fig3, pump2):
    assert min_pump(fig2L)["t"] == INF
    assert min_pump(fig2R)["a"] == 0
    assert all(v == INF for v in min_pump(fig3).values())
    assert min_pump(pump2) == {"s": 0, "t": 1}


def test_fig3_cannot_pump(fig3):
    with pytest.raises(NoPumpableState):
        pumping_strategy(fig3)


def test_pump2_plays_its_loop(pump2):
    pi = pumping_strategy(pump2)
    assert pi.rule.pick("s") == 0
    assert "s" in pi.cycle_states


def test_two_pumps_pump_on_a():
    e = two_pumps()
    assert min_pump(e) == {"a": 0, "b": 0}
    pi = pumping_strategy(e)
    assert pi.rule.pick("a") == 0
    assert e.transitions[pi.rule.pick("b")].dst == "a"


def test_gadget_on_fig1(fig1):
    g = safety_gadget(fig1)
    assert len(g.states) == len(fig1.states) + len(fig1.transitions)
    ms = min_safe(g)
    assert ms["s"] == ms["t"] == INF


def test_gadget_preserves_safe_levels(fig2L):
    g = safety_gadget(fig2L)
    assert {s: min_safe(g)[s] for s in fig2L.states} == min_safe(fig2L)
    # safe states of the source become pumpable
    assert {s: min_pump(g)[s] for s in fig2L.states} == min_safe(fig2L)


def test_gadget_on_flat_loop():
    g = safety_gadget(single_loop(update=0))
    assert min_pump(g)["s"] == 0


def test_stochastic_state_needs_credit_for_worst_branch():
    e = make_emdp([("s", "stochastic")], [("s", "s", -1, 0, "1/3"), ("s", "s", 2, 0, "2/3")])
    assert min_safe(e) == {"s": INF}
    e = make_emdp([("s", "stochastic"), ("t", "controllable")],
                  [("s", "t", -2, 0, "1/2"), ("s", "t", 1, 0, "1/2"), ("t", "t", 0, 0)])
    assert min_safe(e) == {"s": 2, "t": 0}


@given(emdps())
def test_min_safe_matches_adversarial_oracle(e):
    assert min_safe(e) == safety_oracle(e)


@given(emdps())
def test_pump_levels_bounded_and_above_safe(e):
    ms, mp = min_safe(e), min_pump(e)
    for s in e.states:
        assert mp[s] == INF or mp[s] <= pump_bound(e)
        assert ms[s] <= mp[s]


@given(emdps())
def test_safe_strategy_respects_the_level_map(e):
    ms = min_safe(e)
    if all(v == INF for v in ms.values()):
        return
    rule = safe_strategy(e).rule
    for s in e.states:
        if ms[s] == INF:
            continue
        outs = e.out(s) if e.is_stochastic(s) else [e.transitions[rule.pick(s)]]
        for t in outs:
            assert ms[s] + t.update >= ms[t.dst]


@given(emdps())
def test_gadget_agrees_with_source(e):
    g = safety_gadget(e)
    msg, ms = min_safe(g), min_safe(e)
    assert all(msg[s] == ms[s] for s in e.states)
