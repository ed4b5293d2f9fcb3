import json
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from emdp import epsilon_strategy, run_trace
from emdp.machines import ThresholdMachine, lift_indices, lift_rule, pump_target
from emdp.model import Configuration
from emdp.strategy import Memoryless, MemorylessMachine, StrategyError, machine_from_json
from emdp.synth import sp_core, type2_strategy
from helpers import emdps, two_pumps

C = Configuration


def round_trip(model, m):
    text = json.dumps(m.describe())
    return machine_from_json(model, json.loads(text))


@pytest.mark.parametrize("name, cfg, eps", [
    ("fig2L", C("s", 0), Fraction(1)),
    ("fig2R", C("a", 0), Fraction(1, 2)),
    ("fig3", C("s", 3), Fraction(1, 2)),
    ("pump2", C("s", 0), Fraction(1, 2)),
    ("loop", C("s", 0), Fraction(1, 2)),
])
def test_synthesised_machines_survive_json(name, cfg, eps):
    from conftest import load

    e = load(name)
    m = epsilon_strategy(e, cfg, eps)
    m2 = round_trip(e, m)
    assert m2.describe() == m.describe()
    assert m2.memory_size() == m.memory_size()
    a = run_trace(e, m, cfg, 3000, seed=9)
    b = run_trace(e, m2, cfg, 3000, seed=9)
    assert a.steps == b.steps


def test_staged_round_trip():
    e = two_pumps()
    m = type2_strategy(e, sp_core(e), cap=7)
    assert round_trip(e, m).describe() == m.describe()


def test_unknown_type_rejected(fig2L):
    with pytest.raises(StrategyError):
        machine_from_json(fig2L, {"type": "oracle"})


def test_rule_validation(fig2L):
    with pytest.raises(StrategyError):
        Memoryless(fig2L, {"u": {4: Fraction(1)}})  # u is stochastic
    with pytest.raises(StrategyError):
        Memoryless(fig2L, {"s": {0: Fraction(1, 2)}})
    with pytest.raises(StrategyError):
        Memoryless(fig2L, {"s": {2: Fraction(1)}})  # transition 2 leaves t
    with pytest.raises(StrategyError):
        Memoryless(fig2L, {}).dist("s")


def test_threshold_needs_gap(fig2L):
    r = Memoryless.deterministic(fig2L, {"s": 0, "t": 3, "v": 6})
    with pytest.raises(ValueError):
        ThresholdMachine(r, r, 3, 3)


def test_pump_target_exact():
    for i in range(1, 60):
        for N in (1, 2, 3, 7):
            x = (i * N) ** 3
            r = pump_target(0, i, N)
            assert r ** 4 >= x and (r - 1) ** 4 < x


def test_lifting_restricted_rules(fig2L):
    sub = fig2L.restrict({"s", "t"})
    idx = lift_indices(sub, fig2L)
    assert [fig2L.transitions[i].src for i in idx] == [t.src for t in sub.transitions]
    rule = Memoryless.deterministic(sub, {"s": 0, "t": sub.out("t")[0].index})
    lifted = lift_rule(rule, fig2L)
    assert fig2L.transitions[lifted.pick("t")].dst == "t"


@settings(max_examples=25)
@given(emdps(), st.integers(0, 6), st.integers(0, 2**31))
def test_memoryless_round_trip_replays(e, n, seed):
    pick = {s: e.out(s)[-1].index for s in e.controllable_states}
    m = MemorylessMachine(Memoryless.deterministic(e, pick, "last"))
    m2 = round_trip(e, m)
    cfg = C(e.states[0], n)
    assert run_trace(e, m, cfg, 200, seed).steps == run_trace(e, m2, cfg, 200, seed).steps
