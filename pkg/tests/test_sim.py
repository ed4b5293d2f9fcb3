import io
import json
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from emdp import epsilon_strategy, estimate_mp, oracle_value, run_trace, safe_strategy
from emdp.model import Configuration, energy_level
from emdp.sim import TooLarge, dump_trace, episode_seed, iter_levels
from emdp.strategy import Memoryless, MemorylessMachine
from emdp.synth import sp_core, type2_strategy
from helpers import emdps, single_loop, two_pumps

C = Configuration


def loop_machine(e):
    return MemorylessMachine(Memoryless.deterministic(e, {"s": 0}))


def test_levels_on_a_single_loop():
    e = single_loop()
    tr = run_trace(e, loop_machine(e), C("s", 0), 5, seed=0)
    assert list(iter_levels(tr)) == [0, 1, 2, 3, 4, 5]
    assert tr.safety_violated_at is None
    assert tr.running_mean == 3


def test_fig1_exhibits_unsafety(fig1):
    blind = MemorylessMachine(Memoryless(fig1, {}))
    hits = [run_trace(fig1, blind, C("s", 0), 2000, seed=k).safety_violated_at for k in range(5)]
    assert any(h is not None for h in hits)
    rep = estimate_mp(fig1, blind, C("s", 0), 10, 2000, seed=0)
    assert rep.safety_violations > 0


def test_fig2L_safe_strategy_sits_at_zero(fig2L):
    tr = run_trace(fig2L, safe_strategy(fig2L), C("t", 0), 50, seed=1)
    assert set(iter_levels(tr)) == {0}
    assert all(t == 3 for t, _, _ in tr.steps)


def test_trace_levels_agree_with_energy_level(fig2L):
    m = epsilon_strategy(fig2L, C("s", 0), Fraction(1))
    tr = run_trace(fig2L, m, C("s", 0), 400, seed=5)
    via = [t for t, _, _ in tr.steps]
    path = ["s"] + [fig2L.transitions[t].dst for t in via]
    assert energy_level(fig2L, path, 0, via) == list(iter_levels(tr))


def test_deterministic_loop_estimate():
    e = single_loop()
    rep = estimate_mp(e, loop_machine(e), C("s", 0), 8, 1000, seed=2)
    assert rep.mean == 3 and rep.stderr == 0 and rep.safety_violations == 0
    assert rep.max_level_seen == 1000


def test_fig3_safe_play_earns_nothing(fig3):
    m = epsilon_strategy(fig3, C("s", 4), Fraction(1, 2))
    rep = estimate_mp(fig3, m, C("s", 4), 20, 20_000, seed=3)
    assert rep.safety_violations == 0
    assert rep.mean < 0.5


def test_seeds_are_per_episode():
    assert episode_seed(10, 0) == 10 and episode_seed(10, 3) == 9


@pytest.mark.parametrize("name, cfg, eps", [
    ("fig2L", C("s", 0), Fraction(1)),
    ("fig2R", C("a", 0), Fraction(1, 2)),
    ("fig3", C("s", 2), Fraction(1, 2)),
    ("pump2", C("s", 0), Fraction(1, 2)),
])
def test_fast_path_matches_reference(name, cfg, eps):
    from conftest import load

    e = load(name)
    m = epsilon_strategy(e, cfg, eps)
    for seed in range(3):
        a = run_trace(e, m, cfg, 5000, seed)
        b = run_trace(e, m, cfg, 5000, seed, reference=True)
        assert a.steps == b.steps
        assert a.running_mean == b.running_mean


def test_staged_machine_fast_path_matches_reference():
    e = two_pumps()
    m = type2_strategy(e, sp_core(e), cap=5)
    a = run_trace(e, m, C("a", 0), 3000, 1)
    b = run_trace(e, m, C("a", 0), 3000, 1, reference=True)
    assert a.steps == b.steps


@settings(max_examples=30)
@given(emdps(), st.integers(0, 2**31))
def test_random_rules_fast_path_matches_reference(e, seed):
    pick = {s: e.out(s)[seed % len(e.out(s))].index for s in e.controllable_states}
    m = MemorylessMachine(Memoryless.deterministic(e, pick))
    cfg = C(e.states[0], 2)
    a = run_trace(e, m, cfg, 300, seed)
    b = run_trace(e, m, cfg, 300, seed, reference=True)
    assert a.steps == b.steps and a.safety_violated_at == b.safety_violated_at


def test_seed_determinism_and_dump(fig2R):
    m = epsilon_strategy(fig2R, C("a", 0), Fraction(1, 2))
    out = []
    for _ in range(2):
        buf = io.StringIO()
        dump_trace(fig2R, run_trace(fig2R, m, C("a", 0), 500, seed=7), buf)
        out.append(buf.getvalue())
    assert out[0] == out[1]
    first = json.loads(out[0].splitlines()[0])
    assert set(first) == {"i", "state", "transition", "level", "reward", "running_mean"}
    other = io.StringIO()
    dump_trace(fig2R, run_trace(fig2R, m, C("a", 0), 500, seed=8), other)
    assert other.getvalue() != out[0]


def test_report_json(fig2L):
    e = single_loop()
    rep = estimate_mp(e, loop_machine(e), C("s", 0), 3, 10, seed=0)
    d = rep.to_json()
    assert d["episode_means"] == [{"num": 3, "den": 1}] * 3


def test_oracle_examples(fig3, fig2L):
    assert oracle_value(fig3, C("s", 2), 2) == 0
    assert oracle_value(single_loop(update=0), C("s", 0), 0) == 3
    # a +1 loop leaves the zero-width range at once
    assert oracle_value(single_loop(), C("s", 0), 0) == 2
    assert oracle_value(fig2L, C("s", 4), 4) <= 5
    with pytest.raises(TooLarge):
        oracle_value(fig2L, C("s", 0), 10_000)


def test_bad_arguments():
    e = single_loop()
    with pytest.raises(ValueError):
        run_trace(e, loop_machine(e), C("s", 0), 0, 0)
    with pytest.raises(ValueError):
        estimate_mp(e, loop_machine(e), C("s", 0), 0, 10, 0)
