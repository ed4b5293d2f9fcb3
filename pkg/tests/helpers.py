"""Hypothesis strategies and small hand-built models shared by the tests."""

import random

from hypothesis import strategies as st

from emdp import make_emdp, parse_emdp
from emdp.generate import RandomModelConfig, random_emdp


@st.composite
def emdps(draw, strongly_connected=None, max_states=4, max_update=2):
    seed = draw(st.integers(0, 2**32 - 1))
    sc = draw(st.booleans()) if strongly_connected is None else strongly_connected
    cfg = RandomModelConfig(max_states=max_states, max_update=max_update, strongly_connected=sc)
    return random_emdp(random.Random(seed), cfg)


def single_loop(update=1, reward=3):
    return make_emdp([("s", "controllable")], [("s", "s", update, reward)])


def two_loops():
    """Two controllable states with loops paying 1 and 4 and free edges between."""
    return make_emdp(
        [("a", "controllable"), ("b", "controllable")],
        [("a", "a", 0, 1), ("a", "b", 0, 0), ("b", "b", 0, 4), ("b", "a", 0, 0)],
    )


def fig3_variant(s_loop_reward):
    return parse_emdp(f"""
state s controllable
state t stochastic
trans s -> s update=0 reward={s_loop_reward}
trans s -> t update=0 reward=0
trans t -> s update=-1 reward=10 prob=1/2
trans t -> s update=1 reward=10 prob=1/2
""")


def pump2_rewarded():
    return parse_emdp("""
state s controllable
state t stochastic
trans s -> s update=1 reward=1
trans s -> t update=0 reward=0
trans t -> s update=1 reward=0 prob=1/2
trans t -> s update=-1 reward=0 prob=1/2
""")


def mixed_cycle():
    """A +1 loop paying 0 next to a fair +-1 stochastic cycle paying 10."""
    return parse_emdp("""
state s controllable
state t stochastic
trans s -> s update=1 reward=0
trans s -> t update=0 reward=10
trans t -> s update=-1 reward=10 prob=1/2
trans t -> s update=1 reward=10 prob=1/2
""")


def two_pumps():
    """A +1 loop paying 0 and a -1 loop paying 10, joined by free edges."""
    return make_emdp(
        [("a", "controllable"), ("b", "controllable")],
        [("a", "a", 1, 0), ("a", "b", 0, 0), ("b", "b", -1, 10), ("b", "a", 0, 0)],
    )


def safety_oracle(e, bound=None):
    """Least safe level per state by a greatest fixpoint on the
    configuration graph, counters clamped at ``bound``."""
    B = len(e.states) * e.max_update if bound is None else bound
    win = {(s, k) for s in e.states for k in range(B + 1)}

    def ok(t, k):
        k2 = k + t.update
        return k2 >= 0 and (t.dst, min(k2, B)) in win

    changed = True
    while changed:
        changed = False
        for s, k in sorted(win, key=str):
            outs = [ok(t, k) for t in e.out(s)]
            good = all(outs) if e.is_stochastic(s) else any(outs)
            if not good:
                win.discard((s, k))
                changed = True
    return {s: min((k for k in range(B + 1) if (s, k) in win), default=float("inf")) for s in e.states}
