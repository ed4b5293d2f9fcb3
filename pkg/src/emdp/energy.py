"""Minimal safe and pumping energy levels, and the matching strategies."""

from __future__ import annotations

import math
from collections import deque
from fractions import Fraction
from functools import lru_cache

from .graphs import almost_sure_reach, mecs
from .model import Emdp, StateKind, Transition
from .strategy import Memoryless, MemorylessMachine

INF = math.inf

LevelMap = dict  # state -> int or math.inf


class NoSafeState(RuntimeError):
    pass


class NoPumpableState(RuntimeError):
    pass


def safe_bound(e: Emdp) -> int:
    """Largest finite minimal safe level (``(|S|-1) * M_E``)."""
    return (len(e.states) - 1) * e.max_update


@lru_cache(maxsize=256)
def min_safe(e: Emdp) -> LevelMap:
    """Least initial credit for a safe strategy, per state.

    Progress-measure lifting on the energy game in which stochastic
    states belong to the adversary.
    """
    bound = safe_bound(e)
    f = {s: 0 for s in e.states}
    preds: dict = {s: set() for s in e.states}
    for t in e.transitions:
        preds[t.dst].add(t.src)
    queue = deque(e.states)
    queued = set(e.states)

    def need(x, upd):
        if x == INF:
            return INF
        v = max(0, x - upd)
        return INF if v > bound else v

    while queue:
        s = queue.popleft()
        queued.discard(s)
        vals = [need(f[t.dst], t.update) for t in e.out(s)]
        v = max(vals) if e.is_stochastic(s) else min(vals)
        if v > f[s]:
            f[s] = v
            for p in preds[s]:
                if p not in queued:
                    queue.append(p)
                    queued.add(p)
    return f


def safe_choices(e: Emdp, levels: LevelMap, s) -> list[Transition]:
    """Transitions of controllable ``s`` that respect the level map."""
    ls = levels[s]
    return [t for t in e.out(s) if levels[t.dst] != INF and ls + t.update >= levels[t.dst]]


def safe_strategy(e: Emdp) -> MemorylessMachine:
    """Memoryless safe strategy: first transition respecting min_safe.

    States with infinite min_safe play their first transition; the
    strategy is only meaningful from safe configurations.
    """
    ms = min_safe(e)
    if all(v == INF for v in ms.values()):
        raise NoSafeState("no state has a finite minimal safe level")
    pick = {}
    for s in e.controllable_states:
        ok = safe_choices(e, ms, s) if ms[s] != INF else []
        pick[s] = (ok[0] if ok else e.out(s)[0]).index
    return MemorylessMachine(Memoryless.deterministic(e, pick, name="safe"))


# ---------------------------------------------------------------- pumping


def pump_bound(e: Emdp) -> int:
    return 3 * len(e.states) * e.max_update


def _winning_pump(e: Emdp, K: int, good: set) -> dict:
    """Least level k <= K from which the controller can, almost surely and
    without dropping below 0, push the counter above K in a state of
    ``good``. Returns state -> level (or INF)."""
    WIN, LOSE = ("win",), ("lose",)
    nodes = [(s, k) for s in e.states for k in range(K + 1)]

    # adjacency over the product with two absorbing outcomes
    out: dict = {}
    for s, k in nodes:
        row = []
        for t in e.out(s):
            k2 = k + t.update
            if k2 < 0:
                dst = LOSE
            elif k2 > K:
                dst = WIN if t.dst in good else LOSE
            else:
                dst = (t.dst, k2)
            row.append(_Edge(len(row), dst))
        out[(s, k)] = row
    out[WIN] = [_Edge(0, WIN)]
    out[LOSE] = [_Edge(0, LOSE)]
    arena = _AdHoc(nodes + [WIN, LOSE], out, {(s, k): e.is_stochastic(s) for s, k in nodes})
    r = almost_sure_reach(arena, [WIN])
    res = {}
    for s in e.states:
        res[s] = next((k for k in range(K + 1) if (s, k) in r.winning), INF)
    return res


class _Edge:
    __slots__ = ("index", "dst")

    def __init__(self, index, dst):
        self.index = index
        self.dst = dst


class _AdHoc:
    """Minimal arena for graph algorithms; edge indices are per state."""

    def __init__(self, states, out, stoch):
        self.states = states
        self._out = out
        self._stoch = stoch
        self.position = {s: i for i, s in enumerate(states)}
        # globally unique edge ids so edge filters stay meaningful
        n = 0
        for s in states:
            for ed in out[s]:
                ed.index = n
                n += 1

    def out(self, s):
        return self._out[s]

    def is_stochastic(self, s):
        return self._stoch.get(s, False)


@lru_cache(maxsize=256)
def min_pump(e: Emdp) -> LevelMap:
    """Least initial credit from which some safe strategy pumps the
    counter to infinity almost surely.

    Iterates the bounded product analysis: a run that pushes the counter
    above ``3|S|M_E`` in a state that is itself pumpable (from some level
    within the bound) has succeeded.
    """
    K = pump_bound(e)
    good = set(e.states)
    while True:
        lv = _winning_pump(e, K, good)
        new = {s for s, v in lv.items() if v != INF}
        if new == good:
            return lv
        good = new


def pumping_strategy(e: Emdp) -> MemorylessMachine:
    """Memoryless strategy pumping from every pumpable configuration.

    Restrict to transitions respecting the min_pump map, pick one simple
    positive cycle in each maximal end component that has one, follow it
    and steer towards the cycles elsewhere.
    """
    ell = min_pump(e)
    fin = {s for s in e.states if ell[s] != INF}
    if not fin:
        raise NoPumpableState("no configuration is pumpable")
    allowed = set()
    for s in fin:
        for t in e.out(s):
            if t.dst in fin and ell[s] + t.update >= ell[t.dst]:
                allowed.add(t.index)
            elif e.is_stochastic(s):
                raise AssertionError("min_pump map is not closed under stochastic moves")
    cycle_pick: dict = {}
    cycle_states: set = set()
    for mec in mecs(e, states=fin, edges=allowed):
        cyc = _positive_cycle(e, ell, mec.states, mec.transitions)
        if cyc is None:
            continue
        for i in cyc:
            t = e.transitions[i]
            cycle_states.add(t.src)
            if not e.is_stochastic(t.src):
                cycle_pick[t.src] = i
    r = almost_sure_reach(e, cycle_states, states=fin, edges=allowed)
    missing = fin - r.winning
    if missing:
        raise AssertionError(f"pumping cycles unreachable from {sorted(missing)}")
    pick = {}
    ms = min_safe(e)
    for s in e.controllable_states:
        if s in cycle_pick:
            pick[s] = cycle_pick[s]
        elif s in r.choice:
            pick[s] = r.choice[s]
        elif s in fin:
            pick[s] = min(t.index for t in e.out(s) if t.index in allowed)
        else:
            ok = safe_choices(e, ms, s) if ms[s] != INF else []
            pick[s] = (ok[0] if ok else e.out(s)[0]).index
    machine = MemorylessMachine(Memoryless.deterministic(e, pick, name="pump"))
    machine.cycle_states = frozenset(cycle_states)
    return machine


def _positive_cycle(e: Emdp, ell, states, trans) -> list[int] | None:
    """A simple cycle inside (states, trans) with positive total update.

    Every allowed transition has non-negative slack ``ell(s)+E-ell(t)``,
    so any transition with positive slack closes a positive cycle with a
    shortest path back inside the component.
    """
    trans = sorted(trans)
    for i in trans:
        t = e.transitions[i]
        if ell[t.src] + t.update - ell[t.dst] > 0:
            path = _shortest_path(e, t.dst, t.src, states, trans)
            return [i] + path
    return None


def _shortest_path(e, a, b, states, trans) -> list[int]:
    if a == b:
        return []
    allowed = set(trans)
    prev = {a: None}
    queue = deque([a])
    while queue:
        v = queue.popleft()
        for t in e.out(v):
            if t.index in allowed and t.dst in states and t.dst not in prev:
                prev[t.dst] = t.index
                if t.dst == b:
                    path = []
                    x = b
                    while prev[x] is not None:
                        path.append(prev[x])
                        x = e.transitions[prev[x]].src
                    return path[::-1]
                queue.append(t.dst)
    raise AssertionError("component is not strongly connected")


def safety_gadget(e: Emdp) -> Emdp:
    """Pumpable EMDP with the same safe configurations on the original states.

    Every transition ``(s, s')`` is routed through a fresh stochastic
    state that either loops with a positive update or moves on to ``s'``,
    each with probability 1/2.
    """
    bump = max(0, max((t.update for t in e.transitions), default=0)) + 1
    states = list(e.states)
    kinds = [e.kind[s] for s in e.states]
    trans: list[Transition] = []
    half = Fraction(1, 2)
    for t in e.transitions:
        mid = f"{t.src}>{t.dst}#{t.index}"
        states.append(mid)
        kinds.append(StateKind.STOCHASTIC)
    for t in e.transitions:
        mid = f"{t.src}>{t.dst}#{t.index}"
        trans.append(Transition(len(trans), t.src, mid, t.update, t.reward, t.prob))
    for t in e.transitions:
        mid = f"{t.src}>{t.dst}#{t.index}"
        trans.append(Transition(len(trans), mid, mid, bump, Fraction(0), half))
        trans.append(Transition(len(trans), mid, t.dst, 0, Fraction(0), half))
    g = Emdp(tuple(states), tuple(kinds), tuple(trans))
    g.validate()
    return g
