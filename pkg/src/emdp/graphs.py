"""Graph structure: SCCs, maximal end components and almost-sure reachability.

Functions accept any arena (an :class:`~emdp.model.Arena` or anything with
``states``, ``out(s)`` and ``is_stochastic(s)``). Optional ``edges``
arguments restrict the analysis to a subset of transition indices.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from typing import Collection, Iterable

from .strategy import Memoryless, MemorylessMachine


class NotAlmostSurelyReachable(RuntimeError):
    def __init__(self, states):
        super().__init__(f"target not reachable with probability 1 from {sorted(map(str, states))}")
        self.states = set(states)


@dataclass(frozen=True)
class Mec:
    states: frozenset
    transitions: frozenset


def sccs(nodes: Iterable, succ) -> list[list]:
    """Strongly connected components (iterative Tarjan).

    ``succ(v)`` yields successors. Components come out in reverse
    topological order of the condensation (sinks first).
    """
    index: dict = {}
    low: dict = {}
    on_stack: set = set()
    stack: list = []
    out: list = []
    counter = 0
    for root in nodes:
        if root in index:
            continue
        work = [(root, iter(succ(root)))]
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = low[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(succ(w))))
                    advanced = True
                    break
                if w in on_stack and index[w] < low[v]:
                    low[v] = index[w]
            if advanced:
                continue
            work.pop()
            if work:
                u = work[-1][0]
                if low[v] < low[u]:
                    low[u] = low[v]
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.append(w)
                    if w == v:
                        break
                out.append(comp)
    return out


def _edge_filter(m, edges):
    if edges is None:
        return lambda s: m.out(s)
    allowed = edges if isinstance(edges, (set, frozenset)) else set(edges)
    return lambda s: [t for t in m.out(s) if t.index in allowed]


def is_strongly_connected(m) -> bool:
    comps = sccs(m.states, lambda s: [t.dst for t in m.out(s)])
    return len(comps) == 1


def mecs(m, states: Collection | None = None, edges: Collection[int] | None = None) -> list[Mec]:
    """Maximal end components, optionally inside a sub-arena.

    A stochastic state belongs to an end component only if all of its
    transitions in ``m`` stay inside; ``edges`` only limits the choices of
    controllable states.
    """
    alive = set(m.states if states is None else states)
    allowed = None if edges is None else set(edges)
    cur: dict = {}
    for s in alive:
        if m.is_stochastic(s):
            out = list(m.out(s))
            if allowed is not None and any(t.index not in allowed for t in out):
                out = None
        else:
            out = [t for t in m.out(s) if allowed is None or t.index in allowed]
        cur[s] = out
    # states that can never be part of an end component
    for s, out in list(cur.items()):
        if out is None:
            del cur[s]
    alive = set(cur)
    while True:
        comps = sccs(sorted(alive, key=m.position.get) if hasattr(m, "position") else alive,
                     lambda s: [t.dst for t in cur[s] if t.dst in alive])
        comp_of = {}
        for k, c in enumerate(comps):
            for s in c:
                comp_of[s] = k
        removed = set()
        for s in alive:
            inside = [t for t in cur[s] if t.dst in alive and comp_of[t.dst] == comp_of[s]]
            if m.is_stochastic(s):
                if len(inside) != len(cur[s]):
                    removed.add(s)
            elif not inside:
                removed.add(s)
            cur[s] = inside if not m.is_stochastic(s) else cur[s]
        if not removed:
            break
        alive -= removed
        for s in alive:
            if not m.is_stochastic(s):
                cur[s] = [t for t in cur[s] if t.dst in alive]
    result = []
    for c in comps:
        cs = frozenset(c)
        trans = frozenset(t.index for s in c for t in cur[s] if t.dst in cs)
        if trans:
            result.append(Mec(cs, trans))
    order = getattr(m, "position", None)
    if order is not None:
        result.sort(key=lambda mec: min(order[s] for s in mec.states))
    return result


@dataclass
class Reachability:
    """Almost-sure reachability analysis of ``target``.

    ``winning`` is the set of states from which some strategy reaches the
    target with probability 1; ``choice`` gives that strategy on
    controllable winning states outside the target and ``distance`` is the
    attractor rank used to build it.
    """

    winning: set
    choice: dict
    distance: dict


def almost_sure_reach(m, target: Iterable, states: Collection | None = None,
                      edges: Collection[int] | None = None) -> Reachability:
    """Standard greatest-fixpoint computation, then a BFS attractor.

    The analysis lives on ``states`` (default all); transitions leaving it
    are unusable for controllable states and make stochastic states losing.
    """
    universe = set(m.states if states is None else states)
    target = set(target) & universe
    out = _edge_filter(m, edges)
    # predecessor lists inside the universe
    pred: dict = {s: [] for s in universe}
    for s in universe:
        for t in out(s) if not m.is_stochastic(s) else m.out(s):
            if t.dst in universe:
                pred[t.dst].append((s, t))
    win = set(universe)
    while True:
        # states that reach the target with positive probability inside win
        reach = set(target & win)
        queue = deque(reach)
        while queue:
            v = queue.popleft()
            for s, t in pred[v]:
                if s in win and s not in reach:
                    reach.add(s)
                    queue.append(s)
        # drop states that cannot avoid leaving `reach`
        new = set(reach)
        changed = True
        while changed:
            changed = False
            for s in list(new):
                if s in target:
                    continue
                if m.is_stochastic(s):
                    ok = all(t.dst in new for t in m.out(s))
                else:
                    ok = any(t.dst in new for t in out(s))
                if not ok:
                    new.discard(s)
                    changed = True
        if new == win:
            break
        win = new
    # attractor ranks: controllable states need one good edge, stochastic
    # states one positive-probability edge (all of theirs stay in win)
    dist = {s: 0 for s in target & win}
    choice: dict = {}
    frontier = deque(dist)
    while frontier:
        v = frontier.popleft()
        for s, t in pred[v]:
            if s not in win or s in dist:
                continue
            dist[s] = dist[v] + 1
            if not m.is_stochastic(s):
                choice[s] = t.index
            frontier.append(s)
    # deterministic tie-break: smallest transition index among best edges
    for s in list(choice):
        best = min((t.index for t in out(s) if t.dst in dist and dist[t.dst] == dist[s] - 1))
        choice[s] = best
    return Reachability(win, choice, dist)


def reach_strategy(m, target: Iterable, states: Collection | None = None,
                   edges: Collection[int] | None = None) -> MemorylessMachine:
    """Memoryless deterministic strategy reaching ``target`` almost surely.

    Target states play their first usable transition. Expected hitting
    times are attached as ``machine.hitting_times``.
    """
    from .markov import expected_hitting_times

    universe = list(m.states if states is None else states)
    target = set(target)
    r = almost_sure_reach(m, target, universe, edges)
    bad = [s for s in universe if s not in r.winning]
    if bad:
        raise NotAlmostSurelyReachable(bad)
    out = _edge_filter(m, edges)
    pick = dict(r.choice)
    uset = set(universe)
    for s in universe:
        if not m.is_stochastic(s) and s not in pick:
            inside = [t.index for t in out(s) if t.dst in uset]
            pick[s] = inside[0] if inside else out(s)[0].index
    machine = MemorylessMachine(Memoryless.deterministic(m, pick, name="reach"))
    machine.hitting_times = expected_hitting_times(m, machine.rule, target, universe)
    return machine


def brute_force_mecs(m) -> list[frozenset]:
    """State sets of all MECs by subset enumeration (small arenas only)."""
    from itertools import combinations

    states = list(m.states)
    ecs = []
    for k in range(1, len(states) + 1):
        for sub in combinations(states, k):
            ss = set(sub)
            edges = {}
            ok = True
            for s in ss:
                inside = [t for t in m.out(s) if t.dst in ss]
                if m.is_stochastic(s) and len(inside) != len(m.out(s)):
                    ok = False
                    break
                if not inside:
                    ok = False
                    break
                edges[s] = inside
            if not ok:
                continue
            comps = sccs(sub, lambda s: [t.dst for t in edges[s]])
            if len(comps) == 1:
                ecs.append(frozenset(ss))
    return [c for c in ecs if not any(c < d for d in ecs)]
