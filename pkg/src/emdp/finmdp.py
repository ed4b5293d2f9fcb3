"""Finite mean-payoff MDPs: solving, counter unfoldings and MEC condensation."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Hashable, Mapping, Sequence

from .graphs import Mec, almost_sure_reach, mecs
from .model import Arena, Emdp, StateKind, Transition
from .markov import bottom_sccs, induced_chain, solve_exact, stationary
from .ratlp import EQ, LinearProgram, Optimal, Sense, solve_lp
from .strategy import Memoryless, MemorylessMachine


class BadBounds(ValueError):
    pass


class FiniteMdp(Arena):
    """An MDP without counter; transitions keep ``update = 0``."""


def make_finite_mdp(states: Sequence[tuple], transitions: Sequence[tuple]) -> FiniteMdp:
    """``states``: ``(id, kind)``; ``transitions``: ``(src, dst, reward[, prob])``."""
    ids = tuple(s for s, _ in states)
    kinds = tuple(k if isinstance(k, StateKind) else StateKind(k) for _, k in states)
    trans = []
    for i, t in enumerate(transitions):
        prob = Fraction(t[3]) if len(t) > 3 and t[3] is not None else None
        trans.append(Transition(i, t[0], t[1], 0, Fraction(t[2]), prob))
    m = FiniteMdp(ids, kinds, tuple(trans))
    m.validate()
    return m


class _Builder:
    def __init__(self):
        self.states: list = []
        self.kinds: list = []
        self.trans: list = []
        self.origin: list = []

    def state(self, s, kind: StateKind):
        self.states.append(s)
        self.kinds.append(kind)

    def edge(self, src, dst, reward, prob=None, origin=None):
        self.trans.append(Transition(len(self.trans), src, dst, 0, Fraction(reward), prob))
        self.origin.append(origin)

    def build(self) -> FiniteMdp:
        m = FiniteMdp(tuple(self.states), tuple(self.kinds), tuple(self.trans))
        m.validate()
        return m


# ------------------------------------------------------------------ solving


@dataclass
class MeanPayoffResult:
    values: dict
    strategy: MemorylessMachine


def _mec_gain(m: Arena, mec: Mec):
    """Best gain inside an end component and a vertex flow achieving it."""
    idx = sorted(mec.transitions)
    var = {i: f"f{i}" for i in idx}
    lp = LinearProgram([var[i] for i in idx], Sense.MAX,
                       {var[i]: m.transitions[i].reward for i in idx if m.transitions[i].reward})
    lp.add({var[i]: 1 for i in idx}, EQ, 1)
    inflow: dict = {s: [] for s in mec.states}
    for i in idx:
        inflow[m.transitions[i].dst].append(i)
    for s in sorted(mec.states, key=m.position.get):
        outs = [t.index for t in m.out(s) if t.index in mec.transitions]
        if m.is_controllable(s):
            row: dict = {}
            for i in inflow[s]:
                row[var[i]] = row.get(var[i], 0) + 1
            for i in outs:
                row[var[i]] = row.get(var[i], 0) - 1
            row = {k: v for k, v in row.items() if v}
            if row:
                lp.add(row, EQ, 0)
        else:
            for i in outs:
                row = {}
                for j in inflow[s]:
                    row[var[j]] = row.get(var[j], 0) - m.transitions[i].prob
                row[var[i]] = row.get(var[i], 0) + 1
                lp.add({k: v for k, v in row.items() if v}, EQ, 0)
    out = solve_lp(lp)
    assert isinstance(out, Optimal)
    flow = {i: out.assignment[var[i]] for i in idx if out.assignment[var[i]] > 0}
    return out.value, flow


def solve_mean_payoff(m: Arena) -> MeanPayoffResult:
    """Optimal mean-payoff values and a memoryless deterministic strategy
    (exact multichain policy iteration)."""
    values, pick = _policy_iteration(m)
    return MeanPayoffResult(values, MemorylessMachine(Memoryless.deterministic(m, pick, name="mean-payoff")))


def _evaluate(m: Arena, pick: Mapping) -> tuple[dict, dict]:
    """Gain and bias of a deterministic memoryless policy; the bias is
    pinned to 0 at the first state of every recurrent class."""
    chain = induced_chain(m, {s: {i: 1} for s, i in pick.items()})
    g: dict = {}
    h: dict = {}
    for comp in bottom_sccs(chain):
        comp = sorted(comp, key=m.position.get)
        pi = stationary(chain, comp)
        gc = sum((pi[s] * p * r for s in comp for p, _, r, _ in chain[s]), Fraction(0))
        idx = {s: i for i, s in enumerate(comp)}
        rows, rhs = [], []
        for s in comp:
            if s == comp[0]:
                rows.append({0: 1})
                rhs.append(0)
                continue
            row = {idx[s]: Fraction(1)}
            b = -gc
            for p, d, r, _ in chain[s]:
                row[idx[d]] = row.get(idx[d], 0) - p
                b += p * r
            rows.append(row)
            rhs.append(b)
        sol = solve_exact(rows, rhs)
        for s in comp:
            g[s] = gc
            h[s] = sol[idx[s]]
    transient = [s for s in m.states if s not in g]
    if transient:
        idx = {s: i for i, s in enumerate(transient)}

        def solve(known, extra):
            rows, rhs = [], []
            for s in transient:
                row = {idx[s]: Fraction(1)}
                b = extra(s)
                for p, d, r, _ in chain[s]:
                    if d in idx:
                        row[idx[d]] = row.get(idx[d], 0) - p
                    else:
                        b += p * known[d]
                rows.append(row)
                rhs.append(b)
            return solve_exact(rows, rhs)

        gt = solve(g, lambda s: 0)
        for s in transient:
            g[s] = gt[idx[s]]
        ht = solve(h, lambda s: sum((p * r for p, _, r, _ in chain[s]), Fraction(0)) - g[s])
        for s in transient:
            h[s] = ht[idx[s]]
    return g, h


def _policy_iteration(m: Arena) -> tuple[dict, dict]:
    pick = {}
    for s in m.controllable_states:
        pick[s] = max(m.out(s), key=lambda t: (t.reward, -t.index)).index
    while True:
        g, h = _evaluate(m, pick)
        changed = False
        for s in m.controllable_states:
            cur = m.transitions[pick[s]]
            best = max(g[t.dst] for t in m.out(s))
            if g[cur.dst] < best:
                pick[s] = next(t.index for t in m.out(s) if g[t.dst] == best)
                changed = True
        if changed:
            continue
        for s in m.controllable_states:
            cur = m.transitions[pick[s]]
            tied = [t for t in m.out(s) if g[t.dst] == g[cur.dst]]
            score = {t.index: t.reward + h[t.dst] for t in tied}
            top = max(score.values())
            if score[cur.index] < top:
                pick[s] = next(t.index for t in tied if score[t.index] == top)
                changed = True
        if not changed:
            return g, pick


def solve_mean_payoff_lp(m: Arena) -> MeanPayoffResult:
    """Independent solver: a flow program per maximal end component, then
    the best reachable end-component gain by policy iteration on the
    quotient. Used to cross-check :func:`solve_mean_payoff`."""
    comps = mecs(m)
    gain: dict = {}
    internal: dict = {}
    comp_of: dict = {}
    for k, mec in enumerate(comps):
        g, flow = _mec_gain(m, mec)
        gain[k] = g
        pick = {}
        for i in sorted(flow):
            s = m.transitions[i].src
            if m.is_controllable(s) and s not in pick:
                pick[s] = i
        support = {m.transitions[i].src for i in flow}
        r = almost_sure_reach(m, support, states=mec.states, edges=mec.transitions)
        assert r.winning >= mec.states
        for s in mec.states:
            comp_of[s] = k
            if m.is_controllable(s):
                internal[s] = pick.get(s, r.choice.get(s))
    values = _reach_values(m, comps, gain, comp_of)
    # targets: end components where stopping is optimal
    target = {s for s, k in comp_of.items() if values[s] == gain[k]}
    opt_edges = set()
    for s in m.states:
        if m.is_stochastic(s):
            opt_edges.update(t.index for t in m.out(s))
        else:
            opt_edges.update(t.index for t in m.out(s) if values[t.dst] == values[s])
    r = almost_sure_reach(m, target, edges=opt_edges)
    missing = set(m.states) - r.winning
    if missing:
        raise AssertionError(f"optimal end components unreachable from {sorted(map(str, missing))[:5]}")
    pick = {}
    for s in m.controllable_states:
        pick[s] = internal[s] if s in target else r.choice[s]
    strat = MemorylessMachine(Memoryless.deterministic(m, pick, name="mean-payoff"))
    return MeanPayoffResult(values, strat)


def _reach_values(m: Arena, comps, gain, comp_of) -> dict:
    """Best reachable end-component gain, by exact policy iteration on the
    quotient where every end component is a node that may stop.

    The quotient has no end components besides the stopping choices, so
    every policy stops almost surely and evaluation is a linear solve.
    """
    node = {s: ("M", comp_of[s]) if s in comp_of else ("S", s) for s in m.states}
    nodes = list(dict.fromkeys(node[s] for s in m.states))
    # actions per node: None = stop, otherwise [(prob, successor node)]
    actions: dict = {}
    for k, mec in enumerate(comps):
        acts = [None]
        for s in sorted(mec.states, key=m.position.get):
            if m.is_controllable(s):
                acts.extend([(Fraction(1), node[t.dst])] for t in m.out(s) if t.index not in mec.transitions)
        actions[("M", k)] = acts
    for s in m.states:
        if s in comp_of:
            continue
        if m.is_stochastic(s):
            acc: dict = {}
            for t in m.out(s):
                acc[node[t.dst]] = acc.get(node[t.dst], 0) + t.prob
            actions[("S", s)] = [list((p, d) for d, p in acc.items())]
        else:
            actions[("S", s)] = [[(Fraction(1), node[t.dst])] for t in m.out(s)]
    idx = {x: i for i, x in enumerate(nodes)}
    policy = {x: 0 for x in nodes}

    def evaluate():
        rows, rhs = [], []
        for x in nodes:
            a = actions[x][policy[x]]
            if a is None:
                rows.append({idx[x]: 1})
                rhs.append(gain[x[1]])
                continue
            row = {idx[x]: Fraction(1)}
            for p, d in a:
                row[idx[d]] = row.get(idx[d], 0) - p
            rows.append(row)
            rhs.append(0)
        sol = solve_exact(rows, rhs)
        return {x: sol[idx[x]] for x in nodes}

    def q(x, a, v):
        return gain[x[1]] if a is None else sum((p * v[d] for p, d in a), Fraction(0))

    while True:
        v = evaluate()
        changed = False
        for x in nodes:
            acts = actions[x]
            if len(acts) == 1:
                continue
            cur = q(x, acts[policy[x]], v)
            best, arg = cur, policy[x]
            for j, a in enumerate(acts):
                val = q(x, a, v)
                if val > best:
                    best, arg = val, j
            if arg != policy[x]:
                policy[x] = arg
                changed = True
        if not changed:
            return {s: v[node[s]] for s in m.states}


# ---------------------------------------------------------------- unfolding


SINK = "#sink"


def config_id(s, k: int) -> str:
    return f"{s}({k})"


@dataclass
class Unfolding:
    mdp: FiniteMdp
    state_of: dict  # (state, counter) -> product state id
    config_of: dict  # product state id -> (state, counter), sink excluded
    origin: list  # product transition -> EMDP transition index (None for added loops)


def unfold(e: Emdp, low: int, high: int, sink_reward, safe_levels: Mapping | None = None) -> Unfolding:
    """Product of ``e`` with counter values in ``[low, high]``.

    Leaving the bounds leads to an absorbing sink whose loop pays
    ``sink_reward``. With ``safe_levels`` only configurations at or above
    the given level are kept and controllable moves into other
    configurations are dropped.
    """
    if low > high:
        raise BadBounds(f"empty counter range [{low}, {high}]")
    sink_reward = Fraction(sink_reward)
    rmin = min(t.reward for t in e.transitions)
    if sink_reward >= rmin:
        raise BadBounds(f"sink reward {sink_reward} must be below the minimal reward {rmin}")
    b = _Builder()
    state_of, config_of = {}, {}

    def keep(s, k):
        return low <= k <= high and (safe_levels is None or k >= safe_levels[s])

    for s in e.states:
        for k in range(low, high + 1):
            if keep(s, k):
                sid = config_id(s, k)
                state_of[(s, k)] = sid
                config_of[sid] = (s, k)
                b.state(sid, e.kind[s])
    b.state(SINK, StateKind.CONTROLLABLE)
    for s in e.states:
        for k in range(low, high + 1):
            if (s, k) not in state_of:
                continue
            src = state_of[(s, k)]
            added = 0
            for t in e.out(s):
                k2 = k + t.update
                if (t.dst, k2) in state_of:
                    dst = state_of[(t.dst, k2)]
                elif low <= k2 <= high and e.is_controllable(s):
                    continue  # unsafe controllable move is not offered
                else:
                    dst = SINK
                b.edge(src, dst, t.reward, t.prob, t.index)
                added += 1
            if not added:
                raise AssertionError(f"no admissible move at {src}")
    b.edge(SINK, SINK, sink_reward)
    return Unfolding(b.build(), state_of, config_of, b.origin)


def cut_unfold(e: Emdp, top: int, safe_levels: Mapping, cut_rewards: Mapping) -> Unfolding:
    """Safe configurations up to ``top``; crossing ``top`` into state ``t``
    moves to an absorbing cut state for ``t`` paying ``cut_rewards[t]``."""
    b = _Builder()
    state_of, config_of = {}, {}
    finite = [s for s in e.states if safe_levels[s] != float("inf")]
    for s in finite:
        for k in range(int(safe_levels[s]), top + 1):
            sid = config_id(s, k)
            state_of[(s, k)] = sid
            config_of[sid] = (s, k)
            b.state(sid, e.kind[s])
    cut_of = {}
    for s in finite:
        cut_of[s] = f"{s}(>{top})"
        b.state(cut_of[s], StateKind.CONTROLLABLE)
    for (s, k), src in state_of.items():
        for t in e.out(s):
            k2 = k + t.update
            if safe_levels[t.dst] == float("inf") or k2 < safe_levels[t.dst]:
                if e.is_stochastic(s):
                    raise AssertionError("stochastic move leaves the safe region")
                continue
            dst = cut_of[t.dst] if k2 > top else state_of[(t.dst, k2)]
            b.edge(src, dst, t.reward, t.prob, t.index)
    for s in finite:
        b.edge(cut_of[s], cut_of[s], cut_rewards[s])
    u = Unfolding(b.build(), state_of, config_of, b.origin)
    u.cut_of = cut_of
    return u


# ------------------------------------------------------------ condensation


@dataclass
class Condensation:
    mdp: FiniteMdp
    hat: dict  # EMDP state -> condensed state
    components: list  # state sets collapsed, in order
    origin: list  # condensed transition -> EMDP transition index (None for loops)
    loop_of: dict  # component index -> its loop transition


def condensation(e: Emdp, mec_limit_values, components: Sequence[frozenset] | None = None) -> Condensation:
    """Collapse each component into a controllable state with a self-loop
    paying its limit value.

    ``components`` defaults to the MECs of ``e``; ``mec_limit_values`` is
    either a sequence aligned with them or a mapping keyed by state set.
    Other transitions pay one less than the smallest limit value, so that
    lingering outside the collapsed components is never optimal.
    """
    comps = [m.states for m in mecs(e)] if components is None else [frozenset(c) for c in components]
    if isinstance(mec_limit_values, Mapping):
        vals = [Fraction(mec_limit_values[c]) for c in comps]
    else:
        vals = [Fraction(v) for v in mec_limit_values]
    if len(vals) != len(comps):
        raise ValueError("one limit value per component is required")
    filler = (min(vals) - 1) if vals else Fraction(0)
    hat: dict = {}
    comp_idx: dict = {}
    b = _Builder()
    for k, c in enumerate(comps):
        for s in c:
            hat[s] = f"<M{k}>"
            comp_idx[s] = k
    for s in e.states:
        if s not in hat:
            hat[s] = s
            b.state(s, e.kind[s])
    for k in range(len(comps)):
        b.state(f"<M{k}>", StateKind.CONTROLLABLE)
    loop_of = {}
    for k, v in enumerate(vals):
        loop_of[k] = len(b.trans)
        b.edge(f"<M{k}>", f"<M{k}>", v)
    for t in e.transitions:
        ks, kd = comp_idx.get(t.src), comp_idx.get(t.dst)
        if ks is not None and ks == kd:
            continue  # inside a collapsed component
        prob = t.prob if ks is None else None
        b.edge(hat[t.src], hat[t.dst], filler, prob, t.index)
    return Condensation(b.build(), hat, comps, b.origin, loop_of)
