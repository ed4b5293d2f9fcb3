"""Flow programs over transition frequencies, their components and cores."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

from .graphs import reach_strategy, sccs
from .model import Emdp
from .ratlp import EQ, GE, Infeasible, LinearProgram, Optimal, Sense, solve_lp
from .strategy import Memoryless, MemorylessMachine


class ProgramKind(enum.Enum):
    PAYOFF = "payoff"
    TREND = "trend"


class InfeasibleFlow(RuntimeError):
    pass


class NoCore(AssertionError):
    pass


def _var(i: int) -> str:
    return f"f{i}"


def _flow_program(e: Emdp, objective: dict) -> LinearProgram:
    lp = LinearProgram([_var(t.index) for t in e.transitions], Sense.MAX, objective)
    lp.add({_var(t.index): 1 for t in e.transitions}, EQ, 1)
    inflow: dict = {s: [] for s in e.states}
    for t in e.transitions:
        inflow[t.dst].append(t.index)
    for s in e.states:
        if e.is_controllable(s):
            row: dict = {}
            for i in inflow[s]:
                row[_var(i)] = row.get(_var(i), 0) + 1
            for t in e.out(s):
                row[_var(t.index)] = row.get(_var(t.index), 0) - 1
            lp.add({k: v for k, v in row.items() if v}, EQ, 0)
        else:
            for t in e.out(s):
                row = {}
                for i in inflow[s]:
                    row[_var(i)] = row.get(_var(i), 0) - t.prob
                row[_var(t.index)] = row.get(_var(t.index), 0) + 1
                lp.add({k: v for k, v in row.items() if v}, EQ, 0)
    lp.add({_var(t.index): t.update for t in e.transitions if t.update}, GE, 0)
    return lp


def build_payoff_lp(e: Emdp) -> LinearProgram:
    """Maximise expected reward over flows with non-negative trend."""
    return _flow_program(e, {_var(t.index): t.reward for t in e.transitions if t.reward})


def build_trend_lp(e: Emdp) -> LinearProgram:
    """Maximise the energy trend over the same flows."""
    return _flow_program(e, {_var(t.index): Fraction(t.update) for t in e.transitions if t.update})


@dataclass(frozen=True)
class FlowSolution:
    f: tuple  # frequency per transition index
    objective_value: Fraction
    program_kind: ProgramKind


@lru_cache(maxsize=512)
def solve_flow(e: Emdp, kind: ProgramKind = ProgramKind.PAYOFF) -> FlowSolution:
    lp = build_payoff_lp(e) if kind is ProgramKind.PAYOFF else build_trend_lp(e)
    out = solve_lp(lp)
    if isinstance(out, Infeasible):
        raise InfeasibleFlow("no flow with non-negative trend exists")
    assert isinstance(out, Optimal)
    f = tuple(out.assignment[_var(t.index)] for t in e.transitions)
    return FlowSolution(f, out.value, kind)


def check_flow(e: Emdp, fs: FlowSolution) -> None:
    """Re-check every constraint family outside the solver."""
    lp = build_payoff_lp(e)
    from .ratlp import is_feasible

    if not is_feasible(lp, {_var(i): v for i, v in enumerate(fs.f)}):
        raise AssertionError("flow violates its constraints")


@dataclass(frozen=True)
class Component:
    states: frozenset
    transitions: frozenset
    freq: Fraction
    trend: Fraction
    mp: Fraction
    flow: tuple = field(default=(), compare=False)  # (index, f_e) pairs


def components(e: Emdp, fs: FlowSolution) -> list[Component]:
    """Strongly connected pieces of the positive-flow graph, in state order."""
    pos = {i for i, v in enumerate(fs.f) if v > 0}
    succ = {s: [t.dst for t in e.out(s) if t.index in pos] for s in e.states}
    result = []
    for comp in sccs(e.states, lambda s: succ[s]):
        cs = frozenset(comp)
        tc = sorted(t.index for s in comp for t in e.out(s) if t.index in pos and t.dst in cs)
        if not tc:
            continue
        freq = sum((fs.f[i] for i in tc), Fraction(0))
        trend = sum((fs.f[i] * e.transitions[i].update for i in tc), Fraction(0)) / freq
        mp = sum((fs.f[i] * e.transitions[i].reward for i in tc), Fraction(0)) / freq
        result.append(Component(cs, frozenset(tc), freq, trend, mp, tuple((i, fs.f[i]) for i in tc)))
    result.sort(key=lambda c: min(e.position[s] for s in c.states))
    return result


@dataclass(frozen=True)
class TypeI:
    component: Component


@dataclass(frozen=True)
class TypeII:
    c1: Component
    c2: Component

    @property
    def weights(self) -> tuple[Fraction, Fraction]:
        """Weights of the two components in the mixture.

        A single zero-trend component paired with itself counts half each.
        """
        if self.c1 == self.c2:
            return self.c1.freq / 2, self.c1.freq / 2
        return self.c1.freq, self.c2.freq


def core_holds(core, fstar: Fraction) -> bool:
    if isinstance(core, TypeI):
        c = core.component
        return c.trend > 0 and c.mp >= fstar
    w1, w2 = core.weights
    c1, c2 = core.c1, core.c2
    return (
        c1.trend >= 0
        and c2.trend <= 0
        and w1 * c1.trend + w2 * c2.trend >= 0
        and w1 * c1.mp + w2 * c2.mp >= fstar
    )


def find_core(e: Emdp, fs: FlowSolution):
    comps = components(e, fs)
    fstar = fs.objective_value
    for c in comps:
        core = TypeI(c)
        if core_holds(core, fstar):
            return core
    for c1 in comps:
        if c1.trend < 0:
            continue
        for c2 in comps:
            if c2.trend > 0 or c2 == c1:
                continue
            core = TypeII(c1, c2)
            if core_holds(core, fstar):
                return core
    for c in comps:
        if c.trend == 0:
            core = TypeII(c, c)
            if core_holds(core, fstar):
                return core
    raise NoCore("optimal flow without a core")


def mu_strategy(e: Emdp, c: Component) -> MemorylessMachine:
    """Play the component's flow proportions inside it, steer towards it
    elsewhere."""
    flow = dict(c.flow)
    outflow: dict = {}
    for i, v in flow.items():
        s = e.transitions[i].src
        outflow[s] = outflow.get(s, Fraction(0)) + v
    choice = {}
    for s in c.states:
        if e.is_controllable(s):
            choice[s] = {i: v / outflow[s] for i, v in flow.items() if e.transitions[i].src == s}
    outside = [s for s in e.states if s not in c.states]
    if outside:
        kappa = reach_strategy(e, c.states)
        for s in e.controllable_states:
            if s not in c.states:
                choice[s] = {kappa.rule.pick(s): Fraction(1)}
        hit = kappa.hitting_times
    else:
        hit = {s: 0.0 for s in e.states}
    machine = MemorylessMachine(Memoryless(e, choice, name="mu"))
    machine.hitting_times = hit
    return machine
