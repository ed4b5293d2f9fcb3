"""Mode automata used by the synthesised strategies.

All rules held by these machines are expressed over the transition
indices of one model (the root EMDP the strategy is meant for).
"""

from __future__ import annotations

import math
from typing import Mapping, Sequence

from .model import Arena
from .strategy import (
    FOREVER,
    Guard,
    LeveledPolicy,
    Memoryless,
    StrategyError,
    StrategyMachine,
    register,
)

INF = math.inf


def lift_indices(sub, root) -> list[int]:
    """Transition index map from a (repeatedly) restricted model to ``root``."""
    idx = list(range(len(sub.transitions)))
    cur = sub
    while cur != root:
        parent = getattr(cur, "parent", None)
        if parent is None:
            raise StrategyError("model is not a restriction of the target model")
        idx = [cur.origin[i] for i in idx]
        cur = parent
    return idx


def lift_rule(rule: Memoryless, root, name: str | None = None) -> Memoryless:
    if rule.model == root:
        return rule
    m = lift_indices(rule.model, root)
    return Memoryless(root, {s: {m[i]: p for i, p in d.items()} for s, d in rule.table.items()},
                      name if name is not None else rule.name)


def _rule_json(rule) -> dict:
    if isinstance(rule, LeveledPolicy):
        return {"leveled": rule.to_json(), "name": rule.name}
    return {"table": rule.to_json(), "name": rule.name}


def _rule_from(model: Arena, d: Mapping):
    if "leveled" in d:
        return LeveledPolicy.from_json(model, d["leveled"], d.get("name", ""))
    return Memoryless.from_json(model, d["table"], d.get("name", ""))


# ------------------------------------------------------------------ type I


class ThresholdMachine(StrategyMachine):
    """Latched two-mode switch.

    Low mode starts when the counter is at most ``L`` and ends at the first
    observation above ``H``; low mode plays ``low_rule`` (pumping), the
    other mode ``high_rule``.
    """

    kind = "threshold"

    def __init__(self, low_rule: Memoryless, high_rule: Memoryless, L: int, H: int):
        if not H > L:
            raise ValueError("H must exceed L")
        self.low_rule, self.high_rule, self.L, self.H = low_rule, high_rule, L, H

    def update(self, memory, state, counter):
        return counter <= self.L or (memory is True and counter <= self.H)

    def policy(self, memory):
        return self.low_rule if memory else self.high_rule

    def guard(self, memory):
        return Guard(high=self.H + 1) if memory else Guard(low=self.L + 1)

    def advance(self, memory, steps, state=None, counter=None):
        return memory

    def policies(self):
        return [self.low_rule, self.high_rule]

    def memory_size(self):
        return 2

    def describe(self):
        return {"type": self.kind, "L": self.L, "H": self.H,
                "low": _rule_json(self.low_rule), "high": _rule_json(self.high_rule)}


@register("threshold")
def _load_threshold(model, d):
    return ThresholdMachine(_rule_from(model, d["low"]), _rule_from(model, d["high"]), d["L"], d["H"])


# ----------------------------------------------------------------- type II

MU1, MU2, KAPPA, PUMP = "mu1", "mu2", "kappa", "pump"


def pump_target(TH: int, i: int, N: int) -> int:
    """``TH + ceil((i*N)^(3/4))`` in exact integer arithmetic."""
    x = i * N
    # smallest r with r^4 >= x^3
    r = math.isqrt(math.isqrt(x ** 3))
    while r ** 4 < x ** 3:
        r += 1
    while r > 0 and (r - 1) ** 4 >= x ** 3:
        r -= 1
    return TH + r


class StagedMachine(StrategyMachine):
    """Stage loop: ``a1*i`` steps of ``mu1``, ``a2*i`` of ``mu2``, reach the
    anchor with ``kappa``, then pump with ``pump`` until the counter is at
    least ``pump_target(i)``. A counter below ``TH`` during the first three
    phases jumps straight to pumping. ``cap`` freezes the stage index."""

    kind = "staged"

    def __init__(self, mu1: Memoryless, mu2: Memoryless, kappa: Memoryless, pump: Memoryless,
                 a1: int, a2: int, anchor, TH: int, cap: int | None = None):
        if a1 < 1 or a2 < 1:
            raise ValueError("phase lengths must be positive")
        self.mu1, self.mu2, self.kappa, self.pump = mu1, mu2, kappa, pump
        self.a1, self.a2, self.anchor, self.TH, self.cap = a1, a2, anchor, TH, cap
        self.N = a1 + a2

    def target(self, i: int) -> int:
        return pump_target(self.TH, i, self.N)

    def _next_stage(self, i):
        return i + 1 if self.cap is None or i < self.cap else i

    def _settle(self, i, ph, left, state, counter):
        while True:
            if ph != PUMP and counter < self.TH:
                ph, left = PUMP, 0
            if ph == KAPPA and state == self.anchor:
                ph = PUMP
            if ph == PUMP and counter >= self.target(i):
                i = self._next_stage(i)
                ph, left = MU1, self.a1 * i
                continue
            return (i, ph, left)

    def update(self, memory, state, counter):
        if memory is None:
            return self._settle(1, MU1, self.a1, state, counter)
        i, ph, left = memory
        if ph in (MU1, MU2):
            left -= 1
            if left == 0:
                if ph == MU1:
                    ph, left = MU2, self.a2 * i
                else:
                    ph, left = KAPPA, 0
        return self._settle(i, ph, left, state, counter)

    def policy(self, memory):
        return {MU1: self.mu1, MU2: self.mu2, KAPPA: self.kappa, PUMP: self.pump}[memory[1]]

    def guard(self, memory):
        i, ph, left = memory
        if ph in (MU1, MU2):
            return Guard(low=self.TH, max_steps=left)
        if ph == KAPPA:
            return Guard(low=self.TH, stop_states=frozenset([self.anchor]))
        return Guard(high=self.target(i))

    def advance(self, memory, steps, state=None, counter=None):
        i, ph, left = memory
        if ph in (MU1, MU2):
            return (i, ph, left - steps)
        return memory

    def policies(self):
        return [self.mu1, self.mu2, self.kappa, self.pump]

    def memory_size(self):
        if self.cap is None:
            return INF
        c = self.cap
        return self.N * c * (c + 1) // 2 + 2 * c

    def describe(self):
        return {"type": self.kind, "a1": self.a1, "a2": self.a2, "anchor": str(self.anchor),
                "TH": self.TH, "cap": self.cap,
                "mu1": _rule_json(self.mu1), "mu2": _rule_json(self.mu2),
                "kappa": _rule_json(self.kappa), "pump": _rule_json(self.pump)}


@register("staged")
def _load_staged(model, d):
    return StagedMachine(_rule_from(model, d["mu1"]), _rule_from(model, d["mu2"]),
                         _rule_from(model, d["kappa"]), _rule_from(model, d["pump"]),
                         d["a1"], d["a2"], _state(model, d["anchor"]), d["TH"], d.get("cap"))


def _state(model, name):
    for s in model.states:
        if str(s) == name:
            return s
    raise StrategyError(f"unknown state {name!r}")


# ------------------------------------------------------------------ case A

SAFE = ("safe",)


class MixingMachine(StrategyMachine):
    """Cyclic block schedule of memoryless rules; permanently switches to
    ``safe`` once the counter drops below ``danger``."""

    kind = "mixing"

    def __init__(self, phases: Sequence[tuple], danger: int, safe: Memoryless):
        self.phases = [(r, int(k)) for r, k in phases if k > 0]
        if not self.phases:
            raise ValueError("empty schedule")
        self.danger, self.safe = danger, safe

    def update(self, memory, state, counter):
        if memory == SAFE or counter < self.danger:
            return SAFE
        if memory is None or len(self.phases) == 1:
            return (0, self.phases[0][1])
        j, left = memory
        left -= 1
        if left == 0:
            j = (j + 1) % len(self.phases)
            left = self.phases[j][1]
        return (j, left)

    def policy(self, memory):
        return self.safe if memory == SAFE else self.phases[memory[0]][0]

    def guard(self, memory):
        if memory == SAFE:
            return FOREVER
        if len(self.phases) == 1:
            return Guard(low=self.danger)
        return Guard(low=self.danger, max_steps=memory[1])

    def advance(self, memory, steps, state=None, counter=None):
        if memory == SAFE or len(self.phases) == 1:
            return memory
        return (memory[0], memory[1] - steps)

    def policies(self):
        return [r for r, _ in self.phases] + [self.safe]

    def memory_size(self):
        return sum(k for _, k in self.phases) + 1

    def describe(self):
        return {"type": self.kind, "danger": self.danger, "safe": _rule_json(self.safe),
                "phases": [{"steps": k, "rule": _rule_json(r)} for r, k in self.phases]}


@register("mixing")
def _load_mixing(model, d):
    return MixingMachine([(_rule_from(model, p["rule"]), p["steps"]) for p in d["phases"]],
                         d["danger"], _rule_from(model, d["safe"]))


# ------------------------------------------------------------------ case B

REACH = ("reach",)


class MimicMachine(StrategyMachine):
    """Reach ``anchor`` with ``reach``; there, with counter ``n >= ell``, play
    the bounded-counter rule ``mimic`` shifted by ``n - ell`` until it has no
    entry. Below ``danger`` while reaching, switch to ``safe`` for good."""

    kind = "mimic"

    def __init__(self, reach: Memoryless, anchor, ell: int, mimic: LeveledPolicy, danger: int,
                 safe: Memoryless):
        self.reach, self.anchor, self.ell, self.mimic = reach, anchor, ell, mimic
        self.danger, self.safe = danger, safe

    def _enter(self, state, counter):
        if counter < self.danger:
            return SAFE
        if state == self.anchor and counter >= self.ell:
            return ("mimic", counter - self.ell, counter)
        return REACH

    def update(self, memory, state, counter):
        if memory == SAFE:
            return SAFE
        if memory is not None and memory[0] == "mimic":
            off = memory[1]
            if self.mimic.covers(state, counter - off):
                return ("mimic", off, counter)
        return self._enter(state, counter)

    def policy(self, memory):
        if memory == SAFE:
            return self.safe
        if memory == REACH:
            return self.reach
        return self.mimic.shifted(memory[1])

    def guard(self, memory):
        if memory == REACH:
            return Guard(low=self.danger, stop_states=frozenset([self.anchor]))
        return FOREVER

    def advance(self, memory, steps, state=None, counter=None):
        if memory[0] == "mimic":
            return ("mimic", memory[1], counter)
        return memory

    def counter_of(self, memory):
        return memory[2]

    def policies(self):
        return [self.reach, self.mimic, self.safe]

    def memory_size(self):
        return INF  # the offset is unbounded

    def describe(self):
        return {"type": self.kind, "anchor": str(self.anchor), "ell": self.ell, "danger": self.danger,
                "reach": _rule_json(self.reach), "mimic": _rule_json(self.mimic),
                "safe": _rule_json(self.safe)}


@register("mimic")
def _load_mimic(model, d):
    return MimicMachine(_rule_from(model, d["reach"]), _state(model, d["anchor"]), d["ell"],
                        _rule_from(model, d["mimic"]), d["danger"], _rule_from(model, d["safe"]))


# --------------------------------------------------------------- composite


class CompositeMachine(StrategyMachine):
    """Bounded-counter rule below ``top``; above it follow ``high`` towards
    the target components and hand over to their machines on arrival."""

    kind = "composite"

    def __init__(self, low: LeveledPolicy | None, top: int, high: Memoryless,
                 targets: Mapping, machines: Sequence[StrategyMachine], danger: int, safe: Memoryless):
        self.low, self.top, self.high = low, top, high
        self.targets = dict(targets)  # state -> index into machines
        self.machines = list(machines)
        self.danger, self.safe = danger, safe
        self._stops = frozenset(self.targets)

    def _above(self, state, counter):
        if counter < self.danger:
            return SAFE
        k = self.targets.get(state)
        if k is not None:
            sub = self.machines[k]
            return ("comp", k, sub.update(sub.initial_memory, state, counter))
        return ("high",)

    def update(self, memory, state, counter):
        if memory == SAFE:
            return SAFE
        if memory is None or memory[0] == "low":
            if self.low is not None and counter <= self.top and self.low.covers(state, counter):
                return ("low", counter)
            return self._above(state, counter)
        if memory[0] == "comp":
            k = memory[1]
            return ("comp", k, self.machines[k].update(memory[2], state, counter))
        return self._above(state, counter)

    def policy(self, memory):
        tag = memory[0]
        if tag == "low":
            return self.low
        if tag == "comp":
            return self.machines[memory[1]].policy(memory[2])
        if tag == "high":
            return self.high
        return self.safe

    def guard(self, memory):
        tag = memory[0]
        if tag == "comp":
            return self.machines[memory[1]].guard(memory[2])
        if tag == "high":
            return Guard(low=self.danger, stop_states=self._stops)
        return FOREVER

    def advance(self, memory, steps, state=None, counter=None):
        tag = memory[0]
        if tag == "low":
            return ("low", counter)
        if tag == "comp":
            k = memory[1]
            return ("comp", k, self.machines[k].advance(memory[2], steps, state, counter))
        return memory

    def counter_of(self, memory):
        if memory[0] == "low":
            return memory[1]
        return self.machines[memory[1]].counter_of(memory[2])

    def policies(self):
        out = [self.high, self.safe] + ([self.low] if self.low is not None else [])
        for m in self.machines:
            out.extend(m.policies())
        return out

    def memory_size(self):
        total = 2 + (self.top + 1 if self.low is not None else 0)
        for m in self.machines:
            total += m.memory_size()
        return total

    def describe(self):
        return {"type": self.kind, "top": self.top, "danger": self.danger,
                "low": None if self.low is None else _rule_json(self.low),
                "high": _rule_json(self.high), "safe": _rule_json(self.safe),
                "targets": {str(s): k for s, k in self.targets.items()},
                "machines": [m.describe() for m in self.machines]}


@register("composite")
def _load_composite(model, d):
    from .strategy import machine_from_json

    low = None if d["low"] is None else _rule_from(model, d["low"])
    targets = {_state(model, s): k for s, k in d["targets"].items()}
    machines = [machine_from_json(model, m) for m in d["machines"]]
    return CompositeMachine(low, d["top"], _rule_from(model, d["high"]), targets, machines,
                            d["danger"], _rule_from(model, d["safe"]))
