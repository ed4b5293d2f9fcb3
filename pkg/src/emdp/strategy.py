"""Executable strategies.

A :class:`StrategyMachine` observes every visited configuration (state and
counter) and answers with a distribution over the outgoing transitions of
the current controllable state.

Observation protocol: ``m0 = update(initial_memory, s0, n0)``; at step
``i`` the controller plays ``next(s_i, m_i)``; after the move
``m_{i+1} = update(m_i, s_{i+1}, n_{i+1})``.

Every machine here is a mode automaton whose current mode is a memoryless
rule (:meth:`StrategyMachine.policy`). For fast simulation a machine also
reports a :class:`Guard`: while observations stay inside the guard, the
update only counts steps (:meth:`StrategyMachine.advance`) and the policy
does not change.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Hashable, Mapping

import numpy as np

from .model import Arena, format_rational

INF = math.inf


class StrategyError(RuntimeError):
    pass


@dataclass(frozen=True)
class Guard:
    """Quiet region of a machine's current mode.

    An observation ``(s, n)`` made after a step is quiet when
    ``low <= n < high``, ``s`` is not in ``stop_states`` and fewer than
    ``max_steps`` steps were taken in this segment.
    """

    low: float = -INF
    high: float = INF
    max_steps: float = INF
    stop_states: frozenset = frozenset()


EVERY_STEP = Guard(max_steps=1)
FOREVER = Guard()


class Memoryless:
    """A memoryless rule: controllable state -> {transition index: prob}."""

    def __init__(self, model: Arena, choice: Mapping[Hashable, Mapping[int, Fraction]], name: str = ""):
        self.model = model
        self.name = name
        table = {}
        for s, dist in choice.items():
            dist = {int(i): Fraction(p) for i, p in dist.items() if p != 0}
            if not model.is_controllable(s):
                raise StrategyError(f"{name}: {s!r} is not controllable")
            total = sum(dist.values())
            if total != 1:
                raise StrategyError(f"{name}: distribution at {s!r} sums to {total}")
            for i in dist:
                if model.transitions[i].src != s:
                    raise StrategyError(f"{name}: transition {i} does not leave {s!r}")
            table[s] = dist
        self.table = table
        self._compiled = None

    @classmethod
    def deterministic(cls, model: Arena, pick: Mapping[Hashable, int], name: str = "") -> "Memoryless":
        return cls(model, {s: {i: Fraction(1)} for s, i in pick.items()}, name)

    def dist(self, s) -> dict[int, Fraction]:
        try:
            return self.table[s]
        except KeyError:
            raise StrategyError(f"{self.name or 'strategy'} undefined at {s!r}") from None

    def is_deterministic(self) -> bool:
        return all(len(d) == 1 for d in self.table.values())

    def pick(self, s) -> int:
        (i,) = self.dist(s)
        return i

    def overridden(self, other: "Memoryless", name: str = "") -> "Memoryless":
        """This rule, replaced by ``other`` wherever ``other`` is defined."""
        merged = dict(self.table)
        merged.update(other.table)
        return Memoryless(self.model, merged, name or self.name)

    width = 1
    base = 0

    def entries(self, s, counter=None) -> list:
        """``(transition index, prob)`` pairs in sampling order."""
        m = self.model
        if m.is_stochastic(s):
            return [(t.index, t.prob) for t in m.out(s)]
        return sorted(self.table.get(s, {}).items())

    def compiled(self):
        """Flat arrays for the simulator: ``(off, cum, tid)``."""
        if self._compiled is None:
            self._compiled = _compile([self.entries(s) for s in self.model.states])
        return self._compiled

    def to_json(self) -> dict:
        return {
            str(s): {str(i): format_rational(p) for i, p in sorted(d.items())}
            for s, d in self.table.items()
        }

    @classmethod
    def from_json(cls, model: Arena, data: Mapping, name: str = "") -> "Memoryless":
        return cls(model, {s: {int(i): Fraction(p) for i, p in d.items()} for s, d in data.items()}, name)


def _compile(rows: list):
    off = np.zeros(len(rows) + 1, dtype=np.int64)
    cum, tid = [], []
    for k, entries in enumerate(rows):
        acc = Fraction(0)
        for i, p in entries:
            acc += p
            cum.append(float(acc))
            tid.append(i)
        if entries:
            cum[-1] = 2.0  # never fall off the end through rounding
        off[k + 1] = len(tid)
    return off, np.array(cum, dtype=np.float64), np.array(tid, dtype=np.int64)


def sample(entries: list, x: float) -> int:
    """Pick from ``entries`` with the uniform ``x`` exactly as the simulator does."""
    acc = Fraction(0)
    for j, (i, p) in enumerate(entries):
        acc += p
        if j == len(entries) - 1 or x < float(acc):
            return i
    raise StrategyError("empty distribution")


class LeveledPolicy:
    """A rule that depends on the state and the counter.

    ``table`` maps ``(state, k)`` with ``0 <= k < width`` to a distribution
    and is consulted at counter ``base + k``. ``present`` lists the
    ``(state, k)`` pairs of stochastic states inside the rule's region.
    Positions outside the region have no entry.
    """

    def __init__(self, model: Arena, table: Mapping, present: set, width: int, name: str = "", base: int = 0):
        self.model = model
        self.table = {key: {int(i): Fraction(p) for i, p in d.items() if p != 0} for key, d in table.items()}
        self.present = set(present)
        self.width = width
        self.base = base
        self.name = name
        self._compiled = None

    def shifted(self, base: int) -> "LeveledPolicy":
        view = LeveledPolicy.__new__(LeveledPolicy)
        view.__dict__.update(self.__dict__)
        view.base = base
        view._parent = self
        return view

    def covers(self, s, counter) -> bool:
        k = counter - self.base
        if not 0 <= k < self.width:
            return False
        return (s, k) in self.table or (s, k) in self.present

    def entries(self, s, counter=None) -> list:
        k = counter - self.base
        if self.model.is_stochastic(s):
            if (s, k) in self.present:
                return [(t.index, t.prob) for t in self.model.out(s)]
            return []
        return sorted(self.table.get((s, k), {}).items())

    def dist(self, s, counter=None) -> dict:
        if counter is None or not self.covers(s, counter):
            raise StrategyError(f"{self.name or 'policy'} undefined at {s}({counter})")
        return dict(self.entries(s, counter))

    def compiled(self):
        owner = getattr(self, "_parent", self)
        if owner._compiled is None:
            rows = []
            for s in self.model.states:
                for k in range(self.width):
                    rows.append(self.entries(s, self.base + k))
            owner._compiled = _compile(rows)
        return owner._compiled

    def to_json(self) -> dict:
        return {
            "width": self.width,
            "table": {f"{s}({k})": {str(i): format_rational(p) for i, p in sorted(d.items())}
                      for (s, k), d in self.table.items()},
            "present": sorted(f"{s}({k})" for s, k in self.present),
        }

    @classmethod
    def from_json(cls, model: Arena, data: Mapping, name: str = "") -> "LeveledPolicy":
        from .model import parse_config

        table = {}
        for key, d in data["table"].items():
            c = parse_config(key)
            table[(c.state, c.counter)] = {int(i): Fraction(p) for i, p in d.items()}
        present = set()
        for key in data["present"]:
            c = parse_config(key)
            present.add((c.state, c.counter))
        return cls(model, table, present, int(data["width"]), name)


class StrategyMachine:
    """Base class; subclasses define the mode automaton."""

    kind = "abstract"
    initial_memory: object = None

    def update(self, memory, state, counter):
        raise NotImplementedError

    def policy(self, memory) -> Memoryless:
        raise NotImplementedError

    def guard(self, memory) -> Guard:
        return EVERY_STEP

    def advance(self, memory, steps: int, state=None, counter=None):
        """Memory after ``steps`` quiet observations, the last of which
        was ``(state, counter)``."""
        if steps:
            raise NotImplementedError
        return memory

    def next(self, state, memory) -> dict[int, Fraction]:
        pol = self.policy(memory)
        if isinstance(pol, LeveledPolicy):
            return pol.dist(state, self.counter_of(memory))
        return pol.dist(state)

    def counter_of(self, memory):
        """Last observed counter, for machines whose rule reads it."""
        raise StrategyError("machine does not track the counter")

    def policies(self) -> list[Memoryless]:
        """All memoryless rules the machine may switch between."""
        return []

    def describe(self) -> dict:
        raise NotImplementedError

    def memory_size(self) -> float:
        """Number of reachable memory values (``inf`` when unbounded)."""
        return INF


class MemorylessMachine(StrategyMachine):
    kind = "memoryless"

    def __init__(self, rule: Memoryless):
        self.rule = rule

    def update(self, memory, state, counter):
        return None

    def policy(self, memory) -> Memoryless:
        return self.rule

    def guard(self, memory) -> Guard:
        return FOREVER

    def advance(self, memory, steps, state=None, counter=None):
        return None

    def policies(self):
        return [self.rule]

    def describe(self) -> dict:
        return {"type": self.kind, "name": self.rule.name, "table": self.rule.to_json()}

    def memory_size(self) -> float:
        return 1


_REGISTRY: dict[str, Callable] = {}


def register(kind: str):
    def deco(fn):
        _REGISTRY[kind] = fn
        return fn

    return deco


@register("memoryless")
def _load_memoryless(model, d):
    return MemorylessMachine(Memoryless.from_json(model, d["table"], d.get("name", "")))


def machine_from_json(model: Arena, data: Mapping) -> StrategyMachine:
    # make sure every machine module has registered its loader
    from . import synth  # noqa: F401

    try:
        loader = _REGISTRY[data["type"]]
    except KeyError:
        raise StrategyError(f"unknown strategy type {data.get('type')!r}") from None
    return loader(model, data)
