"""Domain types for energy MDPs and the ``.emdp`` text format."""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Hashable, Iterable, Sequence


class StateKind(enum.Enum):
    CONTROLLABLE = "controllable"
    STOCHASTIC = "stochastic"


class ModelSyntaxError(SyntaxError):
    """Malformed ``.emdp`` text, with 1-based line and column."""

    def __init__(self, line: int, col: int, message: str):
        super().__init__(f"line {line}, col {col}: {message}")
        self.line = line
        self.col = col
        self.message = message


class ValidationError(ValueError):
    """A model invariant does not hold.

    ``rule`` is a short identifier (``totality``, ``prob-sum`` ...) and
    ``element`` names the offending state or transition.
    """

    def __init__(self, rule: str, element: object, detail: str = ""):
        msg = f"[{rule}] {element}"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)
        self.rule = rule
        self.element = element
        self.detail = detail


class InvalidPath(ValueError):
    pass


@dataclass(frozen=True)
class Transition:
    index: int
    src: Hashable
    dst: Hashable
    update: int
    reward: Fraction
    prob: Fraction | None = None


@dataclass(frozen=True)
class Configuration:
    state: Hashable
    counter: int

    def __str__(self) -> str:
        return f"{self.state}({self.counter})"


_CONFIG_RE = re.compile(r"^\s*([^\s()]+)\s*\(\s*(-?\d+)\s*\)\s*$")


def parse_config(text: str) -> Configuration:
    m = _CONFIG_RE.match(text)
    if not m:
        raise ValueError(f"bad configuration {text!r}, expected state(n)")
    return Configuration(m.group(1), int(m.group(2)))


@dataclass(frozen=True)
class Arena:
    """States with kinds plus indexed transitions.

    Shared by :class:`Emdp` and the finite mean-payoff MDPs; transition
    ``i`` must sit at position ``i`` of ``transitions``.
    """

    states: tuple
    kinds: tuple
    transitions: tuple

    @cached_property
    def kind(self) -> dict:
        return dict(zip(self.states, self.kinds))

    @cached_property
    def position(self) -> dict:
        return {s: i for i, s in enumerate(self.states)}

    @cached_property
    def _out(self) -> dict:
        out: dict = {s: [] for s in self.states}
        for t in self.transitions:
            if t.src in out:
                out[t.src].append(t)
        return {s: tuple(v) for s, v in out.items()}

    def out(self, s) -> tuple:
        return self._out[s]

    def is_stochastic(self, s) -> bool:
        return self.kind[s] is StateKind.STOCHASTIC

    def is_controllable(self, s) -> bool:
        return self.kind[s] is StateKind.CONTROLLABLE

    @property
    def controllable_states(self) -> list:
        return [s for s in self.states if self.is_controllable(s)]

    def __hash__(self) -> int:
        return hash((self.states, self.transitions))

    def __eq__(self, other) -> bool:
        return (
            type(self) is type(other)
            and self.states == other.states
            and self.kinds == other.kinds
            and self.transitions == other.transitions
        )

    def validate(self) -> None:
        seen = set()
        for s in self.states:
            if s in seen:
                raise ValidationError("unique-id", s, "duplicate state id")
            seen.add(s)
        if not self.states:
            raise ValidationError("nonempty", "model", "no states declared")
        for i, t in enumerate(self.transitions):
            if t.index != i:
                raise ValidationError("index", t, f"expected index {i}")
            for end in (t.src, t.dst):
                if end not in seen:
                    raise ValidationError("endpoint", t, f"undeclared state {end!r}")
            if self.is_stochastic(t.src):
                if t.prob is None:
                    raise ValidationError("prob-required", t, "stochastic source needs prob")
                if t.prob <= 0:
                    raise ValidationError("prob-positive", t, f"prob {t.prob}")
            elif t.prob is not None:
                raise ValidationError("prob-forbidden", t, "controllable source has prob")
        for s in self.states:
            out = self.out(s)
            if not out:
                raise ValidationError("totality", s, "no outgoing transition")
            if self.is_stochastic(s):
                total = sum(t.prob for t in out)
                if total != 1:
                    raise ValidationError("prob-sum", s, f"probabilities sum to {total}")


@dataclass(frozen=True, eq=False)
class Emdp(Arena):
    """An energy MDP. Build it with :func:`make_emdp` or :func:`parse_emdp`."""

    @cached_property
    def max_update(self) -> int:
        return max((abs(t.update) for t in self.transitions), default=0)

    def restrict(self, keep_states: Iterable, keep_transitions: Iterable[int] | None = None) -> "Emdp":
        """Sub-model on ``keep_states``; transitions are re-indexed.

        The original index of each kept transition is stored in
        ``origin`` of the result.
        """
        keep = set(keep_states)
        allowed = None if keep_transitions is None else set(keep_transitions)
        states = tuple(s for s in self.states if s in keep)
        kinds = tuple(self.kind[s] for s in states)
        trans, origin = [], []
        for t in self.transitions:
            if t.src in keep and t.dst in keep and (allowed is None or t.index in allowed):
                trans.append(Transition(len(trans), t.src, t.dst, t.update, t.reward, t.prob))
                origin.append(t.index)
        sub = Emdp(states, kinds, tuple(trans))
        object.__setattr__(sub, "origin", tuple(origin))
        object.__setattr__(sub, "parent", self)
        return sub


def make_emdp(states: Sequence[tuple], transitions: Sequence[tuple]) -> Emdp:
    """Build and validate an :class:`Emdp` from plain tuples.

    ``states`` holds ``(id, "controllable"|"stochastic")`` pairs and
    ``transitions`` holds ``(src, dst, update, reward[, prob])``.
    """
    ids = tuple(s for s, _ in states)
    kinds = tuple(k if isinstance(k, StateKind) else StateKind(k) for _, k in states)
    trans = []
    for i, t in enumerate(transitions):
        src, dst, upd, rew = t[:4]
        prob = Fraction(t[4]) if len(t) > 4 and t[4] is not None else None
        trans.append(Transition(i, src, dst, int(upd), Fraction(rew), prob))
    e = Emdp(ids, kinds, tuple(trans))
    e.validate()
    return e


def validate(e: Arena) -> None:
    e.validate()


def max_update(e: Emdp) -> int:
    return e.max_update


def energy_level(e: Emdp, path: Sequence, n0: int, via: Sequence[int] | None = None) -> list[int]:
    """Counter values along ``path`` starting from ``n0``.

    Items of ``path`` are state ids. Where parallel transitions with
    different updates make a step ambiguous, pass ``via``: the transition
    index used for each step.
    """
    path = list(path)
    if not path:
        return []
    if via is not None and len(via) != len(path) - 1:
        raise InvalidPath("via must name one transition per step")
    levels = [n0]
    for i in range(len(path) - 1):
        a, b = path[i], path[i + 1]
        if a not in e.kind or b not in e.kind:
            raise InvalidPath(f"unknown state in step {a!r} -> {b!r}")
        if via is not None:
            t = e.transitions[via[i]] if 0 <= via[i] < len(e.transitions) else None
            if t is None or t.src != a or t.dst != b:
                raise InvalidPath(f"transition {via[i]} does not go {a!r} -> {b!r}")
            upd = t.update
        else:
            cands = {t.update for t in e.out(a) if t.dst == b}
            if not cands:
                raise InvalidPath(f"no transition {a!r} -> {b!r}")
            if len(cands) > 1:
                raise InvalidPath(f"ambiguous step {a!r} -> {b!r}; pass via")
            upd = cands.pop()
        levels.append(levels[-1] + upd)
    return levels


# ---------------------------------------------------------------- text format

_ID = r"[A-Za-z_][A-Za-z0-9_.']*"
_RAT = re.compile(r"^[+-]?\d+(/\d+)?$")
_INT = re.compile(r"^[+-]?\d+$")
_IDRE = re.compile(rf"^{_ID}$")


def _rational(tok: str, line: int, col: int) -> Fraction:
    if not _RAT.match(tok):
        raise ModelSyntaxError(line, col, f"expected rational, got {tok!r}")
    if "/" in tok and int(tok.split("/")[1]) == 0:
        raise ModelSyntaxError(line, col, "zero denominator")
    return Fraction(tok)


def _tokens(line: str) -> list[tuple[str, int]]:
    return [(m.group(0), m.start() + 1) for m in re.finditer(r"\S+", line)]


def parse_emdp(text: str) -> Emdp:
    """Parse and validate a model in the ``.emdp`` format."""
    states: list[tuple[str, StateKind]] = []
    trans: list[Transition] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        toks = _tokens(line)
        if not toks:
            continue
        head, col = toks[0]
        if head == "state":
            if len(toks) != 3:
                raise ModelSyntaxError(lineno, col, "expected: state <id> controllable|stochastic")
            (sid, scol), (kind, kcol) = toks[1], toks[2]
            if not _IDRE.match(sid):
                raise ModelSyntaxError(lineno, scol, f"bad state id {sid!r}")
            if kind not in ("controllable", "stochastic"):
                raise ModelSyntaxError(lineno, kcol, f"unknown state kind {kind!r}")
            states.append((sid, StateKind(kind)))
        elif head == "trans":
            if len(toks) < 6 or toks[2][0] != "->":
                raise ModelSyntaxError(lineno, col, "expected: trans <src> -> <dst> update=.. reward=.. [prob=..]")
            src, dst = toks[1], toks[3]
            for tok, c in (src, dst):
                if not _IDRE.match(tok):
                    raise ModelSyntaxError(lineno, c, f"bad state id {tok!r}")
            attrs: dict[str, tuple[str, int]] = {}
            for tok, c in toks[4:]:
                key, eq, val = tok.partition("=")
                if not eq or key not in ("update", "reward", "prob"):
                    raise ModelSyntaxError(lineno, c, f"unexpected token {tok!r}")
                if key in attrs:
                    raise ModelSyntaxError(lineno, c, f"duplicate {key}")
                attrs[key] = (val, c + len(key) + 1)
            for key in ("update", "reward"):
                if key not in attrs:
                    raise ModelSyntaxError(lineno, col, f"missing {key}=")
            uval, ucol = attrs["update"]
            if not _INT.match(uval):
                raise ModelSyntaxError(lineno, ucol, f"update must be an integer, got {uval!r}")
            reward = _rational(attrs["reward"][0], lineno, attrs["reward"][1])
            prob = None
            if "prob" in attrs:
                prob = _rational(attrs["prob"][0], lineno, attrs["prob"][1])
            trans.append(Transition(len(trans), src[0], dst[0], int(uval), reward, prob))
        else:
            raise ModelSyntaxError(lineno, col, f"unknown directive {head!r}")
    if not states:
        raise ModelSyntaxError(1, 1, "empty model: no states declared")
    e = Emdp(tuple(s for s, _ in states), tuple(k for _, k in states), tuple(trans))
    e.validate()
    return e


def format_rational(q: Fraction) -> str:
    q = Fraction(q)
    return str(q.numerator) if q.denominator == 1 else f"{q.numerator}/{q.denominator}"


def format_emdp(e: Emdp) -> str:
    lines = [f"state {s} {e.kind[s].value}" for s in e.states]
    for t in e.transitions:
        line = f"trans {t.src} -> {t.dst} update={t.update} reward={format_rational(t.reward)}"
        if t.prob is not None:
            line += f" prob={format_rational(t.prob)}"
        lines.append(line)
    return "\n".join(lines) + "\n"


@dataclass
class Trace:
    """A simulated run prefix.

    ``steps`` holds ``(transition index, counter after the step, reward)``.
    """

    initial: Configuration
    steps: list = field(default_factory=list)
    running_mean: Fraction = Fraction(0)
    safety_violated_at: int | None = None
