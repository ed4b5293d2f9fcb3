"""Seeded simulation, mean-payoff estimation and a brute-force value oracle.

Runs are driven by a compiled segment loop: the strategy's current rule
is followed until its guard fires, then the machine's update is applied.
Random numbers come from numpy's Philox generator, one uniform per step,
with the stream for episode ``k`` keyed by ``seed ^ k``.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import IO, Iterator

import numpy as np

from .finmdp import solve_mean_payoff, unfold
from .markov import gains, induced_chain
from .model import Configuration, Emdp, Trace
from .strategy import Guard, LeveledPolicy, StrategyError, StrategyMachine, sample

try:  # pragma: no cover - exercised implicitly
    from numba import njit
except ImportError:  # pragma: no cover
    def njit(*args, **kwargs):
        if args and callable(args[0]):
            return args[0]
        return lambda f: f

BIG = 1 << 62

# kernel exit codes
QUIET, TRIGGER, EMPTY = 0, 1, 2


def _segment(state, lev, u, pos, limit, off, cum, tid, width, base,
             dst, upd, rew, lo, hi, stop, rec_t, rec_lev, record):
    """Follow one rule for at most ``limit`` steps.

    Returns ``(state, lev, steps, reward_sum, code, prev_state, prev_lev,
    first_negative, max_level)``. ``code`` is TRIGGER when the last observation left
    the guard, EMPTY when the rule has no entry at the current position
    (no step taken), QUIET otherwise.
    """
    total = 0
    k = 0
    prev_state = state
    prev_lev = lev
    first_neg = -1
    top = lev
    while k < limit:
        if width == 1:
            row = state
        else:
            d = lev - base
            if d < 0 or d >= width:
                return state, lev, k, total, EMPTY, prev_state, prev_lev, first_neg, top
            row = state * width + d
        a = off[row]
        b = off[row + 1]
        if a == b:
            return state, lev, k, total, EMPTY, prev_state, prev_lev, first_neg, top
        x = u[pos + k]
        j = a
        while j < b - 1 and x >= cum[j]:
            j += 1
        t = tid[j]
        prev_state = state
        prev_lev = lev
        state = dst[t]
        lev += upd[t]
        total += rew[t]
        if record:
            rec_t[pos + k] = t
            rec_lev[pos + k] = lev
        if lev < 0 and first_neg < 0:
            first_neg = pos + k
        if lev > top:
            top = lev
        k += 1
        if lev < lo or lev >= hi or stop[state]:
            return state, lev, k, total, TRIGGER, prev_state, prev_lev, first_neg, top
        if width > 1:
            d = lev - base
            if d < 0 or d >= width or off[state * width + d] == off[state * width + d + 1]:
                return state, lev, k, total, TRIGGER, prev_state, prev_lev, first_neg, top
    return state, lev, k, total, QUIET, prev_state, prev_lev, first_neg, top


_segment_jit = njit(cache=True)(_segment)


class _Compiled:
    """Per-model arrays shared by all runs."""

    def __init__(self, e: Emdp):
        self.e = e
        self.pos = e.position
        self.dst = np.array([self.pos[t.dst] for t in e.transitions], dtype=np.int64)
        self.upd = np.array([t.update for t in e.transitions], dtype=np.int64)
        den = 1
        for t in e.transitions:
            den = math.lcm(den, t.reward.denominator)
        self.den = den
        nums = [int(t.reward * den) for t in e.transitions]
        self.rew_bound = max((abs(v) for v in nums), default=0)
        self.rew = np.array(nums, dtype=np.int64) if self.rew_bound < BIG else None
        self.rew_py = nums
        self._stops: dict = {}

    def stop_mask(self, states: frozenset):
        m = self._stops.get(states)
        if m is None:
            m = np.zeros(len(self.e.states), dtype=np.bool_)
            for s in states:
                m[self.pos[s]] = True
            self._stops[states] = m
        return m

    def fits(self, steps: int, n0: int) -> bool:
        """Whether int64 sums cannot overflow over ``steps`` steps."""
        upd_bound = int(np.abs(self.upd).max()) if len(self.upd) else 0
        return (self.rew is not None and self.rew_bound * steps < BIG
                and abs(n0) + upd_bound * steps < BIG)


_CACHE: dict = {}


def _compiled(e: Emdp) -> _Compiled:
    c = _CACHE.get(id(e))
    if c is None or c.e is not e:
        c = _Compiled(e)
        _CACHE[id(e)] = c
    return c


def _bound(x, default):
    if x == math.inf:
        return default
    if x == -math.inf:
        return -default
    return int(x)


def _uniforms(seed: int, steps: int) -> np.ndarray:
    return np.random.Generator(np.random.Philox(seed & ((1 << 64) - 1))).random(steps)


@dataclass
class _Run:
    state: object
    level: int
    reward_num: int
    first_negative: int | None
    max_level: int
    transitions: np.ndarray | None
    levels: np.ndarray | None


def _drive(e: Emdp, sigma: StrategyMachine, cfg: Configuration, steps: int, seed: int, record: bool) -> _Run:
    c = _compiled(e)
    jit = c.fits(steps, cfg.counter)
    seg = _segment_jit if jit else _segment
    rew = c.rew if jit else c.rew_py
    u = _uniforms(seed, steps)
    rec_t = np.zeros(steps if record else 1, dtype=np.int64)
    rec_lev = np.zeros(steps if record else 1, dtype=np.int64)
    states = e.states
    s, lev = c.pos[cfg.state], cfg.counter
    mem = sigma.update(sigma.initial_memory, cfg.state, lev)
    done = 0
    total = 0
    first_neg = -1
    max_level = lev
    while done < steps:
        rule = sigma.policy(mem)
        g: Guard = sigma.guard(mem)
        off, cum, tid = rule.compiled()
        limit = steps - done
        if g.max_steps != math.inf:
            limit = min(limit, int(g.max_steps))
        out = seg(s, lev, u, done, limit, off, cum, tid, rule.width, rule.base,
                  c.dst, c.upd, rew, _bound(g.low, BIG), _bound(g.high, BIG),
                  c.stop_mask(frozenset(g.stop_states)), rec_t, rec_lev, record)
        s2, lev2, k, part, code, ps, pl, neg, top = out
        if code == EMPTY and k == 0:
            raise StrategyError(f"{getattr(rule, 'name', '') or 'rule'} has no move at "
                                f"{states[s]}({lev}) in memory {mem!r}")
        total += int(part)
        if neg >= 0 and first_neg < 0:
            first_neg = int(neg)
        done += k
        s, lev = int(s2), int(lev2)
        max_level = max(max_level, int(top))
        if code == QUIET and k == g.max_steps:
            code = TRIGGER  # the step budget of this mode is used up
        if code == TRIGGER:
            mem = sigma.advance(mem, k - 1, states[int(ps)], int(pl))
            mem = sigma.update(mem, states[s], lev)
        else:
            mem = sigma.advance(mem, k, states[s], lev)
    return _Run(states[s], lev, total, None if first_neg < 0 else first_neg, max_level,
                rec_t if record else None, rec_lev if record else None)


def _drive_reference(e: Emdp, sigma: StrategyMachine, cfg: Configuration, steps: int, seed: int) -> _Run:
    """Step-by-step interpretation of the observation protocol."""
    c = _compiled(e)
    u = _uniforms(seed, steps)
    s, lev = cfg.state, cfg.counter
    mem = sigma.update(sigma.initial_memory, s, lev)
    rec_t = np.zeros(steps, dtype=np.int64)
    rec_lev = np.zeros(steps, dtype=np.int64)
    total = 0
    first_neg = None
    for i in range(steps):
        if e.is_stochastic(s):
            entries = [(t.index, t.prob) for t in e.out(s)]
        else:
            entries = sorted(sigma.next(s, mem).items())
        ti = sample(entries, float(u[i]))
        t = e.transitions[ti]
        s, lev = t.dst, lev + t.update
        total += c.rew_py[ti]
        rec_t[i], rec_lev[i] = ti, lev
        if lev < 0 and first_neg is None:
            first_neg = i
        mem = sigma.update(mem, s, lev)
    return _Run(s, lev, total, first_neg, max(cfg.counter, int(rec_lev.max()) if steps else cfg.counter),
                rec_t, rec_lev)


def run_trace(e: Emdp, sigma: StrategyMachine, cfg: Configuration, steps: int, seed: int,
              reference: bool = False) -> Trace:
    """Simulate ``steps`` steps from ``cfg``; unsafe steps are recorded."""
    if steps < 1:
        raise ValueError("steps must be at least 1")
    run = (_drive_reference(e, sigma, cfg, steps, seed) if reference
           else _drive(e, sigma, cfg, steps, seed, record=True))
    tr = e.transitions
    recs = [(int(t), int(lv), tr[int(t)].reward) for t, lv in zip(run.transitions, run.levels)]
    return Trace(cfg, recs, Fraction(run.reward_num, _compiled(e).den * steps), run.first_negative)


def dump_trace(e: Emdp, trace: Trace, fh: IO[str]) -> None:
    """Write one JSON object per step."""
    acc = Fraction(0)
    for i, (t, lev, r) in enumerate(trace.steps):
        acc += r
        mean = acc / (i + 1)
        fh.write(json.dumps({
            "i": i,
            "state": str(e.transitions[t].dst),
            "transition": t,
            "level": lev,
            "reward": {"num": r.numerator, "den": r.denominator},
            "running_mean": {"num": mean.numerator, "den": mean.denominator},
        }, separators=(",", ":")) + "\n")


@dataclass
class SimReport:
    episodes: int
    steps: int
    means: list = field(repr=False)  # per-episode running mean (Fraction)
    mean: float
    stderr: float
    safety_violations: int
    max_level_seen: int

    def to_json(self) -> dict:
        return {
            "episodes": self.episodes,
            "steps": self.steps,
            "mean": self.mean,
            "stderr": self.stderr,
            "safety_violations": self.safety_violations,
            "max_level_seen": self.max_level_seen,
            "episode_means": [{"num": m.numerator, "den": m.denominator} for m in self.means],
        }


def episode_seed(seed: int, k: int) -> int:
    return seed ^ k


def estimate_mp(e: Emdp, sigma: StrategyMachine, cfg: Configuration, episodes: int, steps: int,
                seed: int) -> SimReport:
    """Independent episodes with seeds ``seed ^ k``; mean and standard error."""
    if episodes < 1:
        raise ValueError("episodes must be at least 1")
    c = _compiled(e)
    means, violations, top = [], 0, cfg.counter
    for k in range(episodes):
        run = _drive(e, sigma, cfg, steps, episode_seed(seed, k), record=False)
        means.append(Fraction(run.reward_num, c.den * steps))
        violations += run.first_negative is not None
        top = max(top, run.max_level)
    xs = np.array([float(m) for m in means])
    se = float(xs.std(ddof=1) / math.sqrt(len(xs))) if len(xs) > 1 else 0.0
    return SimReport(episodes, steps, means, float(xs.mean()), se, violations, top)


# ------------------------------------------------------------------ oracle


class TooLarge(RuntimeError):
    pass


MAX_PRODUCT = 10_000
MAX_STRATEGIES = 1_000_000


def oracle_value(e: Emdp, cfg: Configuration, counter_cap: int,
                 max_strategies: int = MAX_STRATEGIES) -> Fraction:
    """Best mean payoff over memoryless deterministic strategies of the
    ``[0, counter_cap]`` unfolding (leaving it pays below every reward),
    by enumerating strategies on the part reachable from ``cfg``."""
    if len(e.states) * (counter_cap + 1) > MAX_PRODUCT:
        raise TooLarge("product too large")
    if not 0 <= cfg.counter <= counter_cap:
        raise ValueError("configuration outside the counter range")
    rmin = min(t.reward for t in e.transitions)
    u = unfold(e, 0, counter_cap, rmin - 1)
    m = u.mdp
    start = u.state_of[(cfg.state, cfg.counter)]
    # states reachable under some strategy
    seen = {start}
    todo = [start]
    while todo:
        x = todo.pop()
        for t in m.out(x):
            if t.dst not in seen:
                seen.add(t.dst)
                todo.append(t.dst)
    ctrl = [x for x in m.states if x in seen and m.is_controllable(x) and len(m.out(x)) > 1]
    count = 1
    for x in ctrl:
        count *= len(m.out(x))
        if count > max_strategies:
            raise TooLarge("too many memoryless strategies")
    fixed = {x: {m.out(x)[0].index: Fraction(1)} for x in m.states if m.is_controllable(x)}
    best = None
    for combo in itertools.product(*[m.out(x) for x in ctrl]):
        choice = dict(fixed)
        for x, t in zip(ctrl, combo):
            choice[x] = {t.index: Fraction(1)}
        v = gains(induced_chain(m, choice, [start]))[start]
        if best is None or v > best:
            best = v
    return best


def unfold_value(e: Emdp, cfg: Configuration, counter_cap: int) -> Fraction:
    """The same quantity computed by the exact solver."""
    rmin = min(t.reward for t in e.transitions)
    u = unfold(e, 0, counter_cap, rmin - 1)
    return solve_mean_payoff(u.mdp).values[u.state_of[(cfg.state, cfg.counter)]]


def iter_levels(trace: Trace) -> Iterator[int]:
    yield trace.initial.counter
    for _, lev, _ in trace.steps:
        yield lev
