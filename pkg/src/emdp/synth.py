"""Values and strategy synthesis.

Strongly connected pumpable models (every safe configuration pumpable)
get the threshold or staged strategies built from a core of the optimal
flow. General models are analysed through their final components (end
components of the safe part that are safe on their own), each valued as
positive-trend mixing (case A) or bounded-counter stability (case B), and
combined by the condensation.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .energy import INF, NoSafeState, min_pump, min_safe, pumping_strategy, safe_strategy
from .finmdp import condensation, cut_unfold, solve_mean_payoff, unfold
from .flows import (
    ProgramKind,
    TypeI,
    TypeII,
    components,
    find_core,
    mu_strategy,
    solve_flow,
)
from .graphs import is_strongly_connected, mecs, reach_strategy
from .machines import (
    CompositeMachine,
    MimicMachine,
    MixingMachine,
    StagedMachine,
    ThresholdMachine,
    lift_indices,
    lift_rule,
    pump_target,
)
from .markov import bottom_sccs, gains
from .model import Configuration, Emdp
from .ratlp import EQ, GE, LinearProgram, Optimal, Sense, solve_lp
from .strategy import LeveledPolicy, Memoryless, StrategyMachine

NEG_INF = -math.inf


class Classification(enum.Enum):
    SP_EMDP = "SpEmdp"
    STRONGLY_CONNECTED_NOT_PUMPABLE = "StronglyConnectedNotPumpable"
    NOT_STRONGLY_CONNECTED = "NotStronglyConnected"


class NotSpEmdp(ValueError):
    pass


class NotApplicable(ValueError):
    pass


class UnsafeStart(ValueError):
    pass


class ValueKind(enum.Enum):
    EXACT = "exact"
    APPROXIMATE = "approximate"
    LIMIT = "limit"


@dataclass
class ValueReport:
    query: object  # Configuration or state
    value: object  # Fraction or -inf
    kind: ValueKind
    epsilon: Fraction | None = None
    witness_strategy: StrategyMachine | None = None
    cut_level: int | None = None


@dataclass(frozen=True)
class ThresholdParams:
    L: int
    H: int


@dataclass(frozen=True)
class Type2Params:
    p1: Fraction
    p2: Fraction
    N: int
    q: object
    TH: int


@dataclass(frozen=True)
class CaseAParams:
    """Mixture weights (one per candidate component) and block length."""

    weights: tuple
    epsilon: Fraction
    block: int
    mp_estimate: float
    trend_estimate: float
    certified: bool = True


# ------------------------------------------------------------ helpers


def _safe_part(e: Emdp) -> Emdp:
    """States with finite min_safe and the moves that stay among them."""
    ms = min_safe(e)
    keep = {s for s in e.states if ms[s] != INF}
    if len(keep) == len(e.states):
        return e
    return e.restrict(keep)


def _finite_max(levels) -> int:
    return max((int(v) for v in levels.values() if v != INF), default=0)


def _reward_range(e: Emdp) -> Fraction:
    rs = [t.reward for t in e.transitions]
    return max(rs) - min(rs)


def danger_level(e: Emdp) -> int:
    """Below this counter the synthesised machines fall back to safety."""
    return _finite_max(min_safe(e)) + e.max_update


def _chain_trend(e: Emdp, rule: Memoryless, start) -> Fraction:
    """Smallest long-run counter drift over closed classes reached from ``start``."""
    chain = {}
    todo = list(start)
    while todo:
        s = todo.pop()
        if s in chain:
            continue
        if e.is_stochastic(s):
            row = [(t.prob, t.dst, Fraction(t.update), t.index) for t in e.out(s)]
        else:
            row = [(p, e.transitions[i].dst, Fraction(e.transitions[i].update), i)
                   for i, p in rule.dist(s).items()]
        chain[s] = row
        todo.extend(d for _, d, _, _ in row)
    g = gains(chain)
    return min(g[c[0]] for c in bottom_sccs(chain))


def _matrix(e: Emdp, rule: Memoryless, states: list, tilt: float = 0.0):
    """Row-stochastic matrix (optionally tilted by ``exp(-tilt*update)``),
    expected reward and expected update per state."""
    idx = {s: i for i, s in enumerate(states)}
    n = len(states)
    P = np.zeros((n, n))
    r = np.zeros(n)
    u = np.zeros(n)
    for s in states:
        if e.is_stochastic(s):
            row = [(float(t.prob), t) for t in e.out(s)]
        else:
            row = [(float(p), e.transitions[i]) for i, p in rule.dist(s).items()]
        for p, t in row:
            P[idx[s], idx[t.dst]] += p * (math.exp(-tilt * t.update) if tilt else 1.0)
            r[idx[s]] += p * float(t.reward)
            u[idx[s]] += p * t.update
    return P, r, u


def _steps_until(e: Emdp, rule: Memoryless, universe, target, delta: float, cap: int = 1 << 20) -> int:
    """Least L with P(target not reached within L steps) <= delta from
    every state of ``universe`` (floating-point estimate)."""
    target = set(target)
    others = [s for s in universe if s not in target]
    if not others:
        return 0
    P, _, _ = _matrix(e, rule, list(universe))
    pos = {s: i for i, s in enumerate(universe)}
    keep = [pos[s] for s in others]
    Q = P[np.ix_(keep, keep)]
    surv = np.ones(len(keep))
    L = 0
    while surv.max() > delta:
        surv = Q @ surv
        L += 1
        if L >= cap:
            raise RuntimeError("target is not reached fast enough")
    return L


# ------------------------------------------------------------ classify


def classify(e: Emdp) -> Classification:
    """SP-EMDP iff strongly connected and every safe configuration is
    pumpable, i.e. min_safe and min_pump agree on every state."""
    if not is_strongly_connected(e):
        return Classification.NOT_STRONGLY_CONNECTED
    ms, mp = min_safe(e), min_pump(e)
    if all(ms[s] == mp[s] for s in e.states):
        return Classification.SP_EMDP
    return Classification.STRONGLY_CONNECTED_NOT_PUMPABLE


def _sp_model(e: Emdp) -> Emdp:
    if classify(e) is not Classification.SP_EMDP:
        raise NotSpEmdp("the model is not strongly connected and pumpable")
    f = _safe_part(e)
    if not f.states:
        raise NotSpEmdp("no safe configuration")
    if not is_strongly_connected(f):
        raise NotSpEmdp("the safe part of the model is not strongly connected")
    return f


def sp_value(e: Emdp) -> Fraction:
    """Common value of all safe configurations of an SP-EMDP."""
    return solve_flow(_sp_model(e), ProgramKind.PAYOFF).objective_value


def sp_core(e: Emdp):
    f = _sp_model(e)
    return find_core(f, solve_flow(f, ProgramKind.PAYOFF))


def threshold_params(e: Emdp) -> ThresholdParams:
    n = len(e.states)
    L = e.max_update + _finite_max(min_pump(e))
    return ThresholdParams(L, L + n + 2 * n * n * e.max_update)


def type1_strategy(e: Emdp, core: TypeI, n: int | None = None) -> ThresholdMachine:
    """Pump while low, play the core component's rule once high enough."""
    f = _sp_model(e)
    if not isinstance(core, TypeI):
        raise TypeError("a type I core is required")
    p = threshold_params(e)
    pi = pumping_strategy(e).rule
    mu = lift_rule(mu_strategy(f, core.component).rule, e, "mu")
    return ThresholdMachine(pi, mu, p.L, p.H)


def type2_params(e: Emdp, core: TypeII) -> Type2Params:
    w1, w2 = core.weights
    p1, p2 = w1 / (w1 + w2), w2 / (w1 + w2)
    N = math.lcm(p1.denominator, p2.denominator)
    f = _sp_model(e)
    q = min(core.c1.states, key=f.position.get)
    TH = _finite_max(min_pump(e)) + e.max_update
    return Type2Params(p1, p2, N, q, TH)


def _type2_parts(e: Emdp, core: TypeII):
    f = _sp_model(e)
    p = type2_params(e, core)
    mu1 = mu_strategy(f, core.c1)
    mu2 = mu_strategy(f, core.c2)
    kappa = reach_strategy(f, [p.q])
    return f, p, mu1, mu2, kappa


def type2_strategy(e: Emdp, core: TypeII, n: int | None = None, cap: int | None = None) -> StagedMachine:
    """Staged schedule with progressive pumping (unbounded stages unless ``cap``)."""
    if not isinstance(core, TypeII):
        raise TypeError("a type II core is required")
    f, p, mu1, mu2, kappa = _type2_parts(e, core)
    pi = pumping_strategy(e).rule
    return StagedMachine(lift_rule(mu1.rule, e, "mu1"), lift_rule(mu2.rule, e, "mu2"),
                         lift_rule(kappa.rule, e, "kappa"), pi,
                         int(p.p1 * p.N), int(p.p2 * p.N), p.q, p.TH, cap)


MIN_STAGE_STEPS = 64


def stage_cap(e: Emdp, core: TypeII, eps: Fraction) -> int:
    """Least stage index after which the per-stage overhead costs less than
    ``eps/2`` of the average.

    Overhead of stage ``i``: expected travel into both components and to
    the anchor, plus pumping from ``TH`` to ``pump_target(i)`` (and one
    step's worth of travel losses) at the pumping rule's drift.
    """
    eps = Fraction(eps)
    f, p, mu1, mu2, kappa = _type2_parts(e, core)
    R = float(_reward_range(e))
    if R == 0:
        return 1
    travel = (max(kappa.hitting_times.values()) + max(mu1.hitting_times.values())
              + max(mu2.hitting_times.values()))
    pi = pumping_strategy(e)
    ms = min_pump(e)
    tau = float(_chain_trend(e, pi.rule, [s for s in e.states if ms[s] != INF]))
    if tau <= 0:
        tau = 1.0 / len(e.states)
    M = e.max_update

    def overhead(i):
        return travel + (pump_target(0, i, p.N) + M * (1 + travel)) / tau

    def ok(i):
        o = overhead(i)
        return R * o / (i * p.N + o) < float(eps) / 2

    hi = 1
    while not ok(hi):
        hi *= 2
    lo = hi // 2 + 1 if hi > 1 else 1
    while lo < hi:
        mid = (lo + hi) // 2
        if ok(mid):
            hi = mid
        else:
            lo = mid + 1
    return hi


def sp_epsilon_strategy(e: Emdp, n: int, eps) -> StrategyMachine:
    """Finite-memory near-optimal strategy for an SP-EMDP."""
    core = sp_core(e)
    if isinstance(core, TypeI):
        return type1_strategy(e, core, n)
    # a larger cap only shrinks the overhead share; the floor keeps the
    # frozen stage long enough for the simulator to skip through it
    N = type2_params(e, core).N
    cap = max(stage_cap(e, core, Fraction(eps)), -(-MIN_STAGE_STEPS // N))
    return type2_strategy(e, core, n, cap)


def sp_strategy(e: Emdp, n: int) -> StrategyMachine:
    """Optimal strategy for an SP-EMDP (infinite memory for type II cores)."""
    core = sp_core(e)
    if isinstance(core, TypeI):
        return type1_strategy(e, core, n)
    return type2_strategy(e, core, n)


# ------------------------------------------------------------ case A


def _mixture_weights(cands: list, fstar: Fraction, eps: Fraction) -> list:
    """Weights maximising the drift subject to payoff >= f* - eps/4, rounded
    to a dyadic grid while keeping payoff >= f* - 3eps/8 and drift > 0."""
    names = [f"w{j}" for j in range(len(cands))]
    lp = LinearProgram(names, Sense.MAX, {names[j]: c.trend for j, c in enumerate(cands) if c.trend})
    lp.add({x: 1 for x in names}, EQ, 1)
    lp.add({names[j]: c.mp for j, c in enumerate(cands) if c.mp}, GE, fstar - eps / 4)
    out = solve_lp(lp)
    assert isinstance(out, Optimal)
    w = [out.assignment[x] for x in names]
    best = max(range(len(cands)), key=lambda j: (cands[j].trend, -j))
    q = 1
    while True:
        r = [Fraction(math.floor(x * q), q) for x in w]
        r[best] = 1 - sum(r[j] for j in range(len(r)) if j != best)
        mp = sum(r[j] * c.mp for j, c in enumerate(cands))
        tr = sum(r[j] * c.trend for j, c in enumerate(cands))
        if mp >= fstar - 3 * eps / 8 and tr > 0:
            return r
        q *= 2


def _block(e: Emdp, phases: list, states: list, tilt: float = 0.0, sums: bool = True):
    """Block transfer matrix, expected reward and update per start state."""
    n = len(states)
    M = np.eye(n)
    R = np.zeros(n)
    U = np.zeros(n)
    for rule, k in phases:
        P, r, u = _matrix(e, rule, states, tilt)
        if not sums:
            M = M @ np.linalg.matrix_power(P, k)
            continue
        for _ in range(k):
            R += M @ r
            U += M @ u
            M = M @ P
    return M, R, U


def _block_rates(M, R, U, K):
    """Worst long-run payoff and drift per step over closed classes of the
    block chain."""
    n = len(M)
    succ = {i: [j for j in range(n) if M[i, j] > 1e-12] for i in range(n)}
    from .graphs import sccs

    worst_mp, worst_tr = math.inf, math.inf
    for comp in sccs(list(range(n)), lambda i: succ[i]):
        cs = set(comp)
        if any(j not in cs for i in comp for j in succ[i]):
            continue
        sub = M[np.ix_(comp, comp)]
        A = sub.T - np.eye(len(comp))
        A[-1, :] = 1.0
        b = np.zeros(len(comp))
        b[-1] = 1.0
        pi = np.linalg.lstsq(A, b, rcond=None)[0]
        worst_mp = min(worst_mp, float(pi @ R[comp]) / K)
        worst_tr = min(worst_tr, float(pi @ U[comp]) / K)
    return worst_mp, worst_tr


def _drawdowns(e: Emdp, phases: list, states: list, blocks: int) -> list[int]:
    """``out[w-1]``: largest counter drop, over all paths and start states,
    within the first ``w`` blocks (min-plus dynamic programming)."""
    idx = {s: i for i, s in enumerate(states)}
    n = len(states)
    mats = []
    for rule, k in phases:
        A = np.full((n, n), np.inf)
        for s in states:
            if e.is_stochastic(s):
                ts = e.out(s)
            else:
                ts = [e.transitions[i] for i in rule.dist(s)]
            for t in ts:
                A[idx[s], idx[t.dst]] = min(A[idx[s], idx[t.dst]], t.update)
        mats.append((A, k))
    cur = np.zeros(n)
    low = 0.0
    out = []
    for _ in range(blocks):
        for A, k in mats:
            for _ in range(k):
                cur = (cur[:, None] + A).min(axis=0)
                low = min(low, cur.min())
        out.append(int(-low))
    return out


def _ruin_height(e: Emdp, phases: list, states: list, K: int, delta: float):
    """Counter margin above the danger level after which the schedule
    drops below the danger level with probability at most ``delta``.

    Looks for windows of ``w`` blocks and a rate ``lam`` with
    ``E[exp(-lam * change over a window) | start] < 1`` for every start
    state, so ``exp(-lam * level)`` sampled at window ends is a
    supermartingale; inside a window the counter drops by at most the
    window's worst-case drawdown.
    """
    windows = (1, 2, 4, 8, 16, 32, 64)
    rate: dict = {}
    with np.errstate(over="ignore", invalid="ignore"):
        for j in range(40):
            lam = 2.0 ** -j
            Mt, _, _ = _block(e, phases, states, lam, sums=False)
            for w in windows:
                if w in rate:
                    continue
                W = np.linalg.matrix_power(Mt, w)
                if np.all(np.isfinite(W)) and W.sum(axis=1).max() < 1.0 - 1e-12:
                    rate[w] = lam
            if len(rate) == len(windows):
                break
    # one-block variant with a Perron weight h: h(state) * exp(-lam * level)
    # is a supermartingale when the tilted block matrix has spectral radius
    # below one; the start state then only costs the factor max h / min h
    perron = None
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for j in range(40):
            lam = 2.0 ** -j
            Mt, _, _ = _block(e, phases, states, lam, sums=False)
            if not np.all(np.isfinite(Mt)):
                continue
            vals, vecs = np.linalg.eig(Mt)
            k = int(np.argmax(np.abs(vals)))
            rho = abs(vals[k])
            h = np.real(vecs[:, k])
            h = h * np.sign(h[np.argmax(np.abs(h))])
            if rho < 1.0 - 1e-9 and h.min() > 1e-12 * h.max():
                # re-check the inequality directly rather than trusting eig
                if np.all(Mt @ h <= h * (1.0 + 1e-12)):
                    perron = (lam, float(h.max() / h.min()))
                    break
    if not rate and perron is None:
        return None
    need = max(rate) if rate else 1
    dd = _drawdowns(e, phases, states, need)
    cands = [dd[w - 1] + math.ceil(math.log(1.0 / delta) / lam) + 1 for w, lam in rate.items()]
    if perron is not None:
        lam, C = perron
        cands.append(dd[0] + math.ceil((math.log(C) + math.log(1.0 / delta)) / lam) + 1)
    return min(cands)


@dataclass
class CaseAPlan:
    params: CaseAParams
    machine: MixingMachine
    safe_start: int


def _case_a(f: Emdp, root: Emdp, eps: Fraction, danger: int, safe: Memoryless) -> CaseAPlan:
    fs = solve_flow(f, ProgramKind.PAYOFF)
    fstar = fs.objective_value
    core = find_core(f, fs)
    ts = solve_flow(f, ProgramKind.TREND)
    if ts.objective_value <= 0:
        raise NotApplicable("no positive-drift flow")
    tc = components(f, ts)
    drift = max(tc, key=lambda c: c.trend)
    cands = [core.component] if isinstance(core, TypeI) else [core.c1, core.c2]
    cands = list(dict.fromkeys(cands))
    if drift not in cands:
        cands.append(drift)
    w = _mixture_weights(cands, fstar, eps)
    q = math.lcm(*[x.denominator for x in w])
    rules = [lift_rule(mu_strategy(f, c).rule, root, f"mu{j}") for j, c in enumerate(cands)]
    local = [mu_strategy(f, c).rule for c in cands]
    states = list(f.states)
    scale = 1
    while True:
        K = q * scale
        phases = [(local[j], int(w[j] * K)) for j in range(len(cands)) if w[j] > 0]
        M, R, U = _block(f, phases, states)
        mp_b, tr_b = _block_rates(M, R, U, K)
        certified = mp_b >= float(fstar - eps / 2) and tr_b > 0
        if certified or K >= 1 << 14:
            break
        scale *= 2
    R_E = float(_reward_range(root))
    delta = float(eps) / (2 * R_E) if R_E > 0 else 1.0
    margin = _ruin_height(f, phases, states, K, min(delta, 0.5)) if delta < 1 else K * f.max_update
    if margin is None:
        certified = False
        margin = _drawdowns(f, phases, states, 64)[-1]
    params = CaseAParams(tuple(w), eps, K, mp_b, tr_b, certified)
    machine = MixingMachine([(rules[j], int(w[j] * K)) for j in range(len(cands)) if w[j] > 0], danger, safe)
    machine.params = params
    return CaseAPlan(params, machine, danger + margin)


def caseA_strategy(e: Emdp, cfg: Configuration | None, eps) -> tuple[MixingMachine, int]:
    """Mixing machine for a strongly connected model with positive optimal
    drift, and the counter height from which it is ``eps``-optimal."""
    eps = Fraction(eps)
    if not is_strongly_connected(e):
        raise NotApplicable("the model is not strongly connected")
    safe = safe_strategy(e).rule
    if any(v == INF for v in min_safe(e).values()):
        raise NotApplicable("every state must have a safe configuration")
    plan = _case_a(e, e, eps, danger_level(e), safe)
    return plan.machine, plan.safe_start


# ------------------------------------------------------------ case B


@dataclass
class CaseBPlan:
    value: Fraction
    anchor: Configuration
    table: dict  # (state, k) -> root transition index
    present: set
    width: int


def _case_b(f: Emdp, root: Emdp) -> CaseBPlan:
    ms = min_safe(f)
    top = len(f.states) * f.max_update
    sink = min(t.reward for t in f.transitions) - 1
    u = unfold(f, 0, top, sink, safe_levels=ms)
    res = solve_mean_payoff(u.mdp)
    best = None
    for s in f.states:
        for k in range(top + 1):
            sid = u.state_of.get((s, k))
            if sid is None:
                continue
            v = res.values[sid]
            if best is None or v > best[0]:
                best = (v, s, k)
    idx = lift_indices(f, root) if f != root else list(range(len(f.transitions)))
    table, present = {}, set()
    rule = res.strategy.rule
    for sid, (s, k) in u.config_of.items():
        if f.is_stochastic(s):
            present.add((s, k))
        else:
            table[(s, k)] = {idx[u.origin[rule.pick(sid)]]: Fraction(1)}
    # moves leading to the sink leave the rule's region
    for (s, k), d in list(table.items()):
        (i,) = d
        t = root.transitions[i]
        if (t.dst, k + t.update) not in u.state_of:
            table.pop((s, k))
    return CaseBPlan(best[0], Configuration(best[1], best[2]), table, present, top + 1)


def caseB_value(e: Emdp) -> tuple[Fraction, Configuration]:
    """Limit value of a strongly connected model with zero optimal drift and
    the best configuration of its bounded unfolding."""
    if not is_strongly_connected(e):
        raise NotApplicable("the model is not strongly connected")
    ts = solve_flow(e, ProgramKind.TREND)
    if ts.objective_value != 0:
        raise NotApplicable("optimal drift is positive")
    plan = _case_b(e, e)
    return plan.value, plan.anchor


def _case_b_machine(f: Emdp, root: Emdp, plan: CaseBPlan, eps: Fraction, danger: int,
                    safe: Memoryless) -> tuple[MimicMachine, int]:
    anchor = plan.anchor
    kappa = reach_strategy(f, [anchor.state])
    mimic = LeveledPolicy(root, plan.table, plan.present, plan.width, "mimic")
    machine = MimicMachine(lift_rule(kappa.rule, root, "reach"), anchor.state, anchor.counter,
                           mimic, danger, safe)
    R = float(_reward_range(root))
    delta = float(eps) / (2 * R) if R > 0 else 0.5
    L = _steps_until(f, kappa.rule, list(f.states), [anchor.state], min(delta, 0.5))
    return machine, max(danger, anchor.counter) + L * f.max_update


# ------------------------------------------------------------ limit values


@dataclass
class FinalComponent:
    states: frozenset
    model: Emdp  # restriction of the safe part
    case: str  # "A" or "B"
    value: Fraction
    case_b: CaseBPlan | None = None


@dataclass
class LimitAnalysis:
    model: Emdp
    safe_levels: dict
    safe_model: Emdp
    components: list
    condensed: object
    solution: object
    values: dict = field(default_factory=dict)


def _final_components(sub: Emdp) -> list[Emdp]:
    """End components of ``sub`` in which staying forever can be safe."""
    out = []
    for mec in mecs(sub):
        f = sub.restrict(mec.states, mec.transitions)
        ms = min_safe(f)
        if all(v != INF for v in ms.values()):
            out.append(f)
            continue
        keep = {s for s in f.states if ms[s] != INF}
        if keep:
            out.extend(_final_components(f.restrict(keep)))
    return out


@lru_cache(maxsize=64)
def limit_analysis(e: Emdp) -> LimitAnalysis:
    ms = min_safe(e)
    es = _safe_part(e)
    comps = []
    if es.states:
        for f in _final_components(es):
            g = solve_flow(f, ProgramKind.TREND).objective_value
            if g > 0:
                comps.append(FinalComponent(frozenset(f.states), f, "A",
                                            solve_flow(f, ProgramKind.PAYOFF).objective_value))
            else:
                plan = _case_b(f, f)
                comps.append(FinalComponent(frozenset(f.states), f, "B", plan.value, plan))
    values = {s: NEG_INF for s in e.states}
    cond = sol = None
    if comps:
        cond = condensation(es, [c.value for c in comps], [c.states for c in comps])
        sol = solve_mean_payoff(cond.mdp)
        for s in es.states:
            values[s] = sol.values[cond.hat[s]]
    return LimitAnalysis(e, ms, es, comps, cond, sol, values)


def limit_value(e: Emdp, s):
    """``lim_n Val(s(n))``; ``-inf`` when no configuration of ``s`` is safe."""
    return limit_analysis(e).values[s]


# ------------------------------------------------------------ approximation


def _cut_values(e: Emdp, top: int):
    la = limit_analysis(e)
    ms = la.safe_levels
    u = cut_unfold(e, top, ms, {s: v for s, v in la.values.items() if v != NEG_INF})
    res = solve_mean_payoff(u.mdp)
    return u, res


@lru_cache(maxsize=64)
def cut_level(e: Emdp, eps: Fraction, limit: int = 1 << 10) -> int:
    """Counter level at which cutting the unfolding changes values by less
    than ``eps/4`` (doubling until two successive levels agree)."""
    ms = min_safe(e)
    N = max(1, _finite_max(ms) + len(e.states) * e.max_update)
    u1, r1 = _cut_values(e, N)
    while True:
        u2, r2 = _cut_values(e, 2 * N)
        diff = max((abs(r1.values[sid] - r2.values[u2.state_of[c]]) for c, sid in u1.state_of.items()),
                   default=Fraction(0))
        if diff < eps / 4 or 2 * N >= limit:
            return 2 * N
        N, u1, r1 = 2 * N, u2, r2


def approx_value(e: Emdp, cfg: Configuration, eps) -> ValueReport:
    """Value of ``cfg`` up to ``eps``."""
    eps = Fraction(eps)
    if eps <= 0:
        raise ValueError("epsilon must be positive")
    ms = min_safe(e)
    s, n = cfg.state, cfg.counter
    if ms[s] == INF or n < ms[s]:
        return ValueReport(cfg, NEG_INF, ValueKind.EXACT)
    N = cut_level(e, eps)
    if n > N:
        return ValueReport(cfg, limit_value(e, s), ValueKind.APPROXIMATE, eps, cut_level=N)
    u, res = _cut_values(e, N)
    return ValueReport(cfg, res.values[u.state_of[(s, n)]], ValueKind.APPROXIMATE, eps, cut_level=N)


# ------------------------------------------------------------ composite


def _steer_rule(es: Emdp, la: LimitAnalysis) -> tuple[dict, set]:
    """Controllable choices (safe-part indices) following the condensation
    strategy, and the indices of target components."""
    cond, sol = la.condensed, la.solution
    rule = sol.strategy.rule
    comp_of = {}
    for k, c in enumerate(la.components):
        for s in c.states:
            comp_of[s] = k
    targets = set()
    pick: dict = {}
    for k, c in enumerate(la.components):
        hat = f"<M{k}>"
        i = rule.pick(hat)
        if i == cond.loop_of[k]:
            targets.add(k)
            continue
        exit_t = es.transitions[cond.origin[i]]
        inside = [t.index for t in es.transitions if t.src in c.states and t.dst in c.states]
        kappa = reach_strategy(es, [exit_t.src], states=c.states, edges=inside)
        for s in c.states:
            if es.is_controllable(s):
                pick[s] = kappa.rule.pick(s)
        pick[exit_t.src] = exit_t.index
    for s in es.states:
        if s not in comp_of and es.is_controllable(s):
            pick[s] = cond.origin[rule.pick(cond.hat[s])]
    return pick, targets


@dataclass
class EpsilonPlan:
    machine: StrategyMachine
    top: int
    danger: int
    component_starts: dict


def epsilon_strategy(e: Emdp, cfg: Configuration, eps) -> StrategyMachine:
    """``eps``-optimal strategy from ``cfg`` (a finite description)."""
    return epsilon_plan(e, cfg, eps).machine


def epsilon_plan(e: Emdp, cfg: Configuration, eps) -> EpsilonPlan:
    eps = Fraction(eps)
    if eps <= 0:
        raise ValueError("epsilon must be positive")
    ms = min_safe(e)
    if ms[cfg.state] == INF or cfg.counter < ms[cfg.state]:
        raise UnsafeStart(f"{cfg} is not safe")
    danger = danger_level(e)
    if classify(e) is Classification.SP_EMDP and all(v != INF for v in ms.values()):
        return EpsilonPlan(sp_epsilon_strategy(e, cfg.counter, eps), 0, danger, {})
    la = limit_analysis(e)
    es = la.safe_model
    safe = safe_strategy(e).rule
    pick, targets = _steer_rule(es, la)
    to_root = lift_indices(es, e) if es != e else list(range(len(e.transitions)))
    target_of, machines, starts = {}, [], {}
    for k in sorted(targets):
        c = la.components[k]
        if c.case == "A":
            plan = _case_a(c.model, e, eps / 2, danger, safe)
            m, start = plan.machine, plan.safe_start
        else:
            m, start = _case_b_machine(c.model, e, c.case_b, eps / 2, danger, safe)
        starts[k] = start
        for s in c.states:
            target_of[s] = len(machines)
        machines.append(m)
    high_pick = {s: to_root[i] for s, i in pick.items()}
    for s in e.controllable_states:
        if s not in high_pick:
            high_pick[s] = safe.pick(s)
    high = Memoryless.deterministic(e, high_pick, "steer")
    R = float(_reward_range(e))
    delta = float(eps) / (4 * R) if R > 0 else 0.5
    universe = list(es.states)
    L = _steps_until(e, high, universe, target_of, min(delta, 0.5)) if target_of else 0
    top = max([cut_level(e, eps), danger + L * e.max_update]
              + [v + L * e.max_update for v in starts.values()])
    u, res = _cut_values(e, top)
    table, present = {}, set()
    rule = res.strategy.rule
    for sid, (s, k) in u.config_of.items():
        if e.is_stochastic(s):
            present.add((s, k))
        else:
            table[(s, k)] = {u.origin[rule.pick(sid)]: Fraction(1)}
    low = LeveledPolicy(e, table, present, top + 1, "cut")
    machine = CompositeMachine(low, top, high, target_of, machines, danger, safe)
    return EpsilonPlan(machine, top, danger, starts)
