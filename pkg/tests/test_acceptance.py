"""End-to-end acceptance checks.

Each check returns ``(passed, detail)`` and prints one PASS/FAIL line.
Run under pytest or directly with ``python3 tests/test_acceptance.py``.
"""

from __future__ import annotations

import math
import random
import sys
import tempfile
import time
from fractions import Fraction
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from emdp import energy, flows, synth  # noqa: E402
from emdp.cli import main as cli_main  # noqa: E402
from emdp.flows import InfeasibleFlow, ProgramKind, build_payoff_lp, build_trend_lp, core_holds, find_core  # noqa: E402
from emdp.generate import RandomModelConfig, random_emdp  # noqa: E402
from emdp.graphs import is_strongly_connected, mecs  # noqa: E402
from emdp.model import Configuration, parse_emdp  # noqa: E402
from emdp.ratlp import Optimal, duality_gap, is_feasible, solve_lp  # noqa: E402
from emdp.sim import TooLarge, estimate_mp, oracle_value, unfold_value  # noqa: E402
from helpers import safety_oracle  # noqa: E402

INF = math.inf
C = Configuration
MODELS = Path(__file__).resolve().parent.parent / "models"


def load(name):
    return parse_emdp((MODELS / f"{name}.emdp").read_text())


def fresh():
    """Drop memoised analyses so that timings include the real work."""
    for fn in (energy.min_safe, energy.min_pump, flows.solve_flow, synth.limit_analysis, synth.cut_level):
        fn.cache_clear()


def report(name, ok, detail, seconds):
    line = f"{'PASS' if ok else 'FAIL'}  {name:<28} {seconds:7.2f}s  {detail}"
    print(line, flush=True)
    return line


# ------------------------------------------------------------ fixtures


def check_fig1():
    e = load("fig1")
    fresh()
    t0 = time.perf_counter()
    lp = build_payoff_lp(e)
    uniform = is_feasible(lp, {v: Fraction(1, 4) for v in lp.variables})
    ms = energy.min_safe(e)
    dt = time.perf_counter() - t0
    ok = uniform and ms == {"s": INF, "t": INF} and dt < 1
    return ok, f"uniform 1/4 feasible={uniform}, min_safe={ms}", dt


def check_fig3():
    e = load("fig3")
    fresh()
    t0 = time.perf_counter()
    fstar = flows.solve_flow(e, ProgramKind.PAYOFF).objective_value
    gstar = flows.solve_flow(e, ProgramKind.TREND).objective_value
    vb, _ = synth.caseB_value(e)
    lv = synth.limit_value(e, "s")
    dt = time.perf_counter() - t0
    ok = (fstar, gstar, vb, lv) == (5, 0, 0, 0) and dt < 1
    return ok, f"f*={fstar} g*={gstar} caseB={vb} limit(s)={lv}", dt


def check_fig2L(episodes=200, steps=100_000, seed=2024):
    e = load("fig2L")
    fresh()
    t0 = time.perf_counter()
    cls = synth.classify(e)
    mp_t = energy.min_pump(e)["t"]
    lv = synth.limit_value(e, "s")
    m = synth.epsilon_strategy(e, C("s", 0), Fraction(1))
    rep = estimate_mp(e, m, C("s", 0), episodes, steps, seed)
    dt = time.perf_counter() - t0
    ok = (cls is synth.Classification.STRONGLY_CONNECTED_NOT_PUMPABLE and mp_t == INF and lv == 5
          and rep.mean >= 4 - 3 * rep.stderr and rep.safety_violations == 0 and dt < 120)
    return ok, (f"{cls.value}, min_pump(t)={mp_t}, limit(s)={lv}, mean={rep.mean:.4f} "
                f"se={rep.stderr:.2e} violations={rep.safety_violations}"), dt


def check_fig2R(episodes=200, steps=100_000, seed=2024):
    e = load("fig2R")
    fresh()
    t0 = time.perf_counter()
    cls = synth.classify(e)
    mec_sets = sorted(sorted(m.states) for m in mecs(e))
    lv = synth.limit_value(e, "a")
    m = synth.epsilon_strategy(e, C("a", 0), Fraction(1, 2))
    rep = estimate_mp(e, m, C("a", 0), episodes, steps, seed)
    dt = time.perf_counter() - t0
    ok = (cls is synth.Classification.NOT_STRONGLY_CONNECTED and mec_sets == [["a"], ["d"], ["e"]]
          and lv == 5 and rep.mean >= 4.2 - 3 * rep.stderr and rep.safety_violations == 0 and dt < 120)
    return ok, (f"{cls.value}, MECs={mec_sets}, limit(a)={lv}, mean={rep.mean:.4f} "
                f"se={rep.stderr:.2e} violations={rep.safety_violations}"), dt


# ------------------------------------------------------------ random invariants


def _lp_certified(lp) -> bool:
    out = solve_lp(lp)  # certificates are verified inside the solver as well
    return not isinstance(out, Optimal) or duality_gap(lp, out) == 0


def _cores(e):
    """Cores of every strongly connected piece where staying can be safe."""
    pieces = []
    if is_strongly_connected(e):
        pieces.append(e)
    if any(v != INF for v in energy.min_safe(e).values()):
        pieces.extend(c.model for c in synth.limit_analysis(e).components)
    out = []
    for f in pieces:
        try:
            fs = flows.solve_flow(f, ProgramKind.PAYOFF)
        except InfeasibleFlow:
            continue
        out.append((find_core(f, fs), fs.objective_value))
    return out


def check_invariants(models=200, seed=7, cap=3, episodes=50, steps=10_000):
    rng = random.Random(seed)
    fresh()
    t0 = time.perf_counter()
    n = {k: 0 for k in "abcdef"}
    bad = {k: 0 for k in "abcdef"}
    skipped = 0
    made = 0
    while n["c"] < models or made < models:
        made += 1
        e = random_emdp(rng, RandomModelConfig(strongly_connected=rng.random() < 0.5))
        ms = energy.min_safe(e)
        # (a) safety levels against the adversarial fixpoint
        n["a"] += 1
        bad["a"] += ms != safety_oracle(e)
        # (b) pumping levels stay under 3|S|M_E
        n["b"] += 1
        bound = 3 * len(e.states) * e.max_update
        bad["b"] += any(v != INF and v > bound for v in energy.min_pump(e).values())
        # (c) unfolding + exact solver against strategy enumeration
        cfg = C(rng.choice(e.states), rng.randint(0, cap))
        try:
            want = oracle_value(e, cfg, cap, max_strategies=20_000)
        except TooLarge:
            skipped += 1
        else:
            n["c"] += 1
            bad["c"] += unfold_value(e, cfg, cap) != want
        # (d) synthesised strategies stay safe
        safe = [s for s in e.states if ms[s] != INF]
        if safe:
            s = rng.choice(safe)
            start = C(s, int(ms[s]) + rng.randint(0, 3))
            m = synth.epsilon_strategy(e, start, Fraction(1, 2))
            rep = estimate_mp(e, m, start, episodes, steps, made)
            n["d"] += 1
            bad["d"] += rep.safety_violations > 0
        # (e) cores satisfy their inequalities exactly
        for core, fstar in _cores(e):
            n["e"] += 1
            bad["e"] += not core_holds(core, fstar)
        # (f) LP optima close with zero duality gap
        for lp in (build_payoff_lp(e), build_trend_lp(e)):
            n["f"] += 1
            bad["f"] += not _lp_certified(lp)
    dt = time.perf_counter() - t0
    ok = not any(bad.values()) and n["a"] >= models and n["c"] >= models and dt < 600
    parts = " ".join(f"{k}:{n[k] - bad[k]}/{n[k]}" for k in "abcdef")
    return ok, f"{made} models; {parts}; oracle skipped {skipped} (too many strategies)", dt


def check_monotonicity(configs=50, seed=6, eps=Fraction(1, 10)):
    rng = random.Random(seed)
    fresh()
    t0 = time.perf_counter()
    done, fails, worst = 0, [], None
    while done < configs:
        e = random_emdp(rng, RandomModelConfig(strongly_connected=rng.random() < 0.5))
        ms = energy.min_safe(e)
        safe = [s for s in e.states if ms[s] != INF]
        if not safe:
            continue
        s = rng.choice(safe)
        k = int(ms[s]) + rng.randint(0, 6)
        a = synth.approx_value(e, C(s, k), eps).value
        b = synth.approx_value(e, C(s, k + 5), eps).value
        gap = a - b
        worst = gap if worst is None else max(worst, gap)
        if not a <= b + 2 * eps:
            fails.append((done, a, b))
        done += 1
    dt = time.perf_counter() - t0
    return not fails, f"{configs - len(fails)}/{configs} hold; largest drop {worst}", dt


def check_reproducible_trace(seed=99):
    t0 = time.perf_counter()
    blobs = []
    with tempfile.TemporaryDirectory() as tmp:
        for k in range(2):
            p = Path(tmp) / f"trace{k}.jsonl"
            code = cli_main(["simulate", str(MODELS / "fig2R.emdp"), "--config", "a(0)", "--epsilon", "1/2",
                             "--episodes", "3", "--steps", "20000", "--seed", str(seed), "--trace", str(p),
                             "--out", str(Path(tmp) / f"report{k}.txt")])
            blobs.append((code, p.read_bytes()))
    dt = time.perf_counter() - t0
    ok = blobs[0] == blobs[1] and blobs[0][0] == 0 and len(blobs[0][1]) > 0
    return ok, f"{len(blobs[0][1])} bytes, identical={blobs[0][1] == blobs[1][1]}", dt


CHECKS = [
    ("fig1 program and safety", check_fig1),
    ("fig3 flow and limit value", check_fig3),
    ("fig2L value and simulation", check_fig2L),
    ("fig2R value and simulation", check_fig2R),
    ("random-model invariants", check_invariants),
    ("value monotonicity", check_monotonicity),
    ("trace reproducibility", check_reproducible_trace),
]


@pytest.mark.slow
@pytest.mark.parametrize("name, check", CHECKS, ids=[n.replace(" ", "-") for n, _ in CHECKS])
def test_acceptance(name, check, capsys):
    ok, detail, dt = check()
    with capsys.disabled():
        print()
        report(name, ok, detail, dt)
    assert ok, detail


if __name__ == "__main__":
    passed = []
    for name, check in CHECKS:
        ok, detail, dt = check()
        report(name, ok, detail, dt)
        passed.append(ok)
    sys.exit(0 if all(passed) else 1)
