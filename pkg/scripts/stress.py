"""Random-model stress run: synthesise from a random safe start and
simulate, reporting safety violations and the slowest cases."""

from __future__ import annotations

import argparse
import math
import random
import time
from dataclasses import dataclass
from fractions import Fraction

from emdp import format_emdp, synth
from emdp.energy import min_safe
from emdp.generate import RandomModelConfig, random_emdp
from emdp.model import Configuration
from emdp.sim import estimate_mp


@dataclass
class StressRun:
    models: int = 200
    seed: int = 0
    epsilon: Fraction = Fraction(1, 2)
    episodes: int = 50
    steps: int = 10_000
    max_states: int = 4
    max_update: int = 2


def run(cfg: StressRun) -> int:
    rng = random.Random(cfg.seed)
    timings, failures = [], 0
    t0 = time.perf_counter()
    for k in range(cfg.models):
        e = random_emdp(rng, RandomModelConfig(max_states=cfg.max_states, max_update=cfg.max_update,
                                               strongly_connected=rng.random() < 0.5))
        ms = min_safe(e)
        safe = [s for s in e.states if ms[s] != math.inf]
        if not safe:
            continue
        s = rng.choice(safe)
        start = Configuration(s, int(ms[s]) + rng.randint(0, 3))
        t = time.perf_counter()
        m = synth.epsilon_strategy(e, start, cfg.epsilon)
        rep = estimate_mp(e, m, start, cfg.episodes, cfg.steps, k)
        timings.append((time.perf_counter() - t, k, type(m).__name__))
        if rep.safety_violations:
            failures += 1
            print(f"model {k}: {rep.safety_violations} unsafe episodes from {start}")
            print(format_emdp(e))
    timings.sort(reverse=True)
    print(f"{len(timings)} models simulated, {failures} with violations, "
          f"{time.perf_counter() - t0:.1f}s total")
    for dt, k, kind in timings[:5]:
        print(f"  model {k:4d} {kind:<17} {dt:6.2f}s")
    return failures


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--models", type=int, default=StressRun.models)
    p.add_argument("--seed", type=int, default=StressRun.seed)
    p.add_argument("--epsilon", type=Fraction, default=StressRun.epsilon)
    p.add_argument("--episodes", type=int, default=StressRun.episodes)
    p.add_argument("--steps", type=int, default=StressRun.steps)
    p.add_argument("--max-states", type=int, default=StressRun.max_states)
    p.add_argument("--max-update", type=int, default=StressRun.max_update)
    return 1 if run(StressRun(**vars(p.parse_args(argv)))) else 0


if __name__ == "__main__":
    raise SystemExit(main())
