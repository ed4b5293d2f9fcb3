"""Synthesise and simulate a strategy for every bundled fixture model."""

from __future__ import annotations

import argparse
import time
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

from emdp import synth
from emdp.model import parse_config, parse_emdp
from emdp.sim import estimate_mp

MODELS = Path(__file__).resolve().parent.parent / "models"

RUNS = [
    ("fig2L", "s(0)", Fraction(1)),
    ("fig2R", "a(0)", Fraction(1, 2)),
    ("fig3", "s(4)", Fraction(1, 2)),
    ("pump2", "s(0)", Fraction(1, 2)),
    ("loop", "s(0)", Fraction(1, 2)),
]


@dataclass
class FixtureRun:
    episodes: int = 200
    steps: int = 100_000
    seed: int = 42


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--episodes", type=int, default=FixtureRun.episodes)
    p.add_argument("--steps", type=int, default=FixtureRun.steps)
    p.add_argument("--seed", type=int, default=FixtureRun.seed)
    cfg = FixtureRun(**vars(p.parse_args(argv)))
    print(f"{'model':<6} {'start':<6} {'eps':<4} {'limit':>6} {'machine':<17} {'mean':>8} {'stderr':>9} "
          f"{'unsafe':>6} {'synth s':>7} {'sim s':>6}")
    for name, start, eps in RUNS:
        e = parse_emdp((MODELS / f"{name}.emdp").read_text())
        c = parse_config(start)
        t0 = time.perf_counter()
        m = synth.epsilon_strategy(e, c, eps)
        t1 = time.perf_counter()
        rep = estimate_mp(e, m, c, cfg.episodes, cfg.steps, cfg.seed)
        t2 = time.perf_counter()
        lv = synth.limit_value(e, c.state)
        print(f"{name:<6} {start:<6} {str(eps):<4} {str(lv):>6} {type(m).__name__:<17} {rep.mean:8.4f} "
              f"{rep.stderr:9.2e} {rep.safety_violations:6d} {t1 - t0:7.2f} {t2 - t1:6.2f}")


if __name__ == "__main__":
    main()
