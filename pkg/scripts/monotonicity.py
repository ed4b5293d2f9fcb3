"""Check that approximate values do not drop by more than 2*eps when the
counter grows by a fixed amount."""

from __future__ import annotations

import argparse
import math
import random
from dataclasses import dataclass
from fractions import Fraction

from emdp import synth
from emdp.energy import min_safe
from emdp.generate import RandomModelConfig, random_emdp
from emdp.model import Configuration


@dataclass
class MonotonicityRun:
    configs: int = 50
    seed: int = 6
    epsilon: Fraction = Fraction(1, 10)
    shift: int = 5


def run(cfg: MonotonicityRun) -> int:
    rng = random.Random(cfg.seed)
    done = bad = 0
    drops = []
    while done < cfg.configs:
        e = random_emdp(rng, RandomModelConfig(strongly_connected=rng.random() < 0.5))
        ms = min_safe(e)
        safe = [s for s in e.states if ms[s] != math.inf]
        if not safe:
            continue
        s = rng.choice(safe)
        n = int(ms[s]) + rng.randint(0, 6)
        a = synth.approx_value(e, Configuration(s, n), cfg.epsilon).value
        b = synth.approx_value(e, Configuration(s, n + cfg.shift), cfg.epsilon).value
        drops.append(a - b)
        if a > b + 2 * cfg.epsilon:
            bad += 1
            print(f"config {done}: {s}({n}) -> {a}, {s}({n + cfg.shift}) -> {b}")
        done += 1
    print(f"{cfg.configs - bad}/{cfg.configs} hold; largest drop {max(drops)}; "
          f"strict increases {sum(1 for d in drops if d < 0)}")
    return bad


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--configs", type=int, default=MonotonicityRun.configs)
    p.add_argument("--seed", type=int, default=MonotonicityRun.seed)
    p.add_argument("--epsilon", type=Fraction, default=MonotonicityRun.epsilon)
    p.add_argument("--shift", type=int, default=MonotonicityRun.shift)
    return 1 if run(MonotonicityRun(**vars(p.parse_args(argv)))) else 0


if __name__ == "__main__":
    raise SystemExit(main())
