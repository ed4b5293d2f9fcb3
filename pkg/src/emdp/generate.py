"""Random small EMDPs for property tests and experiment scripts."""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction

from .model import Emdp, make_emdp


@dataclass(frozen=True)
class RandomModelConfig:
    max_states: int = 4
    max_update: int = 2
    reward_bound: int = 3
    max_out: int = 3
    controllable_share: float = 0.5
    strongly_connected: bool = False


def _probs(rng: random.Random, k: int) -> list[Fraction]:
    den = rng.choice([2, 3, 4, 5, 6])
    if k > den:
        den = k
    # k positive parts summing to den
    cuts = sorted(rng.sample(range(1, den), k - 1)) if k > 1 else []
    parts = [b - a for a, b in zip([0] + cuts, cuts + [den])]
    return [Fraction(p, den) for p in parts]


def random_emdp(rng: random.Random, cfg: RandomModelConfig = RandomModelConfig()) -> Emdp:
    n = rng.randint(1, cfg.max_states)
    names = [f"q{i}" for i in range(n)]
    kinds = ["controllable" if rng.random() < cfg.controllable_share else "stochastic" for _ in names]
    trans = []
    for i, s in enumerate(names):
        k = rng.randint(1, cfg.max_out)
        dsts = [rng.choice(names) for _ in range(k)]
        if cfg.strongly_connected and n > 1:
            dsts[0] = names[(i + 1) % n]
        probs = _probs(rng, k) if kinds[i] == "stochastic" else [None] * k
        for d, p in zip(dsts, probs):
            upd = rng.randint(-cfg.max_update, cfg.max_update)
            rew = Fraction(rng.randint(-2 * cfg.reward_bound, 2 * cfg.reward_bound), 2)
            trans.append((s, d, upd, rew, p))
    return make_emdp(list(zip(names, kinds)), trans)
