"""Exact analysis of the Markov chains induced by memoryless strategies."""

from __future__ import annotations

from fractions import Fraction
from typing import Hashable, Iterable, Mapping

import numpy as np

from .graphs import sccs

try:
    from gmpy2 import mpq as _Q
except ImportError:  # pragma: no cover
    _Q = Fraction


def _frac(q) -> Fraction:
    if isinstance(q, Fraction):
        return q
    return Fraction(int(q.numerator), int(q.denominator))


Chain = Mapping[Hashable, list]  # state -> [(prob, dst, reward, transition index)]


def induced_chain(m, choice: Mapping[Hashable, Mapping[int, Fraction]], start: Iterable | None = None) -> dict:
    """Chain of ``m`` under a memoryless rule, restricted to states
    reachable from ``start`` (default: all states)."""
    chain: dict = {}
    todo = list(m.states if start is None else start)
    while todo:
        s = todo.pop()
        if s in chain:
            continue
        if m.is_stochastic(s):
            row = [(t.prob, t.dst, t.reward, t.index) for t in m.out(s)]
        else:
            dist = choice[s]
            row = [(Fraction(p), m.transitions[i].dst, m.transitions[i].reward, i) for i, p in dist.items()]
        chain[s] = row
        todo.extend(d for _, d, _, _ in row if d not in chain)
    return chain


def solve_exact(rows: list, rhs: list) -> list:
    """Solve a square sparse system ``rows x = rhs`` exactly.

    ``rows[i]`` maps column -> coefficient. Gauss-Jordan elimination that
    picks, for each column, the shortest remaining row containing it.
    Raises ``ZeroDivisionError`` for singular systems.
    """
    n = len(rows)
    A = [{j: _Q(v) for j, v in r.items() if v} for r in rows]
    b = [_Q(v) for v in rhs]
    colrows: dict = {}
    for i, r in enumerate(A):
        for j in r:
            colrows.setdefault(j, set()).add(i)
    used = [False] * n
    where: dict = {}
    for col in range(n):
        cands = [i for i in colrows.get(col, ()) if not used[i]]
        if not cands:
            raise ZeroDivisionError("singular system")
        piv = min(cands, key=lambda i: (len(A[i]), i))
        used[piv] = True
        where[col] = piv
        prow = A[piv]
        inv = 1 / prow[col]
        if inv != 1:
            for k in prow:
                prow[k] *= inv
            b[piv] *= inv
        for i in list(colrows[col]):
            if i == piv:
                continue
            row = A[i]
            f = row[col]
            for k, a in prow.items():
                nv = row.get(k, 0) - f * a
                if nv:
                    if k not in row:
                        colrows.setdefault(k, set()).add(i)
                    row[k] = nv
                elif k in row:
                    del row[k]
                    colrows[k].discard(i)
            b[i] -= f * b[piv]
    return [_frac(b[where[c]]) for c in range(n)]


def bottom_sccs(chain: Chain) -> list[list]:
    comps = sccs(list(chain), lambda s: [d for _, d, _, _ in chain[s]])
    out = []
    for c in comps:
        cs = set(c)
        if all(d in cs for s in c for _, d, _, _ in chain[s]):
            out.append(c)
    return out


def stationary(chain: Chain, comp: list) -> dict:
    """Stationary distribution of an irreducible closed class."""
    idx = {s: i for i, s in enumerate(comp)}
    n = len(comp)
    rows = [dict() for _ in range(n)]
    # pi(t) = sum_s pi(s) P(s,t); replace the last equation by sum pi = 1
    for s in comp:
        for p, d, _, _ in chain[s]:
            j = idx[d]
            rows[j][idx[s]] = rows[j].get(idx[s], 0) + p
    for j in range(n):
        rows[j][j] = rows[j].get(j, 0) - 1
    rows[-1] = {i: 1 for i in range(n)}
    rhs = [0] * (n - 1) + [1]
    pi = solve_exact(rows, rhs)
    return {s: pi[idx[s]] for s in comp}


def gains(chain: Chain) -> dict:
    """Expected long-run average reward from every state of the chain."""
    value: dict = {}
    for comp in bottom_sccs(chain):
        pi = stationary(chain, comp)
        g = sum((pi[s] * p * r for s in comp for p, _, r, _ in chain[s]), Fraction(0))
        for s in comp:
            value[s] = g
    transient = [s for s in chain if s not in value]
    if transient:
        idx = {s: i for i, s in enumerate(transient)}
        rows, rhs = [], []
        for s in transient:
            row = {idx[s]: Fraction(1)}
            b = Fraction(0)
            for p, d, _, _ in chain[s]:
                if d in idx:
                    row[idx[d]] = row.get(idx[d], 0) - p
                else:
                    b += p * value[d]
            rows.append(row)
            rhs.append(b)
        sol = solve_exact(rows, rhs)
        for s in transient:
            value[s] = sol[idx[s]]
    return value


def transition_frequencies(chain: Chain, comp: list) -> dict:
    """Long-run frequency of each transition index inside a closed class."""
    pi = stationary(chain, comp)
    freq: dict = {}
    for s in comp:
        for p, _, _, i in chain[s]:
            freq[i] = freq.get(i, Fraction(0)) + pi[s] * p
    return freq


def expected_hitting_times(m, rule, target, universe) -> dict:
    """Expected steps to reach ``target`` under a memoryless rule (floats)."""
    target = set(target)
    others = [s for s in universe if s not in target]
    times = {s: 0.0 for s in target}
    if not others:
        return times
    idx = {s: i for i, s in enumerate(others)}
    n = len(others)
    A = np.eye(n)
    for s in others:
        if m.is_stochastic(s):
            row = [(float(t.prob), t.dst) for t in m.out(s)]
        else:
            row = [(float(p), m.transitions[i].dst) for i, p in rule.dist(s).items()]
        for p, d in row:
            if d in idx:
                A[idx[s], idx[d]] -= p
    h = np.linalg.solve(A, np.ones(n))
    for s in others:
        times[s] = float(h[idx[s]])
    return times
