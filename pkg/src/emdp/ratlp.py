"""Exact linear programming over the rationals.

Two-phase primal simplex on a sparse tableau with Bland's rule. Every
outcome carries a certificate that is checked in exact arithmetic before
it is returned: dual prices for an optimum, a Farkas vector for
infeasibility and a ray for unboundedness.

Certificates are stated for the maximisation form ``max c'x`` where
``c' = c`` for ``Max`` and ``c' = -c`` for ``Min``:

* duals ``y`` satisfy ``A^T y >= c'``, ``y_i >= 0`` on ``<=`` rows,
  ``y_i <= 0`` on ``>=`` rows and ``b.y = c'.x``;
* a Farkas vector has the same sign pattern, ``A^T y >= 0`` and ``b.y < 0``;
* a ray ``d >= 0`` keeps every row direction-feasible and has ``c'.d > 0``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

try:
    from gmpy2 import mpq as _Q
except ImportError:  # pragma: no cover - gmpy2 is a declared dependency
    _Q = Fraction


class Sense(enum.Enum):
    MAX = "max"
    MIN = "min"


LE, EQ, GE = "<=", "=", ">="


@dataclass(frozen=True)
class Constraint:
    coeffs: Mapping[str, Fraction]
    relation: str
    rhs: Fraction


@dataclass
class LinearProgram:
    """Variables are implicitly non-negative; absent coefficients are 0."""

    variables: list
    sense: Sense
    objective: Mapping[str, Fraction]
    constraints: list = field(default_factory=list)

    def add(self, coeffs: Mapping[str, Fraction], relation: str, rhs) -> None:
        self.constraints.append(Constraint(dict(coeffs), relation, Fraction(rhs)))

    def check(self) -> None:
        if not self.variables:
            raise ValueError("linear program without variables")
        names = set(self.variables)
        if len(names) != len(self.variables):
            raise ValueError("duplicate variable names")
        for k in self.objective:
            if k not in names:
                raise ValueError(f"objective names unknown variable {k!r}")
        for c in self.constraints:
            if c.relation not in (LE, EQ, GE):
                raise ValueError(f"bad relation {c.relation!r}")
            for k in c.coeffs:
                if k not in names:
                    raise ValueError(f"constraint names unknown variable {k!r}")


@dataclass
class Optimal:
    assignment: dict
    value: Fraction
    duals: list

    @property
    def feasible(self) -> bool:
        return True


@dataclass
class Infeasible:
    certificate: list


@dataclass
class Unbounded:
    ray: dict


class CertificateError(AssertionError):
    pass


def _frac(q) -> Fraction:
    if isinstance(q, Fraction):
        return q
    return Fraction(int(q.numerator), int(q.denominator))


def solve_lp(lp: LinearProgram):
    lp.check()
    out = _Simplex(lp).run()
    verify(lp, out)
    return out


# ------------------------------------------------------------------ simplex


class _Simplex:
    def __init__(self, lp: LinearProgram):
        self.lp = lp
        n = len(lp.variables)
        self.n = n
        col = {v: j for j, v in enumerate(lp.variables)}
        sign = 1 if lp.sense is Sense.MAX else -1
        self.cost = {col[k]: _Q(Fraction(v)) * sign for k, v in lp.objective.items() if v != 0}
        rows, rhs, basis, ident, flipped = [], [], [], [], []
        art = []
        next_col = n
        pending = []
        for c in lp.constraints:
            row = {col[k]: _Q(Fraction(v)) for k, v in c.coeffs.items() if v != 0}
            b = _Q(Fraction(c.rhs))
            rel = c.relation
            flip = b < 0
            if flip:
                row = {j: -v for j, v in row.items()}
                b = -b
                rel = {LE: GE, GE: LE, EQ: EQ}[rel]
            pending.append((row, b, rel, flip))
        # slack and surplus columns first, then artificials
        for row, b, rel, flip in pending:
            if rel == LE:
                row[next_col] = _Q(1)
                ident.append(next_col)
                basis.append(next_col)
                next_col += 1
            elif rel == GE:
                row[next_col] = _Q(-1)
                next_col += 1
                ident.append(None)
                basis.append(None)
            else:
                ident.append(None)
                basis.append(None)
            rows.append(row)
            rhs.append(b)
            flipped.append(flip)
        self.first_art = next_col
        for i in range(len(rows)):
            if basis[i] is None:
                rows[i][next_col] = _Q(1)
                basis[i] = next_col
                ident[i] = next_col
                art.append(next_col)
                next_col += 1
        self.ncols = next_col
        self.rows, self.rhs, self.basis = rows, rhs, basis
        self.ident, self.flipped = ident, flipped
        self.alive = [True] * len(rows)
        self.art = set(art)
        # column -> rows containing it, kept in sync with pivots
        self.colrows: dict[int, set] = {}
        for i, row in enumerate(rows):
            for j in row:
                self.colrows.setdefault(j, set()).add(i)

    # objective row helpers -------------------------------------------------
    def _reduced_costs(self, cost: Mapping[int, object]):
        d = {j: v for j, v in cost.items()}
        val = _Q(0)
        for i, row in enumerate(self.rows):
            if not self.alive[i]:
                continue
            cb = cost.get(self.basis[i], 0)
            if cb:
                for j, a in row.items():
                    nv = d.get(j, 0) - cb * a
                    if nv:
                        d[j] = nv
                    else:
                        d.pop(j, None)
                val += cb * self.rhs[i]
        for i in range(len(self.rows)):
            if self.alive[i]:
                d.pop(self.basis[i], None)
        return d, val

    def _pivot(self, r: int, j: int, d: dict):
        rows, rhs, colrows = self.rows, self.rhs, self.colrows
        prow = rows[r]
        piv = prow[j]
        if piv != 1:
            inv = 1 / piv
            for k in prow:
                prow[k] *= inv
            rhs[r] *= inv
        b_r = rhs[r]
        for i in list(colrows.get(j, ())):
            if i == r:
                continue
            row = rows[i]
            f = row[j]
            for k, a in prow.items():
                nv = row.get(k, 0) - f * a
                if nv:
                    if k not in row:
                        colrows.setdefault(k, set()).add(i)
                    row[k] = nv
                else:
                    if k in row:
                        del row[k]
                        colrows[k].discard(i)
            rhs[i] -= f * b_r
        f = d.get(j)
        delta = 0
        if f:
            for k, a in prow.items():
                nv = d.get(k, 0) - f * a
                if nv:
                    d[k] = nv
                else:
                    d.pop(k, None)
            delta = f * b_r
        self.basis[r] = j
        return delta

    def _iterate(self, d: dict, val, allow_art: bool):
        """Bland-rule pivots until optimal; returns (status, val, col)."""
        rows, rhs, basis = self.rows, self.rhs, self.basis
        while True:
            enter = None
            for j in sorted(k for k, v in d.items() if v > 0):
                if allow_art or j < self.first_art:
                    enter = j
                    break
            if enter is None:
                return "optimal", val, None
            best = None
            for i in self.colrows.get(enter, ()):
                if not self.alive[i]:
                    continue
                a = rows[i][enter]
                if a > 0:
                    ratio = rhs[i] / a
                    key = (ratio, basis[i])
                    if best is None or key < best[0]:
                        best = (key, i)
            if best is None:
                return "unbounded", val, enter
            val += self._pivot(best[1], enter, d)

    def _duals(self, d: dict) -> list:
        # y_i = -(reduced cost of row i's identity column); this also holds
        # for rows dropped as redundant, whose identity column stays in the
        # remaining rows
        y = []
        for i in range(len(self.rows)):
            yi = -_frac(d.get(self.ident[i], 0))
            y.append(-yi if self.flipped[i] else yi)
        return y

    def run(self):
        # phase 1: maximise -(sum of artificials)
        if self.art:
            cost1 = {j: _Q(-1) for j in self.art}
            d, val = self._reduced_costs(cost1)
            status, val, _ = self._iterate(d, val, allow_art=True)
            if val < 0:
                # the phase-one duals are computed against cost 0 on identity
                # columns except artificials (cost -1): y_i = c_i - d_i
                y = []
                for i in range(len(self.rows)):
                    ci = -1 if self.ident[i] in self.art else 0
                    yi = Fraction(ci) - _frac(d.get(self.ident[i], 0))
                    y.append(-yi if self.flipped[i] else yi)
                return Infeasible(y)
            self._drive_out_artificials()
        d, val = self._reduced_costs(self.cost)
        status, val, col = self._iterate(d, val, allow_art=False)
        if status == "unbounded":
            return Unbounded(self._ray(col))
        x = [Fraction(0)] * self.n
        for i, b in enumerate(self.basis):
            if self.alive[i] and b < self.n:
                x[b] = _frac(self.rhs[i])
        assignment = {v: x[j] for j, v in enumerate(self.lp.variables)}
        value = _frac(val)
        if self.lp.sense is Sense.MIN:
            value = -value
        return Optimal(assignment, value, self._duals(d))

    def _drive_out_artificials(self):
        for i in range(len(self.rows)):
            if not self.alive[i] or self.basis[i] not in self.art:
                continue
            row = self.rows[i]
            cand = sorted(j for j in row if j < self.first_art)
            if cand:
                self._pivot(i, cand[0], {})
            else:
                self.alive[i] = False
                for j in row:
                    self.colrows[j].discard(i)

    def _ray(self, col: int) -> dict:
        d = [Fraction(0)] * self.n
        if col < self.n:
            d[col] = Fraction(1)
        for i, b in enumerate(self.basis):
            if self.alive[i] and b < self.n and col in self.rows[i]:
                d[b] = -_frac(self.rows[i][col])
        return {v: d[j] for j, v in enumerate(self.lp.variables)}


# ----------------------------------------------------------- verification


def _row_value(coeffs: Mapping[str, Fraction], x: Mapping[str, Fraction]) -> Fraction:
    return sum((Fraction(a) * x[k] for k, a in coeffs.items()), Fraction(0))


def _signs_ok(lp: LinearProgram, y: Sequence[Fraction]) -> bool:
    for c, yi in zip(lp.constraints, y):
        if c.relation == LE and yi < 0:
            return False
        if c.relation == GE and yi > 0:
            return False
    return True


def _aty(lp: LinearProgram, y: Sequence[Fraction]) -> dict:
    acc = {v: Fraction(0) for v in lp.variables}
    for c, yi in zip(lp.constraints, y):
        if yi:
            for k, a in c.coeffs.items():
                acc[k] += Fraction(a) * yi
    return acc


def is_feasible(lp: LinearProgram, x: Mapping[str, Fraction]) -> bool:
    if any(x[v] < 0 for v in lp.variables):
        return False
    for c in lp.constraints:
        lhs = _row_value(c.coeffs, x)
        if c.relation == LE and lhs > c.rhs:
            return False
        if c.relation == GE and lhs < c.rhs:
            return False
        if c.relation == EQ and lhs != c.rhs:
            return False
    return True


def duality_gap(lp: LinearProgram, out: Optimal) -> Fraction:
    sign = 1 if lp.sense is Sense.MAX else -1
    primal = sign * _row_value(lp.objective, out.assignment)
    dual = sum((c.rhs * yi for c, yi in zip(lp.constraints, out.duals)), Fraction(0))
    return dual - primal


def verify(lp: LinearProgram, out) -> None:
    """Raise :class:`CertificateError` unless ``out`` is certified."""
    sign = 1 if lp.sense is Sense.MAX else -1
    cost = {v: sign * Fraction(lp.objective.get(v, 0)) for v in lp.variables}
    if isinstance(out, Optimal):
        if not is_feasible(lp, out.assignment):
            raise CertificateError("returned point is infeasible")
        if _row_value(lp.objective, out.assignment) != out.value:
            raise CertificateError("objective value mismatch")
        if not _signs_ok(lp, out.duals):
            raise CertificateError("dual sign violation")
        aty = _aty(lp, out.duals)
        if any(aty[v] < cost[v] for v in lp.variables):
            raise CertificateError("dual infeasible")
        if duality_gap(lp, out) != 0:
            raise CertificateError("nonzero duality gap")
    elif isinstance(out, Infeasible):
        y = out.certificate
        if not _signs_ok(lp, y):
            raise CertificateError("Farkas sign violation")
        if any(v < 0 for v in _aty(lp, y).values()):
            raise CertificateError("Farkas vector not dual-feasible")
        if sum((c.rhs * yi for c, yi in zip(lp.constraints, y)), Fraction(0)) >= 0:
            raise CertificateError("Farkas vector does not separate")
    elif isinstance(out, Unbounded):
        d = out.ray
        if any(d[v] < 0 for v in lp.variables):
            raise CertificateError("ray leaves the orthant")
        for c in lp.constraints:
            lhs = _row_value(c.coeffs, d)
            if (c.relation == LE and lhs > 0) or (c.relation == GE and lhs < 0) or (c.relation == EQ and lhs != 0):
                raise CertificateError("ray violates a row")
        if sum((cost[v] * d[v] for v in lp.variables), Fraction(0)) <= 0:
            raise CertificateError("ray does not improve the objective")
    else:
        raise CertificateError(f"unknown outcome {out!r}")
