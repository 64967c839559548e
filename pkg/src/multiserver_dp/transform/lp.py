"""Small dense two-phase simplex over ``fractions.Fraction``.

Meant for desk-scale programs (a few hundred variables) where the answer has
to be exact.  Dantzig pricing with a switch to Bland's rule once a run of
degenerate pivots shows up, which rules out cycling.
"""
from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

_DEGENERATE_STREAK = 50


@dataclass
class LPResult:
    status: str            # "optimal" | "infeasible" | "unbounded"
    x: list | None
    objective: Fraction | None
    pivots: int


class _Tableau:
    def __init__(self, rows: list, basis: list):
        self.rows = rows          # each row: coefficients + [rhs]
        self.basis = basis
        self.pivots = 0

    def pivot(self, r: int, s: int, cost: list):
        row = self.rows[r]
        piv = row[s]
        if piv != 1:
            row = [v / piv for v in row]
            self.rows[r] = row
        nz = [j for j, v in enumerate(row) if v]
        for i, other in enumerate(self.rows):
            if i != r:
                f = other[s]
                if f:
                    for j in nz:
                        other[j] -= f * row[j]
        f = cost[s]
        if f:
            for j in nz:
                cost[j] -= f * row[j]
        self.basis[r] = s
        self.pivots += 1

    def run(self, cost: list, allowed: int) -> str:
        """Minimise; ``cost`` is the reduced-cost row (last entry = -objective)."""
        degenerate = 0
        while True:
            candidates = [j for j in range(allowed) if cost[j] < 0]
            if not candidates:
                return "optimal"
            if degenerate >= _DEGENERATE_STREAK:
                s = candidates[0]
            else:
                s = min(candidates, key=lambda j: (cost[j], j))
            best, r = None, None
            for i, row in enumerate(self.rows):
                a = row[s]
                if a > 0:
                    ratio = row[-1] / a
                    if best is None or ratio < best or (ratio == best and self.basis[i] < self.basis[r]):
                        best, r = ratio, i
            if r is None:
                return "unbounded"
            degenerate = degenerate + 1 if best == 0 else 0
            self.pivot(r, s, cost)


def linprog_exact(c: Sequence, A_ub: Sequence[Sequence] = (), b_ub: Sequence = (),
                  A_eq: Sequence[Sequence] = (), b_eq: Sequence = ()) -> LPResult:
    """Minimise ``c @ x`` subject to ``A_ub x <= b_ub``, ``A_eq x = b_eq``, ``x >= 0``."""
    nvar = len(c)
    rows_tree = [(list(map(Fraction, a)), Fraction(b), "le") for a, b in zip(A_ub, b_ub)]
    rows_tree += [(list(map(Fraction, a)), Fraction(b), "eq") for a, b in zip(A_eq, b_eq)]
    n_slack = sum(1 for _, _, kind in rows_tree if kind == "le")
    # artificial variables for every row whose slack cannot start in the basis
    needs_art = []
    for a, b, kind in rows_tree:
        needs_art.append(kind == "eq" or b < 0)
    n_art = sum(needs_art)
    width = nvar + n_slack + n_art
    rows, basis = [], []
    si, ai = nvar, nvar + n_slack
    for (a, b, kind), art in zip(rows_tree, needs_art):
        row = a + [Fraction(0)] * (n_slack + n_art) + [b]
        slack_col = None
        if kind == "le":
            slack_col = si
            row[si] = Fraction(1)
            si += 1
        if b < 0:
            row = [-v for v in row]
        if art:
            row[ai] = Fraction(1)
            basis.append(ai)
            ai += 1
        else:
            basis.append(slack_col)
        rows.append(row)
    tab = _Tableau(rows, basis)

    if n_art:
        cost = [Fraction(0)] * (width + 1)
        for i, b in enumerate(basis):
            if b >= nvar + n_slack:
                for j in range(width + 1):
                    cost[j] -= rows[i][j]
        for j in range(nvar + n_slack, width):
            cost[j] = Fraction(0)
        tab.run(cost, width)
        if -cost[-1] != 0:
            return LPResult("infeasible", None, None, tab.pivots)
        # drive zero-level artificials out of the basis; drop redundant rows
        keep = []
        for i in range(len(tab.rows)):
            if tab.basis[i] >= nvar + n_slack:
                col = next((j for j in range(nvar + n_slack) if tab.rows[i][j] != 0), None)
                if col is None:
                    continue
                tab.pivot(i, col, [Fraction(0)] * (width + 1))
            keep.append(i)
        tab.rows = [tab.rows[i] for i in keep]
        tab.basis = [tab.basis[i] for i in keep]

    allowed = nvar + n_slack
    cost = [Fraction(v) for v in c] + [Fraction(0)] * (width - nvar) + [Fraction(0)]
    for i, b in enumerate(tab.basis):
        cb = cost[b]
        if cb:
            row = tab.rows[i]
            for j in range(width + 1):
                if row[j]:
                    cost[j] -= cb * row[j]
    status = tab.run(cost, allowed)
    if status != "optimal":
        return LPResult(status, None, None, tab.pivots)
    x = [Fraction(0)] * width
    for i, b in enumerate(tab.basis):
        x[b] = tab.rows[i][-1]
    x = x[:nvar]
    return LPResult("optimal", x, sum(Fraction(ci) * xi for ci, xi in zip(c, x)), tab.pivots)
