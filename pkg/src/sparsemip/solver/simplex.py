"""Bounded-variable primal simplex for the LP relaxations.

Two-phase method: rows whose slack starts outside its range get a signed
artificial column, phase 1 drives the artificial sum to zero, phase 2
optimizes the real objective.  The basis inverse is kept explicitly and
updated per pivot (product form), with periodic refactorization.  Pricing is
Dantzig (most violated reduced cost) and switches to Bland's smallest-index
rule after 5 * (rows + columns) consecutive degenerate pivots, switching back
once progress resumes.

Tolerances: primal feasibility 1e-7, reduced-cost optimality 1e-9.  These
dominate the 1e-6 interval slack the encoder bakes into big-M constants.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..milp import GE, LE, MilpModel

__all__ = ["LpResult", "PreparedLp", "solve_lp", "FEAS_TOL", "OPT_TOL"]

FEAS_TOL = 1e-7
OPT_TOL = 1e-9

_AT_LOWER = 0
_AT_UPPER = 1
_FREE = 2
_BASIC = 3

_REFACTOR_EVERY = 64
_PIVOT_TOL = 1e-9
_DEGEN_TOL = 1e-10


@dataclass
class LpResult:
    """Outcome of one LP solve; ``x`` holds structural variable values."""

    status: str  # "optimal" | "infeasible" | "unbounded" | "numeric_failure"
    x: Optional[np.ndarray] = None
    objective: Optional[float] = None
    iterations: int = 0


class PreparedLp:
    """Constraint arrays extracted once from a model, reusable across re-solves.

    Re-solves take per-variable bound overlays, which is how branch-and-bound
    fixes binaries without touching the model.
    """

    def __init__(self, model: MilpModel):
        A, rel, b = model.dense_constraints()
        self.m, self.n = A.shape
        self.c = model.objective_vector()
        self.lo = model.lower_bounds()
        self.hi = model.upper_bounds()
        # slack bounds realize the row sense: <= gives s in [0, inf),
        # >= gives s in (-inf, 0], = pins s at zero
        slack_lo = np.empty(self.m)
        slack_hi = np.empty(self.m)
        for i, r in enumerate(rel):
            if r == LE:
                slack_lo[i], slack_hi[i] = 0.0, np.inf
            elif r == GE:
                slack_lo[i], slack_hi[i] = -np.inf, 0.0
            else:
                slack_lo[i], slack_hi[i] = 0.0, 0.0
        self.slack_lo = slack_lo
        self.slack_hi = slack_hi
        self.b = b
        self.cols = np.hstack([A, np.eye(self.m)]) if self.m else A.reshape(0, self.n)

    def solve(self, lo_overlay=None, hi_overlay=None) -> LpResult:
        lo = self.lo if lo_overlay is None else lo_overlay
        hi = self.hi if hi_overlay is None else hi_overlay
        return _simplex(self, lo, hi)


def solve_lp(model: MilpModel, bounds_overlay: Optional[dict] = None) -> LpResult:
    """Solve the LP relaxation (binaries relaxed to their [0, 1] bounds).

    ``bounds_overlay`` maps variable index to a (lo, hi) pair that replaces
    the declared bounds for this solve only.
    """
    prep = PreparedLp(model)
    lo = prep.lo.copy()
    hi = prep.hi.copy()
    if bounds_overlay:
        for idx, (l, h) in bounds_overlay.items():
            lo[idx] = l
            hi[idx] = h
    return prep.solve(lo, hi)


def _start_value(lo, hi):
    v = np.zeros(lo.shape[0])
    finite_lo = np.isfinite(lo)
    v[finite_lo] = lo[finite_lo]
    only_hi = ~finite_lo & np.isfinite(hi)
    v[only_hi] = hi[only_hi]
    return v


class _Tableau:
    """Mutable simplex state over the column matrix [A | slacks | artificials]."""

    def __init__(self, prep: PreparedLp, lo_struct, hi_struct):
        m, n = prep.m, prep.n
        if np.any(lo_struct > hi_struct):
            raise _InfeasibleBounds()
        self.m = m
        self.lo = np.concatenate([lo_struct, prep.slack_lo])
        self.hi = np.concatenate([hi_struct, prep.slack_hi])
        self.cols = prep.cols
        self.b = prep.b

        x = np.empty(n + m)
        x[:n] = _start_value(lo_struct, hi_struct)
        residual = prep.b - prep.cols[:, :n] @ x[:n] if m else np.zeros(0)

        self.status = np.full(n + m, _AT_LOWER, dtype=np.int8)
        at_upper = ~np.isfinite(self.lo[:n]) & np.isfinite(self.hi[:n])
        self.status[:n][at_upper] = _AT_UPPER
        self.status[:n][~np.isfinite(self.lo[:n]) & ~np.isfinite(self.hi[:n])] = _FREE

        # rows whose slack value fits its range keep the slack basic; the rest
        # get a signed artificial so the starting basis is feasible
        art_cols = []
        art_rows = []
        basis = np.empty(m, dtype=np.int64)
        x_b = np.empty(m)
        for i in range(m):
            s = residual[i]
            if self.lo[n + i] - FEAS_TOL <= s <= self.hi[n + i] + FEAS_TOL:
                basis[i] = n + i
                x_b[i] = s
                self.status[n + i] = _BASIC
            else:
                bound = self.hi[n + i] if s > self.hi[n + i] else self.lo[n + i]
                x[n + i] = bound
                self.status[n + i] = (
                    _AT_UPPER if s > self.hi[n + i] else _AT_LOWER
                )
                sigma = 1.0 if s - bound > 0 else -1.0
                art_rows.append(i)
                art_cols.append(sigma)
                basis[i] = n + m + len(art_rows) - 1
                x_b[i] = abs(s - bound)
        self.n_art = len(art_rows)
        if self.n_art:
            art = np.zeros((m, self.n_art))
            for k, (r, sgn) in enumerate(zip(art_rows, art_cols)):
                art[r, k] = sgn
            self.cols = np.hstack([self.cols, art])
            self.lo = np.concatenate([self.lo, np.zeros(self.n_art)])
            self.hi = np.concatenate([self.hi, np.full(self.n_art, np.inf)])
            self.status = np.concatenate(
                [self.status, np.full(self.n_art, _BASIC, dtype=np.int8)]
            )
            x = np.concatenate([x, np.zeros(self.n_art)])
        self.x = x
        self.basis = basis
        self.x[basis] = x_b
        self.binv = None
        self.pivots_since_refactor = 0
        self.refactor()

    @property
    def n_total(self) -> int:
        return self.cols.shape[1]

    def refactor(self):
        B = self.cols[:, self.basis]
        try:
            self.binv = np.linalg.inv(B)
        except np.linalg.LinAlgError as exc:
            raise _NumericFailure("singular basis") from exc
        self.pivots_since_refactor = 0
        self.x[self.basis] = self.binv @ (
            self.b - self._nonbasic_contribution()
        )

    def _nonbasic_contribution(self):
        nb = np.flatnonzero(self.status != _BASIC)
        nbv = self.x[nb]
        used = nbv != 0.0
        if not used.any():
            return np.zeros(self.m)
        return self.cols[:, nb[used]] @ nbv[used]

    def pivot_update(self, row, d):
        piv = d[row]
        self.binv[row] /= piv
        others = np.arange(self.m) != row
        self.binv[others] -= np.outer(d[others], self.binv[row])
        self.pivots_since_refactor += 1


class _InfeasibleBounds(Exception):
    pass


class _NumericFailure(Exception):
    def __init__(self, message):
        self.message = message


def _run_phase(tab: _Tableau, cost, iter_cap, counter):
    """Iterate to optimality of ``cost``; returns 'optimal' or 'unbounded'."""
    bland_after = 5 * (tab.m + tab.n_total)
    consec_degen = 0
    bland = False
    while True:
        counter[0] += 1
        if counter[0] > iter_cap:
            raise _NumericFailure("iteration cap exceeded")
        if tab.pivots_since_refactor >= _REFACTOR_EVERY:
            tab.refactor()
        y = cost[tab.basis] @ tab.binv
        rc = cost - y @ tab.cols
        stat = tab.status
        can_enter = (
            ((stat == _AT_LOWER) & (rc > OPT_TOL))
            | ((stat == _AT_UPPER) & (rc < -OPT_TOL))
            | ((stat == _FREE) & (np.abs(rc) > OPT_TOL))
        )
        candidates = np.flatnonzero(can_enter)
        if candidates.size == 0:
            return "optimal"
        if bland:
            j = int(candidates[0])
        else:
            j = int(candidates[np.argmax(np.abs(rc[candidates]))])
        direction = 1.0 if (stat[j] == _AT_LOWER or (stat[j] == _FREE and rc[j] > 0)) else -1.0

        d = tab.binv @ tab.cols[:, j]
        # basic values move as x_B - t * direction * d; find the blocking step
        x_b = tab.x[tab.basis]
        lo_b = tab.lo[tab.basis]
        hi_b = tab.hi[tab.basis]
        step = direction * d
        ratios = np.full(tab.m, np.inf)
        dec = step > _PIVOT_TOL
        if dec.any():
            ratios[dec] = (x_b[dec] - lo_b[dec]) / step[dec]
        inc = step < -_PIVOT_TOL
        if inc.any():
            ratios[inc] = (x_b[inc] - hi_b[inc]) / step[inc]
        ratios = np.maximum(ratios, 0.0)
        t_own = tab.hi[j] - tab.lo[j] if stat[j] != _FREE else np.inf
        t_rows = ratios.min() if tab.m else np.inf
        t = min(t_rows, t_own)
        if not np.isfinite(t):
            return "unbounded"

        if t_own <= t_rows:
            # bound-to-bound flip, no basis change
            tab.x[j] = tab.hi[j] if stat[j] == _AT_LOWER else tab.lo[j]
            tab.status[j] = _AT_UPPER if stat[j] == _AT_LOWER else _AT_LOWER
            tab.x[tab.basis] = x_b - t_own * step
            consec_degen = consec_degen + 1 if t_own <= _DEGEN_TOL else 0
        else:
            if bland:
                hit = np.flatnonzero(ratios <= t)
                row = int(hit[np.argmin(tab.basis[hit])])
            else:
                band = t + 1e-9 + 1e-7 * abs(t)
                hit = np.flatnonzero(ratios <= band)
                row = int(hit[np.argmax(np.abs(step[hit]))])
                t = ratios[row]
            if abs(d[row]) < _PIVOT_TOL:
                tab.refactor()
                continue
            leaving = tab.basis[row]
            tab.x[tab.basis] = x_b - t * step
            tab.x[j] = tab.x[j] + direction * t
            tab.x[leaving] = lo_b[row] if step[row] > 0 else hi_b[row]
            tab.status[leaving] = _AT_LOWER if step[row] > 0 else _AT_UPPER
            tab.status[j] = _BASIC
            tab.basis[row] = j
            tab.pivot_update(row, d)
            consec_degen = consec_degen + 1 if t <= _DEGEN_TOL else 0
        if consec_degen > bland_after:
            bland = True
        elif consec_degen == 0:
            bland = False


def _simplex(prep: PreparedLp, lo_struct, hi_struct) -> LpResult:
    try:
        tab = _Tableau(prep, lo_struct, hi_struct)
    except _InfeasibleBounds:
        return LpResult("infeasible")
    except _NumericFailure as exc:
        return LpResult("numeric_failure", iterations=0)

    n, m = prep.n, prep.m
    iter_cap = 50 * (m + tab.n_total) + 1000
    counter = [0]
    try:
        if tab.n_art:
            phase1 = np.zeros(tab.n_total)
            phase1[n + m :] = -1.0
            outcome = _run_phase(tab, phase1, iter_cap, counter)
            art_sum = float(np.sum(tab.x[n + m :]))
            if outcome != "optimal" or art_sum > FEAS_TOL * max(
                1.0, float(np.max(np.abs(prep.b), initial=0.0))
            ):
                return LpResult("infeasible", iterations=counter[0])
            # artificials are pinned at zero for phase 2
            tab.hi[n + m :] = 0.0
            tab.x[n + m :][tab.status[n + m :] != _BASIC] = 0.0
        cost = np.zeros(tab.n_total)
        cost[:n] = prep.c
        outcome = _run_phase(tab, cost, iter_cap, counter)
    except _NumericFailure:
        return LpResult("numeric_failure", iterations=counter[0])
    if outcome == "unbounded":
        return LpResult("unbounded", iterations=counter[0])

    x = tab.x[:n].copy()
    if m:
        residual = prep.cols[:, : n + m] @ tab.x[: n + m] - prep.b
        scale = max(1.0, float(np.max(np.abs(prep.b), initial=0.0)))
        if float(np.max(np.abs(residual), initial=0.0)) > 10 * FEAS_TOL * scale:
            return LpResult("numeric_failure", iterations=counter[0])
    if np.any(x < lo_struct - 1e-6) or np.any(x > hi_struct + 1e-6):
        return LpResult("numeric_failure", iterations=counter[0])
    return LpResult(
        "optimal",
        x=x,
        objective=float(prep.c @ x),
        iterations=counter[0],
    )
