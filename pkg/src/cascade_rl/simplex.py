"""Dense bounded-variable revised simplex with a two-phase start.

Geared to redispatch problems of a few hundred variables: explicit basis
inverse with product-form updates, periodic refactorization, Dantzig pricing
with an automatic switch to Bland's rule when the objective stalls.

Two-sided inequality rows are handled by ranged slack variables, so the
core only ever sees ``A z = b`` with elementwise bounds on ``z``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "LpProblem",
    "LpSolution",
    "KktReport",
    "SimplexError",
    "SimplexIterationError",
    "SimplexNumericalError",
    "solve_lp",
    "check_kkt",
    "FEAS_TOL",
    "PIVOT_TOL",
]

FEAS_TOL = 1e-7
PIVOT_TOL = 1e-9
_REFACTOR_EVERY = 64
_STALL_LIMIT = 500  # iterations without improvement before Bland's rule


class SimplexError(RuntimeError):
    pass


class SimplexIterationError(SimplexError):
    """Iteration cap hit; numerical trouble, distinct from infeasibility."""


class SimplexNumericalError(SimplexError):
    """Basis matrix became numerically singular."""


@dataclass
class LpProblem:
    """min c.x + cost_offset  s.t.  a_eq x = b_eq,
    ineq_lower <= a_ineq x <= ineq_upper,  lower <= x <= upper."""

    cost: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    a_eq: np.ndarray
    b_eq: np.ndarray
    a_ineq: np.ndarray
    ineq_lower: np.ndarray
    ineq_upper: np.ndarray
    cost_offset: float = 0.0

    def __post_init__(self):
        self.cost = np.asarray(self.cost, dtype=float)
        n = self.cost.size
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        self.a_eq = np.asarray(self.a_eq, dtype=float).reshape(-1, n)
        self.b_eq = np.asarray(self.b_eq, dtype=float)
        self.a_ineq = np.asarray(self.a_ineq, dtype=float).reshape(-1, n)
        self.ineq_lower = np.asarray(self.ineq_lower, dtype=float)
        self.ineq_upper = np.asarray(self.ineq_upper, dtype=float)
        if np.any(self.lower > self.upper + 1e-12):
            raise ValueError("lower bound exceeds upper bound")
        if self.a_eq.shape[0] != self.b_eq.size:
            raise ValueError("a_eq/b_eq row mismatch")
        if self.a_ineq.shape[0] != self.ineq_lower.size or (
            self.ineq_lower.size != self.ineq_upper.size
        ):
            raise ValueError("a_ineq band row mismatch")

    @property
    def n_var(self) -> int:
        return self.cost.size


@dataclass
class LpSolution:
    status: str  # "optimal" | "infeasible"
    x: np.ndarray
    objective: float
    y_eq: np.ndarray
    y_ineq: np.ndarray
    reduced_costs: np.ndarray
    iterations: int
    phase1_residual: float = 0.0


@dataclass
class KktReport:
    primal_residual: float
    dual_residual: float
    comp_slack_residual: float
    passed: bool
    worst: str = ""


# ---------------------------------------------------------------------------
# core
# ---------------------------------------------------------------------------


class _Core:
    def __init__(self, a, b, lo, up, n_struct):
        self.a = a
        self.b = b
        self.lo = lo
        self.up = up
        self.m, self.n = a.shape
        self.n_struct = n_struct  # structural vars; the rest are artificials
        self.x = np.where(np.isfinite(lo), lo, 0.0)
        self.at_upper = np.zeros(self.n, dtype=bool)
        self.in_basis = np.zeros(self.n, dtype=bool)
        self.basis = np.zeros(self.m, dtype=int)
        self.b_inv = np.eye(self.m)
        self.iterations = 0

    def set_basis(self, basis):
        self.basis = np.asarray(basis, dtype=int)
        self.in_basis[:] = False
        self.in_basis[self.basis] = True
        self._refactor()

    def _refactor(self):
        mat = self.a[:, self.basis]
        try:
            self.b_inv = np.linalg.inv(mat)
        except np.linalg.LinAlgError:
            raise SimplexNumericalError("singular basis") from None
        # resettle basic values from the nonbasic point to kill drift
        xn = self.x.copy()
        xn[self.basis] = 0.0
        rhs = self.b - self.a @ xn
        self.x[self.basis] = self.b_inv @ rhs

    def minimize(self, c: np.ndarray, max_iter: int) -> None:
        best = np.inf
        stall = 0
        bland = False
        since_refactor = 0
        movable = (self.up - self.lo) > PIVOT_TOL
        while True:
            if self.iterations >= max_iter:
                raise SimplexIterationError(
                    f"simplex iteration limit {max_iter} exceeded"
                )
            y = c[self.basis] @ self.b_inv
            d = c - y @ self.a
            free = ~self.in_basis & movable
            cand = free & (
                (~self.at_upper & (d < -PIVOT_TOL))
                | (self.at_upper & (d > PIVOT_TOL))
            )
            if not cand.any():
                return
            if bland:
                e = int(np.argmax(cand))  # first eligible index
            else:
                e = int(np.argmax(np.where(cand, np.abs(d), -1.0)))
            sigma = -1.0 if self.at_upper[e] else 1.0
            w = self.b_inv @ self.a[:, e]

            # ratio test: entering moves by t >= 0, basics follow -sigma*t*w
            swi = sigma * w
            xb = self.x[self.basis]
            t = np.full(self.m, np.inf)
            pos = swi > PIVOT_TOL
            neg = swi < -PIVOT_TOL
            if pos.any():
                t[pos] = (xb[pos] - self.lo[self.basis[pos]]) / swi[pos]
            if neg.any():
                t[neg] = (self.up[self.basis[neg]] - xb[neg]) / (-swi[neg])
            np.maximum(t, 0.0, out=t)  # clip tiny negative drift
            flip = self.up[e] - self.lo[e]
            tmin = float(t.min()) if self.m else np.inf

            self.iterations += 1
            if flip <= tmin + PIVOT_TOL:
                if not np.isfinite(flip):
                    raise SimplexNumericalError(
                        "unbounded direction in bounded LP"
                    )
                # bound flip: e runs to its opposite bound, basis unchanged
                self.x[self.basis] = xb - sigma * flip * w
                self.x[e] = self.up[e] if not self.at_upper[e] else self.lo[e]
                self.at_upper[e] = not self.at_upper[e]
            else:
                near = t <= tmin + PIVOT_TOL
                rows = np.flatnonzero(near)
                leave = int(rows[np.argmin(self.basis[rows])])
                piv = w[leave]
                if abs(piv) < PIVOT_TOL:
                    raise SimplexNumericalError("zero pivot")
                start = self.up[e] if self.at_upper[e] else self.lo[e]
                self.x[self.basis] = xb - sigma * tmin * w
                lv = int(self.basis[leave])
                to_upper = bool(neg[leave])
                self.x[lv] = self.up[lv] if to_upper else self.lo[lv]
                self.at_upper[lv] = to_upper
                self.in_basis[lv] = False
                self.x[e] = start + sigma * tmin
                self.basis[leave] = e
                self.in_basis[e] = True
                row = self.b_inv[leave] / piv
                self.b_inv -= w[:, None] * row[None, :]
                self.b_inv[leave] = row
                since_refactor += 1
                if since_refactor >= _REFACTOR_EVERY:
                    self._refactor()
                    since_refactor = 0

            obj = float(c @ self.x)
            if obj < best - 1e-12:
                best = obj
                stall = 0
            else:
                stall += 1
                if stall > _STALL_LIMIT:
                    bland = True

    def pivot_out_artificials(self):
        """Degenerate pivots to clear artificials from the basis where possible."""
        for i in range(self.m):
            if self.basis[i] < self.n_struct:
                continue
            row = self.b_inv[i] @ self.a[:, : self.n_struct]
            row[self.in_basis[: self.n_struct]] = 0.0
            j = int(np.argmax(np.abs(row)))
            if abs(row[j]) <= 1e-8:
                continue  # redundant row; artificial stays pinned at 0
            art = int(self.basis[i])
            w = self.b_inv @ self.a[:, j]
            self.in_basis[art] = False
            self.at_upper[art] = False
            self.x[art] = 0.0
            self.basis[i] = j
            self.in_basis[j] = True
            piv = w[i]
            r = self.b_inv[i] / piv
            self.b_inv -= w[:, None] * r[None, :]
            self.b_inv[i] = r


def solve_lp(
    lp: LpProblem, max_iter: int | None = None, x0: np.ndarray | None = None
) -> LpSolution:
    """Two-phase bounded simplex.

    Returns status "optimal" with primal x, equality/band duals and
    reduced costs, or "infeasible" certified by the phase-1 residual.
    Raises SimplexIterationError / SimplexNumericalError on trouble.
    ``x0`` is an optional starting hint (clipped to bounds); a hint close
    to the optimum cuts the phase-1/phase-2 walk dramatically.
    """
    n = lp.n_var
    k = lp.a_eq.shape[0]
    m_in = lp.a_ineq.shape[0]
    m = k + m_in

    # ranged slacks convert the bands into equalities
    a = np.zeros((m, n + m_in + m))
    a[:k, :n] = lp.a_eq
    a[k:, :n] = lp.a_ineq
    if m_in:
        a[k:, n : n + m_in] = -np.eye(m_in)
    b = np.concatenate([lp.b_eq, np.zeros(m_in)])
    lo = np.concatenate([lp.lower, lp.ineq_lower])
    up = np.concatenate([lp.upper, lp.ineq_upper])

    if m == 0:
        # pure bound minimization
        x = np.where(lp.cost >= 0, lo, up)
        x = np.where(np.isfinite(x), x, 0.0)
        return LpSolution(
            status="optimal",
            x=x,
            objective=float(lp.cost @ x) + lp.cost_offset,
            y_eq=np.zeros(0),
            y_ineq=np.zeros(0),
            reduced_costs=lp.cost.copy(),
            iterations=0,
        )

    n_struct = n + m_in
    x0 = np.where(np.isfinite(lo), lo, 0.0)
    resid = b - a[:, :n_struct] @ x0
    sign = np.where(resid >= 0.0, 1.0, -1.0)
    a[:, n_struct:] = np.diag(sign)
    lo_full = np.concatenate([lo, np.zeros(m)])
    up_full = np.concatenate([up, np.full(m, np.inf)])

    core = _Core(a, b, lo_full, up_full, n_struct)
    core.x[:n_struct] = x0
    core.x[n_struct:] = np.abs(resid)
    core.set_basis(list(range(n_struct, n_struct + m)))

    if max_iter is None:
        max_iter = max(2000, 40 * (m + n_struct))

    c1 = np.zeros(n_struct + m)
    c1[n_struct:] = 1.0
    core.minimize(c1, max_iter)
    phase1 = float(np.sum(core.x[n_struct:]))
    if phase1 > FEAS_TOL:
        return LpSolution(
            status="infeasible",
            x=np.full(n, np.nan),
            objective=np.nan,
            y_eq=np.full(k, np.nan),
            y_ineq=np.full(m_in, np.nan),
            reduced_costs=np.full(n, np.nan),
            iterations=core.iterations,
            phase1_residual=phase1,
        )

    core.pivot_out_artificials()
    core.lo[n_struct:] = 0.0
    core.up[n_struct:] = 0.0
    core.x[n_struct:] = np.clip(core.x[n_struct:], 0.0, None)

    c2 = np.zeros(n_struct + m)
    c2[:n] = lp.cost
    core.minimize(c2, max_iter)
    core._refactor()  # tighten values before reporting

    x = core.x[:n].copy()
    y = c2[core.basis] @ core.b_inv
    reduced = lp.cost - (y @ a[:, :n])
    return LpSolution(
        status="optimal",
        x=x,
        objective=float(lp.cost @ x) + lp.cost_offset,
        y_eq=y[:k].copy(),
        y_ineq=y[k:].copy(),
        reduced_costs=reduced,
        iterations=core.iterations,
        phase1_residual=phase1,
    )


# ---------------------------------------------------------------------------
# optimality audit
# ---------------------------------------------------------------------------


def check_kkt(
    lp: LpProblem,
    x: np.ndarray,
    y_eq: np.ndarray,
    y_ineq: np.ndarray,
    tol: float = 1e-6,
) -> KktReport:
    """Audit primal feasibility, dual feasibility, and complementary
    slackness of a claimed optimum. Band duals follow the convention
    y > 0 binds the lower edge, y < 0 the upper edge."""
    x = np.asarray(x, float)
    act = 1e-7  # bound-activity tolerance

    primal = 0.0
    worst = ""
    if lp.a_eq.shape[0]:
        r = np.abs(lp.a_eq @ x - lp.b_eq)
        primal = float(np.max(r))
        if primal > tol:
            worst = f"equality row {int(np.argmax(r))} residual {primal:.2e}"
    bviol = np.maximum(lp.lower - x, x - lp.upper)
    if bviol.size and float(np.max(bviol)) > primal:
        primal = float(np.max(bviol))
        worst = f"variable {int(np.argmax(bviol))} bound violation {primal:.2e}"
    g = lp.a_ineq @ x if lp.a_ineq.shape[0] else np.zeros(0)
    if g.size:
        rviol = np.maximum(lp.ineq_lower - g, g - lp.ineq_upper)
        if float(np.max(rviol)) > primal:
            primal = float(np.max(rviol))
            worst = f"band row {int(np.argmax(rviol))} violation {primal:.2e}"

    # stationarity residual judged against each variable's bound status
    r = lp.cost.copy()
    if lp.a_eq.shape[0]:
        r -= lp.a_eq.T @ y_eq
    if lp.a_ineq.shape[0]:
        r -= lp.a_ineq.T @ y_ineq
    dual = 0.0
    for j in range(x.size):
        at_lo = x[j] <= lp.lower[j] + act
        at_up = x[j] >= lp.upper[j] - act
        if at_lo and at_up:
            continue  # fixed variable, any multiplier works
        if at_lo:
            v = max(0.0, -r[j])
        elif at_up:
            v = max(0.0, r[j])
        else:
            v = abs(r[j])
        if v > dual:
            dual = v
            if v > tol:
                worst = f"variable {j} reduced cost {r[j]:.2e} vs bounds"

    comp = 0.0
    for i in range(g.size):
        yp = max(y_ineq[i], 0.0)
        ym = max(-y_ineq[i], 0.0)
        c = max(yp * max(g[i] - lp.ineq_lower[i], 0.0),
                ym * max(lp.ineq_upper[i] - g[i], 0.0))
        if c > comp:
            comp = c
            if c > tol:
                worst = f"band row {i} dual {y_ineq[i]:.2e} not complementary"

    return KktReport(
        primal_residual=primal,
        dual_residual=dual,
        comp_slack_residual=comp,
        passed=(primal <= tol and dual <= tol and comp <= tol),
        worst=worst,
    )
