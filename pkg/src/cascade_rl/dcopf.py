"""Corrective redispatch: PTDF construction, LP assembly with an
action-scaled flow band, and the dispatch wrapper around the simplex core.

The decision variables are generator injections followed by load injections
in the sign convention of the underlying optimization (loads are negative
injections bounded by [-demand, 0]); ``run_dcopf`` translates back to
consumption-positive quantities. Flow variables never appear: the linear
flow map is substituted directly into the band constraints.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .net_model import Network
from .pf import DisconnectedNetworkError
from .simplex import FEAS_TOL, LpProblem, LpSolution, solve_lp

__all__ = [
    "Ptdf",
    "DispatchResult",
    "build_ptdf",
    "assemble_lp",
    "run_dcopf",
    "ALPHA_MIN",
    "ALPHA_MAX",
]

ALPHA_MIN = 0.8
ALPHA_MAX = 1.25
_PTDF_CACHE_SIZE = 128


@dataclass(frozen=True)
class Ptdf:
    """Branch x bus sensitivities; the slack column is identically zero.

    Rows follow net.branches positions (out-of-service rows are zero),
    columns follow net.buses positions.
    """

    matrix: np.ndarray
    slack: int  # bus id


@dataclass
class DispatchResult:
    feasible: bool
    p_gen: np.ndarray  # per-generator output, net.generators order
    p_load_served: np.ndarray  # per-load served demand, >= 0
    shed_total: float
    objective: float
    alpha_used: float


def build_ptdf(net: Network, slack: int | None = None) -> Ptdf:
    """Injection-to-flow sensitivity matrix for the in-service topology."""
    slack = net.slack_bus if slack is None else slack
    n = net.n_bus
    idx = net.bus_index
    if slack not in idx:
        raise ValueError(f"slack bus {slack} not in network")
    s = idx[slack]

    b = np.zeros((n, n))
    incid = []  # (branch position, f, t, 1/x)
    for pos, br in enumerate(net.branches):
        if not br.in_service:
            continue
        f, t = idx[br.from_bus], idx[br.to_bus]
        w = 1.0 / br.x
        b[f, f] += w
        b[t, t] += w
        b[f, t] -= w
        b[t, f] -= w
        incid.append((pos, f, t, w))

    keep = [i for i in range(n) if i != s]
    theta = np.zeros((n, n))  # response of angles to unit injections
    if keep:
        b_red = b[np.ix_(keep, keep)]
        try:
            inv = np.linalg.inv(b_red)
        except np.linalg.LinAlgError:
            raise DisconnectedNetworkError(
                "singular susceptance matrix; run retain_slack_island first"
            ) from None
        if not np.all(np.isfinite(inv)) or (
            np.max(np.abs(b_red @ inv - np.eye(len(keep)))) > 1e-6
        ):
            raise DisconnectedNetworkError(
                "singular susceptance matrix; run retain_slack_island first"
            )
        theta[np.ix_(keep, keep)] = inv

    mat = np.zeros((len(net.branches), n))
    for pos, f, t, w in incid:
        mat[pos] = w * (theta[f] - theta[t])
    mat[:, s] = 0.0
    return Ptdf(matrix=mat, slack=slack)


# PTDF reuse across generations that share a topology
_ptdf_cache: OrderedDict[tuple, Ptdf] = OrderedDict()


def _topology_sig(net: Network) -> tuple:
    return (
        tuple(b.id for b in net.buses),
        tuple(
            (br.key, br.from_bus, br.to_bus, br.x)
            for br in net.branches
            if br.in_service
        ),
    )


def cached_ptdf(net: Network) -> Ptdf:
    sig = _topology_sig(net)
    hit = _ptdf_cache.get(sig)
    if hit is not None:
        _ptdf_cache.move_to_end(sig)
        return hit
    ptdf = build_ptdf(net)
    _ptdf_cache[sig] = ptdf
    if len(_ptdf_cache) > _PTDF_CACHE_SIZE:
        _ptdf_cache.popitem(last=False)
    return ptdf


def assemble_lp(net: Network, ptdf: Ptdf, alpha: float) -> LpProblem:
    """Build the redispatch LP at flow limits alpha * rate.

    Variables: in-service generator injections, then in-service load
    injections in [-demand, 0]. The constant that turns the shedding term
    into a nonnegative cost lands in cost_offset.
    """
    if not (ALPHA_MIN - 1e-12 <= alpha <= ALPHA_MAX + 1e-12):
        raise ValueError(f"alpha {alpha} outside [{ALPHA_MIN}, {ALPHA_MAX}]")
    idx = net.bus_index
    gens = [g for g in net.generators if g.in_service]
    loads = [ld for ld in net.loads if ld.in_service]
    n = len(gens) + len(loads)

    cost = np.empty(n)
    lower = np.empty(n)
    upper = np.empty(n)
    offset = 0.0
    cols = np.empty(n, dtype=int)  # bus position per variable
    for j, g in enumerate(gens):
        cost[j] = g.cost
        lower[j] = g.p_min
        upper[j] = g.p_max
        cols[j] = idx[g.bus]
    for j, ld in enumerate(loads):
        k = len(gens) + j
        cost[k] = ld.shed_cost  # d_j * p_j with p_j = -served
        lower[k] = -ld.p_demand
        upper[k] = 0.0
        offset += ld.shed_cost * ld.p_demand
        cols[k] = idx[ld.bus]

    a_eq = np.ones((1, n))
    b_eq = np.zeros(1)

    in_service = [pos for pos, br in enumerate(net.branches) if br.in_service]
    a_ineq = ptdf.matrix[np.ix_(in_service, cols)]
    limits = np.array([alpha * net.branches[pos].rate for pos in in_service])

    return LpProblem(
        cost=cost,
        lower=lower,
        upper=upper,
        a_eq=a_eq,
        b_eq=b_eq,
        a_ineq=a_ineq,
        ineq_lower=-limits,
        ineq_upper=limits,
        cost_offset=offset,
    )


def _to_dispatch(net: Network, lp_x: np.ndarray, objective: float, alpha: float) -> DispatchResult:
    gens = [g for g in net.generators if g.in_service]
    p_gen = np.zeros(net.n_gen)
    served = np.zeros(net.n_load)
    gi = 0
    for i, g in enumerate(net.generators):
        if g.in_service:
            p_gen[i] = lp_x[gi]
            gi += 1
    li = len(gens)
    shed = 0.0
    for j, ld in enumerate(net.loads):
        if ld.in_service:
            served[j] = min(max(-lp_x[li], 0.0), ld.p_demand)
            shed += ld.p_demand - served[j]
            li += 1
    return DispatchResult(
        feasible=True,
        p_gen=p_gen,
        p_load_served=served,
        shed_total=shed,
        objective=objective,
        alpha_used=alpha,
    )


def _infeasible(net: Network, alpha: float) -> DispatchResult:
    return DispatchResult(
        feasible=False,
        p_gen=np.zeros(net.n_gen),
        p_load_served=np.zeros(net.n_load),
        shed_total=net.total_demand(),
        objective=float("nan"),
        alpha_used=alpha,
    )


def run_dcopf(net: Network, alpha: float, lazy: bool = True) -> tuple[DispatchResult, LpSolution | None]:
    """Corrective redispatch at flow limits alpha * rate.

    Row generation keeps the working LP small: solve with the flow band
    omitted, add only the violated branches, repeat. A relaxation that is
    already infeasible certifies the full problem infeasible. Returns the
    dispatch plus the final LP solution (None on the early no-generator
    exit) so callers can audit optimality.
    """
    gens = [g for g in net.generators if g.in_service]
    loads = [ld for ld in net.loads if ld.in_service]
    if not gens:
        if loads:
            return _infeasible(net, alpha), None
        return (
            DispatchResult(
                feasible=True,
                p_gen=np.zeros(net.n_gen),
                p_load_served=np.zeros(net.n_load),
                shed_total=0.0,
                objective=0.0,
                alpha_used=alpha,
            ),
            None,
        )

    ptdf = cached_ptdf(net)
    lp = assemble_lp(net, ptdf, alpha)

    if not lazy:
        sol = solve_lp(lp)
        if sol.status != "optimal":
            return _infeasible(net, alpha), sol
        return _to_dispatch(net, sol.x, sol.objective, alpha), sol

    m = lp.a_ineq.shape[0]
    active: list[int] = []
    for _round in range(m + 1):
        sub = LpProblem(
            cost=lp.cost,
            lower=lp.lower,
            upper=lp.upper,
            a_eq=lp.a_eq,
            b_eq=lp.b_eq,
            a_ineq=lp.a_ineq[active] if active else np.zeros((0, lp.n_var)),
            ineq_lower=lp.ineq_lower[active] if active else np.zeros(0),
            ineq_upper=lp.ineq_upper[active] if active else np.zeros(0),
            cost_offset=lp.cost_offset,
        )
        sol = solve_lp(sub)
        if sol.status != "optimal":
            return _infeasible(net, alpha), sol
        flows = lp.a_ineq @ sol.x
        viol = np.flatnonzero(
            (flows > lp.ineq_upper + 5 * FEAS_TOL)
            | (flows < lp.ineq_lower - 5 * FEAS_TOL)
        )
        new = [int(i) for i in viol if i not in active]
        if not new:
            # expand duals back to the full band for auditability
            y_full = np.zeros(m)
            for pos, row in enumerate(active):
                y_full[row] = sol.y_ineq[pos]
            sol.y_ineq = y_full
            return _to_dispatch(net, sol.x, sol.objective, alpha), sol
        active.extend(new)
        active.sort()
    raise RuntimeError("row generation failed to settle")  # pragma: no cover
