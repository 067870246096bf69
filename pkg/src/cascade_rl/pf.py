"""Power-flow kernels: complex nodal admittance, linear DC flow, and a full
Newton-Raphson AC solver in polar form.

AC non-convergence is returned as data (``converged=False``), never raised:
the cascade engine consumes divergence as its collapse signal. Every AC call
starts from a flat profile so results depend only on the inputs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np

from .net_model import Network

if TYPE_CHECKING:  # pragma: no cover
    from .dcopf import DispatchResult

__all__ = [
    "PfSolution",
    "InjectionVector",
    "DisconnectedNetworkError",
    "build_ybus",
    "dc_power_flow",
    "ac_power_flow",
    "NEWTON_TOL",
    "NEWTON_MAX_ITER",
]

NEWTON_TOL = 1e-6  # p.u. mismatch
NEWTON_MAX_ITER = 30
_QLIM_PASSES = 2  # extra PV->PQ re-type passes per call


class DisconnectedNetworkError(RuntimeError):
    """Singular network matrix; reduce with retain_slack_island first."""


@dataclass(frozen=True)
class InjectionVector:
    """Net nodal active injections (generation-positive), bus order."""

    p: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float))


@dataclass
class PfSolution:
    converged: bool
    iterations: int
    v: np.ndarray  # per-bus magnitude, p.u.
    theta: np.ndarray  # per-bus angle, rad
    p_inj: np.ndarray  # per-bus net active injection
    q_inj: np.ndarray  # per-bus net reactive injection
    flow_from: np.ndarray  # per-branch active power at from-end
    loading: np.ndarray  # |flow_from| / rate, 0 for out-of-service
    max_mismatch: float
    q_clamped: tuple[int, ...] = field(default=())  # bus ids forced PV->PQ


def build_ybus(net: Network) -> np.ndarray:
    """Complex nodal admittance matrix over net.buses order.

    Out-of-service branches contribute nothing; line charging is split
    half-and-half between the terminals.
    """
    n = net.n_bus
    idx = net.bus_index
    y = np.zeros((n, n), dtype=complex)
    for br in net.branches:
        if not br.in_service:
            continue
        if br.r == 0.0 and br.x == 0.0:
            raise ValueError(
                f"branch {br.from_bus}-{br.to_bus} has zero impedance"
            )
        f, t = idx[br.from_bus], idx[br.to_bus]
        ys = 1.0 / complex(br.r, br.x)
        sh = 0.5j * br.b_charge
        y[f, f] += ys + sh
        y[t, t] += ys + sh
        y[f, t] -= ys
        y[t, f] -= ys
    return y


def _susceptance(net: Network) -> tuple[np.ndarray, list[tuple[int, int, int, float]]]:
    """DC nodal susceptance matrix and (branch position, f, t, x) rows."""
    n = net.n_bus
    idx = net.bus_index
    b = np.zeros((n, n))
    rows = []
    for pos, br in enumerate(net.branches):
        if not br.in_service:
            continue
        f, t = idx[br.from_bus], idx[br.to_bus]
        w = 1.0 / br.x
        b[f, f] += w
        b[t, t] += w
        b[f, t] -= w
        b[t, f] -= w
        rows.append((pos, f, t, br.x))
    return b, rows


def dc_power_flow(
    net: Network, inj: InjectionVector | np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Solve B.theta = p with the slack angle pinned to zero.

    Returns (theta [rad], flow [p.u.] per branch position); out-of-service
    branches carry zero flow. Raises DisconnectedNetworkError when B is
    singular, i.e. the network is not a single island.
    """
    p = inj.p if isinstance(inj, InjectionVector) else np.asarray(inj, float)
    if p.shape != (net.n_bus,):
        raise ValueError(f"injection length {p.shape} != n_bus {net.n_bus}")
    b, rows = _susceptance(net)
    s = net.bus_index[net.slack_bus]
    keep = [i for i in range(net.n_bus) if i != s]
    theta = np.zeros(net.n_bus)
    if keep:
        b_red = b[np.ix_(keep, keep)]
        try:
            sol = np.linalg.solve(b_red, p[keep])
        except np.linalg.LinAlgError:
            raise DisconnectedNetworkError(
                "singular susceptance matrix; run retain_slack_island first"
            ) from None
        if not np.all(np.isfinite(sol)):
            raise DisconnectedNetworkError(
                "singular susceptance matrix; run retain_slack_island first"
            )
        # A disconnected island makes b_red singular, but LU may still return
        # garbage instead of raising; verify the residual.
        if np.max(np.abs(b_red @ sol - p[keep])) > 1e-6 * max(
            1.0, float(np.max(np.abs(p)))
        ):
            raise DisconnectedNetworkError(
                "singular susceptance matrix; run retain_slack_island first"
            )
        theta[keep] = sol
    flow = np.zeros(len(net.branches))
    for pos, f, t, x in rows:
        flow[pos] = (theta[f] - theta[t]) / x
    return theta, flow


# ---------------------------------------------------------------------------
# AC Newton-Raphson
# ---------------------------------------------------------------------------


def _bus_injections(net: Network, dispatch) -> tuple[np.ndarray, np.ndarray]:
    """Scheduled net injections per bus from a dispatch (gen minus load)."""
    n = net.n_bus
    idx = net.bus_index
    p = np.zeros(n)
    q = np.zeros(n)
    p_gen = np.asarray(dispatch.p_gen, dtype=float)
    served = np.asarray(dispatch.p_load_served, dtype=float)
    for i, g in enumerate(net.generators):
        if g.in_service:
            p[idx[g.bus]] += p_gen[i]
    for j, ld in enumerate(net.loads):
        if not ld.in_service:
            continue
        k = idx[ld.bus]
        p[k] -= served[j]
        # constant power factor: reactive demand scales with served fraction
        frac = served[j] / ld.p_demand if ld.p_demand > 0 else 0.0
        q[k] -= frac * ld.q_demand
    return p, q


def _gen_q_limits(net: Network) -> dict[int, tuple[float, float]]:
    lims: dict[int, tuple[float, float]] = {}
    for g in net.generators:
        if not g.in_service:
            continue
        lo, hi = lims.get(g.bus, (0.0, 0.0))
        lims[g.bus] = (lo + g.q_min, hi + g.q_max)
    return lims


def _newton(
    ybus: np.ndarray,
    v: np.ndarray,
    theta: np.ndarray,
    p_spec: np.ndarray,
    q_spec: np.ndarray,
    pv: list[int],
    pq: list[int],
    max_iter: int,
) -> tuple[bool, int, np.ndarray, np.ndarray, float]:
    """Polar NR on the mismatch equations; returns (ok, iters, v, theta, mm)."""
    pvpq = pv + pq
    n_pv, n_pq = len(pv), len(pq)
    iters = 0
    for iters in range(max_iter + 1):
        vc = v * np.exp(1j * theta)
        ibus = ybus @ vc
        s = vc * np.conj(ibus)
        dp = p_spec[pvpq] - s.real[pvpq]
        dq = q_spec[pq] - s.imag[pq]
        mm = float(np.max(np.abs(np.concatenate([dp, dq])))) if (pvpq or pq) else 0.0
        if not np.isfinite(mm):
            return False, iters, v, theta, float("inf")
        if mm < NEWTON_TOL:
            return True, iters, v, theta, mm
        if iters == max_iter:
            return False, iters, v, theta, mm
        # Jacobian blocks, matrix form: dS/d(theta) and dS/d(|V|)
        dvc = np.diag(vc)
        dib = np.diag(ibus)
        dvn = np.diag(vc / v)
        ds_dth = 1j * dvc @ np.conj(dib - ybus @ dvc)
        ds_dvm = dvc @ np.conj(ybus @ dvn) + np.conj(dib) @ dvn
        j11 = ds_dth.real[np.ix_(pvpq, pvpq)]
        j12 = ds_dvm.real[np.ix_(pvpq, pq)]
        j21 = ds_dth.imag[np.ix_(pq, pvpq)]
        j22 = ds_dvm.imag[np.ix_(pq, pq)]
        jac = np.block([[j11, j12], [j21, j22]])
        try:
            dx = np.linalg.solve(jac, np.concatenate([dp, dq]))
        except np.linalg.LinAlgError:
            return False, iters, v, theta, mm
        if not np.all(np.isfinite(dx)):
            return False, iters, v, theta, mm
        theta = theta.copy()
        v = v.copy()
        theta[pvpq] += dx[: n_pv + n_pq]
        v[pq] += dx[n_pv + n_pq :]
        if np.any(v <= 0):  # nonphysical; treat as divergence
            return False, iters + 1, v, theta, mm
    return False, iters, v, theta, mm  # pragma: no cover


def ac_power_flow(net: Network, dispatch: "DispatchResult") -> PfSolution:
    """Full AC power flow for a dispatched operating point, flat start.

    PV buses hold their setpoint voltage; buses whose aggregate generator
    reactive range is exhausted are re-typed to PQ at the violated limit
    (at most two re-type passes). Non-convergence within NEWTON_MAX_ITER
    iterations is reported in the solution, not raised.
    """
    n = net.n_bus
    idx = net.bus_index
    ybus = build_ybus(net)
    p_spec, q_spec = _bus_injections(net, dispatch)
    q_load = q_spec.copy()  # load part only; gen Q is implicit at PV buses

    has_gen = {g.bus for g in net.generators if g.in_service}
    kind = []
    for b in net.buses:
        k = b.kind
        if k == "pv" and b.id not in has_gen:
            k = "pq"  # PV bus without active generation behaves as load bus
        kind.append(k)

    slack = idx[net.slack_bus]
    v = np.ones(n)
    theta = np.zeros(n)
    for i, b in enumerate(net.buses):
        if kind[i] in ("pv", "slack"):
            v[i] = b.v_set

    q_lims = _gen_q_limits(net)
    clamped: list[int] = []
    total_iters = 0
    ok = False
    mm = float("inf")
    for _pass in range(_QLIM_PASSES + 1):
        pv = [i for i in range(n) if kind[i] == "pv"]
        pq = [i for i in range(n) if kind[i] == "pq"]
        ok, iters, v, theta, mm = _newton(
            ybus, v, theta, p_spec, q_spec, pv, pq, NEWTON_MAX_ITER
        )
        total_iters += iters
        if not ok or _pass == _QLIM_PASSES:
            break
        # reactive limit check on PV buses: Q_gen = Q_inj - Q_load
        vc = v * np.exp(1j * theta)
        q_inj = (vc * np.conj(ybus @ vc)).imag
        worst: list[tuple[int, float]] = []
        for i in pv:
            bus_id = net.buses[i].id
            lo, hi = q_lims[bus_id]
            q_gen = q_inj[i] - q_load[i]
            if q_gen > hi + 1e-6:
                worst.append((i, hi))
            elif q_gen < lo - 1e-6:
                worst.append((i, lo))
        if not worst:
            break
        for i, lim in worst:
            kind[i] = "pq"
            q_spec[i] = q_load[i] + lim
            clamped.append(net.buses[i].id)

    vc = v * np.exp(1j * theta)
    s_inj = vc * np.conj(ybus @ vc)

    flow = np.zeros(len(net.branches))
    loading = np.zeros(len(net.branches))
    if ok:
        for pos, br in enumerate(net.branches):
            if not br.in_service:
                continue
            f, t = idx[br.from_bus], idx[br.to_bus]
            ys = 1.0 / complex(br.r, br.x)
            i_from = ys * (vc[f] - vc[t]) + 0.5j * br.b_charge * vc[f]
            flow[pos] = (vc[f] * np.conj(i_from)).real
            loading[pos] = abs(flow[pos]) / br.rate

    return PfSolution(
        converged=ok,
        iterations=total_iters,
        v=v,
        theta=theta,
        p_inj=s_inj.real,
        q_inj=s_inj.imag,
        flow_from=flow,
        loading=loading,
        max_mismatch=mm,
        q_clamped=tuple(clamped),
    )
