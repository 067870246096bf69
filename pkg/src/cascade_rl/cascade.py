"""Multi-stage cascading failure engine.

An episode is a sequence of stages. Each stage starts with an attack that
removes one in-service branch, then evolves through generations: corrective
redispatch (flow band scaled by the chosen action), an AC feasibility check,
and simultaneous tripping of every branch loaded past its thermal rating.
A stage ends in equilibrium (AC converged, nothing over limit) or collapse
(redispatch infeasible, AC divergence, or a runaway generation count).

Relays always trip against the true rating; the action scales only the
redispatch target band.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .dcopf import DispatchResult, run_dcopf
from .net_model import Network, retain_slack_island
from .pf import PfSolution, ac_power_flow

__all__ = [
    "GenerationOutcome",
    "StageOutcome",
    "TransitionRecord",
    "EpisodeResult",
    "COLLAPSE_REWARD",
    "WIN_BONUS",
    "GENERATION_CAP",
    "apply_attack",
    "run_generation",
    "run_stage",
    "compute_stage_reward",
    "build_state",
    "state_dim",
    "run_episode",
    "trace_lines",
]

COLLAPSE_REWARD = -1000.0
WIN_BONUS = 1000.0
GENERATION_CAP = 20
RELAY_LIMIT = 1.0  # loading fraction that trips a branch; never action-scaled

EQUILIBRIUM = "equilibrium"
COLLAPSE = "collapse"


@dataclass
class GenerationOutcome:
    dcopf_feasible: bool
    acpf_converged: bool | None  # None when redispatch already failed
    overlimit_lines: int | None  # defined only when the AC solve converged
    tripped: tuple[int, ...]  # branch keys removed this generation
    # engine-internal extras for state building and cost accounting;
    # solution arrays align with solution_net, the pre-trip topology
    dispatch: DispatchResult | None = field(default=None, repr=False)
    solution: PfSolution | None = field(default=None, repr=False)
    solution_net: "Network | None" = field(default=None, repr=False)


@dataclass
class StageOutcome:
    generations: list[GenerationOutcome]
    terminal: str  # equilibrium | collapse
    stage_cost: float | None  # final redispatch objective at equilibrium
    reward: float


@dataclass
class TransitionRecord:
    state: np.ndarray
    action_index: int
    reward: float
    next_state: np.ndarray
    done: bool


@dataclass
class EpisodeResult:
    stages: list[StageOutcome]
    won: bool
    total_reward: float
    transitions: list[TransitionRecord]
    attacked: tuple[int, ...] = ()  # branch key attacked per stage
    shed_deenergized: float = 0.0  # islanded demand, bookkeeping only


def apply_attack(
    net: Network,
    rng: np.random.Generator,
    mode: str = "uniform",
    loading: dict[int, float] | None = None,
) -> tuple[Network, int]:
    """Remove one in-service branch and resolve any islanding.

    "uniform" draws the victim uniformly at random; "important" picks the
    branch with the highest known loading fraction (ties to the lowest key).
    Returns the reduced network and the attacked branch's key.
    """
    live = [(pos, br) for pos, br in enumerate(net.branches) if br.in_service]
    if not live:
        raise ValueError("no in-service branches to attack")
    if mode == "uniform":
        pos, victim = live[int(rng.integers(len(live)))]
    elif mode == "important":
        loading = loading or {}
        pos, victim = max(
            live, key=lambda pb: (loading.get(pb[1].key, 0.0), -pb[1].key)
        )
    else:
        raise ValueError(f"unknown attack mode {mode!r}")

    branches = list(net.branches)
    branches[pos] = replace(victim, in_service=False)
    attacked = Network(
        base_mva=net.base_mva,
        buses=net.buses,
        branches=tuple(branches),
        generators=net.generators,
        loads=net.loads,
    )
    reduced, _shed = retain_slack_island(attacked)
    return reduced, victim.key


def run_generation(net: Network, alpha: float) -> tuple[GenerationOutcome, Network]:
    """One cascade event: redispatch, AC check, trip everything over limit."""
    dispatch, _ = run_dcopf(net, alpha)
    if not dispatch.feasible:
        return GenerationOutcome(False, None, None, (), dispatch, None), net

    sol = ac_power_flow(net, dispatch)
    if not sol.converged:
        return GenerationOutcome(True, False, None, (), dispatch, None), net

    over = [
        pos
        for pos, br in enumerate(net.branches)
        if br.in_service and sol.loading[pos] > RELAY_LIMIT
    ]
    if not over:
        return GenerationOutcome(True, True, 0, (), dispatch, sol, net), net

    branches = list(net.branches)
    keys = []
    for pos in over:
        keys.append(branches[pos].key)
        branches[pos] = replace(branches[pos], in_service=False)
    tripped_net = Network(
        base_mva=net.base_mva,
        buses=net.buses,
        branches=tuple(branches),
        generators=net.generators,
        loads=net.loads,
    )
    reduced, _shed = retain_slack_island(tripped_net)
    return (
        GenerationOutcome(True, True, len(over), tuple(keys), dispatch, sol, net),
        reduced,
    )


def compute_stage_reward(outcome: StageOutcome, is_last_stage: bool) -> float:
    """Collapse pays -1000; equilibrium pays -cost, +1000 at the final stage."""
    if outcome.terminal == COLLAPSE:
        return COLLAPSE_REWARD
    reward = -float(outcome.stage_cost)
    if is_last_stage:
        reward += WIN_BONUS
    return reward


def run_stage(
    net: Network,
    alpha: float,
    cap: int = GENERATION_CAP,
    is_last_stage: bool = False,
) -> tuple[StageOutcome, Network]:
    """Iterate generations until equilibrium, a failure flag, or the cap."""
    gens: list[GenerationOutcome] = []
    while True:
        g, net = run_generation(net, alpha)
        gens.append(g)
        if not g.dcopf_feasible or g.acpf_converged is False:
            outcome = StageOutcome(gens, COLLAPSE, None, 0.0)
            break
        if g.overlimit_lines == 0:
            outcome = StageOutcome(
                gens, EQUILIBRIUM, g.dispatch.objective, 0.0
            )
            break
        if len(gens) >= cap:
            outcome = StageOutcome(gens, COLLAPSE, None, 0.0)
            break
    outcome.reward = compute_stage_reward(outcome, is_last_stage)
    return outcome, net


# ---------------------------------------------------------------------------
# state extraction
# ---------------------------------------------------------------------------


def state_dim(base: Network) -> int:
    return len(base.branches) + 4 * base.n_bus


def build_state(
    sol: PfSolution, net: Network, base: Network | None = None
) -> np.ndarray:
    """Fixed-layout state: per-branch loading, then V, theta, P, Q per bus.

    Layout follows the base network; elements missing from ``net`` (tripped
    or de-energized) contribute zeros so the dimension never changes inside
    an episode.
    """
    if base is None:
        base = net
    n_br = len(base.branches)
    n_bus = base.n_bus
    out = np.zeros(n_br + 4 * n_bus)

    br_pos = {br.key: i for i, br in enumerate(base.branches)}
    for pos, br in enumerate(net.branches):
        if br.in_service:
            out[br_pos[br.key]] = sol.loading[pos]

    bus_pos = {b.id: i for i, b in enumerate(base.buses)}
    for i, b in enumerate(net.buses):
        j = bus_pos[b.id]
        out[n_br + 4 * j + 0] = sol.v[i]
        out[n_br + 4 * j + 1] = sol.theta[i]
        out[n_br + 4 * j + 2] = sol.p_inj[i]
        out[n_br + 4 * j + 3] = sol.q_inj[i]
    return out


def _map_dispatch(src_net: Network, src: DispatchResult, dst: Network) -> DispatchResult:
    """Carry an operating point onto a (possibly reduced) topology by key."""
    gen_by_key = {
        g.key: src.p_gen[i] for i, g in enumerate(src_net.generators)
    }
    load_by_key = {
        ld.key: src.p_load_served[j] for j, ld in enumerate(src_net.loads)
    }
    p_gen = np.array([gen_by_key.get(g.key, 0.0) for g in dst.generators])
    served = np.array([load_by_key.get(ld.key, 0.0) for ld in dst.loads])
    return DispatchResult(
        feasible=True,
        p_gen=p_gen,
        p_load_served=served,
        shed_total=float(
            sum(ld.p_demand for ld in dst.loads if ld.in_service) - served.sum()
        ),
        objective=src.objective,
        alpha_used=src.alpha_used,
    )


def _loading_by_key(sol: PfSolution, net: Network) -> dict[int, float]:
    return {
        br.key: float(sol.loading[pos])
        for pos, br in enumerate(net.branches)
        if br.in_service
    }


def run_episode(
    net: Network,
    policy: Callable[[np.ndarray], int],
    k_stages: int,
    rng: np.random.Generator,
    generation_cap: int = GENERATION_CAP,
    attack_mode: str = "uniform",
    on_transition: Callable[[TransitionRecord], None] | None = None,
    action_to_alpha: Callable[[int], float] | None = None,
    base_point: tuple[DispatchResult, PfSolution] | None = None,
) -> EpisodeResult:
    """Roll one episode: attack, observe, act, evolve, repeat up to K stages.

    The observed state after an attack is the AC solution of the surviving
    grid still running the previous stage's dispatch; if that stressed solve
    diverges (or after a collapse), the last converged solution stands in.
    ``on_transition`` fires as each transition completes so on-policy
    learners can update mid-episode. ``base_point`` lets callers reuse the
    base-case dispatch/solution across episodes instead of re-solving it.
    """
    if action_to_alpha is None:
        from .agent import action_to_alpha as _a2a

        action_to_alpha = _a2a

    base = net
    if base_point is not None:
        dispatch, sol = base_point
    else:
        dispatch, _ = run_dcopf(base, 1.0)
        sol = ac_power_flow(base, dispatch) if dispatch.feasible else None
    if not dispatch.feasible:
        raise ValueError("base case redispatch infeasible; bad case data")
    if sol is None or not sol.converged:
        raise ValueError("base case AC power flow diverges; bad case data")
    if not any(br.in_service for br in base.branches):
        raise ValueError("base network has no in-service branches")

    cur = base
    last_sol, last_sol_net = sol, base  # last converged AC solution + its net
    incumbent, incumbent_net = dispatch, base  # steady-state operating point
    stages: list[StageOutcome] = []
    transitions: list[TransitionRecord] = []
    attacked_keys: list[int] = []
    shed_total = 0.0
    won = True

    for k in range(1, k_stages + 1):
        if not any(br.in_service for br in cur.branches):
            # the grid degraded to nothing attackable; the episode ends
            # short of K stages, which counts as a loss
            won = False
            if transitions:
                transitions[-1].done = True
            break
        demand_before = cur.total_demand()
        cur, attacked = apply_attack(
            cur, rng, mode=attack_mode, loading=_loading_by_key(last_sol, last_sol_net)
        )
        attacked_keys.append(attacked)
        shed_total += demand_before - cur.total_demand()

        obs_dispatch = _map_dispatch(incumbent_net, incumbent, cur)
        obs = ac_power_flow(cur, obs_dispatch)
        if obs.converged:
            last_sol, last_sol_net = obs, cur
        state = build_state(last_sol, last_sol_net, base)

        action = int(policy(state))
        alpha = action_to_alpha(action)

        demand_before = cur.total_demand()
        outcome, cur = run_stage(
            cur, alpha, cap=generation_cap, is_last_stage=(k == k_stages)
        )
        shed_total += demand_before - cur.total_demand()
        stages.append(outcome)

        if outcome.terminal == EQUILIBRIUM:
            last = outcome.generations[-1]
            last_sol, last_sol_net = last.solution, last.solution_net
            incumbent, incumbent_net = last.dispatch, last.solution_net
        else:
            won = False
            # keep the last converged solution from inside the stage, if any
            for g in reversed(outcome.generations):
                if g.solution is not None:
                    last_sol, last_sol_net = g.solution, g.solution_net
                    break

        done = (k == k_stages) or outcome.terminal == COLLAPSE
        next_state = build_state(last_sol, last_sol_net, base)
        rec = TransitionRecord(state, action, outcome.reward, next_state, done)
        transitions.append(rec)
        if on_transition is not None:
            on_transition(rec)
        if outcome.terminal == COLLAPSE:
            break

    total = float(sum(s.reward for s in stages))
    for s in stages:
        if s.stage_cost is not None and s.stage_cost >= WIN_BONUS:
            warnings.warn(
                f"stage cost {s.stage_cost:.1f} exceeds the collapse penalty "
                "scale; rewards may leave the nominal range",
                RuntimeWarning,
                stacklevel=2,
            )
    return EpisodeResult(
        stages=stages,
        won=won and len(stages) == k_stages,
        total_reward=total,
        transitions=transitions,
        attacked=tuple(attacked_keys),
        shed_deenergized=shed_total,
    )


def trace_lines(result: EpisodeResult) -> list[str]:
    """Audit trace, one JSON line per generation plus a final verdict line."""
    lines = []
    for s, stage in enumerate(result.stages, start=1):
        for g, gen in enumerate(stage.generations, start=1):
            lines.append(
                json.dumps(
                    {
                        "stage": s,
                        "generation": g,
                        "acpf_converged": gen.acpf_converged,
                        "overlimit_lines": gen.overlimit_lines,
                        "result": None,
                    }
                )
            )
    lines.append(
        json.dumps(
            {
                "stage": None,
                "generation": None,
                "acpf_converged": None,
                "overlimit_lines": None,
                "result": "win" if result.won else "lose",
            }
        )
    )
    return lines
