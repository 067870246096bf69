"""Grid data model, case-file I/O, and topology operations.

The sectioned-CSV case format:

    [meta]   base_mva
    [bus]    id,kind,v_set,v_init,theta_init
    [branch] from,to,r,x,b,rate,in_service
    [gen]    bus,p_min,p_max,q_min,q_max,cost,in_service
    [load]   bus,p_demand,q_demand,shed_cost,in_service

All quantities are per-unit on base_mva, angles in radians, loads stored
consumption-positive. Blank shed_cost falls back to 100x the most expensive
generator. Blank v_set is allowed (and written) only for pq buses.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from functools import cached_property

__all__ = [
    "Bus",
    "Branch",
    "Generator",
    "Load",
    "Network",
    "CaseError",
    "parse_case",
    "write_case",
    "connected_components",
    "retain_slack_island",
]

BUS_KINDS = ("slack", "pv", "pq")

SHED_COST_FACTOR = 100.0  # default shed_cost = factor * max generator cost
_FALLBACK_SHED_COST = 100.0  # used when the case has no generators at all


class CaseError(ValueError):
    """Raised for malformed or inconsistent case files."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class Bus:
    id: int
    kind: str  # slack | pv | pq
    v_set: float | None = None  # p.u., pv/slack only
    v_init: float = 1.0
    theta_init: float = 0.0


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b_charge: float  # total line charging susceptance
    rate: float  # thermal active-power limit, p.u.
    in_service: bool = True
    # Stable identity across episode-local reductions; assigned by Network,
    # ignored in equality so round-tripped files compare field-exact.
    key: int | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Generator:
    bus: int
    p_min: float
    p_max: float
    q_min: float
    q_max: float
    cost: float  # linear cost per p.u. generated
    in_service: bool = True
    key: int | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Load:
    bus: int
    p_demand: float  # consumption-positive, > 0
    q_demand: float
    shed_cost: float  # cost per p.u. unserved
    in_service: bool = True
    key: int | None = field(default=None, compare=False, repr=False)


@dataclass(frozen=True)
class Network:
    """Immutable grid snapshot; episode-local changes build new instances."""

    base_mva: float
    buses: tuple[Bus, ...]
    branches: tuple[Branch, ...]
    generators: tuple[Generator, ...]
    loads: tuple[Load, ...]

    def __post_init__(self):
        for name in ("branches", "generators", "loads"):
            elems = tuple(getattr(self, name))
            if any(e.key is None for e in elems):
                elems = tuple(
                    replace(e, key=i) if e.key is None else e
                    for i, e in enumerate(elems)
                )
            object.__setattr__(self, name, elems)
        object.__setattr__(self, "buses", tuple(self.buses))
        self._validate()

    def _validate(self):
        seen: set[int] = set()
        for b in self.buses:
            if b.id in seen:
                raise CaseError(f"duplicate bus id {b.id}")
            seen.add(b.id)
            if b.kind not in BUS_KINDS:
                raise CaseError(f"bus {b.id}: unknown kind {b.kind!r}")
            if b.kind != "pq" and b.v_set is None:
                raise CaseError(f"bus {b.id}: {b.kind} bus requires v_set")
        slacks = [b.id for b in self.buses if b.kind == "slack"]
        if len(slacks) > 1:
            raise CaseError(f"multiple slack buses: {slacks}")
        for br in self.branches:
            for end in (br.from_bus, br.to_bus):
                if end not in seen:
                    raise CaseError(f"branch references unknown bus {end}")
            if br.x == 0.0:
                raise CaseError(
                    f"branch {br.from_bus}-{br.to_bus}: zero reactance"
                )
            if br.rate <= 0.0:
                raise CaseError(
                    f"branch {br.from_bus}-{br.to_bus}: rate must be > 0"
                )
        for g in self.generators:
            if g.bus not in seen:
                raise CaseError(f"generator references unknown bus {g.bus}")
            if g.p_min > g.p_max:
                raise CaseError(f"generator at bus {g.bus}: p_min > p_max")
            if g.cost < 0:
                raise CaseError(f"generator at bus {g.bus}: negative cost")
        max_cost = max((g.cost for g in self.generators), default=0.0)
        for ld in self.loads:
            if ld.bus not in seen:
                raise CaseError(f"load references unknown bus {ld.bus}")
            if ld.p_demand <= 0:
                raise CaseError(f"load at bus {ld.bus}: p_demand must be > 0")
            if ld.shed_cost <= max_cost:
                raise CaseError(
                    f"load at bus {ld.bus}: shed_cost {ld.shed_cost} must "
                    f"exceed max generator cost {max_cost}"
                )

    # -- derived views -------------------------------------------------

    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @property
    def n_branch(self) -> int:
        return sum(1 for b in self.branches if b.in_service)

    @property
    def n_gen(self) -> int:
        return len(self.generators)

    @property
    def n_load(self) -> int:
        return len(self.loads)

    @cached_property
    def bus_index(self) -> dict[int, int]:
        return {b.id: i for i, b in enumerate(self.buses)}

    @cached_property
    def slack_bus(self) -> int:
        for b in self.buses:
            if b.kind == "slack":
                return b.id
        raise CaseError("slack bus missing")

    def total_demand(self) -> float:
        return sum(ld.p_demand for ld in self.loads if ld.in_service)


# ---------------------------------------------------------------------------
# case-file I/O
# ---------------------------------------------------------------------------

_SECTIONS = ("meta", "bus", "branch", "gen", "load")


def _fmt(x: float | None) -> str:
    if x is None:
        return ""
    return repr(float(x))


def _parse_float(tok: str, what: str, line: int) -> float:
    try:
        return float(tok)
    except ValueError:
        raise CaseError(f"bad {what} value {tok!r}", line) from None


def _parse_int(tok: str, what: str, line: int) -> int:
    try:
        return int(tok)
    except ValueError:
        raise CaseError(f"bad {what} value {tok!r}", line) from None


def _parse_bool(tok: str, what: str, line: int) -> bool:
    if tok in ("0", "1"):
        return tok == "1"
    raise CaseError(f"bad {what} value {tok!r} (expected 0 or 1)", line)


def parse_case(text: str) -> Network:
    """Parse sectioned-CSV case text into a validated Network."""
    section = None
    base_mva: float | None = None
    buses: list[Bus] = []
    branches: list[Branch] = []
    gens: list[Generator] = []
    raw_loads: list[tuple[int, float, float, float | None, bool]] = []

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip().lower()
            if section not in _SECTIONS:
                raise CaseError(f"unknown section {section!r}", lineno)
            continue
        if section is None:
            raise CaseError("data before any section header", lineno)
        toks = [t.strip() for t in line.split(",")]
        if section == "meta":
            base_mva = _parse_float(toks[0], "base_mva", lineno)
            if base_mva <= 0:
                raise CaseError("base_mva must be > 0", lineno)
        elif section == "bus":
            if len(toks) != 5:
                raise CaseError("bus row needs 5 fields", lineno)
            kind = toks[1].lower()
            if kind not in BUS_KINDS:
                raise CaseError(f"unknown bus kind {toks[1]!r}", lineno)
            v_set = None if toks[2] == "" else _parse_float(toks[2], "v_set", lineno)
            buses.append(
                Bus(
                    id=_parse_int(toks[0], "bus id", lineno),
                    kind=kind,
                    v_set=v_set,
                    v_init=_parse_float(toks[3], "v_init", lineno),
                    theta_init=_parse_float(toks[4], "theta_init", lineno),
                )
            )
        elif section == "branch":
            if len(toks) != 7:
                raise CaseError("branch row needs 7 fields", lineno)
            branches.append(
                Branch(
                    from_bus=_parse_int(toks[0], "from bus", lineno),
                    to_bus=_parse_int(toks[1], "to bus", lineno),
                    r=_parse_float(toks[2], "r", lineno),
                    x=_parse_float(toks[3], "x", lineno),
                    b_charge=_parse_float(toks[4], "b", lineno),
                    rate=_parse_float(toks[5], "rate", lineno),
                    in_service=_parse_bool(toks[6], "in_service", lineno),
                )
            )
        elif section == "gen":
            if len(toks) != 7:
                raise CaseError("gen row needs 7 fields", lineno)
            gens.append(
                Generator(
                    bus=_parse_int(toks[0], "gen bus", lineno),
                    p_min=_parse_float(toks[1], "p_min", lineno),
                    p_max=_parse_float(toks[2], "p_max", lineno),
                    q_min=_parse_float(toks[3], "q_min", lineno),
                    q_max=_parse_float(toks[4], "q_max", lineno),
                    cost=_parse_float(toks[5], "cost", lineno),
                    in_service=_parse_bool(toks[6], "in_service", lineno),
                )
            )
        elif section == "load":
            if len(toks) != 5:
                raise CaseError("load row needs 5 fields", lineno)
            shed = None if toks[3] == "" else _parse_float(toks[3], "shed_cost", lineno)
            raw_loads.append(
                (
                    _parse_int(toks[0], "load bus", lineno),
                    _parse_float(toks[1], "p_demand", lineno),
                    _parse_float(toks[2], "q_demand", lineno),
                    shed,
                    _parse_bool(toks[4], "in_service", lineno),
                )
            )

    if not buses:
        raise CaseError("no bus section")
    if base_mva is None:
        raise CaseError("no meta section (base_mva)")
    if not any(b.kind == "slack" for b in buses):
        raise CaseError("no slack bus")

    default_shed = SHED_COST_FACTOR * max(
        (g.cost for g in gens), default=_FALLBACK_SHED_COST / SHED_COST_FACTOR
    )
    loads = [
        Load(
            bus=bus,
            p_demand=pd,
            q_demand=qd,
            shed_cost=default_shed if shed is None else shed,
            in_service=svc,
        )
        for bus, pd, qd, shed, svc in raw_loads
    ]

    try:
        return Network(
            base_mva=base_mva,
            buses=tuple(buses),
            branches=tuple(branches),
            generators=tuple(gens),
            loads=tuple(loads),
        )
    except CaseError:
        raise
    except ValueError as exc:  # pragma: no cover - defensive
        raise CaseError(str(exc)) from exc


def write_case(net: Network) -> str:
    """Serialize a Network; parse_case(write_case(net)) == net field-exact."""
    out = ["[meta]", _fmt(net.base_mva), "[bus]"]
    for b in net.buses:
        out.append(
            f"{b.id},{b.kind},{_fmt(b.v_set)},{_fmt(b.v_init)},{_fmt(b.theta_init)}"
        )
    out.append("[branch]")
    for br in net.branches:
        out.append(
            f"{br.from_bus},{br.to_bus},{_fmt(br.r)},{_fmt(br.x)},"
            f"{_fmt(br.b_charge)},{_fmt(br.rate)},{int(br.in_service)}"
        )
    out.append("[gen]")
    for g in net.generators:
        out.append(
            f"{g.bus},{_fmt(g.p_min)},{_fmt(g.p_max)},{_fmt(g.q_min)},"
            f"{_fmt(g.q_max)},{_fmt(g.cost)},{int(g.in_service)}"
        )
    out.append("[load]")
    for ld in net.loads:
        out.append(
            f"{ld.bus},{_fmt(ld.p_demand)},{_fmt(ld.q_demand)},"
            f"{_fmt(ld.shed_cost)},{int(ld.in_service)}"
        )
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# topology
# ---------------------------------------------------------------------------


def connected_components(net: Network) -> list[set[int]]:
    """Partition bus ids by in-service branch connectivity.

    Components are returned sorted by their smallest bus id so the output
    is deterministic.
    """
    adj: dict[int, list[int]] = {b.id: [] for b in net.buses}
    for br in net.branches:
        if br.in_service:
            adj[br.from_bus].append(br.to_bus)
            adj[br.to_bus].append(br.from_bus)

    seen: set[int] = set()
    comps: list[set[int]] = []
    for b in net.buses:
        if b.id in seen:
            continue
        comp = {b.id}
        stack = [b.id]
        seen.add(b.id)
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    comp.add(v)
                    stack.append(v)
        comps.append(comp)
    comps.sort(key=min)
    return comps


def retain_slack_island(net: Network) -> tuple[Network, float]:
    """Drop everything outside the slack bus's component.

    Returns the reduced network and the total in-service demand that was
    de-energized. Branches whose endpoints both survive are kept with their
    service flags intact.
    """
    slack = net.slack_bus  # raises CaseError if missing
    for comp in connected_components(net):
        if slack in comp:
            keep = comp
            break

    shed = sum(
        ld.p_demand for ld in net.loads if ld.in_service and ld.bus not in keep
    )
    if len(keep) == net.n_bus:
        return net, 0.0

    reduced = Network(
        base_mva=net.base_mva,
        buses=tuple(b for b in net.buses if b.id in keep),
        branches=tuple(
            br for br in net.branches if br.from_bus in keep and br.to_bus in keep
        ),
        generators=tuple(g for g in net.generators if g.bus in keep),
        loads=tuple(ld for ld in net.loads if ld.bus in keep),
    )
    return reduced, shed
