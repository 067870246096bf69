"""Cascading-failure simulator with DCOPF corrective control and RL agents
that learn a per-stage branch-flow-limit action."""

from importlib import resources

from .net_model import (
    Branch,
    Bus,
    CaseError,
    Generator,
    Load,
    Network,
    connected_components,
    parse_case,
    retain_slack_island,
    write_case,
)

__version__ = "0.1.0"

__all__ = [
    "Branch",
    "Bus",
    "CaseError",
    "Generator",
    "Load",
    "Network",
    "connected_components",
    "parse_case",
    "retain_slack_island",
    "write_case",
    "bundled_case_path",
    "load_bundled_case",
]


def bundled_case_path(name: str = "ieee118") -> str:
    """Filesystem path of a bundled case file."""
    return str(resources.files(__package__) / "cases" / f"{name}.case")


def load_bundled_case(name: str = "ieee118") -> Network:
    text = (resources.files(__package__) / "cases" / f"{name}.case").read_text(
        encoding="utf-8"
    )
    return parse_case(text)
