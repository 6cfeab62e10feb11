"""Max-min fair allocation and simulation for 802.11 mesh networks with TXOP bursting."""

__version__ = "0.1.0"

from .exceptions import DomainError, InfeasibleTopologyError, MeshfairError, ScenarioError, SolverError
from .scenario import load_scenario
from .topology import Flow, Hop, MeshTopology, Station
from .waterfill import audit_theorem3, configure_network, waterfill

__all__ = [
    "DomainError", "Flow", "Hop", "InfeasibleTopologyError", "MaxMinAllocator", "MeshSimulator",
    "MeshTopology", "MeshfairError", "ScenarioError", "SolverError", "Station", "audit_theorem3",
    "configure_network", "load_scenario", "waterfill",
]


def __getattr__(name):
    # the estimators pull in scikit-learn, so load them on first use
    if name in ("MaxMinAllocator", "MeshSimulator"):
        from . import estimators
        return getattr(estimators, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
