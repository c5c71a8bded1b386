"""Leader-follower attitude synchronization on the rotation group.

A network of rigid bodies, coupled along a spanning tree with one agent
informed of a constant reference attitude, runs a torque law built from
weighted attitude errors and velocity damping. This package simulates
the closed loop, enumerates its equilibria, and checks the linearized
stability claims numerically.
"""

from . import analysis, controller, dynamics, scenario, so3, topology
from ._kernels import available_backends, resolve_backend
from .errors import (
    DegenerateMatrix,
    DuplicateEdge,
    EigensolverFailure,
    EmptyPiSet,
    HasCycle,
    IntegrationDiverged,
    LeaderSlotNotPi,
    MissingLeaderAttitude,
    NonSkewInput,
    NonUnitAxis,
    NotConnected,
    ParseError,
    So3SyncError,
    UnknownNeighbor,
    ValidationError,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "analysis",
    "available_backends",
    "controller",
    "dynamics",
    "resolve_backend",
    "scenario",
    "so3",
    "topology",
    "So3SyncError",
    "DegenerateMatrix",
    "DuplicateEdge",
    "EigensolverFailure",
    "EmptyPiSet",
    "HasCycle",
    "IntegrationDiverged",
    "LeaderSlotNotPi",
    "MissingLeaderAttitude",
    "NonSkewInput",
    "NonUnitAxis",
    "NotConnected",
    "ParseError",
    "UnknownNeighbor",
    "ValidationError",
]
